"""Two-layer graph convolutional classifier, written from scratch on numpy.

Forward pass:  softmax(A^ . ReLU(A^ . X . W0) . W1)  with A^ the normalized
self-looped adjacency. Inverted dropout (keep-probability scaling at train
time) is applied to the hidden activation. Training minimizes the mean
negative log likelihood over a masked node set with full-batch Adam steps;
gradients are analytic, derived by hand from the forward expression:

    Z0 = (A X) W0          H  = ReLU(Z0)        Hd = H . M / (1 - r)
    Z1 = (A Hd) W1         P  = softmax(Z1)
    dL/dZ1 = (P - Y_onehot) / |mask|   (rows outside the mask are zero)
    dL/dW1 = (A Hd)^T dZ1
    dL/dHd = A dZ1 W1^T                (A is symmetric)
    dL/dZ0 = dL/dHd . M/(1-r) . 1[Z0 > 0]
    dL/dW0 = X^T (A dZ0)

Attribute matrices may be dense or scipy CSR; everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp

from .graph import Graph, NormalizedAdjacency, normalize_adjacency
from .rng import rng_for


@dataclass(frozen=True, eq=False)
class GcnModel:
    w0: np.ndarray
    w1: np.ndarray
    hidden_dim: int = 16
    dropout_rate: float = 0.5
    trained: bool = False

    def __post_init__(self):
        w0 = np.ascontiguousarray(np.asarray(self.w0, dtype=np.float64))
        w1 = np.ascontiguousarray(np.asarray(self.w1, dtype=np.float64))
        if not (np.isfinite(w0).all() and np.isfinite(w1).all()):
            raise ValueError("model weights must be finite")
        if w0.shape[1] != self.hidden_dim or w1.shape[0] != self.hidden_dim:
            raise ValueError("weight shapes disagree with hidden_dim")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        w0.setflags(write=False)
        w1.setflags(write=False)
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w1", w1)

    @property
    def feature_dim(self) -> int:
        return self.w0.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.02
    epochs: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    weight_init_scale: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True, eq=False)
class PredictionSet:
    posteriors: np.ndarray
    hard_labels: np.ndarray = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.posteriors, dtype=np.float64)
        rowsum = p.sum(axis=1)
        if p.min(initial=0.0) < 0 or np.abs(rowsum - 1.0).max(initial=0.0) > 1e-9:
            raise ValueError("posterior rows must be non-negative and sum to 1")
        p.setflags(write=False)
        hard = np.argmax(p, axis=1).astype(np.int64)  # argmax takes lowest index on ties
        hard.setflags(write=False)
        object.__setattr__(self, "posteriors", p)
        object.__setattr__(self, "hard_labels", hard)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _mask_ids(mask) -> np.ndarray:
    ids = np.asarray(getattr(mask, "ids", mask), dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError("mask must be a flat id sequence")
    return ids


def _apply(w0, w1, dropout_rate, adj: NormalizedAdjacency, attrs, dropout_mask):
    a = adj.matrix
    z0 = a @ (attrs @ w0)
    h = np.maximum(z0, 0.0)
    if dropout_mask is not None:
        hd = h * dropout_mask / (1.0 - dropout_rate)
    else:
        hd = h
    ahd = a @ hd
    z1 = ahd @ w1
    return z0, hd, ahd, softmax(z1)


def sample_dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    return (rng.random(shape) >= rate).astype(np.float64)


def forward(model: GcnModel, adj: NormalizedAdjacency, attrs, training_mode: bool = False,
            rng: np.random.Generator | None = None) -> PredictionSet:
    """Posteriors for every node. Dropout is sampled only in training mode."""
    if attrs.shape[1] != model.feature_dim:
        raise ValueError(f"attrs have {attrs.shape[1]} features, model expects {model.feature_dim}")
    if adj.num_nodes != attrs.shape[0]:
        raise ValueError("adjacency size disagrees with attribute rows")
    mask = None
    if training_mode and model.dropout_rate > 0:
        if rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        mask = sample_dropout_mask(rng, (attrs.shape[0], model.hidden_dim), model.dropout_rate)
    _, _, _, p = _apply(model.w0, model.w1, model.dropout_rate, adj, attrs, mask)
    return PredictionSet(p)


def nll_loss(pred: PredictionSet, labels: np.ndarray, mask) -> float:
    """Mean -log posterior of the true class over the masked nodes."""
    ids = _mask_ids(mask)
    if ids.size == 0:
        raise ValueError("loss mask must be nonempty")
    picked = pred.posteriors[ids, labels[ids]]
    return float(-np.mean(np.log(np.maximum(picked, 1e-12))))


def _grads(w0, w1, dropout_rate, adj, attrs, labels, ids, dropout_mask):
    n = attrs.shape[0]
    z0, hd, ahd, p = _apply(w0, w1, dropout_rate, adj, attrs, dropout_mask)
    r = np.zeros_like(p)
    r[ids] = p[ids]
    r[ids, labels[ids]] -= 1.0
    r /= ids.size
    gw1 = ahd.T @ r
    dhd = (adj.matrix @ r) @ w1.T
    if dropout_mask is not None:
        dhd = dhd * dropout_mask / (1.0 - dropout_rate)
    dz0 = dhd * (z0 > 0)
    gw0 = attrs.T @ (adj.matrix @ dz0)
    if sp.issparse(gw0):
        gw0 = np.asarray(gw0.todense())
    loss = float(-np.mean(np.log(np.maximum(p[ids, labels[ids]], 1e-12))))
    return np.asarray(gw0), gw1, loss, p


def backward(model: GcnModel, adj: NormalizedAdjacency, attrs, labels: np.ndarray,
             mask, dropout_mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of the masked NLL wrt (w0, w1), with the given dropout mask."""
    if attrs.shape[1] != model.feature_dim or adj.num_nodes != attrs.shape[0]:
        raise ValueError("dimension mismatch between model, adjacency and attributes")
    ids = _mask_ids(mask)
    if ids.size == 0:
        raise ValueError("gradient mask must be nonempty")
    gw0, gw1, _, _ = _grads(model.w0, model.w1, model.dropout_rate, adj, attrs,
                            labels, ids, dropout_mask)
    return gw0, gw1


def glorot_init(rng: np.random.Generator, fan_in: int, fan_out: int, scale: float = 1.0) -> np.ndarray:
    bound = scale * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class _Adam:
    def __init__(self, shapes, cfg: TrainConfig):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.cfg = cfg

    def step(self, params, grads):
        self.t += 1
        cfg = self.cfg
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = cfg.adam_beta1 * self.m[i] + (1 - cfg.adam_beta1) * g
            self.v[i] = cfg.adam_beta2 * self.v[i] + (1 - cfg.adam_beta2) * g * g
            m_hat = self.m[i] / (1 - cfg.adam_beta1 ** self.t)
            v_hat = self.v[i] / (1 - cfg.adam_beta2 ** self.t)
            out.append(p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon))
        return out


def _accuracy_of(p: np.ndarray, labels: np.ndarray, ids: np.ndarray) -> float:
    return float(np.mean(np.argmax(p[ids], axis=1) == labels[ids]))


def train(g: Graph, train_mask, val_mask, cfg: TrainConfig, *, num_classes: int,
          hidden_dim: int = 16, dropout_rate: float = 0.5,
          adj: NormalizedAdjacency | None = None,
          history: list | None = None) -> GcnModel:
    """Full-batch Adam training for `cfg.epochs` epochs; returns the final model.

    No early stopping. Deterministic given cfg.seed: weight init and the
    per-epoch dropout masks come from independent derived streams. When a
    `history` list is supplied, per-epoch loss and train/val accuracy are
    appended to it (entry 0 is the untrained model).
    """
    if g.attributes is None:
        raise ValueError("training needs node attributes")
    train_ids = _mask_ids(train_mask)
    if train_ids.size == 0:
        raise ValueError("no labeled training nodes")
    val_ids = _mask_ids(val_mask) if val_mask is not None else None
    labels = g.labels
    if labels is None or (labels[train_ids] < 0).any():
        raise ValueError("training nodes must be labeled")
    if adj is None:
        adj = normalize_adjacency(g)
    attrs = g.attributes

    init_rng = rng_for(cfg.seed, "weight-init")
    dropout_rng = rng_for(cfg.seed, "dropout")
    w0 = glorot_init(init_rng, attrs.shape[1], hidden_dim, cfg.weight_init_scale)
    w1 = glorot_init(init_rng, hidden_dim, num_classes, cfg.weight_init_scale)
    opt = _Adam([w0.shape, w1.shape], cfg)

    def record(epoch, loss):
        if history is None:
            return
        _, _, _, p_eval = _apply(w0, w1, dropout_rate, adj, attrs, None)
        entry = {
            "epoch": epoch,
            "loss": loss,
            "train_acc": _accuracy_of(p_eval, labels, train_ids),
        }
        if val_ids is not None and val_ids.size:
            entry["val_acc"] = _accuracy_of(p_eval, labels, val_ids)
        history.append(entry)

    record(0, float("nan"))

    for epoch in range(1, cfg.epochs + 1):
        mask = None
        if dropout_rate > 0:
            mask = sample_dropout_mask(dropout_rng, (attrs.shape[0], hidden_dim), dropout_rate)
        gw0, gw1, loss, _ = _grads(w0, w1, dropout_rate, adj, attrs, labels, train_ids, mask)
        w0, w1 = opt.step([w0, w1], [gw0, gw1])
        record(epoch, loss)

    return GcnModel(w0, w1, hidden_dim=hidden_dim, dropout_rate=dropout_rate, trained=True)


# ---------------------------------------------------------------------------
# checkpoint format: one JSON header line (sorted keys) followed by the raw
# little-endian float64 bytes of w0 then w1, row-major. Byte output depends
# only on the model/config/extra values, so identical runs write identical
# files and the round trip is exact.

_CKPT_MAGIC = b"GNNXCKPT1\n"


def save_checkpoint(path, model: GcnModel, cfg: TrainConfig, extra: dict | None = None) -> None:
    header = {
        "hidden_dim": model.hidden_dim,
        "dropout_rate": model.dropout_rate,
        "trained": model.trained,
        "w0_shape": list(model.w0.shape),
        "w1_shape": list(model.w1.shape),
        "config": asdict(cfg),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(blob)
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(model.w0, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.w1, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[GcnModel, TrainConfig, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        header = json.loads(fh.readline().decode("utf-8"))
        shape0 = tuple(header["w0_shape"])
        shape1 = tuple(header["w1_shape"])
        w0 = np.frombuffer(fh.read(8 * shape0[0] * shape0[1]), dtype="<f8").reshape(shape0)
        w1 = np.frombuffer(fh.read(8 * shape1[0] * shape1[1]), dtype="<f8").reshape(shape1)
    model = GcnModel(w0, w1, hidden_dim=header["hidden_dim"],
                     dropout_rate=header["dropout_rate"], trained=header["trained"])
    cfg = TrainConfig(**header["config"])
    return model, cfg, header["extra"]
