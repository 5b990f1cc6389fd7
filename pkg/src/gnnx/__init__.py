"""Model extraction attacks against graph convolutional node classifiers."""

from .graph import (
    Graph,
    NodeSetView,
    NormalizedAdjacency,
    MISSING_LABEL,
    disjoint_union,
    graphs_equal,
    identity_adjacency,
    induce_subgraph,
    k_hop_closure,
    normalize_adjacency,
)
from .communities import greedy_modularity_communities, modularity
from .gcn import (
    GcnModel,
    PredictionSet,
    TrainConfig,
    backward,
    forward,
    load_checkpoint,
    nll_loss,
    save_checkpoint,
    train,
)
from .oracle import VictimOracle
from .attacks import (
    AttackGraph,
    AttackKnowledge,
    EnsembleModel,
    TaxonomyError,
    TAXONOMY,
    build_attack0_graph,
    build_attack1_graph,
    build_attack2_graph,
    build_attack3_graph,
    build_attack4_graph,
    build_attack5_graph,
    extract,
    generate_structure,
    run_attack6,
    synthesize_attributes,
)
from .datasets import (
    BundleFormatError,
    DatasetBundle,
    SplitSpec,
    default_split_spec,
    load_bundle,
    make_full_split,
    make_shadow_split,
    sample_attacker_nodes,
    write_bundle,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    accuracy,
    degree_distribution,
    dnn_baseline,
    fidelity,
    run_experiment,
    run_sweep,
)

__version__ = "0.1.0"
