"""Cross-modality cluster matching and embedding alignment toolkit."""

from .clustering import Centroids, centroids, dbscan, pairwise_distances
from .data_model import (
    EmbeddingSet,
    Modality,
    PseudoLabels,
    load_embeddings,
    make_intermediate,
    normalize,
    save_embeddings,
)
from .errors import (
    DimMismatch,
    EmptyBatch,
    EmptyCluster,
    EmptyMatch,
    MissingIds,
    MissingLabel,
    NoClusters,
    NoPositivePairs,
    ParseError,
    ScaleMismatch,
    SlotOutOfRange,
    XMMatchError,
    ZeroVector,
)
from .evaluation import (
    MatchQuality,
    RetrievalReport,
    majority_identity,
    match_quality,
    positive_distance_histogram,
    retrieve_and_score,
)
from .hungarian import min_cost_assignment
from .matching import (
    Direction,
    MatchResult,
    assign_one_to_one,
    bccm,
    cost_matrix,
    extend_matches,
    mbccm,
)
from .memory import (
    BankKind,
    BankSet,
    MemoryBank,
    init_banks,
    momentum_update,
    route_update,
    save_bank,
)
from .objective import (
    Batch,
    HyperParams,
    LossReport,
    consistency_loss,
    contrastive_loss,
    l_cc,
    l_ma,
    l_ms,
    predict,
    total_loss,
)
from .synth import SynthConfig, anchor_geometry, generate
from .trainer import (
    Ablation,
    EpochState,
    RunResult,
    StepRecord,
    TrainConfig,
    format_record,
    run,
    sample_batch,
    train_epoch,
)

__version__ = "0.1.0"
