"""Interactive object retrieval by contrastive re-ranking over an evolving intent state."""

from .data import (
    AmbiguousSample,
    Bbox,
    Bundle,
    Detection,
    GroundTruth,
    Query,
    Region,
    iou,
    load_bundle,
    mine_ambiguous,
    save_bundle,
)
from .intent import Exemplar, Feedback, IntentState, apply_feedback, init_state
from .metrics import (
    EvalReport,
    ScoreTrace,
    average_precision,
    evaluate_turn_protocol,
    map_over_thresholds,
    score_trace,
)
from .ranking import (
    RankerConfig,
    ScoredRegion,
    SinkhornConfig,
    rank_candidates,
    score_region,
    sinkhorn_plan,
    sinkhorn_rank,
)
from .session import (
    LiveSession,
    OracleConfig,
    SessionConfig,
    SessionTranscript,
    oracle_feedback,
    run_turn,
    scripted_session,
    simulate_session,
)
from .synth import SynthConfig, generate_dataset, write_dataset
from .theory import AmbiguityInstance, min_resolving_lambda, verify_resolution
from .vecmath import cosine, ensure_embedding, fuse_query, l2_normalize

__version__ = "0.1.0"

__all__ = [
    "AmbiguityInstance",
    "AmbiguousSample",
    "Bbox",
    "Bundle",
    "Detection",
    "EvalReport",
    "Exemplar",
    "Feedback",
    "GroundTruth",
    "IntentState",
    "LiveSession",
    "OracleConfig",
    "Query",
    "RankerConfig",
    "Region",
    "ScoreTrace",
    "ScoredRegion",
    "SessionConfig",
    "SessionTranscript",
    "SinkhornConfig",
    "SynthConfig",
    "apply_feedback",
    "average_precision",
    "cosine",
    "ensure_embedding",
    "evaluate_turn_protocol",
    "fuse_query",
    "generate_dataset",
    "init_state",
    "iou",
    "l2_normalize",
    "load_bundle",
    "map_over_thresholds",
    "min_resolving_lambda",
    "mine_ambiguous",
    "oracle_feedback",
    "rank_candidates",
    "run_turn",
    "save_bundle",
    "score_region",
    "score_trace",
    "scripted_session",
    "simulate_session",
    "sinkhorn_plan",
    "sinkhorn_rank",
    "verify_resolution",
    "write_dataset",
]
