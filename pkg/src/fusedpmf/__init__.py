"""Probabilistic matrix factorization fused with review helpfulness, review-network
centrality and view feedback."""

from .dataset import (
    DataError,
    Dataset,
    ReviewRecord,
    SplitSpec,
    ViewRecord,
    build_dataset,
    load_dataset,
    read_reviews_jsonl,
    read_views_tsv,
    save_dataset,
    segment_cold_start,
    split_train_test,
)
from .evaluation import EvalReport, format_table, mse, run_experiment, sweep_K
from .factorization import (
    VARIANTS,
    Checkpoint,
    CountWeights,
    Hyperparameters,
    LatentFactors,
    gradient,
    link,
    link_derivative,
    load_checkpoint,
    objective,
    predict_pairs,
    predict_rating,
    save_checkpoint,
)
from .features import (
    CentralityParams,
    FeedbackChannel,
    SignRule,
    build_channels,
    helpfulness_score,
    most_recent_centrality,
    rank_reviews,
    scale_value,
    top_rank_centrality,
    total_centrality,
    unscale_value,
)
from .synthetic import SyntheticSpec, generate_synthetic
from .trainer import DivergenceError, TrainConfig, TrainTrace, fit, init_factors

__version__ = "0.1.0"
