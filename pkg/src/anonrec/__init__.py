"""Item-based collaborative filtering over k-anonymized rating matrices.

The library covers the full pipeline: ingesting sparse rating data,
k-anonymizing it by microaggregation, building item-item Pearson
similarities from raw or anonymized tables, serving predictions for every
training-input/prediction-input pairing, and reproducing the RMSE sweeps
and diagnostics that compare them.
"""

__version__ = "0.1.0"

from .anonymize import (
    AnonymityAudit,
    AnonymizedMatrix,
    AssignmentMap,
    OKAAnonymizer,
    ResidualAnonymity,
    audit_k_anonymity,
    build_prototype,
    oka_anonymize,
    residual_anonymity,
)
from .datasets import (
    Dataset,
    load_dataset,
    make_synthetic_ratings,
    parse_csv_triples,
    parse_movielens_100k,
    parse_movielens_1m,
    remap_to_dense,
    write_csv_triples,
)
from .errors import AnonRecError
from .evaluate import (
    AnalysisReport,
    ExperimentConfig,
    ExperimentResult,
    ResultRow,
    compute_e_avg,
    compute_e_var,
    derive_seed,
    rmse,
    run_analysis,
    run_case1_experiment,
    run_case2_experiment,
)
from .persist import (
    RunManifest,
    read_anonymized,
    read_result_csv,
    read_similarity,
    write_anonymized,
    write_manifest,
    write_result_csv,
    write_similarity,
)
from .predict import (
    AnonymousIdentityRecommender,
    BaselineRecommender,
    MODEL_IDS,
    PredictedRating,
    RevealedRatingsRecommender,
    TrainedModel,
    UserIdentityRecommender,
    predict_baseline,
    predict_case1_reg,
    predict_case1a_ai,
    predict_case2_ur,
    predict_with_ratings,
    train_model,
)
from .ratings import (
    ItemStats,
    RatingScale,
    RatingTriple,
    SparseRatingMatrix,
    SplitSpec,
    build_matrix,
    item_stats,
    sparsity,
    split_prediction_input,
    split_rating_holdout,
    split_rating_kfold,
    split_user_holdout,
)
from .similarity import (
    ItemSimilarityMatrix,
    SimilarityHistogram,
    item_similarity_matrix,
    similarity_histogram,
)

__all__ = [name for name in dir() if not name.startswith("_")]
