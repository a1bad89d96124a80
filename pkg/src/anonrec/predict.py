"""Rating prediction for every training-input/prediction-input pairing.

All personalized predictors share one form: the target item's mean plus a
similarity-weighted average of the input row's deviations from the item
means, normalized by the summed absolute similarities.  The models differ
only in where the similarities and means come from (raw or anonymized
training input) and in what plays the input row (the user's own training
row, a revealed rating row, or an anonymous identity's prototype row).

Predictions are clamped to the rating scale and tagged with how far the
predictor had to fall back: ``full`` for the weighted form, ``item-mean``
when the input row contributes nothing usable, ``global-mean`` when even
the target's item mean is undefined.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .anonymize import AnonymizedMatrix
from .errors import IndexOutOfRange, MissingAnonymizedMatrix, RatingOutOfScale
from .ratings import RatingRow, RatingScale, SparseRatingMatrix
from .similarity import ItemSimilarityMatrix, item_similarity_matrix

MODEL_IDS = ("Case1/REG", "Case1A/UR", "Case1A/AI", "Case2/UR", "Case2A/UR", "BASELINE")

FALLBACK_LEVELS = ("full", "item-mean", "global-mean")
_FULL, _ITEM_MEAN, _GLOBAL_MEAN = 0, 1, 2


@dataclass(frozen=True)
class PredictedRating:
    value: float
    fallback_level: str


# Tagged prediction inputs: what a requesting user hands the recommender.
@dataclass(frozen=True)
class UserIdentity:
    user: int


@dataclass(frozen=True)
class UserRatings:
    row: RatingRow


@dataclass(frozen=True)
class AnonymousIdentity:
    anon_id: int


@dataclass(frozen=True)
class Empty:
    pass


PredictionInput = UserIdentity | UserRatings | AnonymousIdentity | Empty


@dataclass(frozen=True)
class TrainedModel:
    """Frozen bundle of everything one model needs at prediction time."""

    model_id: str
    sims: ItemSimilarityMatrix | None
    item_means: np.ndarray
    global_mean: float
    scale: RatingScale
    anon: AnonymizedMatrix | None = None
    train: SparseRatingMatrix | None = None

    @property
    def m(self) -> int:
        return len(self.item_means)


def _global_mean(item_means: np.ndarray, scale: RatingScale) -> float:
    defined = item_means[~np.isnan(item_means)]
    return float(defined.mean()) if len(defined) else scale.midpoint


def train_model(
    model_id: str,
    *,
    train: SparseRatingMatrix | None = None,
    anon: AnonymizedMatrix | None = None,
    weighted: bool = True,
    sims: ItemSimilarityMatrix | None = None,
) -> TrainedModel:
    """Assemble a model from its required training input.

    Raw-input models need ``train``, anonymized-input models need ``anon``;
    a precomputed similarity matrix of the matching source may be passed to
    avoid recomputation.
    """
    if model_id not in MODEL_IDS:
        raise ValueError(f"unknown model id {model_id!r}")
    needs_anon = model_id in ("Case1A/UR", "Case1A/AI", "Case2A/UR")
    if needs_anon:
        if anon is None:
            raise MissingAnonymizedMatrix(f"{model_id} requires an anonymized matrix")
        if sims is None:
            sims = item_similarity_matrix(anon, weighted=weighted)
        elif sims.source != "anonymized":
            raise ValueError(f"{model_id} requires anonymized similarities")
        scale = anon.scale
        means = sims.item_means
        return TrainedModel(
            model_id, sims, means, _global_mean(means, scale), scale,
            anon=anon if model_id == "Case1A/AI" else None,
        )
    if model_id == "BASELINE":
        if anon is not None:
            means = anon.item_means(weighted=weighted)
            scale = anon.scale
        elif train is not None:
            means = train.item_means()
            scale = train.scale
        else:
            raise ValueError("BASELINE requires a raw or anonymized training input")
        return TrainedModel(model_id, None, means, _global_mean(means, scale), scale)
    # Case1/REG and Case2/UR train on the raw matrix.
    if train is None:
        raise ValueError(f"{model_id} requires a raw training matrix")
    if sims is None:
        sims = item_similarity_matrix(train)
    elif sims.source != "raw":
        raise ValueError(f"{model_id} requires raw similarities")
    means = sims.item_means
    return TrainedModel(
        model_id, sims, means, _global_mean(means, scale=train.scale), train.scale,
        train=train if model_id == "Case1/REG" else None,
    )


def predict_arrays(
    sim_values: np.ndarray | None,
    item_means: np.ndarray,
    global_mean: float,
    scale: RatingScale,
    input_items0: np.ndarray,
    input_values: np.ndarray,
    targets0: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized prediction core over 0-based arrays.

    Input items whose mean is undefined are dropped from both sums.
    Returns clamped values and fallback-level codes (0 full, 1 item-mean,
    2 global-mean).  ``sim_values`` may be None for the mean-only model.
    """
    mt = item_means[targets0]
    undefined = np.isnan(mt)
    values = np.where(undefined, global_mean, mt)
    levels = np.where(undefined, _GLOBAL_MEAN, _ITEM_MEAN).astype(np.int8)
    if sim_values is not None and len(input_items0):
        usable = ~np.isnan(item_means[input_items0])
        idx = input_items0[usable]
        if len(idx):
            dev = input_values[usable] - item_means[idx]
            s = sim_values[targets0[:, None], idx[None, :]]
            num = s @ dev
            den = np.abs(s).sum(axis=1)
            full = (den > 0.0) & ~undefined
            values = np.where(full, mt + num / np.where(full, den, 1.0), values)
            levels = np.where(full, _FULL, levels).astype(np.int8)
    return np.clip(values, scale.lo, scale.hi), levels


def _row_to_arrays(row: RatingRow) -> tuple[np.ndarray, np.ndarray]:
    items = sorted(row)
    return (
        np.array(items, dtype=np.int64) - 1,
        np.array([row[i] for i in items], dtype=np.float64),
    )


def predict_with_ratings(
    sims: ItemSimilarityMatrix,
    item_means: np.ndarray,
    input_row: RatingRow,
    target: int,
    scale: RatingScale = RatingScale(),
) -> PredictedRating:
    """Predict the target item's rating from a revealed rating row."""
    if not 1 <= target <= sims.m:
        raise IndexOutOfRange(f"item {target} outside [1, {sims.m}]")
    for item, value in input_row.items():
        if not 1 <= item <= sims.m:
            raise IndexOutOfRange(f"input item {item} outside [1, {sims.m}]")
        if not scale.contains(value):
            raise RatingOutOfScale(f"input rating {value} outside scale")
    items0, vals = _row_to_arrays(input_row)
    values, levels = predict_arrays(
        sims.values, item_means, _global_mean(item_means, scale), scale,
        items0, vals, np.array([target - 1]),
    )
    return PredictedRating(float(values[0]), FALLBACK_LEVELS[levels[0]])


def predict_case1_reg(model: TrainedModel, user: int, target: int) -> PredictedRating:
    """Personalized prediction from the user's own training row."""
    _require(model, "Case1/REG")
    items1, vals = model.train.row_arrays(user)  # raises IndexOutOfRange
    if not 1 <= target <= model.m:
        raise IndexOutOfRange(f"item {target} outside [1, {model.m}]")
    values, levels = predict_arrays(
        model.sims.values, model.item_means, model.global_mean, model.scale,
        items1 - 1, vals, np.array([target - 1]),
    )
    return PredictedRating(float(values[0]), FALLBACK_LEVELS[levels[0]])


def predict_case2_ur(model: TrainedModel, input_row: RatingRow, target: int) -> PredictedRating:
    """Cold-start or anonymized-training prediction from a revealed row."""
    if model.model_id not in ("Case2/UR", "Case1A/UR", "Case2A/UR"):
        raise ValueError(f"model {model.model_id} does not take revealed-ratings input")
    return predict_with_ratings(model.sims, model.item_means, input_row, target, model.scale)


def predict_case1a_ai(model: TrainedModel, anon_id: int, target: int) -> PredictedRating:
    """Prediction personalized for an anonymous identity's prototype row."""
    _require(model, "Case1A/AI")
    if model.anon is None:
        raise MissingAnonymizedMatrix("Case1A/AI model lacks its anonymized matrix")
    items1, vals = model.anon.row_arrays(anon_id)  # raises IndexOutOfRange
    if not 1 <= target <= model.m:
        raise IndexOutOfRange(f"item {target} outside [1, {model.m}]")
    values, levels = predict_arrays(
        model.sims.values, model.item_means, model.global_mean, model.scale,
        items1 - 1, vals, np.array([target - 1]),
    )
    return PredictedRating(float(values[0]), FALLBACK_LEVELS[levels[0]])


def predict_baseline(model: TrainedModel, target: int) -> PredictedRating:
    """Item-mean prediction, identical for every requesting user."""
    if not 1 <= target <= model.m:
        raise IndexOutOfRange(f"item {target} outside [1, {model.m}]")
    values, levels = predict_arrays(
        None, model.item_means, model.global_mean, model.scale,
        np.zeros(0, np.int64), np.zeros(0), np.array([target - 1]),
    )
    return PredictedRating(float(values[0]), FALLBACK_LEVELS[levels[0]])


def _require(model: TrainedModel, model_id: str) -> None:
    if model.model_id != model_id:
        raise ValueError(f"expected a {model_id} model, got {model.model_id}")


def predict(model: TrainedModel, prediction_input: PredictionInput, target: int) -> PredictedRating:
    """Dispatch on the prediction-input type the model is defined for.

    Each model accepts exactly one input kind: the regular model a user
    identity, the revealed-ratings models a rating row, the
    anonymous-identity model an anonymous identity, and the mean-only
    model no input at all.
    """
    if model.model_id == "BASELINE":
        if not isinstance(prediction_input, Empty):
            raise ValueError("BASELINE takes no prediction input")
        return predict_baseline(model, target)
    if model.model_id == "Case1/REG":
        if not isinstance(prediction_input, UserIdentity):
            raise ValueError("Case1/REG takes a user identity")
        return predict_case1_reg(model, prediction_input.user, target)
    if model.model_id == "Case1A/AI":
        if not isinstance(prediction_input, AnonymousIdentity):
            raise ValueError("Case1A/AI takes an anonymous identity")
        return predict_case1a_ai(model, prediction_input.anon_id, target)
    if not isinstance(prediction_input, UserRatings):
        raise ValueError(f"{model.model_id} takes a revealed rating row")
    return predict_case2_ur(model, prediction_input.row, target)


# -- estimator faces ----------------------------------------------------


class _FittedMixin:
    def _model(self) -> TrainedModel:
        if not hasattr(self, "model_"):
            raise NotFittedError(f"{type(self).__name__} must be fitted before predict")
        return self.model_


class BaselineRecommender(BaseEstimator, _FittedMixin):
    """Non-personalized item-mean recommender."""

    def __init__(self, weighted: bool = True):
        self.weighted = weighted

    def fit(self, X: SparseRatingMatrix | AnonymizedMatrix, y=None):
        if isinstance(X, AnonymizedMatrix):
            self.model_ = train_model("BASELINE", anon=X, weighted=self.weighted)
        else:
            self.model_ = train_model("BASELINE", train=X)
        return self

    def predict(self, items) -> np.ndarray:
        model = self._model()
        return np.array([predict_baseline(model, int(i)).value for i in np.atleast_1d(items)])


class UserIdentityRecommender(BaseEstimator, _FittedMixin):
    """Regular item-based recommender keyed by user identity."""

    def fit(self, X: SparseRatingMatrix, y=None):
        self.model_ = train_model("Case1/REG", train=X)
        return self

    def predict(self, pairs) -> np.ndarray:
        model = self._model()
        pairs = np.atleast_2d(np.asarray(pairs, dtype=np.int64))
        return np.array(
            [predict_case1_reg(model, int(u), int(i)).value for u, i in pairs]
        )


class RevealedRatingsRecommender(BaseEstimator, _FittedMixin):
    """Recommender personalized by a rating row the user reveals.

    Fitting on a raw matrix gives the cold-start model; fitting on an
    anonymized table gives its anonymized-training counterpart.
    """

    def __init__(self, weighted: bool = True):
        self.weighted = weighted

    def fit(self, X: SparseRatingMatrix | AnonymizedMatrix, y=None):
        if isinstance(X, AnonymizedMatrix):
            self.model_ = train_model("Case2A/UR", anon=X, weighted=self.weighted)
        else:
            self.model_ = train_model("Case2/UR", train=X)
        return self

    def predict(self, ratings: RatingRow, items) -> np.ndarray:
        model = self._model()
        return np.array(
            [predict_case2_ur(model, ratings, int(i)).value for i in np.atleast_1d(items)]
        )


class AnonymousIdentityRecommender(BaseEstimator, _FittedMixin):
    """Recommender personalized for an anonymous identity."""

    def __init__(self, weighted: bool = True):
        self.weighted = weighted

    def fit(self, X: AnonymizedMatrix, y=None):
        if not isinstance(X, AnonymizedMatrix):
            raise MissingAnonymizedMatrix(
                "AnonymousIdentityRecommender fits on an anonymized matrix"
            )
        self.model_ = train_model("Case1A/AI", anon=X, weighted=self.weighted)
        return self

    def predict(self, pairs) -> np.ndarray:
        model = self._model()
        pairs = np.atleast_2d(np.asarray(pairs, dtype=np.int64))
        return np.array(
            [predict_case1a_ai(model, int(a), int(i)).value for a, i in pairs]
        )
