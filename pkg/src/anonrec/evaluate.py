"""Experiment harness: RMSE sweeps over the anonymity parameter and over
the number of revealed ratings, plus the diagnostic analyses.

Every run is a pure function of (matrix, config).  Per-trial randomness is
derived from the master seed with a fixed rule (see ``derive_seed``), and
result rows are keyed rather than appended so assembly order is
irrelevant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .anonymize import AnonymizedMatrix, AssignmentMap, oka_anonymize
from .errors import EmptyTestSet, NoComparableItems
from .predict import TrainedModel, predict_arrays, train_model
from .ratings import (
    RatingTriple,
    SparseRatingMatrix,
    SplitSpec,
    split_prediction_input,
    split_rating_holdout,
    split_rating_kfold,
    split_user_holdout,
)
from .similarity import SimilarityHistogram, item_similarity_matrix, similarity_histogram

# Stream tags for the seed-derivation rule (documented in run manifests).
STREAM_CASE1_SPLIT = 1
STREAM_CASE1_REVEAL = 2
STREAM_CASE1_ANON = 3
STREAM_CASE2_SPLIT = 4
STREAM_CASE2_ANON = 5
STREAM_CASE2_DRAW = 6
STREAM_ANALYSIS = 7

SEED_RULE = "numpy SeedSequence([master_seed, stream, *indices]).generate_state(1)[0]"


def derive_seed(master: int, stream: int, *indices: int) -> int:
    """Fixed mixing rule turning (master seed, stream, indices) into a seed."""
    return int(np.random.SeedSequence([master, stream, *indices]).generate_state(1)[0])


def rmse(pairs) -> float:
    """Root-mean-square error over (predicted, true) pairs."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.size == 0:
        raise EmptyTestSet("RMSE needs at least one prediction pair")
    diff = arr[:, 0] - arr[:, 1]
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass(frozen=True)
class EAvgResult:
    """Mean absolute gap between raw and anonymized item means."""

    value: float
    included_items: int
    excluded_items: int


def compute_e_avg(raw_means: np.ndarray, anon_means: np.ndarray) -> EAvgResult:
    """Average |raw mean - anonymized mean| over items defined on both sides."""
    raw_means = np.asarray(raw_means, dtype=np.float64)
    anon_means = np.asarray(anon_means, dtype=np.float64)
    if raw_means.shape != anon_means.shape:
        raise ValueError("mean vectors must cover the same item set")
    ok = ~(np.isnan(raw_means) | np.isnan(anon_means))
    if not ok.any():
        raise NoComparableItems("no item has a defined mean on both sides")
    gaps = np.abs(raw_means[ok] - anon_means[ok])
    return EAvgResult(float(gaps.mean()), int(ok.sum()), int((~ok).sum()))


@dataclass(frozen=True)
class EVarResult:
    """Dispersion of signed prediction errors, with the MAE alongside."""

    variance: float
    mae: float


def compute_e_var(pairs) -> EVarResult:
    """Population variance of (predicted - true), plus mean absolute error."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.size == 0:
        raise EmptyTestSet("error dispersion needs at least one pair")
    errors = arr[:, 0] - arr[:, 1]
    return EVarResult(float(np.var(errors)), float(np.mean(np.abs(errors))))


_CASE1_MODELS = ("Case1/REG", "Case1A/AI", "Case1A/UR", "BASELINE")
_CASE2_MODELS = ("Case2/UR", "Case2A/UR", "BASELINE")


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs of one experiment sweep; defaults follow the standard protocol.

    ``models`` restricts which of the protocol's models are evaluated; None
    means all of them.
    """

    protocol: str  # "case1" or "case2"
    models: tuple[str, ...] | None = None
    k_values: tuple[int, ...] = tuple(range(2, 16))
    n_values: tuple[int, ...] = tuple(range(1, 21))
    trials: int = 20
    holdout_fraction: float = 0.2
    prediction_input_fraction: float = 0.2
    draws: int = 20
    seed: int = 0
    weighted: bool = True
    bins: int = 40
    dataset: str = ""
    hygiene_check: bool = False
    folds: int | None = None

    def __post_init__(self):
        if self.protocol not in ("case1", "case2"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if any(k < 1 for k in self.k_values):
            raise ValueError("k values must be >= 1")
        if any(n < 1 for n in self.n_values):
            raise ValueError("prediction-input sizes must be >= 1")
        if self.trials < 1 or self.draws < 1:
            raise ValueError("trials and draws must be >= 1")
        known = _CASE1_MODELS if self.protocol == "case1" else _CASE2_MODELS
        if self.models is not None:
            unknown = [m for m in self.models if m not in known]
            if unknown:
                raise ValueError(f"models {unknown} not part of {self.protocol}")

    def wants(self, model_id: str) -> bool:
        return self.models is None or model_id in self.models


@dataclass(frozen=True)
class ResultRow:
    """Trial-averaged outcome for one (model, k, n) cell.

    k is 0 for models that see no anonymization and n is 0 where the
    revealed-rating count does not apply.
    """

    model_id: str
    k: int
    n: int
    rmse: float
    rmse_sd: float
    fallback_rate: float


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    metadata: dict = field(default_factory=dict)

    def row(self, model_id: str, k: int = 0, n: int = 0) -> ResultRow:
        for r in self.rows:
            if (r.model_id, r.k, r.n) == (model_id, k, n):
                return r
        raise KeyError((model_id, k, n))


def _best_level(model: TrainedModel) -> int:
    # The mean-only model is already at its fullest when it serves item means.
    return 1 if model.model_id == "BASELINE" else 0


class _Accumulator:
    """Pooled squared error, count, and fallback tally for one result cell."""

    __slots__ = ("sq", "cnt", "fb")

    def __init__(self):
        self.sq = 0.0
        self.cnt = 0
        self.fb = 0

    def add(self, pred: np.ndarray, truth: np.ndarray, levels: np.ndarray, best: int):
        diff = pred - truth
        self.sq += float(diff @ diff)
        self.cnt += len(truth)
        self.fb += int((levels > best).sum())

    @property
    def rmse(self) -> float:
        return math.sqrt(self.sq / self.cnt) if self.cnt else float("nan")

    @property
    def fallback_rate(self) -> float:
        return self.fb / self.cnt if self.cnt else 0.0


def _group_test_pairs(test: list[RatingTriple]) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    by_user: dict[int, list[tuple[int, float]]] = {}
    for t in test:
        by_user.setdefault(t.user, []).append((t.item - 1, t.value))
    groups = {}
    for u in sorted(by_user):
        pairs = by_user[u]
        groups[u] = (
            np.array([p[0] for p in pairs], dtype=np.int64),
            np.array([p[1] for p in pairs], dtype=np.float64),
        )
    return groups


def _eval_grouped(model: TrainedModel, groups, input_for_user) -> _Accumulator:
    """Evaluate one model over per-user test groups."""
    acc = _Accumulator()
    best = _best_level(model)
    sim_values = model.sims.values if model.sims is not None else None
    for u, (targets0, truth) in groups.items():
        items0, vals = input_for_user(u)
        pred, levels = predict_arrays(
            sim_values, model.item_means, model.global_mean, model.scale,
            items0, vals, targets0,
        )
        acc.add(pred, truth, levels, best)
    return acc


_EMPTY_ITEMS = np.zeros(0, dtype=np.int64)
_EMPTY_VALUES = np.zeros(0, dtype=np.float64)


def _row_arrays0(matrix, user: int) -> tuple[np.ndarray, np.ndarray]:
    items1, vals = matrix.row_arrays(user)
    return items1 - 1, vals


def check_split_hygiene(
    train: SparseRatingMatrix,
    test_pairs: set[tuple[int, int]],
    anon: AnonymizedMatrix | None = None,
    amap: AssignmentMap | None = None,
) -> dict[str, int]:
    """Data-flow audit of one trial: test ratings must be unreachable.

    Counts test pairs present in the training support, and anonymized
    prototype cells that cannot be reproduced from training rows alone.
    """
    users0, items0, _ = train.entry_arrays()
    train_pairs = set(zip((users0 + 1).tolist(), (items0 + 1).tolist()))
    leaked = len(train_pairs & test_pairs)
    mismatch = 0
    if anon is not None and amap is not None:
        rebuilt, _ = _prototypes_from(train, amap, anon.k)
        if rebuilt != anon:
            mismatch = 1
    return {"test_pairs_in_train": leaked, "prototype_mismatch": mismatch}


def _prototypes_from(train, amap, k):
    """Recompute the prototype table implied by an assignment over train."""
    users0, items0, values = train.entry_arrays()
    n_clusters = amap.n_anon
    sums = np.zeros((n_clusters, train.m))
    cnts = np.zeros((n_clusters, train.m))
    cluster_of_entry = amap.mapping[users0] - 1
    np.add.at(sums, (cluster_of_entry, items0), values)
    np.add.at(cnts, (cluster_of_entry, items0), 1.0)
    rows, cols = np.nonzero(cnts)
    protos = SparseRatingMatrix._from_arrays(
        rows.astype(np.int64), cols.astype(np.int64),
        sums[rows, cols] / cnts[rows, cols],
        n_clusters, train.m, train.scale,
    )
    return AnonymizedMatrix(protos, amap.class_sizes(), k), amap


def run_case1_experiment(matrix: SparseRatingMatrix, config: ExperimentConfig) -> ExperimentResult:
    """RMSE of the user-identity models versus the anonymity parameter.

    Per trial: hold out a fraction of the ratings, train the regular model
    on the raw remainder, then for each k anonymize the same training split
    and evaluate the anonymous-identity model, the revealed-ratings model
    (each user reveals a fraction of their own training row, raw), and the
    item-mean model on that k's means.  RMSE is always over the held-out
    ratings, averaged across trials.
    """
    if config.protocol != "case1":
        raise ValueError("run_case1_experiment needs a case1 config")
    cells: dict[tuple[str, int, int], list[tuple[float, float]]] = {}
    hygiene = {"test_pairs_in_train": 0, "prototype_mismatch": 0}

    if config.folds:
        fold_seed = derive_seed(config.seed, STREAM_CASE1_SPLIT, 0)
        splits = split_rating_kfold(matrix, config.folds, fold_seed)
    else:
        splits = None
    n_trials = config.folds if config.folds else config.trials

    for trial in range(n_trials):
        if splits is not None:
            train, test = splits[trial]
        else:
            train, test = split_rating_holdout(
                matrix,
                SplitSpec(
                    "rating-holdout",
                    config.holdout_fraction,
                    derive_seed(config.seed, STREAM_CASE1_SPLIT, trial),
                ),
            )
        groups = _group_test_pairs(test)
        test_pairs = {(t.user, t.item) for t in test}

        raw_sims = item_similarity_matrix(train) if config.wants("Case1/REG") else None
        if config.wants("Case1/REG"):
            reg = train_model("Case1/REG", train=train, sims=raw_sims)
            acc = _eval_grouped(reg, groups, lambda u: _row_arrays0(train, u))
            cells.setdefault(("Case1/REG", 0, 0), []).append((acc.rmse, acc.fallback_rate))

        revealed: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        if config.wants("Case1A/UR"):
            for u in groups:
                row = train.user_row(u)
                if row:
                    part, _ = split_prediction_input(
                        row,
                        config.prediction_input_fraction,
                        derive_seed(config.seed, STREAM_CASE1_REVEAL, trial, u),
                    )
                else:
                    part = {}
                items = sorted(part)
                revealed[u] = (
                    np.array(items, dtype=np.int64) - 1,
                    np.array([part[i] for i in items], dtype=np.float64),
                )

        for k in config.k_values:
            anon, amap = oka_anonymize(
                train, k, derive_seed(config.seed, STREAM_CASE1_ANON, trial, k)
            )
            needs_sims = config.wants("Case1A/AI") or config.wants("Case1A/UR")
            asims = item_similarity_matrix(anon, weighted=config.weighted) if needs_sims else None

            if config.wants("Case1A/AI"):
                ai = train_model("Case1A/AI", anon=anon, sims=asims)
                acc = _eval_grouped(
                    ai, groups, lambda u: _row_arrays0(anon, amap.anon_id(u))
                )
                cells.setdefault(("Case1A/AI", k, 0), []).append((acc.rmse, acc.fallback_rate))
            if config.wants("Case1A/UR"):
                ur = train_model("Case1A/UR", anon=anon, sims=asims)
                acc = _eval_grouped(ur, groups, lambda u: revealed[u])
                cells.setdefault(("Case1A/UR", k, 0), []).append((acc.rmse, acc.fallback_rate))
            if config.wants("BASELINE"):
                base = train_model("BASELINE", anon=anon, weighted=config.weighted)
                acc = _eval_grouped(base, groups, lambda u: (_EMPTY_ITEMS, _EMPTY_VALUES))
                cells.setdefault(("BASELINE", k, 0), []).append((acc.rmse, acc.fallback_rate))

            if config.hygiene_check:
                report = check_split_hygiene(train, test_pairs, anon, amap)
                for key, v in report.items():
                    hygiene[key] += v
        if config.hygiene_check and not config.k_values:
            report = check_split_hygiene(train, test_pairs)
            hygiene["test_pairs_in_train"] += report["test_pairs_in_train"]

    rows = _aggregate(cells)
    meta = {"protocol": "case1", "trials": n_trials, "seed": config.seed}
    if config.hygiene_check:
        meta["hygiene"] = hygiene
    return ExperimentResult(rows, meta)


def run_case2_experiment(matrix: SparseRatingMatrix, config: ExperimentConfig) -> ExperimentResult:
    """RMSE of the cold-start models versus the revealed-rating count.

    Per trial: hold out a fraction of the users.  The raw and anonymized
    revealed-ratings models train on the retained users; each held-out user
    reveals N of their ratings (several independent draws, averaged) and is
    scored on the rest.  The item-mean model is scored on the same pairs.
    Users with fewer than N + 1 ratings are skipped for that N and counted.
    """
    if config.protocol != "case2":
        raise ValueError("run_case2_experiment needs a case2 config")
    cells: dict[tuple[str, int, int], list[tuple[float, float]]] = {}
    skipped: dict[int, int] = {n: 0 for n in config.n_values}
    eligible: dict[int, int] = {n: 0 for n in config.n_values}
    hygiene = {"test_pairs_in_train": 0, "prototype_mismatch": 0}

    for trial in range(config.trials):
        train, test_users = split_user_holdout(
            matrix,
            SplitSpec(
                "user-holdout",
                config.holdout_fraction,
                derive_seed(config.seed, STREAM_CASE2_SPLIT, trial),
            ),
        )
        models: list[tuple[str, int, TrainedModel]] = []
        if config.wants("Case2/UR"):
            models.append(("Case2/UR", 0, train_model("Case2/UR", train=train)))
        if config.wants("BASELINE"):
            models.append(("BASELINE", 0, train_model("BASELINE", train=train)))
        for k in config.k_values if config.wants("Case2A/UR") else ():
            anon, amap = oka_anonymize(
                train, k, derive_seed(config.seed, STREAM_CASE2_ANON, trial, k)
            )
            asims = item_similarity_matrix(anon, weighted=config.weighted)
            models.append(
                ("Case2A/UR", k, train_model("Case2A/UR", anon=anon, sims=asims))
            )
            if config.hygiene_check:
                test_pairs = {
                    (u, i) for u, row in test_users.items() for i in row
                }
                report = check_split_hygiene(train, test_pairs, anon, amap)
                for key, v in report.items():
                    hygiene[key] += v

        # acc[(model, k, n)][draw] pools squared errors across users.
        acc: dict[tuple[str, int, int], list[_Accumulator]] = {
            (mid, k, n): [_Accumulator() for _ in range(config.draws)]
            for (mid, k, _model) in models
            for n in config.n_values
        }
        for u in sorted(test_users):
            row = test_users[u]
            items = sorted(row)
            items0 = np.array(items, dtype=np.int64) - 1
            vals = np.array([row[i] for i in items], dtype=np.float64)
            size = len(items)
            for n in config.n_values:
                if size < n + 1:
                    skipped[n] += 1
                    continue
                eligible[n] += 1
                for d in range(config.draws):
                    rng = np.random.default_rng(
                        derive_seed(config.seed, STREAM_CASE2_DRAW, trial, u, n, d)
                    )
                    perm = rng.permutation(size)
                    in_pos, hold_pos = perm[:n], np.sort(perm[n:])
                    for mid, k, model in models:
                        pred, levels = predict_arrays(
                            model.sims.values if model.sims is not None else None,
                            model.item_means,
                            model.global_mean,
                            model.scale,
                            items0[in_pos],
                            vals[in_pos],
                            items0[hold_pos],
                        )
                        acc[(mid, k, n)][d].add(
                            pred, vals[hold_pos], levels, _best_level(model)
                        )
        for (mid, k, n), per_draw in acc.items():
            scored = [a for a in per_draw if a.cnt]
            if not scored:
                continue
            trial_rmse = float(np.mean([a.rmse for a in scored]))
            fb = sum(a.fb for a in scored) / sum(a.cnt for a in scored)
            cells.setdefault((mid, k, n), []).append((trial_rmse, fb))

    rows = _aggregate(cells)
    meta = {
        "protocol": "case2",
        "trials": config.trials,
        "seed": config.seed,
        "skipped_users": skipped,
        "eligible_user_evaluations": eligible,
    }
    if config.hygiene_check:
        meta["hygiene"] = hygiene
    return ExperimentResult(rows, meta)


def _aggregate(cells) -> list[ResultRow]:
    rows = []
    for (mid, k, n) in sorted(cells):
        vals = cells[(mid, k, n)]
        rmses = np.array([v[0] for v in vals])
        fbs = np.array([v[1] for v in vals])
        sd = float(rmses.std(ddof=1)) if len(rmses) > 1 else 0.0
        rows.append(ResultRow(mid, k, n, float(rmses.mean()), sd, float(fbs.mean())))
    return rows


@dataclass
class AnalysisReport:
    """Diagnostics of anonymization's effect on means, similarities, errors."""

    e_avg: dict[int, EAvgResult]
    e_avg_unweighted: dict[int, EAvgResult]
    e_var: dict[tuple[str, int], EVarResult]
    histograms: dict[int, SimilarityHistogram]
    raw_histogram: SimilarityHistogram


def run_analysis(matrix: SparseRatingMatrix, config: ExperimentConfig) -> AnalysisReport:
    """Single-split diagnostic sweep over the anonymity parameter.

    For each k: the gap between raw and anonymized item means (under both
    weighting conventions), the similarity histogram, and the error
    dispersion of every model on the held-out ratings.  Raw-model
    diagnostics are keyed at k = 0.
    """
    if config.protocol != "case1":
        raise ValueError("run_analysis uses the case1 protocol")
    train, test = split_rating_holdout(
        matrix,
        SplitSpec(
            "rating-holdout",
            config.holdout_fraction,
            derive_seed(config.seed, STREAM_ANALYSIS, 0),
        ),
    )
    groups = _group_test_pairs(test)
    raw_sims = item_similarity_matrix(train)
    raw_means = train.item_means()
    reg = train_model("Case1/REG", train=train, sims=raw_sims)

    def collect(model, input_for_user):
        pairs = []
        sim_values = model.sims.values if model.sims is not None else None
        for u, (targets0, truth) in groups.items():
            items0, vals = input_for_user(u)
            pred, _ = predict_arrays(
                sim_values, model.item_means, model.global_mean, model.scale,
                items0, vals, targets0,
            )
            pairs.extend(zip(pred.tolist(), truth.tolist()))
        return compute_e_var(pairs)

    e_var: dict[tuple[str, int], EVarResult] = {}
    e_var[("Case1/REG", 0)] = collect(reg, lambda u: _row_arrays0(train, u))
    raw_base = train_model("BASELINE", train=train)
    e_var[("BASELINE", 0)] = collect(raw_base, lambda u: (_EMPTY_ITEMS, _EMPTY_VALUES))

    revealed: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for u in groups:
        row = train.user_row(u)
        part = (
            split_prediction_input(
                row,
                config.prediction_input_fraction,
                derive_seed(config.seed, STREAM_ANALYSIS, 1, u),
            )[0]
            if row
            else {}
        )
        items = sorted(part)
        revealed[u] = (
            np.array(items, dtype=np.int64) - 1,
            np.array([part[i] for i in items], dtype=np.float64),
        )

    e_avg: dict[int, EAvgResult] = {}
    e_avg_unweighted: dict[int, EAvgResult] = {}
    histograms: dict[int, SimilarityHistogram] = {}
    for k in config.k_values:
        anon, amap = oka_anonymize(
            train, k, derive_seed(config.seed, STREAM_ANALYSIS, 2, k)
        )
        asims = item_similarity_matrix(anon, weighted=config.weighted)
        e_avg[k] = compute_e_avg(raw_means, anon.item_means(weighted=True))
        e_avg_unweighted[k] = compute_e_avg(raw_means, anon.item_means(weighted=False))
        histograms[k] = similarity_histogram(asims, config.bins)
        ai = train_model("Case1A/AI", anon=anon, sims=asims)
        ur = train_model("Case1A/UR", anon=anon, sims=asims)
        base = train_model("BASELINE", anon=anon, weighted=config.weighted)
        e_var[("Case1A/AI", k)] = collect(ai, lambda u: _row_arrays0(anon, amap.anon_id(u)))
        e_var[("Case1A/UR", k)] = collect(ur, lambda u: revealed[u])
        e_var[("BASELINE", k)] = collect(base, lambda u: (_EMPTY_ITEMS, _EMPTY_VALUES))

    return AnalysisReport(
        e_avg=e_avg,
        e_avg_unweighted=e_avg_unweighted,
        e_var=e_var,
        histograms=histograms,
        raw_histogram=similarity_histogram(raw_sims, config.bins),
    )
