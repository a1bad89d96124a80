"""Sparse user-item rating matrices and the train/test splitting protocols.

User and item identities are dense 1-based integers throughout the public
API; internal arrays are 0-based.  Matrices are immutable once built, so
every operation here is a pure function of its inputs (and a seed, where
randomized).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import (
    DuplicateEntry,
    EmptyMatrix,
    IndexOutOfRange,
    InsufficientRatings,
    RatingOutOfScale,
)

# A rating row maps item identity -> rating value.
RatingRow = dict[int, float]


def round_half_up(x: float) -> int:
    """Round to the nearest integer with ties going up (1.5 -> 2)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class RatingScale:
    """Closed interval of admissible rating values."""

    lo: float = 1.0
    hi: float = 5.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"scale requires lo < hi, got [{self.lo}, {self.hi}]")

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def clamp(self, value: float) -> float:
        return min(max(value, self.lo), self.hi)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class RatingTriple:
    user: int
    item: int
    value: float


@dataclass(frozen=True)
class ItemStats:
    """Rater set and mean rating of one item; mean is None when unrated."""

    item: int
    raters: frozenset[int]
    mean: float | None


@dataclass(frozen=True)
class SplitSpec:
    kind: Literal["rating-holdout", "user-holdout"]
    holdout_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError(
                f"holdout_fraction must lie strictly in (0, 1), got {self.holdout_fraction}"
            )


def weighted_item_means(
    items0: np.ndarray, values: np.ndarray, row_weights: np.ndarray, m: int
) -> np.ndarray:
    """Per-item weighted mean over present entries; NaN where no entry exists.

    ``items0`` holds 0-based item indices, ``row_weights`` one weight per
    entry.  Shared by raw matrices (unit weights) and anonymized prototype
    tables (multiplicity weights) so both produce bit-identical means for
    identical inputs.
    """
    sums = np.bincount(items0, weights=row_weights * values, minlength=m)
    wsum = np.bincount(items0, weights=row_weights, minlength=m)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / wsum
    means[wsum == 0] = np.nan
    return means


class SparseRatingMatrix:
    """Missing-value-aware rating matrix of ``n`` users by ``m`` items.

    Stores only the observed entries; the set of present (user, item)
    pairs is exactly the observation support.  Construction validates
    index bounds, the rating scale, and uniqueness of pairs.
    """

    def __init__(
        self,
        triples: Iterable[RatingTriple | tuple[int, int, float]],
        n: int,
        m: int,
        scale: RatingScale | tuple[float, float] = RatingScale(),
    ):
        if n < 0 or m < 0:
            raise ValueError("user and item counts must be nonnegative")
        if not isinstance(scale, RatingScale):
            scale = RatingScale(*scale)
        triples = list(triples)
        users = np.empty(len(triples), dtype=np.int64)
        items = np.empty(len(triples), dtype=np.int64)
        values = np.empty(len(triples), dtype=np.float64)
        for idx, t in enumerate(triples):
            u, i, v = (t.user, t.item, t.value) if isinstance(t, RatingTriple) else t
            if not (1 <= u <= n):
                raise IndexOutOfRange(f"user {u} outside [1, {n}]")
            if not (1 <= i <= m):
                raise IndexOutOfRange(f"item {i} outside [1, {m}]")
            if not scale.contains(v):
                raise RatingOutOfScale(
                    f"rating {v} for user {u}, item {i} outside [{scale.lo}, {scale.hi}]"
                )
            users[idx], items[idx], values[idx] = u - 1, i - 1, float(v)
        order = np.lexsort((items, users))
        users, items, values = users[order], items[order], values[order]
        if len(users) > 1:
            same = (users[1:] == users[:-1]) & (items[1:] == items[:-1])
            if same.any():
                first = int(np.flatnonzero(same)[0])
                raise DuplicateEntry(int(users[first]) + 1, int(items[first]) + 1)
        self._init_from_sorted(users, items, values, n, m, scale)

    @classmethod
    def _from_arrays(
        cls,
        users0: np.ndarray,
        items0: np.ndarray,
        values: np.ndarray,
        n: int,
        m: int,
        scale: RatingScale,
    ) -> "SparseRatingMatrix":
        """Trusted fast path: arrays must be 0-based, unique, in-bounds."""
        self = cls.__new__(cls)
        order = np.lexsort((items0, users0))
        self._init_from_sorted(
            np.asarray(users0, dtype=np.int64)[order],
            np.asarray(items0, dtype=np.int64)[order],
            np.asarray(values, dtype=np.float64)[order],
            n,
            m,
            scale,
        )
        return self

    def _init_from_sorted(self, users, items, values, n, m, scale):
        self._users = users
        self._items = items
        self._values = values
        self.n = int(n)
        self.m = int(m)
        self.scale = scale
        # CSR layout over users.
        self._row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(users, minlength=n), out=self._row_ptr[1:])
        # CSC layout over items.
        col_order = np.lexsort((users, items))
        self._col_users = users[col_order]
        self._col_values = values[col_order]
        self._col_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(items, minlength=m), out=self._col_ptr[1:])
        self._item_means: np.ndarray | None = None

    # -- basic accessors ------------------------------------------------

    @property
    def nnz(self) -> int:
        """Number of observed ratings."""
        return len(self._values)

    def entry_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """0-based (users, items, values) arrays sorted by (user, item)."""
        return self._users, self._items, self._values

    def row_arrays(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        """1-based item ids and values of one user's row, item-sorted."""
        self._check_user(user)
        lo, hi = self._row_ptr[user - 1], self._row_ptr[user]
        return self._items[lo:hi] + 1, self._values[lo:hi]

    def user_row(self, user: int) -> RatingRow:
        items, values = self.row_arrays(user)
        return {int(i): float(v) for i, v in zip(items, values)}

    def col_arrays(self, item: int) -> tuple[np.ndarray, np.ndarray]:
        """1-based user ids and values of one item's column, user-sorted."""
        self._check_item(item)
        lo, hi = self._col_ptr[item - 1], self._col_ptr[item]
        return self._col_users[lo:hi] + 1, self._col_values[lo:hi]

    def rating(self, user: int, item: int) -> float | None:
        self._check_user(user)
        self._check_item(item)
        lo, hi = self._row_ptr[user - 1], self._row_ptr[user]
        pos = lo + np.searchsorted(self._items[lo:hi], item - 1)
        if pos < hi and self._items[pos] == item - 1:
            return float(self._values[pos])
        return None

    def item_means(self) -> np.ndarray:
        """Length-m vector of per-item means; NaN for unrated items."""
        if self._item_means is None:
            self._item_means = weighted_item_means(
                self._items, self._values, np.ones(self.nnz), self.m
            )
        return self._item_means

    def to_triples(self) -> list[RatingTriple]:
        return [
            RatingTriple(int(u) + 1, int(i) + 1, float(v))
            for u, i, v in zip(self._users, self._items, self._values)
        ]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseRatingMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and self.m == other.m
            and self.scale == other.scale
            and np.array_equal(self._users, other._users)
            and np.array_equal(self._items, other._items)
            and np.array_equal(self._values, other._values)
        )

    def __repr__(self) -> str:
        return (
            f"SparseRatingMatrix(n={self.n}, m={self.m}, nnz={self.nnz}, "
            f"scale=[{self.scale.lo}, {self.scale.hi}])"
        )

    def _check_user(self, user: int) -> None:
        if not 1 <= user <= self.n:
            raise IndexOutOfRange(f"user {user} outside [1, {self.n}]")

    def _check_item(self, item: int) -> None:
        if not 1 <= item <= self.m:
            raise IndexOutOfRange(f"item {item} outside [1, {self.m}]")


def build_matrix(
    triples: Sequence[RatingTriple | tuple[int, int, float]],
    n: int,
    m: int,
    scale: RatingScale | tuple[float, float] = RatingScale(),
) -> SparseRatingMatrix:
    """Build a validated matrix from rating triples."""
    return SparseRatingMatrix(triples, n, m, scale)


def item_stats(matrix: SparseRatingMatrix, item: int) -> ItemStats:
    """Rater set and mean of one item; mean is None if nobody rated it."""
    users, values = matrix.col_arrays(item)
    if len(users) == 0:
        return ItemStats(item, frozenset(), None)
    return ItemStats(item, frozenset(int(u) for u in users), float(np.mean(values)))


def sparsity(matrix: SparseRatingMatrix) -> float:
    """Fraction of observed cells, |support| / (n * m)."""
    if matrix.n == 0 or matrix.m == 0:
        raise EmptyMatrix("sparsity undefined for a 0-sized matrix")
    return matrix.nnz / (matrix.n * matrix.m)


def split_rating_holdout(
    matrix: SparseRatingMatrix, spec: SplitSpec
) -> tuple[SparseRatingMatrix, list[RatingTriple]]:
    """Hold out a uniform random fraction of the ratings.

    The held-out set has exactly round(holdout_fraction * nnz) ratings
    (half-up rounding); the remainder forms the training matrix over an
    unchanged (n, m) shape.  Users may end up with empty training rows.
    """
    if spec.kind != "rating-holdout":
        raise ValueError(f"expected a rating-holdout spec, got {spec.kind!r}")
    users, items, values = matrix.entry_arrays()
    size = round_half_up(spec.holdout_fraction * matrix.nnz)
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(matrix.nnz)
    test_idx = np.sort(perm[:size])
    train_mask = np.ones(matrix.nnz, dtype=bool)
    train_mask[test_idx] = False
    train = SparseRatingMatrix._from_arrays(
        users[train_mask], items[train_mask], values[train_mask],
        matrix.n, matrix.m, matrix.scale,
    )
    test = [
        RatingTriple(int(users[i]) + 1, int(items[i]) + 1, float(values[i]))
        for i in test_idx
    ]
    return train, test


def split_user_holdout(
    matrix: SparseRatingMatrix, spec: SplitSpec
) -> tuple[SparseRatingMatrix, dict[int, RatingRow]]:
    """Hold out a uniform random fraction of the users.

    Training keeps every rating of the retained users; the result maps
    each held-out user to their full rating row.  The two user sets are
    disjoint by construction.
    """
    if spec.kind != "user-holdout":
        raise ValueError(f"expected a user-holdout spec, got {spec.kind!r}")
    users, items, values = matrix.entry_arrays()
    n_hold = round_half_up(spec.holdout_fraction * matrix.n)
    rng = np.random.default_rng(spec.seed)
    held = np.sort(rng.permutation(matrix.n)[:n_hold])
    held_mask_by_user = np.zeros(matrix.n, dtype=bool)
    held_mask_by_user[held] = True
    entry_held = held_mask_by_user[users]
    train = SparseRatingMatrix._from_arrays(
        users[~entry_held], items[~entry_held], values[~entry_held],
        matrix.n, matrix.m, matrix.scale,
    )
    test_users = {int(u) + 1: matrix.user_row(int(u) + 1) for u in held}
    return train, test_users


def split_prediction_input(
    row: RatingRow, count: int | float, seed: int
) -> tuple[RatingRow, RatingRow]:
    """Split one rating row into a revealed input part and a holdout part.

    ``count`` is an absolute size when int (then it must leave the holdout
    nonempty) and a fraction of the row when float.  The revealed part is a
    uniform random subset; determinism depends only on the row contents and
    the seed, not on dict insertion order.
    """
    if len(row) < 1:
        raise InsufficientRatings("row has no ratings to split")
    if isinstance(count, float):
        size = round_half_up(count * len(row))
        size = min(max(size, 0), len(row))
    else:
        size = int(count)
        if size < 0:
            raise ValueError(f"negative prediction-input size {size}")
        if size > len(row) - 1:
            raise InsufficientRatings(
                f"cannot reveal {size} of {len(row)} ratings and keep a nonempty holdout"
            )
    items = sorted(row)
    rng = np.random.default_rng(seed)
    picked = set(rng.permutation(len(items))[:size].tolist())
    revealed = {it: row[it] for idx, it in enumerate(items) if idx in picked}
    holdout = {it: row[it] for idx, it in enumerate(items) if idx not in picked}
    return revealed, holdout


def split_rating_kfold(
    matrix: SparseRatingMatrix, folds: int, seed: int
) -> list[tuple[SparseRatingMatrix, list[RatingTriple]]]:
    """Partition the ratings into ``folds`` test sets of near-equal size.

    Optional alternative to repeated random holdout: each fold plays the
    test role once, the union of folds is the full support.
    """
    if folds < 2:
        raise ValueError("k-fold splitting needs at least 2 folds")
    users, items, values = matrix.entry_arrays()
    rng = np.random.default_rng(seed)
    assignment = rng.permutation(matrix.nnz) % folds
    out = []
    for f in range(folds):
        test_mask = assignment == f
        train = SparseRatingMatrix._from_arrays(
            users[~test_mask], items[~test_mask], values[~test_mask],
            matrix.n, matrix.m, matrix.scale,
        )
        test = [
            RatingTriple(int(u) + 1, int(i) + 1, float(v))
            for u, i, v in zip(users[test_mask], items[test_mask], values[test_mask])
        ]
        out.append((train, test))
    return out
