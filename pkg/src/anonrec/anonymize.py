"""k-anonymization of rating matrices by one-pass K-means microaggregation.

Users are clustered into floor(n/k) groups, the size-adjustment stage
enforces a minimum group size of k, and each group is replaced by a single
prototype row whose value at an item is the mean over the group members
who rated it.  The published table keeps one row per prototype together
with its multiplicity, so every row stands for at least k users.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import EmptyCluster, IndexOutOfRange, InvalidK, UnknownUser
from .ratings import RatingRow, RatingScale, SparseRatingMatrix, weighted_item_means


class AnonymizedMatrix:
    """Prototype rows with multiplicities: the published k-anonymous table."""

    def __init__(self, prototypes: SparseRatingMatrix, multiplicities, k: int):
        multiplicities = np.asarray(multiplicities, dtype=np.int64)
        if len(multiplicities) != prototypes.n:
            raise ValueError("one multiplicity per prototype row is required")
        if k < 1:
            raise InvalidK(f"k must be >= 1, got {k}")
        if prototypes.n > 0 and multiplicities.min() < k:
            raise ValueError(
                f"multiplicity {int(multiplicities.min())} below the declared k={k}"
            )
        self.prototypes = prototypes
        self.multiplicities = multiplicities
        self.k = int(k)

    @property
    def n_prime(self) -> int:
        return self.prototypes.n

    @property
    def m(self) -> int:
        return self.prototypes.m

    @property
    def scale(self) -> RatingScale:
        return self.prototypes.scale

    @property
    def n_users(self) -> int:
        """Number of original users the table stands for."""
        return int(self.multiplicities.sum())

    def prototype_row(self, anon_id: int) -> RatingRow:
        return self.prototypes.user_row(anon_id)

    def row_arrays(self, anon_id: int):
        return self.prototypes.row_arrays(anon_id)

    def item_means(self, weighted: bool = True) -> np.ndarray:
        """Per-item means over prototype rows; NaN where no prototype rates.

        With ``weighted`` each prototype row counts with its multiplicity,
        since it stands for that many users.
        """
        users0, items0, values = self.prototypes.entry_arrays()
        if weighted:
            w = self.multiplicities.astype(np.float64)[users0]
        else:
            w = np.ones(len(values))
        return weighted_item_means(items0, values, w, self.m)

    def density(self) -> float:
        """Fraction of defined prototype cells."""
        if self.n_prime == 0 or self.m == 0:
            return 0.0
        return self.prototypes.nnz / (self.n_prime * self.m)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AnonymizedMatrix):
            return NotImplemented
        return (
            self.k == other.k
            and np.array_equal(self.multiplicities, other.multiplicities)
            and self.prototypes == other.prototypes
        )

    def __repr__(self) -> str:
        return (
            f"AnonymizedMatrix(n_prime={self.n_prime}, m={self.m}, k={self.k}, "
            f"users={self.n_users})"
        )


class AssignmentMap:
    """Total, onto mapping from user identities to anonymous identities."""

    def __init__(self, mapping, n_anon: int):
        mapping = np.asarray(mapping, dtype=np.int64)
        if len(mapping) > 0 and (mapping.min() < 1 or mapping.max() > n_anon):
            raise IndexOutOfRange("assignment targets must lie in [1, n_anon]")
        sizes = np.bincount(mapping - 1, minlength=n_anon) if n_anon else np.zeros(0, int)
        if n_anon > 0 and sizes.min() == 0:
            raise ValueError("mapping is not onto: some anonymous identity is empty")
        self.mapping = mapping
        self.n_anon = int(n_anon)

    @property
    def n_users(self) -> int:
        return len(self.mapping)

    def anon_id(self, user: int) -> int:
        if not 1 <= user <= self.n_users:
            raise UnknownUser(f"user {user} outside [1, {self.n_users}]")
        return int(self.mapping[user - 1])

    def preimages(self, anon_id: int) -> np.ndarray:
        """1-based user ids mapped to ``anon_id``, ascending."""
        if not 1 <= anon_id <= self.n_anon:
            raise IndexOutOfRange(f"anonymous identity {anon_id} outside [1, {self.n_anon}]")
        return np.flatnonzero(self.mapping == anon_id) + 1

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.mapping - 1, minlength=self.n_anon)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AssignmentMap):
            return NotImplemented
        return self.n_anon == other.n_anon and np.array_equal(self.mapping, other.mapping)

    def __repr__(self) -> str:
        return f"AssignmentMap(n_users={self.n_users}, n_anon={self.n_anon})"


@dataclass(frozen=True)
class AnonymityAudit:
    """Equivalence-class size accounting of an anonymized table."""

    min_class_size: int
    class_sizes: dict[int, int]

    @property
    def satisfied_k(self) -> int:
        """Largest k for which the table is k-anonymous."""
        return self.min_class_size


@dataclass(frozen=True)
class ResidualAnonymity:
    """Class sizes remaining after some members' ratings were revealed."""

    residuals: dict[int, int]
    min_residual: int


def build_prototype(rows: list[RatingRow]) -> RatingRow:
    """Per-item mean over the rows that rate the item.

    The output rates item i exactly when some input row does, and its value
    there is the mean over exactly those rows.
    """
    if not rows:
        raise EmptyCluster("cannot build a prototype from zero rows")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for row in rows:
        for item, value in row.items():
            sums[item] = sums.get(item, 0.0) + value
            counts[item] = counts.get(item, 0) + 1
    return {item: sums[item] / counts[item] for item in sorted(sums)}


def _imputed_dense(matrix: SparseRatingMatrix) -> np.ndarray:
    """Dense working copy for clustering only: missing cells get the item
    mean, globally unrated items the global rating mean."""
    users0, items0, values = matrix.entry_arrays()
    means = matrix.item_means().copy()
    global_mean = float(values.mean()) if matrix.nnz else matrix.scale.midpoint
    means[np.isnan(means)] = global_mean
    dense = np.broadcast_to(means, (matrix.n, matrix.m)).copy()
    dense[users0, items0] = values
    return dense


def _identity_anonymization(
    matrix: SparseRatingMatrix,
) -> tuple[AnonymizedMatrix, AssignmentMap]:
    """k = 1: every user is its own prototype and sigma is the identity."""
    users0, items0, values = matrix.entry_arrays()
    protos = SparseRatingMatrix._from_arrays(
        users0.copy(), items0.copy(), values.copy(), matrix.n, matrix.m, matrix.scale
    )
    return (
        AnonymizedMatrix(protos, np.ones(matrix.n, dtype=np.int64), 1),
        AssignmentMap(np.arange(1, matrix.n + 1), matrix.n),
    )


def oka_anonymize(
    matrix: SparseRatingMatrix, k: int, seed: int = 0
) -> tuple[AnonymizedMatrix, AssignmentMap]:
    """Cluster users into groups of at least k and emit the prototype table.

    Procedure: K = floor(n/k) centroids start at K distinct random users'
    imputed rows, a single pass assigns every user (in a shuffled order) to
    the nearest centroid by Euclidean distance with an incremental centroid
    update, then a greedy adjustment stage tops up undersized clusters by
    pulling, from the currently largest cluster, the member closest to the
    deficient centroid.  Imputation is used only for distances and
    centroids; prototypes are computed from the original sparse rows.

    Ties break deterministically: equidistant centroids resolve to the
    lowest cluster index, equidistant members to the lowest user identity.
    """
    n = matrix.n
    if k < 1 or k > n:
        raise InvalidK(f"k must satisfy 1 <= k <= {n}, got {k}")
    if k == 1:
        return _identity_anonymization(matrix)

    n_clusters = n // k
    rng = np.random.default_rng(seed)
    dense = _imputed_dense(matrix)

    seed_users = rng.choice(n, size=n_clusters, replace=False)
    order = rng.permutation(n)

    centroids = dense[seed_users].copy()
    sq_norms = np.einsum("ij,ij->i", centroids, centroids)
    counts = np.zeros(n_clusters, dtype=np.int64)
    assignment = np.full(n, -1, dtype=np.int64)

    for u in order:
        x = dense[u]
        # argmin of ||c - x||^2 up to the constant ||x||^2; first minimum
        # realizes the lowest-cluster-index tie rule.
        scores = sq_norms - 2.0 * (centroids @ x)
        c = int(np.argmin(scores))
        assignment[u] = c
        counts[c] += 1
        centroids[c] += (x - centroids[c]) / counts[c]
        sq_norms[c] = centroids[c] @ centroids[c]

    members: list[list[int]] = [[] for _ in range(n_clusters)]
    for u in range(n):
        members[assignment[u]].append(u)

    # Adjustment stage: fill clusters below k from the largest cluster.
    while counts.min() < k:
        deficient = int(np.argmin(counts))
        donor = int(np.argmax(counts))
        cand = np.array(members[donor])  # ascending user order
        diff = dense[cand] - centroids[deficient]
        dist = np.einsum("ij,ij->i", diff, diff)
        moved = int(cand[int(np.argmin(dist))])
        members[donor].remove(moved)
        members[deficient].append(moved)
        members[deficient].sort()
        x = dense[moved]
        centroids[donor] = (centroids[donor] * counts[donor] - x) / (counts[donor] - 1)
        counts[donor] -= 1
        centroids[deficient] = (centroids[deficient] * counts[deficient] + x) / (
            counts[deficient] + 1
        )
        counts[deficient] += 1
        sq_norms[donor] = centroids[donor] @ centroids[donor]
        sq_norms[deficient] = centroids[deficient] @ centroids[deficient]

    # Prototypes from the original sparse rows of the final members.
    m = matrix.m
    multiplicities = np.zeros(n_clusters, dtype=np.int64)
    sigma = np.zeros(n, dtype=np.int64)
    for c in range(n_clusters):
        multiplicities[c] = len(members[c])
        sigma[np.array(members[c], dtype=np.int64)] = c + 1
    users0, items0, values = matrix.entry_arrays()
    sums = np.zeros((n_clusters, m))
    cnts = np.zeros((n_clusters, m))
    cluster_of_entry = sigma[users0] - 1
    np.add.at(sums, (cluster_of_entry, items0), values)
    np.add.at(cnts, (cluster_of_entry, items0), 1.0)
    proto_rows, proto_cols = np.nonzero(cnts)
    protos = SparseRatingMatrix._from_arrays(
        proto_rows.astype(np.int64),
        proto_cols.astype(np.int64),
        sums[proto_rows, proto_cols] / cnts[proto_rows, proto_cols],
        n_clusters,
        m,
        matrix.scale,
    )
    return AnonymizedMatrix(protos, multiplicities, k), AssignmentMap(sigma, n_clusters)


def audit_k_anonymity(anon: AnonymizedMatrix) -> AnonymityAudit:
    """Smallest equivalence class and the full class-size histogram."""
    sizes = anon.multiplicities
    if len(sizes) == 0:
        return AnonymityAudit(0, {})
    return AnonymityAudit(int(sizes.min()), dict(sorted(Counter(sizes.tolist()).items())))


def residual_anonymity(
    anon: AnonymizedMatrix, amap: AssignmentMap, revealed: set[int]
) -> ResidualAnonymity:
    """Per-class sizes left after the revealed users' ratings are disclosed.

    Once a user's own ratings are revealed, that user's contribution can be
    peeled out of its prototype, so the class effectively shrinks by one per
    revealed member.
    """
    revealed_counts = np.zeros(anon.n_prime, dtype=np.int64)
    for user in revealed:
        a = amap.anon_id(user)  # raises UnknownUser outside the map
        revealed_counts[a - 1] += 1
    residuals = anon.multiplicities - revealed_counts
    return ResidualAnonymity(
        {a + 1: int(residuals[a]) for a in range(anon.n_prime)},
        int(residuals.min()) if anon.n_prime else 0,
    )


class OKAAnonymizer(BaseEstimator):
    """Estimator face of the microaggregation anonymizer.

    Parameters
    ----------
    k : minimum equivalence-class size to guarantee.
    random_state : seed for the clustering pass; fixed by default so that
        fitting is reproducible.
    """

    def __init__(self, k: int = 2, random_state: int = 0):
        self.k = k
        self.random_state = random_state

    def fit(self, X: SparseRatingMatrix, y=None) -> "OKAAnonymizer":
        self.anonymized_, self.assignment_ = oka_anonymize(X, self.k, self.random_state)
        self.n_clusters_ = self.anonymized_.n_prime
        return self

    def transform(self, X: SparseRatingMatrix | None = None) -> AnonymizedMatrix:
        """Return the anonymized table of the fitted matrix.

        Microaggregation is a one-shot transformation of the fitted data;
        passing a different matrix here is not meaningful and X is accepted
        only for pipeline compatibility.
        """
        if not hasattr(self, "anonymized_"):
            raise NotFittedError("OKAAnonymizer must be fitted before transform")
        return self.anonymized_

    def fit_transform(self, X: SparseRatingMatrix, y=None) -> AnonymizedMatrix:
        return self.fit(X, y).transform()
