"""Item-item Pearson similarity matrices and the similarity histogram.

The similarity of two items is the Pearson correlation of their ratings
over the rows that rate both, centered on the all-raters item means.
Pairs with fewer than two co-rating rows, or with zero squared deviation
on either side over the co-raters, get a neutral default of 0 so that
downstream weighted sums stay well defined.

Prototype tables enter with per-row weights (each prototype stands for
its multiplicity of users) unless weighting is switched off.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .anonymize import AnonymizedMatrix
from .ratings import SparseRatingMatrix, weighted_item_means


@dataclass(frozen=True)
class ItemSimilarityMatrix:
    """Symmetric m-by-m similarity matrix with its item means.

    ``values`` holds the similarities in [-1, 1] (0 for degenerate pairs),
    ``item_means`` the per-item means used for centering (NaN when an item
    has no raters), and ``co_raters`` the number of co-rating rows behind
    each pair, which marks the pairs whose similarity was actually
    estimated rather than defaulted.
    """

    m: int
    values: np.ndarray
    item_means: np.ndarray
    source: str  # "raw" or "anonymized"
    co_raters: np.ndarray

    def defined_pairs(self) -> np.ndarray:
        """Boolean mask of pairs with at least two co-rating rows."""
        return self.co_raters >= 2


@dataclass(frozen=True)
class SimilarityHistogram:
    """Counts of off-diagonal defined similarities over equal-width bins."""

    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def negative_count(self) -> int:
        """Number of binned similarities strictly below zero."""
        mids = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        return int(self.counts[mids < 0].sum())


def _pair_sums(users0, items0, values, weights, n_rows, m):
    """Pairwise co-rater accumulations via sparse products.

    Returns (A, B, N): A[i, j] is the weighted sum over co-rating rows of
    centered products, B[i, j] the weighted sum of squared i-deviations
    over the co-raters of (i, j), and N[i, j] the unweighted co-rating row
    count.
    """
    means = weighted_item_means(items0, values, weights[users0], m)
    centered = values - means[items0]
    shape = (n_rows, m)
    mask = sp.csr_matrix((np.ones(len(values)), (users0, items0)), shape=shape)
    c = sp.csr_matrix((centered, (users0, items0)), shape=shape)
    cw = sp.csr_matrix((centered * weights[users0], (users0, items0)), shape=shape)
    c2w = sp.csr_matrix((centered * centered * weights[users0], (users0, items0)), shape=shape)
    a = (c.T @ cw).toarray()
    b = (c2w.T @ mask).toarray()
    n_co = (mask.T @ mask).toarray().astype(np.int64)
    return a, b, n_co, means


def item_similarity_matrix(
    matrix: SparseRatingMatrix | AnonymizedMatrix, *, weighted: bool = True
) -> ItemSimilarityMatrix:
    """Pearson item similarities from a raw or anonymized rating matrix.

    For anonymized input each prototype row carries its multiplicity as a
    weight by default; ``weighted=False`` treats every prototype as a
    single row.  The degenerate-pair rule (fewer than two co-rating rows,
    or zero deviation on either side) always counts rows, not weights.
    """
    if isinstance(matrix, AnonymizedMatrix):
        source = "anonymized"
        rows = matrix.prototypes
        weights = (
            matrix.multiplicities.astype(np.float64)
            if weighted
            else np.ones(matrix.n_prime)
        )
    else:
        source = "raw"
        rows = matrix
        weights = np.ones(matrix.n)
    users0, items0, values = rows.entry_arrays()
    m = rows.m
    if m == 0:
        empty = np.zeros((0, 0))
        return ItemSimilarityMatrix(0, empty, np.zeros(0), source, empty.astype(np.int64))
    a, b, n_co, means = _pair_sums(users0, items0, values, weights, rows.n, m)
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = a / (np.sqrt(b) * np.sqrt(b.T))
    degenerate = (n_co < 2) | (b == 0.0) | (b.T == 0.0)
    sims[degenerate] = 0.0
    np.clip(sims, -1.0, 1.0, out=sims)
    # The two sparse products round each triangle independently; mirror the
    # upper one and pin the exact self-similarity so symmetry and the unit
    # diagonal hold exactly, not just to rounding.
    diag = np.diag_indices(m)
    sims[diag] = np.where((n_co[diag] >= 2) & (b[diag] > 0.0), 1.0, 0.0)
    upper = np.triu(sims, 1)
    sims = upper + upper.T + np.diag(sims[diag])
    return ItemSimilarityMatrix(m, sims, means, source, n_co)


def similarity_histogram(sims: ItemSimilarityMatrix, bins: int = 40) -> SimilarityHistogram:
    """Histogram of off-diagonal defined similarities over [-1, 1].

    Each unordered pair counts once; pairs whose similarity was defaulted
    for lack of co-raters are excluded, genuine zeros are included.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    iu = np.triu_indices(sims.m, k=1)
    mask = sims.co_raters[iu] >= 2
    counts, edges = np.histogram(sims.values[iu][mask], bins=bins, range=(-1.0, 1.0))
    return SimilarityHistogram(edges, counts)
