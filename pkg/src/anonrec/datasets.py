"""Dataset parsing and generation.

Parsers return rating triples with their original external identities;
``load_dataset`` remaps those to dense 1-based indices and keeps the
original ids in side tables.  A deterministic synthetic benchmark with a
long-tail popularity profile and latent-factor structure is provided for
environments without the public rating files.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedLine, RatingOutOfScale
from .ratings import RatingScale, RatingTriple, SparseRatingMatrix

FORMATS = ("movielens-100k", "movielens-1m", "csv-triples")


@dataclass
class Dataset:
    """Dense-indexed matrix plus the original external identities."""

    matrix: SparseRatingMatrix
    user_labels: list[int]
    item_labels: list[int]


@dataclass(frozen=True)
class DatasetDescriptor:
    """Where a rating file lives, its format, and its rating scale."""

    format: str
    path: str
    scale: RatingScale = RatingScale()

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(
                f"unrecognized format {self.format!r}; known: {', '.join(FORMATS)}"
            )

    def load(self) -> "Dataset":
        return load_dataset(self.path, self.format, self.scale)


def _iter_lines(source) -> list[str]:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    else:
        raise TypeError(f"unsupported source type {type(source).__name__}")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _parse_delimited(
    source, sep: str, n_fields: int, scale: RatingScale
) -> list[RatingTriple]:
    triples = []
    for lineno, line in enumerate(_iter_lines(source), start=1):
        line = line.rstrip("\r")
        fields = line.split(sep)
        if len(fields) != n_fields:
            raise MalformedLine(lineno, f"expected {n_fields} {sep!r}-separated fields")
        try:
            user = int(fields[0])
            item = int(fields[1])
            value = float(fields[2])
        except ValueError as exc:
            raise MalformedLine(lineno, str(exc)) from None
        if not scale.contains(value):
            raise RatingOutOfScale(
                f"line {lineno}: rating {value} outside [{scale.lo}, {scale.hi}]"
            )
        triples.append(RatingTriple(user, item, value))
    return triples


def parse_movielens_100k(source, scale: RatingScale = RatingScale()) -> list[RatingTriple]:
    """Parse tab-separated ``user item rating timestamp`` lines."""
    return _parse_delimited(source, "\t", 4, scale)


def parse_movielens_1m(source, scale: RatingScale = RatingScale()) -> list[RatingTriple]:
    """Parse ``user::item::rating::timestamp`` lines."""
    return _parse_delimited(source, "::", 4, scale)


def parse_csv_triples(source, scale: RatingScale = RatingScale()) -> list[RatingTriple]:
    """Parse comma-separated ``user,item,rating`` lines."""
    return _parse_delimited(source, ",", 3, scale)


def remap_to_dense(
    triples: list[RatingTriple], scale: RatingScale = RatingScale()
) -> Dataset:
    """Remap external identities to dense 1-based indices."""
    user_labels = sorted({t.user for t in triples})
    item_labels = sorted({t.item for t in triples})
    user_index = {u: idx + 1 for idx, u in enumerate(user_labels)}
    item_index = {i: idx + 1 for idx, i in enumerate(item_labels)}
    dense = [RatingTriple(user_index[t.user], item_index[t.item], t.value) for t in triples]
    matrix = SparseRatingMatrix(dense, len(user_labels), len(item_labels), scale)
    return Dataset(matrix, user_labels, item_labels)


def load_dataset(path, fmt: str, scale: RatingScale = RatingScale()) -> Dataset:
    """Read and densely index a rating file of a recognized format."""
    if fmt == "movielens-100k":
        triples = parse_movielens_100k(path, scale)
    elif fmt == "movielens-1m":
        triples = parse_movielens_1m(path, scale)
    elif fmt == "csv-triples":
        triples = parse_csv_triples(path, scale)
    else:
        raise ValueError(f"unrecognized format {fmt!r}; known: {', '.join(FORMATS)}")
    return remap_to_dense(triples, scale)


def write_csv_triples(triples: list[RatingTriple], path) -> None:
    """Write triples in the ``user,item,rating`` input format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in triples:
            fh.write(f"{t.user},{t.item},{repr(float(t.value))}\n")


def make_synthetic_ratings(
    n_users: int = 943,
    n_items: int = 1682,
    n_ratings: int = 100_000,
    scale: RatingScale = RatingScale(),
    seed: int = 101,
    latent_dim: int = 8,
) -> list[RatingTriple]:
    """Deterministic benchmark ratings with collaborative structure.

    (user, item) cells are drawn without replacement with probability
    proportional to user activity times item popularity (a shuffled power
    law), so rating counts show the long tail of public rating datasets.
    Values come from a biases-plus-latent-factors score with noise,
    rounded to integers on the scale, which gives item columns genuine
    correlation for similarity-based models to exploit.
    """
    if n_ratings > n_users * n_items:
        raise ValueError("more ratings requested than cells available")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 90_011]))

    activity = 0.25 + rng.lognormal(mean=0.0, sigma=0.85, size=n_users)
    popularity = rng.lognormal(mean=0.0, sigma=0.80, size=n_items)
    weights = np.outer(activity, popularity).ravel()
    # Weighted sampling without replacement: keep the n_ratings smallest
    # exponential keys scaled by inverse weight.
    keys = rng.exponential(size=weights.size) / weights
    picked = np.sort(np.argpartition(keys, n_ratings)[:n_ratings])
    users0, items0 = np.divmod(picked, n_items)

    user_bias = rng.normal(0.0, 0.55, size=n_users)
    item_bias = rng.normal(0.0, 0.50, size=n_items)
    user_factors = rng.normal(0.0, 0.45, size=(n_users, latent_dim))
    item_factors = rng.normal(0.0, 0.45, size=(n_items, latent_dim))
    affinity = np.einsum(
        "ij,ij->i", user_factors[users0], item_factors[items0]
    )
    noise = rng.normal(0.0, 0.75, size=n_ratings)
    center = 0.5 * (scale.lo + scale.hi) + 0.55
    raw = center + user_bias[users0] + item_bias[items0] + affinity + noise
    values = np.clip(np.round(raw), scale.lo, scale.hi)

    return [
        RatingTriple(int(u) + 1, int(i) + 1, float(v))
        for u, i, v in zip(users0, items0, values)
    ]
