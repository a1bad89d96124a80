"""Bit-exact persistence of anonymized tables, similarity matrices,
result tables, and run manifests.

Text formats print floats as shortest round-trip decimals, end lines with
LF, and close with a sha256 line over all preceding bytes, so identical
structures always serialize to identical bytes and round-trip exactly.
The assignment-map section of the anonymized format is optional on write:
a collector publishing the table normally withholds it.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .anonymize import AnonymizedMatrix, AssignmentMap
from .errors import ChecksumMismatch, FormatVersionMismatch, MalformedLine
from .evaluate import SEED_RULE, ExperimentResult, ResultRow
from .ratings import RatingScale, SparseRatingMatrix
from .similarity import ItemSimilarityMatrix

ANON_FORMAT = "anonrec-v1"
SIM_FORMAT = "simrec-v1"
RESULT_HEADER = ("model", "k", "n", "rmse", "rmse_sd", "fallback_rate")


def _fmt(x: float) -> str:
    return repr(float(x))


def _with_checksum(body: str) -> str:
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    return body + f"sha256:{digest}\n"


def _split_checksum(text: str) -> list[str]:
    """Verify and strip a trailing checksum line if one is present."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if lines and lines[-1].startswith("sha256:"):
        declared = lines.pop().removeprefix("sha256:")
        body = "".join(line + "\n" for line in lines)
        actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
        if actual != declared:
            raise ChecksumMismatch(f"declared {declared}, computed {actual}")
    return lines


def write_anonymized(
    path, anon: AnonymizedMatrix, amap: AssignmentMap | None = None
) -> None:
    """Serialize an anonymized table; include the user map only if given."""
    out = [
        f"{ANON_FORMAT} {anon.n_prime} {anon.m} {anon.k} "
        f"{_fmt(anon.scale.lo)} {_fmt(anon.scale.hi)}"
    ]
    for a in range(1, anon.n_prime + 1):
        items1, values = anon.row_arrays(a)
        cells = " ".join(f"{int(i)}={_fmt(v)}" for i, v in zip(items1, values))
        line = f"a:{a} k:{int(anon.multiplicities[a - 1])}"
        out.append(line + (" " + cells if cells else ""))
    if amap is not None:
        out.append("sigma:")
        for u in range(1, amap.n_users + 1):
            out.append(f"{u} {amap.anon_id(u)}")
    body = "".join(line + "\n" for line in out)
    Path(path).write_text(_with_checksum(body), encoding="utf-8", newline="\n")


def read_anonymized(path) -> tuple[AnonymizedMatrix, AssignmentMap | None]:
    """Inverse of write_anonymized; the map is None when it was withheld."""
    lines = _split_checksum(Path(path).read_text(encoding="utf-8"))
    if not lines:
        raise MalformedLine(1, "empty file")
    header = lines[0].split(" ")
    if header[0] != ANON_FORMAT:
        raise FormatVersionMismatch(f"expected {ANON_FORMAT}, found {header[0]!r}")
    if len(header) != 6:
        raise MalformedLine(1, "header needs n', m, k, lo, hi")
    n_prime, m, k = int(header[1]), int(header[2]), int(header[3])
    scale = RatingScale(float(header[4]), float(header[5]))

    users0, items0, values = [], [], []
    multiplicities = np.zeros(n_prime, dtype=np.int64)
    sigma_at = None
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "sigma:":
            sigma_at = lineno
            break
        fields = line.split(" ")
        if len(fields) < 2 or not fields[0].startswith("a:") or not fields[1].startswith("k:"):
            raise MalformedLine(lineno, "expected 'a:<id> k:<count> item=value ...'")
        try:
            a = int(fields[0][2:])
            multiplicities[a - 1] = int(fields[1][2:])
            for cell in fields[2:]:
                item, value = cell.split("=", 1)
                users0.append(a - 1)
                items0.append(int(item) - 1)
                values.append(float(value))
        except (ValueError, IndexError) as exc:
            raise MalformedLine(lineno, str(exc)) from None
    protos = SparseRatingMatrix._from_arrays(
        np.array(users0, dtype=np.int64),
        np.array(items0, dtype=np.int64),
        np.array(values, dtype=np.float64),
        n_prime,
        m,
        scale,
    )
    anon = AnonymizedMatrix(protos, multiplicities, k)

    amap = None
    if sigma_at is not None:
        mapping: list[int] = []
        for lineno, line in enumerate(lines[sigma_at:], start=sigma_at + 1):
            fields = line.split(" ")
            if len(fields) != 2:
                raise MalformedLine(lineno, "expected '<user> <anon-id>'")
            try:
                user, a = int(fields[0]), int(fields[1])
            except ValueError as exc:
                raise MalformedLine(lineno, str(exc)) from None
            if user != len(mapping) + 1:
                raise MalformedLine(lineno, "user ids must be 1..n in order")
            mapping.append(a)
        amap = AssignmentMap(np.array(mapping, dtype=np.int64), n_prime)
    return anon, amap


def _vector_line(tag: str, values) -> str:
    return tag + " ".join(_fmt(v) for v in values)


def write_similarity(path, sims: ItemSimilarityMatrix) -> None:
    """Serialize a similarity matrix with its means and co-rater counts."""
    out = [f"{SIM_FORMAT} {sims.m} {sims.source}", _vector_line("means:", sims.item_means)]
    for i in range(sims.m):
        out.append(_vector_line("s:", sims.values[i]))
    for i in range(sims.m):
        out.append("c:" + " ".join(str(int(c)) for c in sims.co_raters[i]))
    body = "".join(line + "\n" for line in out)
    Path(path).write_text(_with_checksum(body), encoding="utf-8", newline="\n")


def read_similarity(path) -> ItemSimilarityMatrix:
    lines = _split_checksum(Path(path).read_text(encoding="utf-8"))
    if not lines:
        raise MalformedLine(1, "empty file")
    header = lines[0].split(" ")
    if header[0] != SIM_FORMAT:
        raise FormatVersionMismatch(f"expected {SIM_FORMAT}, found {header[0]!r}")
    m, source = int(header[1]), header[2]
    if len(lines) != 2 + 2 * m:
        raise MalformedLine(len(lines), f"expected {2 + 2 * m} lines for m={m}")

    def vector(line, lineno, tag, dtype):
        if not line.startswith(tag):
            raise MalformedLine(lineno, f"expected a {tag!r} line")
        rest = line[len(tag):]
        parts = rest.split(" ") if rest else []
        return np.array([dtype(p) for p in parts])

    means = vector(lines[1], 2, "means:", float)
    values = np.stack(
        [vector(lines[2 + i], 3 + i, "s:", float) for i in range(m)]
    ) if m else np.zeros((0, 0))
    co = np.stack(
        [vector(lines[2 + m + i], 3 + m + i, "c:", int) for i in range(m)]
    ).astype(np.int64) if m else np.zeros((0, 0), dtype=np.int64)
    return ItemSimilarityMatrix(m, values, means, source, co)


def write_result_csv(path, result: ExperimentResult) -> None:
    """Result table as CSV: LF endings, full round-trip decimals."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_HEADER)
        for row in result.rows:
            writer.writerow(
                [row.model_id, row.k, row.n, _fmt(row.rmse), _fmt(row.rmse_sd),
                 _fmt(row.fallback_rate)]
            )


def read_result_csv(path) -> ExperimentResult:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != RESULT_HEADER:
            raise FormatVersionMismatch(f"unexpected result header {header}")
        for rec in reader:
            rows.append(
                ResultRow(rec[0], int(rec[1]), int(rec[2]), float(rec[3]),
                          float(rec[4]), float(rec[5]))
            )
    return ExperimentResult(rows)


@dataclass
class RunManifest:
    """Everything needed to re-run a command bit-identically.

    Timestamps are segregated under their own key; all other fields are a
    pure function of the invocation.
    """

    command: str
    config: dict
    seed: int
    dataset: dict = field(default_factory=dict)
    seed_rule: str = SEED_RULE
    artifact_version: str = __version__
    timestamps: dict = field(default_factory=dict)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, manifest: RunManifest) -> None:
    payload = asdict(manifest)
    payload["timestamps"] = dict(manifest.timestamps) or {
        "written": datetime.now(timezone.utc).isoformat()
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
