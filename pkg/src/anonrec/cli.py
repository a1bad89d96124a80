"""Command-line front end.

Subcommands: anonymize, similarity, predict, eval-case1, eval-case2,
analyze, audit.  Every file-producing command writes a run manifest beside
its outputs.  The environment variable ANONREC_SEED supplies the default
master seed when --seed is not given.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from .anonymize import audit_k_anonymity, oka_anonymize, residual_anonymity
from .datasets import FORMATS, load_dataset
from .errors import AnonRecError, MissingAssignmentMap
from .evaluate import ExperimentConfig, run_analysis, run_case1_experiment, run_case2_experiment
from .predict import (
    MODEL_IDS,
    predict_baseline,
    predict_case1_reg,
    predict_case1a_ai,
    predict_case2_ur,
    train_model,
)
from .persist import (
    RunManifest,
    file_sha256,
    read_anonymized,
    write_anonymized,
    write_manifest,
    write_result_csv,
    write_similarity,
)
from .ratings import RatingScale
from .similarity import item_similarity_matrix


def _default_seed() -> int:
    return int(os.environ.get("ANONREC_SEED", "0"))


def _add_input_args(p, required=True):
    p.add_argument("--input", required=required, help="rating file to read")
    p.add_argument("--format", choices=FORMATS, default="movielens-100k")
    p.add_argument("--scale", nargs=2, type=float, default=(1.0, 5.0),
                   metavar=("LO", "HI"))


def _load(args):
    return load_dataset(args.input, args.format, RatingScale(*args.scale)).matrix


def _manifest(args, command, dataset_path=None):
    config = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("func", "input") and not key.startswith("_")
    }
    dataset = {}
    if dataset_path is not None:
        dataset = {
            "path": str(dataset_path),
            "sha256": file_sha256(dataset_path),
            "format": getattr(args, "format", None),
        }
    return RunManifest(
        command=command,
        config=config,
        seed=getattr(args, "seed", 0),
        dataset=dataset,
        timestamps={"written": datetime.now(timezone.utc).isoformat()},
    )


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part != "")


def cmd_anonymize(args) -> int:
    matrix = _load(args)
    anon, amap = oka_anonymize(matrix, args.k, args.seed)
    write_anonymized(args.output, anon, amap if args.emit_sigma else None)
    write_manifest(str(args.output) + ".manifest.json", _manifest(args, "anonymize", args.input))
    audit = audit_k_anonymity(anon)
    print(f"n_prime={anon.n_prime} satisfied_k={audit.satisfied_k}")
    return 0


def cmd_similarity(args) -> int:
    if args.anon:
        anon, _ = read_anonymized(args.anon)
        sims = item_similarity_matrix(anon, weighted=not args.unweighted)
        source_path = args.anon
    else:
        if not args.input:
            raise AnonRecError("similarity needs --input or --anon")
        sims = item_similarity_matrix(_load(args))
        source_path = args.input
    write_similarity(args.output, sims)
    write_manifest(str(args.output) + ".manifest.json", _manifest(args, "similarity", source_path))
    print(f"m={sims.m} source={sims.source}")
    return 0


def _parse_ratings_arg(text: str) -> dict[int, float]:
    row = {}
    for part in text.split(","):
        item, value = part.split("=", 1)
        row[int(item)] = float(value)
    return row


def cmd_predict(args) -> int:
    model_id = args.model
    if model_id not in MODEL_IDS:
        raise AnonRecError(f"unknown model {model_id!r}; known: {', '.join(MODEL_IDS)}")
    anon = amap = None
    train = None
    if args.anon:
        anon, amap = read_anonymized(args.anon)
    if args.input:
        train = _load(args)
    weighted = not args.unweighted
    model = train_model(model_id, train=train, anon=anon, weighted=weighted)
    items = _int_list(args.items)

    def emit(item, pred):
        print(f"{item}={repr(pred.value)} fallback={pred.fallback_level}")

    if model_id == "BASELINE":
        for item in items:
            emit(item, predict_baseline(model, item))
    elif model_id == "Case1/REG":
        if args.user is None:
            raise AnonRecError("Case1/REG takes --user")
        for item in items:
            emit(item, predict_case1_reg(model, args.user, item))
    elif model_id == "Case1A/AI":
        anon_id = args.anon_id
        if anon_id is None:
            if args.user is None:
                raise AnonRecError("Case1A/AI takes --anon-id or --user")
            if amap is None:
                raise MissingAssignmentMap(
                    "resolving --user needs a sigma section; the file withheld it"
                )
            anon_id = amap.anon_id(args.user)
        for item in items:
            emit(item, predict_case1a_ai(model, anon_id, item))
    else:  # the revealed-ratings models
        if not args.ratings:
            raise AnonRecError(f"{model_id} takes --ratings item=value[,item=value...]")
        row = _parse_ratings_arg(args.ratings)
        for item in items:
            emit(item, predict_case2_ur(model, row, item))
    return 0


def cmd_eval_case1(args) -> int:
    matrix = _load(args)
    config = ExperimentConfig(
        protocol="case1",
        k_values=tuple(range(args.k_min, args.k_max + 1)),
        trials=args.trials,
        seed=args.seed,
        dataset=str(args.input),
    )
    result = run_case1_experiment(matrix, config)
    write_result_csv(args.out_csv, result)
    write_manifest(str(args.out_csv) + ".manifest.json", _manifest(args, "eval-case1", args.input))
    print(f"wrote {len(result.rows)} rows to {args.out_csv}")
    return 0


def cmd_eval_case2(args) -> int:
    matrix = _load(args)
    config = ExperimentConfig(
        protocol="case2",
        k_values=_int_list(args.k_list),
        n_values=tuple(range(args.n_min, args.n_max + 1)),
        trials=args.trials,
        draws=args.draws,
        seed=args.seed,
        dataset=str(args.input),
    )
    result = run_case2_experiment(matrix, config)
    write_result_csv(args.out_csv, result)
    write_manifest(str(args.out_csv) + ".manifest.json", _manifest(args, "eval-case2", args.input))
    print(f"wrote {len(result.rows)} rows to {args.out_csv}")
    return 0


def cmd_analyze(args) -> int:
    matrix = _load(args)
    config = ExperimentConfig(
        protocol="case1",
        k_values=_int_list(args.k_list),
        bins=args.bins,
        seed=args.seed,
        dataset=str(args.input),
    )
    report = run_analysis(matrix, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "e_avg.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "e_avg", "e_avg_unweighted", "included", "excluded"])
        for k in config.k_values:
            w.writerow([
                k, repr(report.e_avg[k].value), repr(report.e_avg_unweighted[k].value),
                report.e_avg[k].included_items, report.e_avg[k].excluded_items,
            ])
    with open(out / "e_var.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "k", "variance", "mae"])
        for (model, k) in sorted(report.e_var):
            ev = report.e_var[(model, k)]
            w.writerow([model, k, repr(ev.variance), repr(ev.mae)])

    def write_hist(name, hist):
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])

    write_hist("histogram_raw.csv", report.raw_histogram)
    for k in config.k_values:
        write_hist(f"histogram_k{k}.csv", report.histograms[k])
    write_manifest(out / "manifest.json", _manifest(args, "analyze", args.input))
    print(f"wrote analysis of k={list(config.k_values)} to {out}")
    return 0


def cmd_audit(args) -> int:
    anon, amap = read_anonymized(args.anon)
    audit = audit_k_anonymity(anon)
    print(f"satisfied_k={audit.satisfied_k}")
    print(f"class_sizes={audit.class_sizes}")
    if args.revealed:
        if amap is None:
            raise MissingAssignmentMap("auditing a reveal needs the sigma section")
        report = residual_anonymity(anon, amap, set(_int_list(args.revealed)))
        print(f"min_residual={report.min_residual}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anonrec",
        description="k-anonymized rating collection and item-based recommendation",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("anonymize", help="k-anonymize a rating matrix")
    _add_input_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--output", required=True)
    p.add_argument("--emit-sigma", action="store_true",
                   help="include the user-to-anonymous-identity map")
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("similarity", help="item-item similarity matrix")
    _add_input_args(p, required=False)
    p.add_argument("--anon", help="anonymized table to use instead of raw input")
    p.add_argument("--unweighted", action="store_true",
                   help="ignore prototype multiplicities")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("predict", help="one-off predictions")
    _add_input_args(p, required=False)
    p.add_argument("--anon", help="anonymized table (required by the Case*A models)")
    p.add_argument("--model", required=True)
    p.add_argument("--user", type=int)
    p.add_argument("--anon-id", type=int, dest="anon_id")
    p.add_argument("--ratings", help="revealed row as item=value[,item=value...]")
    p.add_argument("--items", required=True, help="target items, comma-separated")
    p.add_argument("--unweighted", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval-case1", help="RMSE sweep over the anonymity parameter")
    _add_input_args(p)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=15)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=cmd_eval_case1)

    p = sub.add_parser("eval-case2", help="RMSE sweep over revealed-rating counts")
    _add_input_args(p)
    p.add_argument("--k-list", default="2,4,10")
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--draws", type=int, default=20)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=cmd_eval_case2)

    p = sub.add_parser("analyze", help="mean/similarity/error diagnostics per k")
    _add_input_args(p)
    p.add_argument("--k-list", default="2,4,10")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("audit", help="k-anonymity audit of a serialized table")
    p.add_argument("--anon", required=True)
    p.add_argument("--revealed", help="comma-separated user ids whose ratings leaked")
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AnonRecError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
