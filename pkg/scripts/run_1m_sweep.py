#!/usr/bin/env python3
"""Optional long-running sweep over the 1M rating file.

Needs the ml-1m ratings.dat file on disk (about a million ratings of 3883
items by 6040 users); output is reported, not gated by the test suite.

Usage:
    python3 scripts/run_1m_sweep.py --input path/to/ratings.dat \
        --out-dir results-1m [--trials 3] [--seed 7]
"""
import argparse
import sys
import time
from pathlib import Path

from anonrec import (
    ExperimentConfig,
    load_dataset,
    run_case1_experiment,
    run_case2_experiment,
    sparsity,
    write_result_csv,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input", required=True)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--trials", type=int, default=3)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix = load_dataset(args.input, "movielens-1m").matrix
    print(f"loaded {matrix.nnz} ratings, {matrix.n} users x {matrix.m} items, "
          f"sparsity {sparsity(matrix):.3f}")

    t0 = time.time()
    case1 = run_case1_experiment(
        matrix,
        ExperimentConfig(protocol="case1", k_values=tuple(range(2, 16)),
                         trials=args.trials, seed=args.seed),
    )
    write_result_csv(out / "case1.csv", case1)
    print(f"case1 sweep done in {time.time() - t0:.0f}s -> {out / 'case1.csv'}")

    t0 = time.time()
    case2 = run_case2_experiment(
        matrix,
        ExperimentConfig(protocol="case2", k_values=(2, 4, 10),
                         n_values=tuple(range(1, 21)), trials=1, draws=20,
                         seed=args.seed),
    )
    write_result_csv(out / "case2.csv", case2)
    print(f"case2 sweep done in {time.time() - t0:.0f}s -> {out / 'case2.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
