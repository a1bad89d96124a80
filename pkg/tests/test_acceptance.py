"""Acceptance criteria, one test per criterion, each printing a pass/fail
line in the terminal summary.

The full-scale criteria run on the real 100k rating file when
ANONREC_ML100K points at it, and otherwise on the deterministic synthetic
stand-in of identical shape (943 users, 1682 items, 100000 ratings); the
dataset in use is printed with the results.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from anonrec import (
    ExperimentConfig,
    audit_k_anonymity,
    build_matrix,
    compute_e_avg,
    item_similarity_matrix,
    make_synthetic_ratings,
    oka_anonymize,
    predict_case1_reg,
    predict_case1a_ai,
    predict_case2_ur,
    predict_baseline,
    residual_anonymity,
    run_case1_experiment,
    run_case2_experiment,
    similarity_histogram,
    split_rating_holdout,
    train_model,
    write_csv_triples,
)
from anonrec.cli import main as cli_main
from anonrec.predict import predict_arrays
from anonrec.ratings import SplitSpec

import reference as ref
from conftest import ACCEPTANCE_LOG, random_matrix

SEED = 7
K_RANGE = tuple(range(2, 16))


def record(num: int, name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LOG.append(f"[{status}] criterion {num} ({name}): {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


@pytest.fixture(scope="session")
def bench(benchmark):
    matrix, label = benchmark
    ACCEPTANCE_LOG.append(f"dataset: {label}")
    return matrix


@pytest.fixture(scope="session")
def anon_sweep(bench):
    """k -> (anonymized table, assignment, seconds) over the full matrix."""
    out = {}
    for k in K_RANGE:
        t0 = time.time()
        anon, amap = oka_anonymize(bench, k, seed=SEED)
        out[k] = (anon, amap, time.time() - t0)
    return out


@pytest.fixture(scope="session")
def case1(bench):
    config = ExperimentConfig(
        protocol="case1", k_values=K_RANGE, trials=5, seed=SEED, hygiene_check=True
    )
    t0 = time.time()
    result = run_case1_experiment(bench, config)
    return result, time.time() - t0


@pytest.fixture(scope="session")
def case2(bench):
    config = ExperimentConfig(
        protocol="case2", k_values=(2, 4, 10), n_values=tuple(range(1, 21)),
        trials=3, draws=20, seed=SEED,
    )
    t0 = time.time()
    result = run_case2_experiment(bench, config)
    return result, time.time() - t0


def test_criterion_1_k_anonymity_guarantee(bench, anon_sweep):
    problems = []
    slowest = 0.0
    for k, (anon, amap, seconds) in anon_sweep.items():
        slowest = max(slowest, seconds)
        audit = audit_k_anonymity(anon)
        if audit.satisfied_k < k:
            problems.append(f"k={k} satisfied only {audit.satisfied_k}")
        if int(anon.multiplicities.sum()) != bench.n:
            problems.append(f"k={k} multiplicities sum {anon.multiplicities.sum()}")
        if not np.array_equal(amap.class_sizes(), anon.multiplicities):
            problems.append(f"k={k} assignment preimages disagree")
    if bench.n != 943:
        problems.append(f"user count {bench.n} != 943")
    if slowest >= 60:
        problems.append(f"anonymization took {slowest:.0f}s for one k")
    record(
        1, "k-anonymity guarantee",
        not problems,
        problems[0] if problems else
        f"satisfied_k >= k and sum(k_u) = {bench.n} for k=2..15; "
        f"slowest anonymization {slowest:.1f}s",
    )


def test_criterion_2_identity_collapse(bench):
    train, test = split_rating_holdout(
        bench, SplitSpec("rating-holdout", 0.2, seed=SEED)
    )
    raw_sims = item_similarity_matrix(train)
    anon, amap = oka_anonymize(train, 1, seed=SEED)
    asims = item_similarity_matrix(anon)
    sims_gap = float(np.nanmax(np.abs(raw_sims.values - asims.values)))
    means_gap = float(
        np.nanmax(np.abs(np.nan_to_num(raw_sims.item_means) - np.nan_to_num(asims.item_means)))
    )

    reg = train_model("Case1/REG", train=train, sims=raw_sims)
    ai = train_model("Case1A/AI", anon=anon, sims=asims)
    ur = train_model("Case1A/UR", anon=anon, sims=asims)
    by_user: dict[int, list] = {}
    for t in test:
        by_user.setdefault(t.user, []).append(t.item)
    pred_gap = 0.0
    for u, items in by_user.items():
        targets0 = np.array(items, dtype=np.int64) - 1
        row_items, row_values = train.row_arrays(u)
        proto_items, proto_values = anon.row_arrays(amap.anon_id(u))
        got_reg, _ = predict_arrays(
            reg.sims.values, reg.item_means, reg.global_mean, reg.scale,
            row_items - 1, row_values, targets0,
        )
        got_ai, _ = predict_arrays(
            ai.sims.values, ai.item_means, ai.global_mean, ai.scale,
            proto_items - 1, proto_values, targets0,
        )
        got_ur, _ = predict_arrays(
            ur.sims.values, ur.item_means, ur.global_mean, ur.scale,
            row_items - 1, row_values, targets0,
        )
        pred_gap = max(
            pred_gap,
            float(np.max(np.abs(got_ai - got_reg))),
            float(np.max(np.abs(got_ur - got_reg))),
        )
    ok = sims_gap <= 1e-9 and means_gap <= 1e-9 and pred_gap <= 1e-9
    record(
        2, "identity collapse at k=1", ok,
        f"max gaps: similarities {sims_gap:.2e}, means {means_gap:.2e}, "
        f"predictions {pred_gap:.2e} over {len(test)} test pairs",
    )


def test_criterion_3_e_avg_bound(bench, anon_sweep):
    raw_means = bench.item_means()
    t0 = time.time()
    weighted, unweighted, signed = {}, {}, {}
    for k, (anon, _, _) in anon_sweep.items():
        anon_means = anon.item_means(weighted=True)
        weighted[k] = compute_e_avg(raw_means, anon_means).value
        unweighted[k] = compute_e_avg(raw_means, anon.item_means(weighted=False)).value
        defined = ~(np.isnan(raw_means) | np.isnan(anon_means))
        signed[k] = float(abs((raw_means[defined] - anon_means[defined]).mean()))
    elapsed = time.time() - t0
    worst_k = max(weighted, key=weighted.get)
    violations = [k for k, v in weighted.items() if v > 0.01]
    ok = not violations and elapsed < 300
    record(
        3, "e_avg bound 0.01", ok,
        f"weighted e_avg in [{min(weighted.values()):.4f}, {weighted[worst_k]:.4f}] "
        f"(worst at k={worst_k}); unweighted max {max(unweighted.values()):.4f}; "
        f"violations at k={violations}; for reference the signed aggregate drift "
        f"|mean(r - ~r)| stays <= {max(signed.values()):.4f}" if violations else
        f"weighted e_avg max {weighted[worst_k]:.4f} at k={worst_k}, all <= 0.01",
    )


def test_criterion_4_rmse_vs_k_orderings(case1):
    result, elapsed = case1
    reg = result.row("Case1/REG").rmse
    problems = []
    baselines = {k: result.row("BASELINE", k=k).rmse for k in K_RANGE}
    if not all(reg < b for b in baselines.values()):
        problems.append(f"REG {reg:.4f} !< BASELINE min {min(baselines.values()):.4f}")
    ai = {k: result.row("Case1A/AI", k=k).rmse for k in K_RANGE}
    if not ai[15] > ai[2]:
        problems.append(f"AI(15)={ai[15]:.4f} !> AI(2)={ai[2]:.4f}")
    not_above = [k for k in K_RANGE if not ai[k] > reg]
    if not_above:
        problems.append(f"AI !> REG at k={not_above}")
    if elapsed >= 1800:
        problems.append(f"runtime {elapsed:.0f}s over 30 min")
    record(
        4, "RMSE-vs-k orderings", not problems,
        "; ".join(problems) if problems else
        f"REG {reg:.4f} < BASELINE {min(baselines.values()):.4f}; "
        f"AI rises {ai[2]:.4f} -> {ai[15]:.4f}; runtime {elapsed:.0f}s, 5 trials",
    )


def test_criterion_5_rmse_vs_n_orderings(case2):
    result, elapsed = case2
    problems = []
    base = {n: result.row("BASELINE", k=0, n=n).rmse for n in range(1, 21)}
    raw = {n: result.row("Case2/UR", k=0, n=n).rmse for n in range(1, 21)}
    if not raw[1] > raw[20]:
        problems.append("Case2/UR does not improve from N=1 to N=20")
    crossovers = {}
    for k in (2, 4, 10):
        anon = {n: result.row("Case2A/UR", k=k, n=n).rmse for n in range(1, 21)}
        if not anon[1] > anon[20]:
            problems.append(f"Case2A/UR k={k} does not improve from N=1 to N=20")
        cross = next(
            (n for n in range(1, 21) if all(anon[j] < base[j] for j in range(n, 21))),
            None,
        )
        crossovers[k] = cross
        if cross is None or not 5 <= cross <= 11:
            problems.append(f"k={k} baseline crossover at N={cross}, outside [5, 11]")
        over = [
            (n, anon[n] - raw[n]) for n in range(1, 21) if anon[n] > raw[n] + 0.02
        ]
        if over:
            n_worst, gap = max(over, key=lambda t: t[1])
            problems.append(
                f"k={k}: Case2A/UR exceeds Case2/UR+0.02 at N={[n for n, _ in over]} "
                f"(worst +{gap:.4f} at N={n_worst})"
            )
    if elapsed >= 2700:
        problems.append(f"runtime {elapsed:.0f}s over 45 min")
    record(
        5, "RMSE-vs-N orderings", not problems,
        f"baseline crossovers {crossovers}; runtime {elapsed:.0f}s"
        + ("; " + "; ".join(problems) if problems else "; monotone endpoints and slack hold"),
    )


def test_criterion_6_negative_similarity_shift(bench, anon_sweep):
    raw_hist = similarity_histogram(item_similarity_matrix(bench), bins=40)
    anon10, _, _ = anon_sweep[10]
    anon_hist = similarity_histogram(item_similarity_matrix(anon10), bins=40)
    raw_neg, anon_neg = raw_hist.negative_count(), anon_hist.negative_count()
    record(
        6, "negative similarities increase at k=10",
        anon_neg > raw_neg,
        f"defined pairs with s < 0: raw {raw_neg}, anonymized {anon_neg}",
    )


def test_criterion_7_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for case in range(200):
        m = random_matrix(rng, n_max=6, m_max=5)
        sims = item_similarity_matrix(m)
        rows, w = ref.matrix_rows(m)
        brute_s = np.array(ref.brute_similarity(rows, w, m.m))
        worst = max(worst, float(np.abs(brute_s - sims.values).max()))
        brute_m = ref.brute_item_means(rows, w, m.m)
        reg = train_model("Case1/REG", train=m, sims=sims)
        c2 = train_model("Case2/UR", train=m, sims=sims)
        base = train_model("BASELINE", train=m)
        k = int(rng.integers(1, max(2, m.n // 2) + 1))
        anon, amap = oka_anonymize(m, k, seed=case)
        asims = item_similarity_matrix(anon)
        arows, aw = ref.anon_rows(anon)
        brute_as = np.array(ref.brute_similarity(arows, aw, m.m))
        worst = max(worst, float(np.abs(brute_as - asims.values).max()))
        brute_am = ref.brute_item_means(arows, aw, m.m)
        ai = train_model("Case1A/AI", anon=anon, sims=asims)
        ur = train_model("Case1A/UR", anon=anon, sims=asims)
        for u in range(1, m.n + 1):
            row = m.user_row(u)
            a = amap.anon_id(u)
            proto = anon.prototype_row(a)
            for i in range(1, m.m + 1):
                cases = (
                    (predict_case1_reg(reg, u, i), ref.brute_predict(brute_s.tolist(), brute_m, row, i, m.scale)),
                    (predict_case2_ur(c2, row, i), ref.brute_predict(brute_s.tolist(), brute_m, row, i, m.scale)),
                    (predict_baseline(base, i), ref.brute_predict(brute_s.tolist(), brute_m, {}, i, m.scale)),
                    (predict_case1a_ai(ai, a, i), ref.brute_predict(brute_as.tolist(), brute_am, proto, i, m.scale)),
                    (predict_case2_ur(ur, row, i), ref.brute_predict(brute_as.tolist(), brute_am, row, i, m.scale)),
                )
                for got, (want, want_level) in cases:
                    worst = max(worst, abs(got.value - want))
                    assert got.fallback_level == want_level
    elapsed = time.time() - t0
    ok = worst <= 1e-9 and elapsed < 60
    record(
        7, "oracle equivalence on 200 random matrices", ok,
        f"worst |difference| {worst:.2e}; runtime {elapsed:.1f}s",
    )


def test_criterion_8_residual_anonymity():
    rng = np.random.default_rng(SEED + 1)
    checks = 0
    for trial in range(40):
        m = random_matrix(rng, n_max=12, m_max=5)
        k = int(rng.integers(1, m.n + 1))
        anon, amap = oka_anonymize(m, k, seed=trial)
        users = np.arange(1, m.n + 1)
        reveal_count = int(rng.integers(0, m.n + 1))
        revealed = set(rng.choice(users, size=reveal_count, replace=False).tolist())
        report = residual_anonymity(anon, amap, revealed)
        for a in range(1, anon.n_prime + 1):
            size = int(anon.multiplicities[a - 1])
            r = sum(1 for u in revealed if amap.anon_id(u) == a)
            assert report.residuals[a] == size - r
            checks += 1
        assert report.min_residual == min(report.residuals.values())
    record(
        8, "residual anonymity accounting", True,
        f"residual = class size - reveals, exact over {checks} classes",
    )


def test_criterion_9_determinism_and_split_hygiene(tmp_path_factory, case1):
    tmp = tmp_path_factory.mktemp("determinism")
    data = tmp / "ratings.csv"
    write_csv_triples(
        make_synthetic_ratings(n_users=60, n_items=25, n_ratings=700, seed=5,
                               latent_dim=4),
        data,
    )
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = tmp / name
        code = cli_main([
            "eval-case1", "--input", str(data), "--format", "csv-triples",
            "--k-min", "2", "--k-max", "4", "--trials", "2", "--seed", "11",
            "--out-csv", str(out),
        ])
        assert code == 0
        outputs.append(out.read_bytes())
    byte_identical = outputs[0] == outputs[1]

    small = build_matrix(
        make_synthetic_ratings(n_users=60, n_items=25, n_ratings=700, seed=5,
                               latent_dim=4),
        60, 25,
    )
    c2 = run_case2_experiment(
        small,
        ExperimentConfig(protocol="case2", k_values=(2,), n_values=(2, 3),
                         trials=2, draws=3, seed=1, hygiene_check=True),
    )
    big_hygiene = case1[0].metadata["hygiene"]
    ok = (
        byte_identical
        and c2.metadata["hygiene"] == {"test_pairs_in_train": 0, "prototype_mismatch": 0}
        and big_hygiene == {"test_pairs_in_train": 0, "prototype_mismatch": 0}
    )
    record(
        9, "determinism and split hygiene", ok,
        f"CSV runs byte-identical: {byte_identical}; hygiene counters "
        f"small={c2.metadata['hygiene']}, full sweep={big_hygiene}",
    )
