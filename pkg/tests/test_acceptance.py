"""Acceptance suite.  Each test prints one ``CRITERION <n>: PASS|FAIL`` line.

Run standalone with ``python3 tests/test_acceptance.py`` or through pytest;
the pytest run repeats the verdict lines in the terminal summary.
"""

import csv
import io
import time
import warnings

import numpy as np
import pytest

from lsainfer.bootstrap import BootstrapConfig
from lsainfer.harness import (ExperimentSpec, coverage_experiment, empirical_bias, percentile_summary, qq_export,
                              replicate_means, write_raw_csv)
from lsainfer.problems import (check_zero_bias_condition, random_lsa_problem, random_multiplicative_problem,
                               realizable_td_problem)
from lsainfer.rr import (constraint_residuals, equidistant_magnitudes, equidistant_schedule, explicit_schedule,
                         geometric_schedule, rr_coefficients, rr_combine)

PROBLEM_SEED = 6  # the one fixed random problem (|X| = 10, d = 5) shared by criteria 4, 5 and 8
STATES, DIM = 10, 5

RESULTS = []


def verdict(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    RESULTS.append(line)
    return ok


def reference_problem():
    return random_lsa_problem(STATES, DIM, PROBLEM_SEED)


def raw_csv_bytes(trials, path):
    write_raw_csv(path, trials, DIM)
    return path.read_bytes()


def vandermonde_solve(steps):
    v = np.vander(np.asarray(steps, dtype=float), len(steps), increasing=True).T
    rhs = np.zeros(len(steps))
    rhs[0] = 1.0
    return np.linalg.solve(v, rhs)


# ---------------------------------------------------------------------------
# 1-3: extrapolation algebra
# ---------------------------------------------------------------------------

def test_criterion_1_rr_coefficients():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst_rel, worst_res = 0.0, 0.0
    for _ in range(200):
        m = int(rng.integers(1, 7))
        steps = np.sort(rng.uniform(0.01, 0.5, m))[::-1]
        h = rr_coefficients(steps)
        ref = vandermonde_solve(steps)
        worst_rel = max(worst_rel, float(np.max(np.abs(h - ref) / np.abs(ref))))
        worst_res = max(worst_res, float(np.max(constraint_residuals(steps, h))))
    elapsed = time.perf_counter() - start
    ok = worst_rel <= 1e-8 and worst_res <= 1e-9 and elapsed < 1.0
    assert verdict(1, ok, f"max rel diff {worst_rel:.1e}, max residual {worst_res:.1e}, {elapsed:.2f}s")


def test_criterion_2_bias_elimination():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for m in (2, 3, 4):
        for _ in range(20):
            sched = explicit_schedule(np.sort(rng.uniform(0.02, 0.5, m))[::-1])
            theta = rng.standard_normal(DIM)
            coef = rng.standard_normal((m - 1, DIM))
            runs = []
            for a in sched.stepsizes:
                bias = sum(a ** (i + 1) * coef[i] for i in range(m - 1))
                runs.append(np.tile(theta + bias, (8, 1)))
            worst = max(worst, float(np.max(np.abs(rr_combine(runs, sched) - theta))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 1.0
    assert verdict(2, ok, f"max extrapolation error {worst:.1e}, {elapsed:.2f}s")


def test_criterion_3_coefficient_bounds():
    bound_ok = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for c in (2, 3, 4, 8):
            for m in range(2, 11):
                s = geometric_schedule(0.5, c, m)
                bound_ok &= bool(np.abs(s.coefficients).max() <= np.exp(2 / (c - 1)))
    worst = 0.0
    for m in range(2, 9):
        for a, b in ((0.1, 0.1), (0.02, 0.18), (0.3, 0.5)):
            s = equidistant_schedule(a, b, m)
            mag = equidistant_magnitudes(a, b, m)
            worst = max(worst, float(np.max(np.abs(np.abs(s.coefficients) - mag) / mag)))
    ok = bound_ok and worst <= 1e-8
    assert verdict(3, ok, f"geometric bound holds: {bound_ok}, closed-form max rel diff {worst:.1e}")


# ---------------------------------------------------------------------------
# 4-9: Monte-Carlo reproductions
# ---------------------------------------------------------------------------

def criterion_4_run():
    spec = ExperimentSpec(["const:0.2", "const:0.02", "rr:0.2:0.02", "dim:0.2:0.5"], total_steps=100_000,
                          replicates=100, seed=7, problem_seed=PROBLEM_SEED)
    return coverage_experiment(reference_problem(), spec)


def test_criterion_4_rr_restores_coverage():
    start = time.perf_counter()
    trials, rows = criterion_4_run()
    elapsed = time.perf_counter() - start
    big, rr = rows[0], rows[2]
    ok = big.coverage <= 30 and 80 <= rr.coverage <= 98 and big.l2_mean > rr.l2_mean and elapsed <= 600
    assert verdict(4, ok, f"coverage alpha=0.2 {big.coverage:.0f}%, RR {rr.coverage:.0f}%; "
                          f"l2 {big.l2_mean:.2e} vs {rr.l2_mean:.2e}; {elapsed:.0f}s")


def test_criterion_5_batch_count_robustness():
    start = time.perf_counter()
    cov = {}
    for k in (50, 1000):
        spec = ExperimentSpec(["const:0.02", "dim:0.2:0.5"], total_steps=200_000, replicates=100, seed=11,
                              batch_count=k, problem_seed=PROBLEM_SEED)
        _, rows = coverage_experiment(reference_problem(), spec)
        cov[k] = [r.coverage for r in rows]
    elapsed = time.perf_counter() - start
    const_shift = abs(cov[50][0] - cov[1000][0])
    dim_drop = cov[50][1] - cov[1000][1]
    ok = const_shift <= 10 and dim_drop >= 10 and elapsed <= 1200
    assert verdict(5, ok, f"const 0.02: {cov[50][0]:.0f} -> {cov[1000][0]:.0f}; "
                          f"diminishing: {cov[50][1]:.0f} -> {cov[1000][1]:.0f}; {elapsed:.0f}s")


def zero_bias_problems():
    return {"multiplicative": random_multiplicative_problem(STATES, DIM, PROBLEM_SEED, 0.1),
            "td": realizable_td_problem(STATES, DIM, 0.9, PROBLEM_SEED).to_lsa()}


def criterion_6_means():
    out = {}
    for name, p in zero_bias_problems().items():
        for alpha in (0.2, 0.05):
            out[(name, alpha)] = replicate_means(p, alpha, 100_000, 100, 21)
    return out


def test_criterion_6_zero_bias():
    problems = zero_bias_problems()
    worst_ratio = {}
    for name, p in problems.items():
        for alpha in (0.2, 0.05):
            bias, se = empirical_bias(p, alpha, 100_000, 100, 21)
            worst_ratio[(name, alpha)] = float(np.max(np.abs(bias) / se))
    residual = {name: float(np.max(check_zero_bias_condition(p))) for name, p in problems.items()}
    bias, se = empirical_bias(reference_problem(), 0.2, 100_000, 100, 21)
    contrast = float(np.max(np.abs(bias) / se))
    mc_ok = all(r <= 3 for r in worst_ratio.values())
    res_ok = all(r <= 1e-8 for r in residual.values())
    ok = mc_ok and res_ok and contrast > 5
    ratios = ", ".join(f"{n}@{a}: {r:.2f}" for (n, a), r in worst_ratio.items())
    assert verdict(6, ok, f"max |bias|/SE {ratios}; residuals multiplicative {residual['multiplicative']:.1e}, "
                          f"td {residual['td']:.1e}; generic contrast {contrast:.1f}")


def test_criterion_7_iid_baseline():
    spec = ExperimentSpec(["const:0.02"], total_steps=100_000, replicates=500, seed=13, batch_count=50)
    _, rows = coverage_experiment(random_lsa_problem(STATES, DIM, PROBLEM_SEED, iid=True), spec)
    cov = rows[0].coverage
    assert verdict(7, 91 <= cov <= 97, f"first-coordinate coverage {cov:.1f}%")


def test_criterion_8_bootstrap_baseline():
    spec = ExperimentSpec(["rr:0.2:0.02", "bootstrap"], total_steps=100_000, replicates=100, seed=5,
                          problem_seed=PROBLEM_SEED, bootstrap=BootstrapConfig(100_000, 1000, 500, 0.05))
    _, (rr, boot) = coverage_experiment(reference_problem(), spec)
    ok = 85 <= boot.coverage <= 98 and boot.width_mean > rr.width_mean
    assert verdict(8, ok, f"bootstrap coverage {boot.coverage:.0f}%, width {boot.width_mean:.2e} "
                          f"vs RR {rr.width_mean:.2e}")


def test_criterion_9_qq_normality():
    start = time.perf_counter()
    _, corr = qq_export(random_lsa_problem(5, 3, PROBLEM_SEED), 0.2, 100_000, 1000, 17)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(corr >= 0.995)) and elapsed <= 900
    assert verdict(9, ok, "quantile correlations " + " ".join(f"{c:.4f}" for c in corr) + f"; {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 10: determinism
# ---------------------------------------------------------------------------

def means_csv_bytes(means):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["problem", "alpha", "replicate"] + [f"mean_{i + 1}" for i in range(DIM)])
    for (name, alpha), m in means.items():
        for r, row in enumerate(m):
            w.writerow([name, repr(alpha), r] + [repr(float(v)) for v in row])
    return buf.getvalue().encode()


def test_criterion_10_determinism(tmp_path):
    a = raw_csv_bytes(criterion_4_run()[0], tmp_path / "first.csv")
    b = raw_csv_bytes(criterion_4_run()[0], tmp_path / "second.csv")
    c = means_csv_bytes(criterion_6_means())
    d = means_csv_bytes(criterion_6_means())
    ok = a == b and c == d
    assert verdict(10, ok, f"criterion 4 raw CSV identical: {a == b} ({len(a)} bytes); "
                           f"criterion 6 replicate-mean CSV identical: {c == d} ({len(c)} bytes)")


# ---------------------------------------------------------------------------
# percentile grid (scaled-down multi-problem claim)
# ---------------------------------------------------------------------------

def test_percentile_grid_ordering():
    methods = ["const:0.2", "const:0.02", "rr:0.2:0.02", "dim:0.02:0.5"]
    per_problem = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for ps in range(20):
            spec = ExperimentSpec(methods, total_steps=100_000, replicates=50, seed=19, problem_seed=ps)
            per_problem.append(coverage_experiment(random_lsa_problem(STATES, DIM, ps), spec)[1])
    med = {m: percentile_summary(per_problem)[m]["coverage"][50] for m in methods}
    ok = med["rr:0.2:0.02"] >= med["const:0.2"] and med["const:0.02"] >= med["dim:0.02:0.5"]
    assert verdict("grid", ok, f"median coverage RR {med['rr:0.2:0.02']:.0f} vs alpha=0.2 {med['const:0.2']:.0f}; "
                               f"alpha=0.02 {med['const:0.02']:.0f} vs 0.02/sqrt(k) {med['dim:0.02:0.5']:.0f}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
