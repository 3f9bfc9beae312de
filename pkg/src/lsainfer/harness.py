"""Replicated coverage experiments, bias estimates and QQ exports."""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_inference
from .engine import RunConfig, RunningMean, StepsizeSchedule, run_coupled, run_nonlinear
from .errors import DegenerateError, ValidationError
from .inference import (BatchMeanAccumulator, BatchPlan, default_batch_count, diminishing_layout, infer,
                        normal_quantile)
from .problems import LsaProblem, NonlinearProblem
from .rr import equidistant_schedule, explicit_schedule, geometric_schedule, rr_combine
from .rng import seed_sequence

log = logging.getLogger(__name__)

PERCENTILES = (10, 25, 50, 75, 90)


@dataclass(frozen=True)
class Method:
    """One inference regime parsed from the method mini-language.

    ``const:<a>``, ``rr:<a1>:<a2>[:...]``, ``rr-geo:<a1>:<c>:<M>``,
    ``rr-eqd:<a>:<b>:<M>``, ``dim:<a0>:<beta>``, ``bootstrap``.
    """

    label: str
    kind: str
    schedules: tuple = ()
    rr: object = None

    @classmethod
    def parse(cls, text):
        text = text.strip()
        head, *rest = text.split(":")
        try:
            vals = [float(v) for v in rest]
        except ValueError:
            raise ValidationError(f"bad numeric field in method {text!r}") from None
        if head == "const" and len(vals) == 1:
            return cls(text, "const", (StepsizeSchedule.constant(vals[0]),))
        if head == "dim" and len(vals) in (1, 2):
            beta = vals[1] if len(vals) == 2 else 0.5
            return cls(text, "dim", (StepsizeSchedule.polynomial(vals[0], beta),))
        if head in ("rr", "rr-geo", "rr-eqd"):
            if head == "rr" and len(vals) >= 1:
                sched = explicit_schedule(vals)
            elif head == "rr-geo" and len(vals) == 3:
                sched = geometric_schedule(vals[0], vals[1], int(vals[2]))
            elif head == "rr-eqd" and len(vals) == 3:
                sched = equidistant_schedule(vals[0], vals[1], int(vals[2]))
            else:
                raise ValidationError(f"bad extrapolation method {text!r}")
            return cls(text, "rr", tuple(StepsizeSchedule.constant(a) for a in sched.stepsizes), sched)
        if head == "bootstrap" and not vals:
            return cls(text, "bootstrap")
        raise ValidationError(f"unknown method {text!r}")


def parse_methods(text):
    items = [m for m in (text.split(",") if isinstance(text, str) else text) if str(m).strip()]
    if not items:
        raise ValidationError("no methods given")
    return [m if isinstance(m, Method) else Method.parse(m) for m in items]


@dataclass(frozen=True)
class ExperimentSpec:
    methods: tuple
    total_steps: int = 100_000
    replicates: int = 100
    seed: int = 0
    batch_count: int = None
    burn_in: int = None
    discard: int = 0
    q: float = 0.05
    problem_seed: int = -1
    coordinate: int = 0
    bootstrap: BootstrapConfig = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(parse_methods(self.methods)))
        if self.replicates < 1:
            raise ValidationError("replicate count must be >= 1")

    @property
    def batches(self):
        return default_batch_count(self.total_steps) if self.batch_count is None else int(self.batch_count)

    def plan(self):
        return BatchPlan.default(self.total_steps, self.batches, self.discard, self.burn_in)

    def bootstrap_config(self):
        if self.bootstrap is not None:
            return self.bootstrap
        return BootstrapConfig(trajectory_length=self.total_steps,
                               resample_size=max(1, self.total_steps // 100), replicates=500, q=self.q)


@dataclass
class TrialResult:
    method: str
    l2_error: float
    widths: np.ndarray
    covered: np.ndarray
    diverged: bool
    replicate: int = 0
    problem_seed: int = -1
    checksum: int = 0
    report: object = field(default=None, repr=False)


@dataclass
class SummaryRow:
    method: str
    l2_mean: float
    l2_se: float
    width_mean: float
    width_se: float
    coverage: float
    coverage_se: float
    n_ok: int
    n_diverged: int
    n_covered: int
    note: str = ""

    @property
    def failed(self):
        return self.n_ok == 0


def _lsa_runs(problem, spec, methods, rep):
    """One coupled run over the distinct schedules of all non-bootstrap methods."""
    plan = spec.plan()
    # (schedule, layout key) -> accumulator; constant schedules use the fixed plan
    schedules = []
    index = {}
    for m in methods:
        for s in m.schedules:
            if s not in index:
                index[s] = len(schedules)
                schedules.append(s)
    layouts = {}
    consumers = []
    for s in schedules:
        if s.is_constant:
            layout = plan
        else:
            key = ("dim", s.exponent)
            if key not in layouts:
                layouts[key] = diminishing_layout(spec.total_steps, spec.batches, s.exponent)
            layout = layouts[key]
        consumers.append(BatchMeanAccumulator(layout))
    config = RunConfig(spec.total_steps, seed=seed_sequence(spec.seed, rep, 0))
    if isinstance(problem, NonlinearProblem):
        result = run_nonlinear(problem, schedules, config, consumers)
    else:
        result = run_coupled(problem, schedules, config, consumers)
    return index, result


def _trial_from_report(method, report, target, rep, spec, checksum):
    err = float(np.linalg.norm(report.point_estimate - target))
    return TrialResult(method.label, err, report.widths, report.covers(target), False, rep,
                       spec.problem_seed, checksum, report)


def _diverged_trial(method, d, rep, spec, checksum=0):
    nan = np.full(d, np.nan)
    return TrialResult(method.label, float("nan"), nan, np.zeros(d, dtype=bool), True, rep,
                       spec.problem_seed, checksum)


def run_trial(problem, spec, rep):
    """All methods of ``spec`` on replicate ``rep``; LSA methods share one trajectory."""
    target = problem.theta_star
    d = problem.dim
    lsa_methods = [m for m in spec.methods if m.kind != "bootstrap"]
    out = {}
    if lsa_methods:
        index, result = _lsa_runs(problem, spec, lsa_methods, rep)
        for m in lsa_methods:
            ids = [index[s] for s in m.schedules]
            if any(result.diverged_at[i] is not None for i in ids):
                out[m.label] = _diverged_trial(m, d, rep, spec, result.checksum)
                continue
            bms = [result.outputs[i] for i in ids]
            bm = rr_combine(bms, m.rr) if m.kind == "rr" else bms[0]
            out[m.label] = _trial_from_report(m, infer(bm, spec.q, m.label), target, rep, spec, result.checksum)
    for m in spec.methods:
        if m.kind == "bootstrap":
            if not isinstance(problem, LsaProblem):
                raise ValidationError("bootstrap needs a finite-state LSA problem")
            report = bootstrap_inference(problem, spec.bootstrap_config(), seed_sequence(spec.seed, rep, 1))
            out[m.label] = _trial_from_report(m, report, target, rep, spec, 0)
    return [out[m.label] for m in spec.methods]


def _trial_worker(args):
    problem, spec, rep = args
    return run_trial(problem, spec, rep)


def run_trials(problem, spec, jobs=1):
    """Trials for every replicate, returned in replicate order whatever ``jobs`` is."""
    reps = range(spec.replicates)
    if jobs is None or jobs <= 1:
        return [run_trial(problem, spec, r) for r in reps]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_trial_worker, [(problem, spec, r) for r in reps]))


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def summarize(trials, methods, coordinate=0):
    """One SummaryRow per method from per-replicate trial lists."""
    rows = []
    for j, m in enumerate(methods):
        label = m.label if isinstance(m, Method) else m
        res = [t[j] for t in trials]
        ok = [r for r in res if not r.diverged]
        l2 = _mean_se([r.l2_error for r in ok])
        width = _mean_se([r.widths[coordinate] for r in ok])
        hits = sum(bool(r.covered[coordinate]) for r in ok)
        if ok:
            p = hits / len(ok)
            cov, cov_se = 100.0 * p, 100.0 * np.sqrt(p * (1 - p) / len(ok))
        else:
            cov, cov_se = float("nan"), float("nan")
            log.warning("method %s: every replicate diverged", label)
        note = ""
        if isinstance(m, Method) and m.rr is not None and not m.rr.conditioned:
            note = "ill-conditioned"
        rows.append(SummaryRow(label, l2[0], l2[1], width[0], width[1], cov, float(cov_se),
                               len(ok), len(res) - len(ok), hits, note))
    return rows


def coverage_experiment(problem, spec, jobs=1):
    """Run all replicates and aggregate; returns (trials, summary rows)."""
    if spec.replicates < 30:
        warnings.warn("fewer than 30 replicates: standard errors are unreliable", stacklevel=2)
    trials = run_trials(problem, spec, jobs)
    return trials, summarize(trials, spec.methods, spec.coordinate)


def percentile_summary(per_problem_rows, levels=PERCENTILES):
    """Percentiles across problems of each method's l2 error, CI width and coverage.

    Returns ``{method: {metric: {level: value}}}``.
    """
    if len(per_problem_rows) < 10:
        warnings.warn("percentile summary over fewer than 10 problems", stacklevel=2)
    out = {}
    for rows in per_problem_rows:
        for row in rows:
            slot = out.setdefault(row.method, {"l2": [], "width": [], "coverage": []})
            slot["l2"].append(row.l2_mean)
            slot["width"].append(row.width_mean)
            slot["coverage"].append(row.coverage)
    table = {}
    for method, metrics in out.items():
        table[method] = {}
        for name, vals in metrics.items():
            v = np.asarray(vals, dtype=float)
            v = v[np.isfinite(v)]
            table[method][name] = {lv: (float(np.percentile(v, lv)) if v.size else float("nan")) for lv in levels}
    return table


def replicate_means(problem, alpha, total_steps, replicates, seed, burn_in=None):
    """Post-burn-in iterate average of each replicate (rows), constant stepsize."""
    burn = total_steps // 10 if burn_in is None else int(burn_in)
    sched = [StepsizeSchedule.constant(alpha)]
    means = np.empty((replicates, problem.dim))
    for r in range(replicates):
        acc = RunningMean(burn)
        cfg = RunConfig(total_steps, seed=seed_sequence(seed, r, 0))
        if isinstance(problem, NonlinearProblem):
            run_nonlinear(problem, sched, cfg, [acc], raise_on_divergence=True)
        else:
            run_coupled(problem, sched, cfg, [acc], raise_on_divergence=True)
        means[r] = acc.result()
    return means


def empirical_bias(problem, alpha, total_steps, replicates, seed, burn_in=None):
    """Monte Carlo estimate of E[theta_bar] - theta* with per-coordinate standard errors."""
    if total_steps < 10_000:
        warnings.warn("T < 1e4: transient error may dominate the bias estimate", stacklevel=2)
    if replicates < 2:
        raise ValidationError("need at least 2 replicates")
    means = replicate_means(problem, alpha, total_steps, replicates, seed, burn_in)
    bias = means.mean(axis=0) - problem.theta_star
    se = means.std(axis=0, ddof=1) / np.sqrt(replicates)
    return bias, se


def qq_pairs(samples):
    """Per coordinate: (sorted standardised samples, normal quantiles at (i - 0.5)/R)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    r = x.shape[0]
    sd = x.std(axis=0, ddof=1)
    if np.any(sd <= 0) or not np.all(np.isfinite(sd)):
        raise DegenerateError("replicate means have zero spread")
    z = np.sort((x - x.mean(axis=0)) / sd, axis=0)
    theo = np.array([normal_quantile((i - 0.5) / r) for i in range(1, r + 1)])
    return z, theo


def qq_correlation(samples):
    z, theo = qq_pairs(samples)
    return np.array([np.corrcoef(z[:, j], theo)[0, 1] for j in range(z.shape[1])])


def qq_export(problem, alpha, total_steps, replicates, seed, burn_in=100):
    """QQ rows (coordinate, sample_quantile, normal_quantile) and per-coordinate correlations."""
    if replicates < 100:
        warnings.warn("QQ export with fewer than 100 replicates", stacklevel=2)
    means = replicate_means(problem, alpha, total_steps, replicates, seed, burn_in)
    z, theo = qq_pairs(means)
    rows = [(j + 1, float(z[i, j]), float(theo[i])) for j in range(z.shape[1]) for i in range(z.shape[0])]
    corr = np.array([np.corrcoef(z[:, j], theo)[0, 1] for j in range(z.shape[1])])
    return rows, corr


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_raw_csv(path, trials, dim):
    header = (["problem_seed", "replicate", "method", "l2_error"]
              + [f"ci_width_{i + 1}" for i in range(dim)]
              + [f"covered_{i + 1}" for i in range(dim)] + ["diverged"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rep_trials in trials:
            for t in rep_trials:
                w.writerow([t.problem_seed, t.replicate, t.method, _fmt(t.l2_error)]
                           + [_fmt(v) for v in t.widths] + [int(c) for c in t.covered] + [int(t.diverged)])


SUMMARY_HEADER = ["method", "l2_mean", "l2_se", "ci_width_mean", "ci_width_se", "coverage", "coverage_se",
                  "n_ok", "n_diverged", "note"]


def write_summary_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r.method, _fmt(r.l2_mean), _fmt(r.l2_se), _fmt(r.width_mean), _fmt(r.width_se),
                        _fmt(r.coverage), _fmt(r.coverage_se), r.n_ok, r.n_diverged, r.note])


def write_percentile_csv(path, table, levels=PERCENTILES):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "metric"] + [f"p{lv}" for lv in levels])
        for method, metrics in table.items():
            for name, vals in metrics.items():
                w.writerow([method, name] + [_fmt(vals[lv]) for lv in levels])


def write_qq_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["coordinate", "sample_quantile", "normal_quantile"])
        for c, s, t in rows:
            w.writerow([c, _fmt(s), _fmt(t)])
