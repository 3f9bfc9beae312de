"""Command-line interface: ``lsainfer <subcommand> ...``.

Relative output paths are resolved against ``$LSAINFER_OUTPUT_DIR`` when it
is set.  Exit codes: 0 success, 2 usage, 3 invalid input, 4 numerical
failure, 5 file error, 6 generator failure.
"""

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import harness
from .bootstrap import BootstrapConfig, bootstrap_inference
from .errors import GenerationError, LsaInferError, NumericError, ValidationError
from .io import dump_json, load_problem, save_problem, save_report
from .problems import (logistic_problem, random_lsa_problem, random_multiplicative_problem,
                       random_regression_problem, realizable_td_problem)

OUTPUT_ENV = "LSAINFER_OUTPUT_DIR"
FAMILIES = ("random", "iid", "multiplicative", "regression", "td", "logistic")

EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC, EXIT_FILE, EXIT_GENERATION = 2, 3, 4, 5, 6

log = logging.getLogger("lsainfer")


def _out_path(path):
    base = os.environ.get(OUTPUT_ENV)
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _out_dir(path):
    path = _out_path(path)
    os.makedirs(path, exist_ok=True)
    return path


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _prob(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text}")
    return v


def _generate(family, states, dim, seed, noise_bound, noise_sd, discount, autocorrelation):
    if family == "random":
        return random_lsa_problem(states, dim, seed)
    if family == "iid":
        return random_lsa_problem(states, dim, seed, iid=True)
    if family == "multiplicative":
        return random_multiplicative_problem(states, dim, seed, noise_bound)
    if family == "regression":
        return random_regression_problem(states, dim, noise_sd, seed)
    if family == "td":
        return realizable_td_problem(states, dim, discount, seed).to_lsa()
    return logistic_problem(autocorrelation, seed, dim)


def _spec(args, methods, replicates, problem_seed=-1):
    return harness.ExperimentSpec(
        methods=methods, total_steps=args.length, replicates=replicates, seed=args.seed,
        batch_count=args.batches, burn_in=args.burn_in, discard=args.discard, q=args.q,
        problem_seed=problem_seed, coordinate=args.coordinate - 1)


def _print_summary(rows, out=sys.stdout):
    print(f"{'method':<24}{'l2 error':>22}{'CI width':>22}{'coverage %':>16}{'diverged':>10}", file=out)
    for r in rows:
        print(f"{r.method:<24}{r.l2_mean:>12.3e} ({r.l2_se:.1e}){r.width_mean:>12.3e} ({r.width_se:.1e})"
              f"{r.coverage:>8.1f} ({r.coverage_se:4.1f}){r.n_diverged:>10d}", file=out)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_problem(args):
    problem = _generate(args.family, args.states, args.dim, args.seed, args.noise_bound, args.noise_sd,
                        args.discount, args.autocorrelation)
    path = _out_path(args.output)
    save_problem(problem, path)
    print(f"wrote {path} (family={problem.family}, theta*={np.array2string(problem.theta_star, precision=4)})")


def cmd_infer(args):
    problem = load_problem(args.problem)
    method = args.method or f"const:{args.alpha!r}"
    spec = _spec(args, [method], 1)
    (trial,) = harness.run_trial(problem, spec, 0)
    if trial.diverged:
        raise NumericError(f"{method}: iterates diverged")
    path = _out_path(args.output)
    save_report(trial.report, path, {"theta_star": problem.theta_star.tolist()})
    print(f"wrote {path}")


def cmd_experiment(args):
    problem = load_problem(args.problem)
    spec = _spec(args, args.methods, args.reps, args.problem_seed)
    trials, rows = harness.coverage_experiment(problem, spec, jobs=args.jobs)
    out = _out_dir(args.output)
    harness.write_raw_csv(os.path.join(out, "raw.csv"), trials, problem.dim)
    harness.write_summary_csv(os.path.join(out, "summary.csv"), rows)
    _print_summary(rows)


def cmd_percentiles(args):
    per_problem = []
    all_trials = []
    dim = args.dim
    for i in range(args.problems):
        pseed = args.problem_seed + i
        problem = random_lsa_problem(args.states, args.dim, pseed, iid=args.iid)
        spec = _spec(args, args.methods, args.reps, pseed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trials, rows = harness.coverage_experiment(problem, spec, jobs=args.jobs)
        per_problem.append(rows)
        all_trials.extend(trials)
        log.info("problem %d/%d done", i + 1, args.problems)
    table = harness.percentile_summary(per_problem)
    out = _out_dir(args.output)
    harness.write_raw_csv(os.path.join(out, "raw.csv"), all_trials, dim)
    harness.write_percentile_csv(os.path.join(out, "percentiles.csv"), table)
    for method, metrics in table.items():
        cov = metrics["coverage"]
        print(f"{method:<24} coverage p10..p90: " + " ".join(f"{cov[lv]:.1f}" for lv in harness.PERCENTILES))


def cmd_bias(args):
    problem = load_problem(args.problem)
    bias, se = harness.empirical_bias(problem, args.alpha, args.length, args.reps, args.seed, args.burn_in)
    data = {"alpha": args.alpha, "total_steps": args.length, "replicates": args.reps,
            "bias": bias.tolist(), "standard_error": se.tolist()}
    if args.output:
        path = _out_path(args.output)
        dump_json(data, path)
        print(f"wrote {path}")
    else:
        print(json.dumps(data, indent=2))


def cmd_qq(args):
    problem = load_problem(args.problem)
    rows, corr = harness.qq_export(problem, args.alpha, args.length, args.reps, args.seed, args.burn_in)
    path = _out_path(args.output)
    harness.write_qq_csv(path, rows)
    print(f"wrote {path}; quantile correlation per coordinate: " + " ".join(f"{c:.4f}" for c in corr))


def cmd_bootstrap(args):
    problem = load_problem(args.problem)
    config = BootstrapConfig(args.length, args.resample, args.replicates, args.q, args.interval)
    report = bootstrap_inference(problem, config, args.seed)
    path = _out_path(args.output)
    save_report(report, path, {"theta_star": problem.theta_star.tolist()})
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_plan(p):
    p.add_argument("--length", "-T", type=_positive_int, default=100_000, help="trajectory length T")
    p.add_argument("--batches", "-K", type=_positive_int, default=None,
                   help="batch count K (default round(T^0.3), at least 2)")
    p.add_argument("--burn-in", type=int, default=None, help="burn-in b (default T // (K + 1))")
    p.add_argument("--discard", type=int, default=0, help="per-batch discard n0")
    p.add_argument("--q", type=_prob, default=0.05, help="miscoverage level; CIs have level 1 - q")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--coordinate", type=_positive_int, default=1, help="coordinate reported in summaries (1-based)")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="lsainfer", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("gen-problem", help="generate a random problem file", formatter_class=fmt)
    p.add_argument("--family", choices=FAMILIES, default="random", help="problem family")
    p.add_argument("--states", type=_positive_int, default=10, help="number of chain states |X|")
    p.add_argument("--dim", type=_positive_int, default=5, help="parameter dimension d")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--noise-bound", type=float, default=0.1, help="multiplicative family: U[-u, u] entry bound")
    p.add_argument("--noise-sd", type=float, default=0.1, help="regression family: label noise sd")
    p.add_argument("--discount", type=float, default=0.9, help="td family: discount factor")
    p.add_argument("--autocorrelation", type=float, default=0.5, help="logistic family: AR(1) coefficient")
    p.add_argument("-o", "--output", default="problem.json", help="output problem JSON")
    p.set_defaults(func=cmd_gen_problem)

    p = sub.add_parser("infer", help="one run plus batch-mean inference", formatter_class=fmt)
    p.add_argument("--problem", required=True, help="problem JSON")
    p.add_argument("--alpha", type=float, default=0.02, help="constant stepsize")
    p.add_argument("--method", default=None, help="method string (overrides --alpha), e.g. rr:0.2:0.02")
    _add_plan(p)
    p.add_argument("-o", "--output", default="report.json", help="output report JSON")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("experiment", help="replicated coverage experiment", formatter_class=fmt)
    p.add_argument("--problem", required=True, help="problem JSON")
    p.add_argument("--methods", default="const:0.2,const:0.02,rr:0.2:0.02,dim:0.2:0.5",
                   help="comma-separated methods: const:A, rr:A1:A2[:...], rr-geo:A1:C:M, rr-eqd:A:B:M, "
                        "dim:A0:BETA, bootstrap")
    p.add_argument("--reps", type=_positive_int, default=100, help="replicates")
    p.add_argument("--problem-seed", type=int, default=-1, help="seed recorded in the raw CSV")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    _add_plan(p)
    p.add_argument("-o", "--output", default="experiment", help="output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("percentiles", help="coverage experiments over many random problems", formatter_class=fmt)
    p.add_argument("--problems", type=_positive_int, default=20, help="number of random problems")
    p.add_argument("--problem-seed", type=int, default=0, help="seed of the first problem")
    p.add_argument("--states", type=_positive_int, default=10, help="number of chain states |X|")
    p.add_argument("--dim", type=_positive_int, default=5, help="parameter dimension d")
    p.add_argument("--iid", action="store_true", help="use i.i.d. data")
    p.add_argument("--methods", default="const:0.2,const:0.02,rr:0.2:0.02,dim:0.2:0.5", help="methods")
    p.add_argument("--reps", type=_positive_int, default=50, help="replicates per problem")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    _add_plan(p)
    p.add_argument("-o", "--output", default="percentiles", help="output directory")
    p.set_defaults(func=cmd_percentiles)

    p = sub.add_parser("bias", help="Monte Carlo asymptotic bias estimate", formatter_class=fmt)
    p.add_argument("--problem", required=True, help="problem JSON")
    p.add_argument("--alpha", type=float, default=0.2, help="constant stepsize")
    p.add_argument("--length", "-T", type=_positive_int, default=100_000, help="trajectory length T")
    p.add_argument("--reps", type=_positive_int, default=100, help="replicates")
    p.add_argument("--burn-in", type=int, default=None, help="burn-in (default T // 10)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("-o", "--output", default=None, help="output JSON (stdout when omitted)")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("qq", help="QQ data of replicate means", formatter_class=fmt)
    p.add_argument("--problem", required=True, help="problem JSON")
    p.add_argument("--alpha", type=float, default=0.2, help="constant stepsize")
    p.add_argument("--length", "-T", type=_positive_int, default=100_000, help="trajectory length T")
    p.add_argument("--reps", type=_positive_int, default=1000, help="replicates R")
    p.add_argument("--burn-in", type=int, default=100, help="burn-in")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("-o", "--output", default="qq.csv", help="output CSV")
    p.set_defaults(func=cmd_qq)

    p = sub.add_parser("bootstrap", help="bootstrap plug-in baseline", formatter_class=fmt)
    p.add_argument("--problem", required=True, help="problem JSON")
    p.add_argument("--length", "-T", type=_positive_int, default=1_000_000, help="stored trajectory length")
    p.add_argument("--resample", type=_positive_int, default=10_000, help="resample size")
    p.add_argument("--replicates", "-R", type=_positive_int, default=500, help="bootstrap replicates R")
    p.add_argument("--q", type=_prob, default=0.05, help="miscoverage level")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--interval", choices=("spread", "replicates"), default="spread",
                   help="half-width z*sd (spread) or z*sd/sqrt(R) (replicates)")
    p.add_argument("-o", "--output", default="bootstrap.json", help="output report JSON")
    p.set_defaults(func=cmd_bootstrap)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"lsainfer: file error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except ValidationError as exc:
        print(f"lsainfer: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"lsainfer: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GenerationError as exc:
        print(f"lsainfer: generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except LsaInferError as exc:
        print(f"lsainfer: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
