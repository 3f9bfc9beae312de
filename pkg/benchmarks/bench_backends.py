"""Time the numba and numpy kernel backends on the same coupled runs.

    python3 benchmarks/bench_backends.py [--length 200000] [--repeat 3]

Each case is run once untimed per backend (numba compilation, caches), then
timed ``--repeat`` times; the best time is reported together with the largest
iterate difference between the two backends.
"""

import argparse
import time

import numpy as np

from lsainfer import kernels
from lsainfer.engine import RunConfig, RunningMean, StepsizeSchedule, run_coupled, run_nonlinear
from lsainfer.problems import logistic_problem, random_lsa_problem, random_multiplicative_problem


def cases():
    const = [StepsizeSchedule.constant(0.2), StepsizeSchedule.constant(0.02)]
    mixed = const + [StepsizeSchedule.polynomial(0.2, 0.5)]
    return [
        ("random |X|=10 d=5, 2 stepsizes", random_lsa_problem(10, 5, 6), const, run_coupled),
        ("random |X|=10 d=5, 3 schedules", random_lsa_problem(10, 5, 6), mixed, run_coupled),
        ("multiplicative d=5, 2 stepsizes", random_multiplicative_problem(10, 5, 6), const, run_coupled),
        ("logistic AR(1) d=2, 1 stepsize", logistic_problem(0.5, 0), [StepsizeSchedule.constant(0.05)],
         run_nonlinear),
    ]


def timed(run, problem, schedules, length, seed):
    accs = [RunningMean() for _ in schedules]
    start = time.perf_counter()
    run(problem, schedules, RunConfig(length, seed=seed), accs)
    return time.perf_counter() - start, np.array([a.result() for a in accs])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--length", type=int, default=200_000, help="steps per run")
    parser.add_argument("--repeat", type=int, default=3, help="timed repetitions")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = kernels.available_backends()
    old = kernels.get_backend()
    print(f"{'case':<36}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max diff':>12}")
    try:
        for name, problem, schedules, run in cases():
            best, means = {}, {}
            for be in backends:
                kernels.set_backend(be)
                timed(run, problem, schedules, min(args.length, 1000), args.seed)
                times = []
                for _ in range(args.repeat):
                    t, means[be] = timed(run, problem, schedules, args.length, args.seed)
                    times.append(t)
                best[be] = min(times)
            line = f"{name:<36}" + "".join(f"{best[b]:>11.3f}s" for b in backends)
            if len(backends) == 2:
                diff = np.max(np.abs(means["numba"] - means["numpy"]))
                line += f"{best['numpy'] / best['numba']:>9.1f}x{diff:>12.1e}"
            print(line)
    finally:
        kernels.set_backend(old)


if __name__ == "__main__":
    main()
