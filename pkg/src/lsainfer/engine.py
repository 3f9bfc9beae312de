"""Streaming (coupled) stochastic approximation runs.

One data trajectory is drawn chunk by chunk; every stepsize schedule keeps its
own iterate and is advanced over the identical chunk.  Iterates are handed to
consumers block by block and never stored unless a consumer stores them.

The iterate stream of a run of T steps is theta_1, ..., theta_T (the iterate
after each update); stream index i refers to theta_{i+1}.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
import zlib

import numpy as np

from . import kernels
from .errors import DivergenceError, ValidationError
from .markov import TrajectorySampler
from .problems import LsaProblem, NonlinearProblem
from .rng import A_NOISE, B_NOISE, STATES, generator

CHUNK = 8192


@dataclass(frozen=True)
class StepsizeSchedule:
    """alpha_k = alpha0 for k = 0, alpha0 * k**(-exponent) for k >= 1.

    ``exponent == 0`` is the constant schedule.
    """

    alpha0: float
    exponent: float = 0.0

    def __post_init__(self):
        if not self.alpha0 >= 0:
            raise ValidationError("stepsize must be nonnegative")
        if self.exponent != 0.0 and not 0.0 < self.exponent <= 1.0:
            raise ValidationError("polynomial exponent must lie in (0, 1]")

    @classmethod
    def constant(cls, alpha):
        return cls(float(alpha), 0.0)

    @classmethod
    def polynomial(cls, alpha0, exponent=0.5):
        return cls(float(alpha0), float(exponent))

    @property
    def is_constant(self):
        return self.exponent == 0.0

    def label(self):
        if self.is_constant:
            return f"{self.alpha0:g}"
        return f"{self.alpha0:g}/k^{self.exponent:g}"


def stepsize_at(schedule, k):
    if k < 0:
        raise ValidationError("step index must be >= 0")
    if schedule.is_constant or k == 0:
        return schedule.alpha0
    return schedule.alpha0 * float(k) ** (-schedule.exponent)


def lsa_step(theta, x, alpha, problem, step=0):
    """theta + alpha (A(x) theta + b(x)) using the mean maps of ``problem``."""
    theta = np.asarray(theta, dtype=float)
    out = theta + alpha * (problem.a_maps[x] @ theta + problem.b_maps[x])
    if not np.all(np.abs(out) <= kernels.DIVERGENCE_LIMIT):
        raise DivergenceError(step)
    return out


@dataclass(frozen=True)
class RunConfig:
    total_steps: int
    seed: object = 0
    theta0: np.ndarray = None
    start: object = "stationary"

    def __post_init__(self):
        if int(self.total_steps) < 1:
            raise ValidationError("total_steps must be >= 1")


@dataclass
class RunResult:
    """Consumer outputs per schedule plus divergence steps (None = finished)."""

    outputs: list
    diverged_at: list
    checksum: int
    final_iterates: np.ndarray = field(repr=False, default=None)

    @property
    def diverged(self):
        return [s is not None for s in self.diverged_at]


class Tee:
    """Fan one iterate stream out to several consumers."""

    def __init__(self, consumers):
        self.consumers = list(consumers)

    def push(self, block, start):
        for c in self.consumers:
            c.push(block, start)

    def result(self):
        return [c.result() for c in self.consumers]


class TraceRecorder:
    """Stores the whole iterate stream (tests and small runs only)."""

    def __init__(self):
        self._blocks = []

    def push(self, block, start):
        self._blocks.append(block.copy())

    def result(self):
        if not self._blocks:
            return np.empty((0, 0))
        return np.concatenate(self._blocks, axis=0)


class RunningMean:
    """Average of the stream from index ``burn_in`` on."""

    def __init__(self, burn_in=0):
        self.burn_in = int(burn_in)
        self.total = None
        self.count = 0

    def push(self, block, start):
        lo = max(self.burn_in - start, 0)
        if lo >= block.shape[0]:
            return
        part = block[lo:].sum(axis=0)
        self.total = part if self.total is None else self.total + part
        self.count += block.shape[0] - lo

    def result(self):
        if self.count == 0:
            raise ValidationError("no iterates after burn-in")
        return self.total / self.count


def _normalize_consumers(consumers, n):
    if consumers is None:
        return [None] * n
    if len(consumers) != n:
        raise ValidationError("need one consumer (or None) per schedule")
    out = []
    for c in consumers:
        if isinstance(c, Sequence):
            c = Tee(c)
        out.append(c)
    return out


def _schedule_arrays(schedules):
    if not schedules:
        raise ValidationError("need at least one stepsize schedule")
    alpha0 = np.array([s.alpha0 for s in schedules], dtype=float)
    expo = np.array([s.exponent for s in schedules], dtype=float)
    return alpha0, expo


def _initial(config, n_sched, d):
    theta0 = np.zeros(d) if config.theta0 is None else np.asarray(config.theta0, dtype=float)
    if theta0.shape != (d,):
        raise ValidationError(f"theta0 must have length {d}")
    return np.tile(theta0, (n_sched, 1))


def _dispatch(out, diverged, consumers, t0, length, raise_on_divergence):
    for m, c in enumerate(consumers):
        if diverged[m] >= 0 and raise_on_divergence:
            raise DivergenceError(diverged[m])
        if c is not None and diverged[m] < 0:
            c.push(out[m, :length], t0)


def run_coupled(problem, schedules, config, consumers=None, states=None, raise_on_divergence=False,
                chunk=CHUNK):
    """Run every schedule over one shared trajectory of ``config.total_steps`` states.

    ``states`` replaces the sampled trajectory (replays).  A diverging schedule
    stops feeding its consumer and is reported in ``diverged_at``; the others
    continue.
    """
    if not isinstance(problem, LsaProblem):
        raise ValidationError("run_coupled needs an LsaProblem")
    alpha0, expo = _schedule_arrays(schedules)
    n_sched, d = alpha0.size, problem.dim
    total = int(config.total_steps)
    consumers = _normalize_consumers(consumers, n_sched)
    theta = _initial(config, n_sched, d)
    diverged = np.full(n_sched, -1, dtype=np.int64)

    if states is not None:
        states = np.asarray(states, dtype=np.int64)
        if states.shape[0] < total:
            raise ValidationError("replayed trajectory is shorter than total_steps")
        sampler = None
    else:
        sampler = TrajectorySampler(problem.chain, config.start, generator(config.seed, STATES))
    a_rng = generator(config.seed, A_NOISE) if problem.a_noise_bound > 0 else None
    b_rng = generator(config.seed, B_NOISE) if problem.b_noise_sd > 0 else None
    no_an = np.empty((0, d, d))
    no_bn = np.empty(0)
    out = np.empty((n_sched, chunk, d))
    crc = 0
    t0 = 0
    while t0 < total:
        length = min(chunk, total - t0)
        xs = states[t0:t0 + length] if sampler is None else sampler.next_chunk(length)
        xs = np.ascontiguousarray(xs, dtype=np.int64)
        crc = zlib.crc32(xs.tobytes(), crc)
        an = no_an if a_rng is None else a_rng.uniform(-problem.a_noise_bound, problem.a_noise_bound,
                                                       size=(length, d, d))
        bn = no_bn if b_rng is None else b_rng.normal(0.0, problem.b_noise_sd, size=length)
        view = out[:, :length]
        kernels.lsa_chunk(theta, alpha0, expo, t0, problem.a_maps, problem.b_maps, xs, an, bn,
                          problem.b_noise_dirs, view, diverged)
        _dispatch(view, diverged, consumers, t0, length, raise_on_divergence)
        t0 += length
        if np.all(diverged >= 0):
            break
    return RunResult(
        outputs=[None if c is None else c.result() if diverged[m] < 0 else None
                 for m, c in enumerate(consumers)],
        diverged_at=[None if s < 0 else int(s) for s in diverged],
        checksum=crc,
        final_iterates=theta,
    )


def run_nonlinear(problem, schedules, config, consumers=None, raise_on_divergence=False, chunk=CHUNK):
    """Coupled logistic-regression SA on the problem's AR(1) covariate stream."""
    if not isinstance(problem, NonlinearProblem):
        raise ValidationError("run_nonlinear needs a NonlinearProblem")
    if isinstance(schedules, StepsizeSchedule):
        schedules = [schedules]
        consumers = None if consumers is None else [consumers]
    alpha0, expo = _schedule_arrays(schedules)
    n_sched, d = alpha0.size, problem.dim
    total = int(config.total_steps)
    consumers = _normalize_consumers(consumers, n_sched)
    theta = _initial(config, n_sched, d)
    diverged = np.full(n_sched, -1, dtype=np.int64)
    proc = problem.covariate_process
    cov_rng = generator(config.seed, STATES)
    lab_rng = generator(config.seed, B_NOISE)
    x_prev = proc.noise_scale * cov_rng.standard_normal(d)
    w_star = np.asarray(problem.true_weights, dtype=float)
    out = np.empty((n_sched, chunk, d))
    t0 = 0
    while t0 < total:
        length = min(chunk, total - t0)
        z = cov_rng.standard_normal((length, d))
        u = lab_rng.random(length)
        view = out[:, :length]
        kernels.logistic_chunk(theta, alpha0, expo, t0, x_prev, proc.autocorrelation, proc.noise_scale,
                               w_star, z, u, view, diverged)
        _dispatch(view, diverged, consumers, t0, length, raise_on_divergence)
        t0 += length
        if np.all(diverged >= 0):
            break
    return RunResult(
        outputs=[None if c is None else c.result() if diverged[m] < 0 else None
                 for m, c in enumerate(consumers)],
        diverged_at=[None if s < 0 else int(s) for s in diverged],
        checksum=0,
        final_iterates=theta,
    )
