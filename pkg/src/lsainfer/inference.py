"""Batch-mean point estimates, covariance estimates and normal confidence intervals."""

from dataclasses import asdict, dataclass
from math import fsum

import numpy as np
from scipy.special import ndtri

from .errors import DegenerateError, LengthError, NumericError, PlanError, ValidationError

# round-off allowance when checking coverage; far below any stochastic CI width
COVER_RTOL = 1e-12


@dataclass(frozen=True)
class BatchPlan:
    """Burn-in ``burn_in`` iterates, then ``batch_count`` batches of ``batch_size``.

    The first ``discard`` iterates of every batch are dropped.
    """

    burn_in: int
    batch_size: int
    discard: int = 0
    batch_count: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.discard < 0:
            raise ValidationError("burn_in and discard must be nonnegative")
        if self.batch_size < 1 or self.batch_count < 1:
            raise ValidationError("batch_size and batch_count must be positive")
        if self.discard >= self.batch_size:
            raise ValidationError("discard must be smaller than batch_size")

    @property
    def total_steps(self):
        return self.burn_in + self.batch_count * self.batch_size

    @property
    def kept_per_batch(self):
        return self.batch_size - self.discard

    @property
    def effective_size(self):
        return self.batch_count * self.kept_per_batch

    def layout(self):
        k = np.arange(self.batch_count)
        starts = self.burn_in + k * self.batch_size + self.discard
        ends = self.burn_in + (k + 1) * self.batch_size
        return BatchLayout(starts, ends)

    @classmethod
    def default(cls, total_steps, batch_count=None, discard=0, burn_in=None):
        """K = round(T^0.3) batches, first batch-length block as burn-in."""
        t = int(total_steps)
        k = default_batch_count(t) if batch_count is None else int(batch_count)
        if burn_in is None:
            n = t // (k + 1)
            b = n
        else:
            b = int(burn_in)
            n = (t - b) // k
        if n < 1 or n <= discard:
            raise PlanError(f"T={t} is too short for {k} batches")
        return cls(b, n, int(discard), k)

    def to_dict(self):
        return asdict(self)


def default_batch_count(total_steps):
    return max(2, int(round(total_steps ** 0.3)))


@dataclass(frozen=True, eq=False)
class BatchLayout:
    """Half-open index ranges [starts[k], ends[k]) of the averaged iterates."""

    starts: np.ndarray
    ends: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.starts, dtype=np.int64)
        e = np.asarray(self.ends, dtype=np.int64)
        if s.shape != e.shape or s.ndim != 1 or s.size == 0:
            raise ValidationError("starts/ends must be equal-length 1-d arrays")
        if np.any(e <= s) or np.any(s[1:] < e[:-1]):
            raise ValidationError("batches must be nonempty, ordered and disjoint")
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "ends", e)

    @property
    def batch_count(self):
        return self.starts.size

    @property
    def counts(self):
        return self.ends - self.starts

    @property
    def total_steps(self):
        return int(self.ends[-1])


@dataclass(frozen=True, eq=False)
class BatchMeans:
    means: np.ndarray
    counts: np.ndarray
    plan: object = None

    @property
    def batch_count(self):
        return self.means.shape[0]

    @property
    def effective_size(self):
        return int(self.counts.sum())


class BatchMeanAccumulator:
    """Streaming consumer: per-batch running sums, constant memory in T."""

    def __init__(self, plan):
        self.plan = plan
        self.layout = plan.layout() if isinstance(plan, BatchPlan) else plan
        self.sums = None
        self.filled = np.zeros(self.layout.batch_count, dtype=np.int64)
        self.seen = 0

    def push(self, block, start):
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            block = block[:, None]
        if self.sums is None:
            self.sums = np.zeros((self.layout.batch_count, block.shape[1]))
        stop = start + block.shape[0]
        self.seen = max(self.seen, stop)
        starts, ends = self.layout.starts, self.layout.ends
        k_lo = np.searchsorted(ends, start, side="right")
        k_hi = np.searchsorted(starts, stop, side="left")
        for k in range(k_lo, k_hi):
            lo = max(starts[k], start) - start
            hi = min(ends[k], stop) - start
            self.sums[k] += block[lo:hi].sum(axis=0)
            self.filled[k] += hi - lo

    def result(self):
        counts = self.layout.counts
        if self.seen < self.layout.total_steps or np.any(self.filled != counts):
            raise LengthError(self.layout.total_steps, self.seen)
        return BatchMeans(self.sums / counts[:, None], counts.copy(), self.plan)


def batch_means(stream, plan):
    """Batch means of an iterate stream: an (T, d) / (T,) array or an iterable of iterates."""
    acc = BatchMeanAccumulator(plan)
    if isinstance(stream, np.ndarray):
        acc.push(stream, 0)
        return acc.result()
    buf, pos = [], 0
    for theta in stream:
        buf.append(np.atleast_1d(np.asarray(theta, dtype=float)))
        if len(buf) == 4096:
            acc.push(np.array(buf), pos)
            pos += len(buf)
            buf = []
    if buf:
        acc.push(np.array(buf), pos)
    return acc.result()


def column_fsum(x):
    """Correctly rounded column sums, hence independent of row order."""
    x = np.asarray(x, dtype=float)
    return np.array([fsum(col) for col in x.reshape(x.shape[0], -1).T]).reshape(x.shape[1:])


def overall_mean(bm):
    """Count-weighted mean of the batch means (plain mean for equal batches)."""
    if bm.batch_count < 1:
        raise DegenerateError("no batches")
    counts = np.asarray(bm.counts, dtype=float)
    return column_fsum(bm.means * counts[:, None]) / fsum(counts)


def covariance_estimator(bm):
    """(1/K) sum_k m_k (mean_k - mean)(mean_k - mean)^T, m_k = averaged iterates in batch k.

    With equal batches m_k = n - n0 and this is ((n - n0)/K) sum_k (...)(...)^T.
    Sums are exact-rounded, so the result does not depend on batch order.
    """
    k = bm.batch_count
    if k < 2:
        raise DegenerateError("covariance estimation needs at least 2 batches")
    dev = bm.means - overall_mean(bm)
    outer = (dev * bm.counts[:, None])[:, :, None] * dev[:, None, :]
    sigma = column_fsum(outer) / k
    return 0.5 * (sigma + sigma.T)


def normal_quantile(p):
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValidationError("probability must lie strictly between 0 and 1")
    return float(ndtri(p))


def confidence_intervals(theta_bar, sigma, q, sample_size):
    """theta_bar_i -/+ z_{1-q/2} sqrt(sigma_ii / N).

    ``sample_size`` is N = K (n - n0), or a BatchPlan / BatchMeans providing it.
    """
    if hasattr(sample_size, "effective_size"):
        sample_size = sample_size.effective_size
    if not 0.0 < q < 1.0:
        raise ValidationError("q must lie in (0, 1)")
    diag = np.diag(np.atleast_2d(sigma)).astype(float)
    if np.any(diag < -1e-12):
        raise NumericError(f"covariance has negative diagonal entry {diag.min():.3e}")
    diag = np.clip(diag, 0.0, None)
    half = normal_quantile(1.0 - q / 2.0) * np.sqrt(diag / sample_size)
    theta_bar = np.atleast_1d(np.asarray(theta_bar, dtype=float))
    return theta_bar - half, theta_bar + half


def diminishing_batch_bounds(total_steps, batch_count, exponent):
    """End indices e_0 < ... < e_K = T for polynomially decaying stepsizes.

    e_k = round(((k + 1) r)^{1/(1-beta)}), r = T^{1-beta} / (K + 1); ties from
    rounding are repaired by bumping forward.  Batch k (k >= 1) is
    [e_{k-1}, e_k); [0, e_0) is burn-in.
    """
    t, k = int(total_steps), int(batch_count)
    beta = float(exponent)
    if not 0.0 < beta < 1.0:
        raise ValidationError("exponent must lie in (0, 1)")
    if k < 1 or t < k + 1:
        raise PlanError(f"cannot fit {k} batches plus burn-in into {t} iterates")
    power = 1.0 / (1.0 - beta)
    r = t ** (1.0 - beta) / (k + 1)
    raw = ((np.arange(k + 1) + 1) * r) ** power
    e = np.floor(raw + 0.5).astype(np.int64)
    e[-1] = t
    prev = 0
    for i in range(k + 1):
        if e[i] <= prev:
            e[i] = prev + 1
        prev = e[i]
    if e[-1] != t or np.any(np.diff(e) <= 0):
        raise PlanError(f"batch ends not strictly increasing for T={t}, K={k}; use fewer batches")
    return e


def diminishing_layout(total_steps, batch_count, exponent):
    e = diminishing_batch_bounds(total_steps, batch_count, exponent)
    return BatchLayout(e[:-1], e[1:])


@dataclass(frozen=True, eq=False)
class InferenceReport:
    point_estimate: np.ndarray
    covariance: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    plan: object = None
    method: str = "lsa"

    def covers(self, target, rtol=COVER_RTOL):
        """Componentwise target-in-interval flags, allowing ``rtol * max(1, |target|)`` round-off."""
        target = np.asarray(target, dtype=float)
        slack = rtol * np.maximum(1.0, np.abs(target))
        return (self.ci_lower - slack <= target) & (target <= self.ci_upper + slack)

    @property
    def widths(self):
        return self.ci_upper - self.ci_lower

    def to_dict(self):
        plan = self.plan
        if isinstance(plan, BatchPlan):
            plan = plan.to_dict()
        elif isinstance(plan, BatchLayout):
            plan = {"starts": plan.starts.tolist(), "ends": plan.ends.tolist()}
        return {
            "method": self.method,
            "point_estimate": self.point_estimate.tolist(),
            "covariance": self.covariance.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "level": self.level,
            "plan": plan,
        }


def infer(bm, q=0.05, method="lsa"):
    """Point estimate, covariance and CIs from a set of batch means."""
    theta_bar = overall_mean(bm)
    sigma = covariance_estimator(bm)
    lo, hi = confidence_intervals(theta_bar, sigma, q, bm.effective_size)
    return InferenceReport(theta_bar, sigma, lo, hi, 1.0 - q, bm.plan, method)
