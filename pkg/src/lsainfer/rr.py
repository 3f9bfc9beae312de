"""Richardson-Romberg extrapolation across stepsizes."""

from dataclasses import dataclass
from math import comb, exp
import warnings

import numpy as np

from .errors import ConditioningWarning, ConsistencyError, ValidationError
from .inference import BatchMeans

SUM_TOL = 1e-9
MOMENT_TOL = 1e-9


def _validate_stepsizes(stepsizes):
    a = np.asarray(stepsizes, dtype=float).ravel()
    if a.size < 1:
        raise ValidationError("need at least one stepsize")
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise ValidationError("stepsizes must be positive")
    if np.unique(a).size != a.size:
        raise ValidationError("stepsizes must be distinct")
    return a


def constraint_residuals(stepsizes, coefficients):
    """|sum h - 1| followed by |sum h alpha^l| / max alpha^l for l = 1..M-1."""
    a = np.asarray(stepsizes, dtype=float)
    h = np.asarray(coefficients, dtype=float)
    res = [abs(h.sum() - 1.0)]
    for l in range(1, a.size):
        p = a**l
        res.append(abs(h @ p) / p.max())
    return np.array(res)


def _product_formula(a):
    m = a.size
    h = np.ones(m)
    for i in range(m):
        for l in range(m):
            if l != i:
                h[i] *= a[l] / (a[l] - a[i])
    return h


def _well_conditioned(a, h):
    res = constraint_residuals(a, h)
    return res[0] <= SUM_TOL and (a.size == 1 or res[1:].max() <= MOMENT_TOL)


def rr_coefficients(stepsizes):
    """h_m = prod_{l != m} alpha_l / (alpha_l - alpha_m).

    These solve sum h = 1 and sum h alpha^l = 0 (l = 1..M-1).  A
    ConditioningWarning is issued when the computed h misses those
    constraints by more than 1e-9 (relative to max alpha^l).
    """
    a = _validate_stepsizes(stepsizes)
    h = _product_formula(a)
    if not _well_conditioned(a, h):
        warnings.warn(f"extrapolation constraints violated (max residual {constraint_residuals(a, h).max():.2e})",
                      ConditioningWarning, stacklevel=2)
    return h


@dataclass(frozen=True, eq=False)
class RRSchedule:
    stepsizes: np.ndarray
    coefficients: np.ndarray
    kind: str = "explicit"
    params: tuple = ()
    conditioned: bool = True

    def __post_init__(self):
        a = np.asarray(self.stepsizes, dtype=float)
        if np.any(np.diff(a) >= 0):
            raise ValidationError("stepsizes must be strictly decreasing")
        object.__setattr__(self, "stepsizes", a)
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=float))

    @property
    def order(self):
        return self.stepsizes.size

    def residuals(self):
        return constraint_residuals(self.stepsizes, self.coefficients)

    def to_dict(self):
        return {
            "kind": self.kind,
            "parameters": list(self.params),
            "stepsizes": self.stepsizes.tolist(),
            "coefficients": self.coefficients.tolist(),
        }


def _build(stepsizes, kind, params):
    a = np.sort(_validate_stepsizes(stepsizes))[::-1]
    h = _product_formula(a)
    ok = _well_conditioned(a, h)
    if not ok:
        warnings.warn(f"{kind} schedule {params}: extrapolation constraints violated "
                      f"(max residual {constraint_residuals(a, h).max():.2e})", ConditioningWarning, stacklevel=3)
    return RRSchedule(a, h, kind, tuple(params), ok)


def explicit_schedule(stepsizes):
    return _build(stepsizes, "explicit", ())


def geometric_bound(c):
    """Coefficient bound exp(2 / (c - 1)) for ratio-c geometric stepsizes."""
    return exp(2.0 / (c - 1.0))


def geometric_schedule(alpha1, c, m):
    """alpha_m = alpha1 / c^(m-1); checks max |h| <= exp(2/(c-1))."""
    if not 0 < alpha1 < 1:
        raise ValidationError("alpha1 must lie in (0, 1)")
    if not c >= 2:
        raise ValidationError("ratio c must be >= 2")
    if int(m) < 1:
        raise ValidationError("M must be >= 1")
    steps = alpha1 / float(c) ** np.arange(int(m))
    sched = _build(steps, "geometric", (alpha1, c, int(m)))
    top = np.abs(sched.coefficients).max()
    if top > geometric_bound(c) * (1 + 1e-12):
        raise ConsistencyError(f"max |h| = {top:.6g} exceeds exp(2/(c-1)) = {geometric_bound(c):.6g}")
    return sched


def equidistant_magnitudes(a, b, m):
    """Closed form |h_m| for alpha_m = (a + b) - b (m - 1) / (M - 1)."""
    m = int(m)
    common = 1.0
    for l in range(1, m + 1):
        common *= (a * (m - 1) + b * (l - 1)) / (b * l)
    return np.array([comb(m, i) * b * i / (a * (m - 1) + b * (m - i)) * common for i in range(1, m + 1)])


def equidistant_schedule(a, b, m):
    """alpha_m = (a + b) - b (m - 1)/(M - 1), cross-checked against the closed form."""
    m = int(m)
    if not (a > 0 and b > 0 and a + b < 1):
        raise ValidationError("need a > 0, b > 0 and a + b < 1")
    if m < 2:
        raise ValidationError("M must be >= 2")
    steps = (a + b) - b * np.arange(m) / (m - 1)
    steps[-1] = a
    sched = _build(steps, "equidistant", (a, b, m))
    closed = equidistant_magnitudes(a, b, m)
    got = np.abs(sched.coefficients)
    rel = np.abs(got - closed) / np.maximum(np.abs(closed), 1e-300)
    if rel.max() > 1e-8:
        raise ConsistencyError(f"closed-form |h| disagrees with product formula (rel err {rel.max():.2e})")
    return sched


def rr_combine(per_stepsize, schedule):
    """theta~_k = sum_m h_m theta_bar_k^(alpha_m) for every batch k.

    ``per_stepsize`` is a list of BatchMeans (or (K, d) arrays) ordered like
    ``schedule.stepsizes``.  Returns BatchMeans when given BatchMeans.
    """
    h = schedule.coefficients if isinstance(schedule, RRSchedule) else np.asarray(schedule, dtype=float)
    if len(per_stepsize) != h.size:
        raise ValidationError(f"expected {h.size} runs, got {len(per_stepsize)}")
    arrays = [bm.means if isinstance(bm, BatchMeans) else np.asarray(bm, dtype=float) for bm in per_stepsize]
    shape = arrays[0].shape
    if any(arr.shape != shape for arr in arrays):
        raise ValidationError("all runs must share the same batch count and dimension")
    combined = np.zeros(shape)
    for coef, arr in zip(h, arrays):
        combined += coef * arr
    first = per_stepsize[0]
    if isinstance(first, BatchMeans):
        if any(not np.array_equal(bm.counts, first.counts) for bm in per_stepsize):
            raise ValidationError("all runs must share the same batch plan")
        return BatchMeans(combined, first.counts.copy(), first.plan)
    return combined


def rr_order_methods(alpha1, orders):
    """Method strings comparing geometric (c = 2) and equidistant schedules over a dyadic range."""
    out = []
    for m in orders:
        smallest = alpha1 / 2 ** (m - 1)
        out.append(f"rr-geo:{alpha1:g}:2:{m}")
        out.append(f"rr-eqd:{smallest!r}:{alpha1 - smallest!r}:{m}")
    return out
