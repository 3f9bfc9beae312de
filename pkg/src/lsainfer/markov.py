"""Finite ergodic Markov chains and a Gaussian AR(1) process."""

from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import kernels
from .errors import GenerationError, NumericError, ValidationError
from .rng import STATES, generator

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
DIRECT_SOLVE_MAX_STATES = 200


def _as_transition(transition):
    p = np.array(transition, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] == 0:
        raise ValidationError(f"transition must be a square matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ValidationError("transition entries must lie in [0, 1]")
    err = np.abs(p.sum(axis=1) - 1.0).max()
    if err > ROW_SUM_TOL:
        raise ValidationError(f"transition rows must sum to 1 (max deviation {err:.3e})")
    return p


def stationary_distribution(transition):
    """Solve pi P = pi, sum(pi) = 1.

    Direct linear solve up to 200 states, power iteration on the lazy chain
    (P + I) / 2 beyond that.  Periodic chains are fine; reducible ones with
    several closed classes have no unique answer and raise NumericError.
    """
    p = _as_transition(transition)
    n = p.shape[0]
    if n <= DIRECT_SOLVE_MAX_STATES:
        lhs = p.T - np.eye(n)
        lhs[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        try:
            pi = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"stationary system is singular: {exc}") from None
    else:
        lazy = 0.5 * (p + np.eye(n))
        pi = np.full(n, 1.0 / n)
        for _ in range(100_000):
            nxt = pi @ lazy
            if np.abs(nxt - pi).sum() < 1e-14:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.abs(pi @ p - pi).sum()
    if not np.isfinite(resid) or resid > STATIONARY_TOL:
        raise NumericError(f"stationary distribution did not converge: residual {resid:.3e}")
    return pi


def _period_of_component(adj, members):
    # BFS levels inside one strongly connected component; the period is the
    # gcd of level[u] + 1 - level[v] over internal edges u -> v.
    inside = np.zeros(adj.shape[0], dtype=bool)
    inside[members] = True
    root = members[0]
    level = {root: 0}
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u] & inside):
                if v not in level:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u in members:
        for v in np.flatnonzero(adj[u] & inside):
            g = gcd(g, abs(level[u] + 1 - level[v]))
    return g


def check_ergodicity(transition):
    """Return ``{"irreducible": bool, "aperiodic": bool}``.

    Aperiodic means every state lying on some cycle has period 1; states on
    no cycle at all (transient singletons) do not count.
    """
    p = _as_transition(transition)
    adj = p > 0.0
    n_comp, labels = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    aperiodic = True
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        if members.size == 1 and not adj[members[0], members[0]]:
            continue
        if _period_of_component(adj, members) != 1:
            aperiodic = False
            break
    return {"irreducible": n_comp == 1, "aperiodic": aperiodic}


@dataclass(frozen=True, eq=False)
class FiniteChain:
    """Row-stochastic transition matrix together with its stationary law."""

    transition: np.ndarray
    stationary: np.ndarray = None
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = _as_transition(self.transition)
        pi = stationary_distribution(p) if self.stationary is None else np.array(self.stationary, dtype=float)
        if pi.shape != (p.shape[0],):
            raise ValidationError("stationary vector has the wrong length")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > ROW_SUM_TOL:
            raise ValidationError("stationary vector must be a probability vector")
        resid = np.abs(pi @ p - pi).sum()
        if resid > STATIONARY_TOL:
            raise ValidationError(f"stationary vector is not invariant (residual {resid:.3e})")
        cum = np.cumsum(p, axis=1)
        cum[:, -1] = 1.0
        for name, arr in (("transition", p), ("stationary", pi), ("cumulative", cum)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def stationary_cumulative(self):
        c = np.cumsum(self.stationary)
        c[-1] = 1.0
        return c

    def is_iid(self, tol=1e-12):
        return bool(np.abs(self.transition - self.stationary[None, :]).max() <= tol)


def iid_chain(probabilities):
    """Chain whose rows all equal ``probabilities`` (i.i.d. sampling)."""
    pi = np.asarray(probabilities, dtype=float)
    pi = pi / pi.sum()
    return FiniteChain(np.tile(pi, (pi.size, 1)), pi)


class TrajectorySampler:
    """Chunked inverse-CDF sampler; one uniform per state, chunking-invariant."""

    def __init__(self, chain, start, rng):
        self.chain = chain
        self.rng = rng
        if isinstance(start, str):
            if start != "stationary":
                raise ValidationError(f"start must be a state index or 'stationary', got {start!r}")
            self._first = None
        else:
            s = int(start)
            if not 0 <= s < chain.n_states:
                raise ValidationError(f"start state {s} outside 0..{chain.n_states - 1}")
            self._first = s
        self._prev = None

    def next_chunk(self, length):
        out = np.empty(int(length), dtype=np.int64)
        if length == 0:
            return out
        i = 0
        if self._prev is None:
            if self._first is None:
                u0 = self.rng.random()
                x0 = int(np.searchsorted(self.chain.stationary_cumulative[:-1], u0, side="right"))
            else:
                x0 = self._first
            out[0] = x0
            self._prev = x0
            i = 1
        if length > i:
            u = self.rng.random(length - i)
            self._prev = kernels.chain_chunk(self.chain.cumulative, self._prev, u, out[i:])
        return out


def sample_trajectory(chain, start="stationary", length=1, seed=0):
    """Deterministic trajectory of ``length`` states (seed -> PCG64 stream)."""
    if int(length) < 1:
        raise ValidationError("length must be >= 1")
    sampler = TrajectorySampler(chain, start, generator(seed, STATES))
    return sampler.next_chunk(int(length))


def random_ergodic_chain(n_states, seed, max_draws=1000, rng=None):
    """Uniform [0,1] entries, row-normalised, redrawn until irreducible and aperiodic."""
    n = int(n_states)
    if n < 2:
        raise ValidationError("n_states must be >= 2")
    rng = np.random.default_rng(seed) if rng is None else rng
    for _ in range(max_draws):
        m = rng.uniform(0.0, 1.0, size=(n, n))
        p = m / m.sum(axis=1, keepdims=True)
        flags = check_ergodicity(p)
        if flags["irreducible"] and flags["aperiodic"]:
            return FiniteChain(p)
    raise GenerationError(f"no ergodic chain found in {max_draws} draws")


@dataclass(frozen=True)
class ArOneProcess:
    """x_t = rho x_{t-1} + noise_scale sqrt(1 - rho^2) z_t, stationary N(0, noise_scale^2 I)."""

    dim: int
    autocorrelation: float
    noise_scale: float = 1.0

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValidationError("dim must be >= 1")
        if not abs(self.autocorrelation) < 1.0:
            raise ValidationError("|autocorrelation| must be < 1")
        if not self.noise_scale > 0:
            raise ValidationError("noise_scale must be positive")

    def sample(self, length, rng):
        z = rng.standard_normal((int(length), self.dim))
        x = np.empty_like(z)
        innov = self.noise_scale * np.sqrt(1.0 - self.autocorrelation**2)
        prev = self.noise_scale * rng.standard_normal(self.dim)
        for t in range(z.shape[0]):
            prev = self.autocorrelation * prev + innov * z[t]
            x[t] = prev
        return x
