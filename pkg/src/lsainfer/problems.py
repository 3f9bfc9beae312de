"""Problem families for linear (and one nonlinear) stochastic approximation.

An :class:`LsaProblem` stores the *conditional mean* maps A(x), b(x) of a
finite chain.  Two kinds of independent zero-mean noise can ride on top:

* ``a_noise_bound = u`` adds a d x d matrix with i.i.d. U[-u, u] entries to
  A(x) at every step (multiplicative noise);
* ``b_noise_sd = sigma`` adds ``eps * b_noise_dirs[x]`` with eps ~ N(0, sigma^2)
  to b(x) (regression label noise).

Because the noise is independent and mean zero, every quantity derived from
expectations (A-bar, b-bar, theta*, the backward-conditional diagnostic) is
computed from the mean maps alone.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GenerationError, NumericError, ValidationError
from .markov import ArOneProcess, FiniteChain, iid_chain, random_ergodic_chain

AVERAGE_TOL = 1e-12
STEADY_STATE_TOL = 1e-10


def target_vector(a_bar, b_bar=None):
    """theta* = -A_bar^{-1} b_bar (accepts a problem or the two arrays)."""
    if b_bar is None:
        a_bar, b_bar = a_bar.a_bar, a_bar.b_bar
    a = np.atleast_2d(np.asarray(a_bar, dtype=float))
    b = np.atleast_1d(np.asarray(b_bar, dtype=float))
    try:
        theta = np.linalg.solve(a, -b)
    except np.linalg.LinAlgError:
        raise NumericError("A_bar is singular; no unique target vector") from None
    resid = np.linalg.norm(a @ theta + b)
    if resid > STEADY_STATE_TOL * max(1.0, np.linalg.norm(b)):
        raise NumericError(f"steady-state residual {resid:.3e} too large (A_bar ill-conditioned)")
    return theta


@dataclass(frozen=True, eq=False)
class LsaProblem:
    chain: FiniteChain
    a_maps: np.ndarray
    b_maps: np.ndarray
    family: str = "random"
    a_noise_bound: float = 0.0
    b_noise_sd: float = 0.0
    b_noise_dirs: np.ndarray = None
    a_bar: np.ndarray = field(init=False)
    b_bar: np.ndarray = field(init=False)
    theta_star: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.array(self.a_maps, dtype=float)
        b = np.array(self.b_maps, dtype=float)
        n = self.chain.n_states
        if a.ndim != 3 or a.shape[0] != n or a.shape[1] != a.shape[2]:
            raise ValidationError(f"a_maps must have shape (n_states, d, d), got {a.shape}")
        d = a.shape[1]
        if b.shape != (n, d):
            raise ValidationError(f"b_maps must have shape ({n}, {d}), got {b.shape}")
        if self.a_noise_bound < 0 or self.b_noise_sd < 0:
            raise ValidationError("noise levels must be nonnegative")
        dirs = np.zeros((n, d)) if self.b_noise_dirs is None else np.array(self.b_noise_dirs, dtype=float)
        if dirs.shape != (n, d):
            raise ValidationError("b_noise_dirs must have shape (n_states, d)")
        pi = self.chain.stationary
        a_bar = np.einsum("x,xij->ij", pi, a)
        b_bar = pi @ b
        eig = np.linalg.eigvals(a_bar)
        if not eig.real.max() < 0:
            raise ValidationError(f"A_bar is not Hurwitz (max Re eigenvalue {eig.real.max():.3e})")
        theta = target_vector(a_bar, b_bar)
        for name, arr in (("a_maps", a), ("b_maps", b), ("b_noise_dirs", dirs),
                          ("a_bar", a_bar), ("b_bar", b_bar), ("theta_star", theta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self):
        return self.a_maps.shape[1]

    @property
    def n_states(self):
        return self.chain.n_states

    @property
    def a_max(self):
        """sup_x ||A(x)||_2 including the worst-case multiplicative noise."""
        base = max(np.linalg.norm(m, 2) for m in self.a_maps)
        return float(base + self.dim * self.a_noise_bound)

    @property
    def b_max(self):
        return float(np.linalg.norm(self.b_maps, axis=1).max())

    def steady_state_residual(self, theta=None):
        theta = self.theta_star if theta is None else theta
        pi = self.chain.stationary
        mean_drift = np.einsum("x,xij,j->i", pi, self.a_maps, theta) + pi @ self.b_maps
        return float(np.linalg.norm(mean_drift))


def _draw_hurwitz(rng, d):
    while True:
        m = rng.standard_normal((d, d))
        top = np.linalg.eigvals(m).real.max()
        if top < 0:
            return m
        if top > 0:
            return m - 2.0 * top * np.eye(d)


def _random_maps(chain, d, rng):
    n = chain.n_states
    pi = chain.stationary
    a_bar = _draw_hurwitz(rng, d)
    noise = rng.uniform(-1.0, 1.0, size=(n - 1, d, d))
    a = np.empty((n, d, d))
    a[:-1] = a_bar + noise
    # the last state absorbs the correction so that sum_x pi(x) A(x) = A_bar
    a[-1] = a_bar - np.einsum("x,xij->ij", pi[:-1], noise) / pi[-1]
    b = rng.uniform(-1.0, 1.0, size=(n, d))
    return a, b


def random_lsa_problem(n_states, dim, seed, iid=False, max_attempts=10):
    """Random Markovian LSA problem with a Hurwitz A_bar.

    With ``iid=True`` the chain is replaced by i.i.d. draws from the
    stationary law of the generated chain (all transition rows equal).
    """
    if int(n_states) < 2 or int(dim) < 1:
        raise ValidationError("need n_states >= 2 and dim >= 1")
    for attempt in range(max_attempts):
        rng = np.random.default_rng([int(seed), attempt]) if attempt else np.random.default_rng(int(seed))
        chain = random_ergodic_chain(n_states, None, rng=rng)
        if iid:
            chain = iid_chain(chain.stationary)
        a, b = _random_maps(chain, int(dim), rng)
        try:
            return LsaProblem(chain, a, b, family="iid" if iid else "random")
        except NumericError:
            continue
    raise GenerationError(f"could not generate a nonsingular problem in {max_attempts} attempts")


def rescaled(problem, factor):
    """Scale every A(x) and b(x) by ``factor``; theta* is unchanged."""
    if not factor > 0:
        raise ValidationError("factor must be positive")
    return replace(problem, a_maps=problem.a_maps * factor, b_maps=problem.b_maps * factor)


def normalized(problem, target=1.0):
    """Rescale so that sup_x ||A(x)||_2 equals ``target`` (Assumption-style bound)."""
    return rescaled(problem, target / problem.a_max)


def multiplicative_noise_problem(base, noise_bound=0.1):
    """A(s, xi) = A_bar + xi, b(s, xi) = b(s) with xi_ij ~ U[-u, u] i.i.d.

    The bound ||A_bar + xi||_2 <= ||A_bar||_2 + d u must not exceed 1.
    """
    u = float(noise_bound)
    if u < 0:
        raise ValidationError("noise_bound must be nonnegative")
    d = base.dim
    bound = np.linalg.norm(base.a_bar, 2) + d * u
    if bound > 1.0 + 1e-12:
        raise ValidationError(
            f"||A_bar||_2 + d*u = {bound:.4f} exceeds 1; rescale the base problem or lower u")
    a = np.broadcast_to(base.a_bar, base.a_maps.shape).copy()
    return LsaProblem(base.chain, a, base.b_maps, family="multiplicative", a_noise_bound=u)


def random_multiplicative_problem(n_states, dim, seed, noise_bound=0.1):
    """Random base problem rescaled so that ||A_bar||_2 + d u = 1, then multiplicative noise."""
    u = float(noise_bound)
    if not dim * u < 1.0:
        raise ValidationError("need d * noise_bound < 1")
    base = random_lsa_problem(n_states, dim, seed)
    base = rescaled(base, (1.0 - dim * u) / np.linalg.norm(base.a_bar, 2))
    return multiplicative_noise_problem(base, u)


def linear_regression_problem(chain, covariates, true_weights, noise_sd):
    """SGD for least squares: A(s) = -s s^T, b(s, eps) = s (s^T w* + eps)."""
    s = np.array(covariates, dtype=float)
    w = np.atleast_1d(np.array(true_weights, dtype=float))
    if s.ndim == 1:
        s = s[:, None]
    if s.shape != (chain.n_states, w.size):
        raise ValidationError(f"covariates must have shape ({chain.n_states}, {w.size})")
    if noise_sd < 0:
        raise ValidationError("noise_sd must be nonnegative")
    second = np.einsum("x,xi,xj->ij", chain.stationary, s, s)
    lam = np.linalg.eigvalsh(second)
    if lam.min() <= 1e-12 * max(1.0, lam.max()):
        raise ValidationError("covariate second moment is rank deficient")
    a = -np.einsum("xi,xj->xij", s, s)
    b = np.einsum("xi,xj,j->xi", s, s, w)
    return LsaProblem(chain, a, b, family="regression", b_noise_sd=float(noise_sd), b_noise_dirs=s)


def random_regression_problem(n_states, dim, noise_sd, seed, iid=False):
    rng = np.random.default_rng(int(seed))
    chain = random_ergodic_chain(n_states, None, rng=rng)
    if iid:
        chain = iid_chain(chain.stationary)
    cov = rng.standard_normal((n_states, dim))
    cov /= np.sqrt(1.0 + np.linalg.norm(cov, axis=1).max() ** 2)
    w = rng.standard_normal(dim)
    w /= np.linalg.norm(w)
    return linear_regression_problem(chain, cov, w, noise_sd)


@dataclass(frozen=True, eq=False)
class MrpProblem:
    """Markov reward process with linear features, realizable by ``value_weights``."""

    chain: FiniteChain
    rewards: np.ndarray
    discount: float
    features: np.ndarray
    value_weights: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValidationError("discount must lie in [0, 1)")
        phi = np.asarray(self.features, dtype=float)
        if phi.ndim != 2 or phi.shape[0] != self.chain.n_states:
            raise ValidationError("features must have shape (n_states, d)")

    @property
    def dim(self):
        return self.features.shape[1]

    def value_function(self):
        n = self.chain.n_states
        return np.linalg.solve(np.eye(n) - self.discount * self.chain.transition, self.rewards)

    def realizability_residual(self):
        v = self.features @ self.value_weights
        return float(np.abs(v - self.rewards - self.discount * self.chain.transition @ v).max())

    def to_lsa(self):
        """Semi-simulator TD(0) as LSA on the pair chain x = (s, s_next).

        Pair (s, s') has index s * n + s'; it moves to (u, u') with
        probability P(s, u) P(u, u') and has stationary mass pi(s) P(s, s').
        A(s, s') = phi(s) (gamma phi(s') - phi(s))^T, b(s, s') = r(s) phi(s).
        """
        p = self.chain.transition
        n = p.shape[0]
        phi = np.asarray(self.features, dtype=float)
        g = self.discount
        pair_t = np.broadcast_to(p[:, None, :, None] * p[None, None, :, :], (n, n, n, n)).reshape(n * n, n * n)
        pair_pi = (self.chain.stationary[:, None] * p).reshape(-1)
        pair = FiniteChain(pair_t, pair_pi)
        a = np.einsum("si,sj->sij", phi, phi)  # phi(s) phi(s)^T
        a_pair = (g * np.einsum("si,tj->stij", phi, phi) - a[:, None, :, :]).reshape(n * n, self.dim, self.dim)
        b_pair = np.repeat(self.rewards[:, None] * phi, n, axis=0)
        return LsaProblem(pair, a_pair, b_pair, family="td")


def realizable_td_problem(n_states, dim, discount, seed, tabular=False):
    """Random MRP whose value function is exactly linear in the features.

    Features are rescaled to sup_s ||phi(s)||_2 = 1 / sqrt(1 + gamma) before the
    rewards are defined as r(s) = phi(s)^T v - gamma sum_s' P(s, s') phi(s')^T v.
    """
    n, d, g = int(n_states), int(dim), float(discount)
    if tabular:
        d = n
    if d > n:
        raise ValidationError("dim must not exceed n_states")
    rng = np.random.default_rng(int(seed))
    chain = random_ergodic_chain(n, None, rng=rng)
    phi = np.eye(n) if tabular else rng.standard_normal((n, d))
    phi = phi / (np.linalg.norm(phi, axis=1).max() * np.sqrt(1.0 + g))
    v = rng.standard_normal(d)
    vals = phi @ v
    rewards = vals - g * chain.transition @ vals
    return MrpProblem(chain, rewards, g, phi, v)


@dataclass(frozen=True, eq=False)
class NonlinearProblem:
    covariate_process: ArOneProcess
    true_weights: np.ndarray
    family: str = "logistic"

    def __post_init__(self):
        w = np.asarray(self.true_weights, dtype=float)
        if w.shape != (self.covariate_process.dim,):
            raise ValidationError("true_weights length must match the covariate dimension")
        if abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise ValidationError("true_weights must be a unit vector")

    @property
    def dim(self):
        return self.covariate_process.dim

    @property
    def theta_star(self):
        return np.asarray(self.true_weights, dtype=float)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def logistic_update(w, x, y, alpha):
    """One score step w + alpha x (y - sigmoid(w^T x))."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    return w + alpha * x * (y - sigmoid(w @ x))


def logistic_problem(autocorrelation=0.5, seed=0, dim=2):
    rng = np.random.default_rng(int(seed))
    w = rng.standard_normal(dim)
    w /= np.linalg.norm(w)
    return NonlinearProblem(ArOneProcess(dim, autocorrelation), w)


def check_zero_bias_condition(problem):
    """Per-state norm of E[A(x_t) theta* + b(x_t) | x_{t+1} = x].

    The backward kernel is pi(s) P(s, x) / pi(x).  All entries <= 1e-8
    certify the sufficient condition for zero asymptotic bias.
    """
    if isinstance(problem, MrpProblem):
        problem = problem.to_lsa()
    pi = problem.chain.stationary
    if np.any(pi <= 0):
        raise ValidationError("stationary mass is zero for some state")
    drift = problem.a_maps @ problem.theta_star + problem.b_maps  # (n, d)
    backward = (pi[:, None] * problem.chain.transition) / pi[None, :]  # [s, x]
    cond = backward.T @ drift
    return np.linalg.norm(cond, axis=1)
