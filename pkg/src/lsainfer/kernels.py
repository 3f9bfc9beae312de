"""Hot inner loops.

Each kernel exists twice: an explicit-loop version compiled with
``numba.njit`` and a numpy version that vectorises over the coupled
schedules.  The backend is chosen once from the ``LSAINFER_BACKEND``
environment variable (``numba`` or ``numpy``; default ``numba`` when numba
imports) and can be switched at runtime with :func:`set_backend`.

Both versions consume the same pre-drawn random numbers, so state sequences
agree exactly across backends and iterates agree to rounding.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

DIVERGENCE_LIMIT = 1e12

_BACKEND = None


def available_backends():
    return ("numba", "numpy") if numba is not None else ("numpy",)


def set_backend(name):
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba backend requested but numba is not installed")
    _BACKEND = name


def get_backend():
    return _BACKEND


set_backend(os.environ.get("LSAINFER_BACKEND", "numba" if numba is not None else "numpy").strip().lower())


def _njit(func):
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True)(func)


# ---------------------------------------------------------------------------
# Markov chain stepping
# ---------------------------------------------------------------------------

def _chain_chunk_loop(cum, prev, u, out):
    n = cum.shape[1]
    x = prev
    for i in range(u.shape[0]):
        lo = 0
        hi = n - 1
        ui = u[i]
        while lo < hi:
            mid = (lo + hi) // 2
            if cum[x, mid] <= ui:
                lo = mid + 1
            else:
                hi = mid
        x = lo
        out[i] = x
    return x


_chain_chunk_nb = _njit(_chain_chunk_loop)


def _chain_chunk_np(cum, prev, u, out):
    n = cum.shape[0]
    nxt = [np.searchsorted(cum[s, :-1], u, side="right").tolist() for s in range(n)]
    x = int(prev)
    buf = [0] * u.shape[0]
    for i in range(u.shape[0]):
        x = nxt[x][i]
        buf[i] = x
    out[:] = buf
    return x


def chain_chunk(cum, prev, u, out):
    """Advance a chain from state ``prev`` using one uniform per step.

    ``out[i]`` is the inverse-CDF draw from row ``cum[previous state]`` at
    ``u[i]``.  Returns the last state.
    """
    if _BACKEND == "numba":
        return int(_chain_chunk_nb(cum, int(prev), u, out))
    return _chain_chunk_np(cum, prev, u, out)


# ---------------------------------------------------------------------------
# Coupled linear stochastic approximation
# ---------------------------------------------------------------------------

def _lsa_chunk_loop(theta, alpha0, expo, t0, a_maps, b_maps, states, a_noise, b_eps, b_dirs, out, diverged):
    n_sched, d = theta.shape
    length = states.shape[0]
    has_an = a_noise.shape[0] > 0
    has_bn = b_eps.shape[0] > 0
    incr = np.empty(d)
    for m in range(n_sched):
        if diverged[m] >= 0:
            out[m, :, :] = np.nan
            continue
        a0 = alpha0[m]
        e = expo[m]
        for i in range(length):
            k = t0 + i
            if e == 0.0 or k == 0:
                alpha = a0
            else:
                alpha = a0 * float(k) ** (-e)
            x = states[i]
            for r in range(d):
                acc = b_maps[x, r]
                if has_bn:
                    acc += b_eps[i] * b_dirs[x, r]
                for c in range(d):
                    coef = a_maps[x, r, c]
                    if has_an:
                        coef += a_noise[i, r, c]
                    acc += coef * theta[m, c]
                incr[r] = acc
            bad = False
            for r in range(d):
                theta[m, r] += alpha * incr[r]
                v = theta[m, r]
                if not (abs(v) <= 1e12):
                    bad = True
                out[m, i, r] = v
            if bad:
                diverged[m] = k
                out[m, i:, :] = np.nan
                break


_lsa_chunk_nb = _njit(_lsa_chunk_loop)


def _stepsizes(alpha0, expo, k):
    if k == 0:
        return alpha0.copy()
    return alpha0 * float(k) ** (-expo)


def _lsa_chunk_np(theta, alpha0, expo, t0, a_maps, b_maps, states, a_noise, b_eps, b_dirs, out, diverged):
    live = diverged < 0
    out[~live] = np.nan
    if not live.any():
        return
    idx = np.flatnonzero(live)
    th = theta[idx].copy()
    a0 = alpha0[idx]
    ex = expo[idx]
    constant = bool(np.all(ex == 0.0))
    has_an = a_noise.shape[0] > 0
    has_bn = b_eps.shape[0] > 0
    for i in range(states.shape[0]):
        k = t0 + i
        x = states[i]
        amat = a_maps[x] + a_noise[i] if has_an else a_maps[x]
        bvec = b_maps[x] + b_eps[i] * b_dirs[x] if has_bn else b_maps[x]
        alpha = a0 if constant else _stepsizes(a0, ex, k)
        th += alpha[:, None] * ((amat[None, :, :] * th[:, None, :]).sum(axis=2) + bvec)
        out[idx, i, :] = th
        bad = ~(np.abs(th) <= DIVERGENCE_LIMIT).all(axis=1)
        if bad.any():
            for j in np.flatnonzero(bad):
                diverged[idx[j]] = k
                out[idx[j], i:, :] = np.nan
            keep = ~bad
            theta[idx[bad]] = th[bad]
            idx, th, a0, ex = idx[keep], th[keep], a0[keep], ex[keep]
            if idx.size == 0:
                return
    theta[idx] = th


def lsa_chunk(theta, alpha0, expo, t0, a_maps, b_maps, states, a_noise, b_eps, b_dirs, out, diverged):
    """Run ``len(states)`` coupled LSA updates in place.

    ``theta`` is (M, d); schedule m uses stepsize ``alpha0[m] * k**-expo[m]``
    (``alpha0[m]`` at k = 0) where k is the absolute step ``t0 + i``.  The
    iterate after update i is written to ``out[m, i]``.  A schedule whose
    iterate leaves the box |theta| <= 1e12 stores its step in ``diverged[m]``
    and emits NaN from then on.
    """
    fn = _lsa_chunk_nb if _BACKEND == "numba" else _lsa_chunk_np
    fn(theta, alpha0, expo, int(t0), a_maps, b_maps, states, a_noise, b_eps, b_dirs, out, diverged)


# ---------------------------------------------------------------------------
# Logistic regression on an AR(1) covariate stream
# ---------------------------------------------------------------------------

def _logistic_chunk_loop(theta, alpha0, expo, t0, x_prev, rho, scale, w_star, z, u, out, diverged):
    n_sched, d = theta.shape
    length = z.shape[0]
    innov = scale * np.sqrt(1.0 - rho * rho)
    xs = np.empty((length, d))
    ys = np.empty(length)
    for i in range(length):
        s = 0.0
        for r in range(d):
            x_prev[r] = rho * x_prev[r] + innov * z[i, r]
            xs[i, r] = x_prev[r]
            s += w_star[r] * x_prev[r]
        p = 1.0 / (1.0 + np.exp(-s))
        ys[i] = 1.0 if u[i] < p else 0.0
    for m in range(n_sched):
        if diverged[m] >= 0:
            out[m, :, :] = np.nan
            continue
        a0 = alpha0[m]
        e = expo[m]
        for i in range(length):
            k = t0 + i
            if e == 0.0 or k == 0:
                alpha = a0
            else:
                alpha = a0 * float(k) ** (-e)
            s = 0.0
            for r in range(d):
                s += theta[m, r] * xs[i, r]
            g = ys[i] - 1.0 / (1.0 + np.exp(-s))
            bad = False
            for r in range(d):
                theta[m, r] += alpha * xs[i, r] * g
                v = theta[m, r]
                if not (abs(v) <= 1e12):
                    bad = True
                out[m, i, r] = v
            if bad:
                diverged[m] = k
                out[m, i:, :] = np.nan
                break


_logistic_chunk_nb = _njit(_logistic_chunk_loop)


def _logistic_chunk_np(theta, alpha0, expo, t0, x_prev, rho, scale, w_star, z, u, out, diverged):
    length, d = z.shape
    innov = scale * np.sqrt(1.0 - rho * rho)
    xs = np.empty((length, d))
    x = x_prev.copy()
    for i in range(length):
        x = rho * x + innov * z[i]
        xs[i] = x
    x_prev[:] = x
    ys = (u < 1.0 / (1.0 + np.exp(-(xs @ w_star)))).astype(float)
    live = diverged < 0
    out[~live] = np.nan
    idx = np.flatnonzero(live)
    th = theta[idx].copy()
    a0, ex = alpha0[idx], expo[idx]
    for i in range(length):
        if idx.size == 0:
            break
        k = t0 + i
        alpha = _stepsizes(a0, ex, k)
        g = ys[i] - 1.0 / (1.0 + np.exp(-(th @ xs[i])))
        th += (alpha * g)[:, None] * xs[i][None, :]
        out[idx, i, :] = th
        bad = ~(np.abs(th) <= DIVERGENCE_LIMIT).all(axis=1)
        if bad.any():
            for j in np.flatnonzero(bad):
                diverged[idx[j]] = k
                out[idx[j], i:, :] = np.nan
            keep = ~bad
            theta[idx[bad]] = th[bad]
            idx, th, a0, ex = idx[keep], th[keep], a0[keep], ex[keep]
    theta[idx] = th


def logistic_chunk(theta, alpha0, expo, t0, x_prev, rho, scale, w_star, z, u, out, diverged):
    """Coupled logistic-score SA over an AR(1) covariate stream, in place.

    ``x_prev`` carries the covariate across chunks.  Step i draws
    ``x = rho * x_prev + scale * sqrt(1 - rho**2) * z[i]`` and label
    ``y = u[i] < sigmoid(w_star . x)``, then every live schedule moves by
    ``alpha * x * (y - sigmoid(theta . x))``.
    """
    fn = _logistic_chunk_nb if _BACKEND == "numba" else _logistic_chunk_np
    fn(theta, alpha0, expo, int(t0), x_prev, float(rho), float(scale), w_star, z, u, out, diverged)
