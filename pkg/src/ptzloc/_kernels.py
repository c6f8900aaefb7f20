"""Particle-filter inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin. Set ``PTZLOC_DISABLE_NUMBA=1`` to force
the numpy path; the public names (``predict``, ``rbf_update``,
``systematic_indices``) resolve to whichever backend is active at import.

Kernels never draw random numbers themselves: callers pass the noise and
offsets in, so both backends consume identical random streams.
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

_disabled = os.environ.get("PTZLOC_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
USE_NUMBA = NUMBA_AVAILABLE and not _disabled
BACKEND = "numba" if USE_NUMBA else "numpy"

# scaled-CDF values this close to an integer count as exactly on a bucket edge
SNAP_TOL = 1e-9


# --- numpy ---------------------------------------------------------------

def predict_numpy(rho, rho_dot, dt, noise_rho, noise_rho_dot):
    new_rho = rho + rho_dot * dt + noise_rho
    new_rho_dot = rho_dot + noise_rho_dot
    return new_rho, new_rho_dot


def rbf_update_numpy(rho, weights, rho_obs, sigma):
    """Multiply weights by the RBF likelihood and renormalise.

    Returns ``(new_weights, estimate, degenerate)``; ``degenerate`` is True
    when every likelihood underflowed and uniform weights were substituted.
    """
    d = rho - rho_obs
    # Log-domain shift keeps the largest likelihood at exp(0); only a total
    # collapse of the prior weights can still produce an all-zero vector.
    logl = -(d * d) / (2.0 * sigma * sigma)
    w = weights * np.exp(logl - logl.max())
    total = w.sum()
    degenerate = not (total > 0.0 and np.isfinite(total))
    if degenerate:
        w = np.full(rho.shape[0], 1.0 / rho.shape[0])
    else:
        w = w / total
    return w, float(np.dot(w, rho)), degenerate


def systematic_indices_numpy(weights, offset, n):
    """Indices picked by ``n`` evenly spaced pointers ``(j + offset) / n``.

    ``offset`` is a uniform draw in [0, 1). The CDF is scaled by ``n`` and
    values within ``SNAP_TOL`` of an integer are snapped to it, so pointers
    that land on a bucket edge in exact arithmetic are not pushed across it
    by rounding in the cumulative sum.
    """
    scaled = np.cumsum(weights)
    scaled *= n / scaled[-1]
    nearest = np.rint(scaled)
    scaled = np.where(np.abs(scaled - nearest) < SNAP_TOL, nearest, scaled)
    scaled[-1] = n
    idx = np.searchsorted(scaled, np.arange(n) + offset, side="right")
    return np.minimum(idx, weights.shape[0] - 1)


# --- numba ---------------------------------------------------------------

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def predict_numba(rho, rho_dot, dt, noise_rho, noise_rho_dot):
        n = rho.shape[0]
        new_rho = np.empty(n)
        new_rho_dot = np.empty(n)
        for i in range(n):
            new_rho[i] = rho[i] + rho_dot[i] * dt + noise_rho[i]
            new_rho_dot[i] = rho_dot[i] + noise_rho_dot[i]
        return new_rho, new_rho_dot

    @njit(cache=True)
    def _rbf_update_numba(rho, weights, rho_obs, sigma):
        n = rho.shape[0]
        inv = 1.0 / (2.0 * sigma * sigma)
        logl = np.empty(n)
        top = -np.inf
        for i in range(n):
            d = rho[i] - rho_obs
            logl[i] = -d * d * inv
            if logl[i] > top:
                top = logl[i]
        w = np.empty(n)
        total = 0.0
        for i in range(n):
            w[i] = weights[i] * np.exp(logl[i] - top)
            total += w[i]
        degenerate = not (total > 0.0 and np.isfinite(total))
        est = 0.0
        if degenerate:
            for i in range(n):
                w[i] = 1.0 / n
        else:
            for i in range(n):
                w[i] = w[i] / total
        for i in range(n):
            est += w[i] * rho[i]
        return w, est, degenerate

    def rbf_update_numba(rho, weights, rho_obs, sigma):
        w, est, degenerate = _rbf_update_numba(rho, weights, float(rho_obs), float(sigma))
        return w, float(est), bool(degenerate)

    @njit(cache=True)
    def systematic_indices_numba(weights, offset, n):
        m = weights.shape[0]
        scaled = np.empty(m)
        acc = 0.0
        for i in range(m):
            acc += weights[i]
            scaled[i] = acc
        for i in range(m):
            scaled[i] *= n / acc
            nearest = np.rint(scaled[i])
            if abs(scaled[i] - nearest) < SNAP_TOL:
                scaled[i] = nearest
        scaled[m - 1] = n
        idx = np.empty(n, dtype=np.int64)
        k = 0
        for j in range(n):
            p = j + offset
            while k < m - 1 and scaled[k] <= p:
                k += 1
            idx[j] = k
        return idx

else:  # pragma: no cover
    predict_numba = predict_numpy
    rbf_update_numba = rbf_update_numpy
    systematic_indices_numba = systematic_indices_numpy


if USE_NUMBA:
    predict = predict_numba
    rbf_update = rbf_update_numba
    systematic_indices = systematic_indices_numba
else:
    predict = predict_numpy
    rbf_update = rbf_update_numpy
    systematic_indices = systematic_indices_numpy
