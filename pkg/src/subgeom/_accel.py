"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The numba path is used unless ``SUBGEOM_DISABLE_NUMBA=1`` is set in the
environment before import (or numba is not importable).  Both paths are
always importable as ``<name>_numpy`` / ``<name>_numba`` so that tests and
the benchmark can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SUBGEOM_DISABLE_NUMBA", "0") not in ("1", "true", "yes")

DRIFT_VK = 0
DRIFT_LINEAR = 1


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# 1-D quantile sweep:  integral over u in (0,1) of |F^-1(u) - G^-1(u)|


def quantile_sweep_py(xs, xw, ys, yw):
    i = 0
    j = 0
    n = xs.shape[0]
    m = ys.shape[0]
    cx = xw[0]
    cy = yw[0]
    cost = 0.0
    while i < n and j < m:
        gap = abs(xs[i] - ys[j])
        if cx <= cy:
            cost += cx * gap
            cy -= cx
            i += 1
            if i < n:
                cx = xw[i]
        else:
            cost += cy * gap
            cx -= cy
            j += 1
            if j < m:
                cy = yw[j]
    return cost


quantile_sweep_numba = _njit(quantile_sweep_py)


def quantile_sweep_numpy(xs, xw, ys, yw):
    cwx = np.cumsum(xw)
    cwy = np.cumsum(yw)
    cwx[-1] = cwy[-1] = 1.0
    qs = np.unique(np.concatenate((cwx, cwy)))
    dq = np.diff(np.concatenate(([0.0], qs)))
    ix = np.minimum(np.searchsorted(cwx, qs, side="left"), xs.shape[0] - 1)
    iy = np.minimum(np.searchsorted(cwy, qs, side="left"), ys.shape[0] - 1)
    return float(np.sum(dq * np.abs(xs[ix] - ys[iy])))


# --------------------------------------------------------------------------
# sup-norm cost matrix between batches of segments, optionally truncated


def _sup_cost_loop(a, b, beta):
    n_a, n_pts, dim = a.shape
    n_b = b.shape[0]
    out = np.empty((n_a, n_b))
    for i in range(n_a):
        for j in range(n_b):
            best = 0.0
            for k in range(n_pts):
                s = 0.0
                for c in range(dim):
                    diff = a[i, k, c] - b[j, k, c]
                    s += diff * diff
                if s > best:
                    best = s
            val = np.sqrt(best)
            if beta > 0.0:
                val = val / beta
                if val > 1.0:
                    val = 1.0
            out[i, j] = val
    return out


sup_cost_numba = _njit(_sup_cost_loop)


def sup_cost_numpy(a, b, beta):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        diff = b - a[i][None, :, :]
        out[i] = np.sqrt(np.max(np.sum(diff * diff, axis=2), axis=1))
    if beta > 0.0:
        out = np.minimum(out / beta, 1.0)
    return out


# --------------------------------------------------------------------------
# Euler-Maruyama for scalar delay equations
#   dX = f(X(t)) dt + g(X(t - lag*dt)) dW
# with f either the radial VK drift  -kappa v |v|^(alpha-2)  (linear inside
# |v| < M) or the linear drift -kappa v, and g(u) = lo + (hi-lo)(1+tanh u)/2.
# path[:, k0] is the current value; steps fill path[:, k0+1 : k0+n_steps+1].
# Returns the first step index at which |X| exceeded the limit, or -1.


def em_delay_py(path, noise, k0, n_steps, dt, lag, drift_kind, kappa, alpha, m_in, g_lo, g_hi, limit):
    n_traj = path.shape[0]
    sq = np.sqrt(dt)
    inner = m_in ** (alpha - 2.0) if drift_kind == DRIFT_VK else 0.0
    for p in range(n_traj):
        for s in range(n_steps):
            k = k0 + s
            x = path[p, k]
            if drift_kind == DRIFT_VK:
                ax = abs(x)
                if ax >= m_in:
                    f = -kappa * x * ax ** (alpha - 2.0)
                else:
                    f = -kappa * x * inner
            else:
                f = -kappa * x
            g = g_lo + (g_hi - g_lo) * 0.5 * (1.0 + np.tanh(path[p, k - lag]))
            xn = x + f * dt + g * sq * noise[p, s]
            if abs(xn) > limit or xn != xn:
                return s
            path[p, k + 1] = xn
    return -1


em_delay_numba = _njit(em_delay_py)


def em_delay_numpy(path, noise, k0, n_steps, dt, lag, drift_kind, kappa, alpha, m_in, g_lo, g_hi, limit):
    sq = np.sqrt(dt)
    for s in range(n_steps):
        k = k0 + s
        x = path[:, k]
        if drift_kind == DRIFT_VK:
            ax = np.abs(x)
            scale = np.where(ax >= m_in, np.maximum(ax, m_in) ** (alpha - 2.0), m_in ** (alpha - 2.0))
            f = -kappa * x * scale
        else:
            f = -kappa * x
        g = g_lo + (g_hi - g_lo) * 0.5 * (1.0 + np.tanh(path[:, k - lag]))
        xn = x + f * dt + g * sq * noise[:, s]
        if not np.all(np.abs(xn) <= limit):
            return s
        path[:, k + 1] = xn
    return -1


if USE_NUMBA:
    quantile_sweep = quantile_sweep_numba
    sup_cost = sup_cost_numba
    em_delay = em_delay_numba
else:
    quantile_sweep = quantile_sweep_numpy
    sup_cost = sup_cost_numpy
    em_delay = em_delay_numpy
