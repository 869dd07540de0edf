"""Shared grid utilities for the finite-difference solvers.

Model coefficient callables are scalar functions of scalar arguments.  The
solvers want them evaluated on whole node arrays, so :func:`field` first
attempts a broadcast call and silently falls back to an explicit loop when
the callable is not vectorized.  Selection helpers reproduce the evaluator
tie-break rule (earliest enumerated index within ``TIE_TOL``) on stacked
arrays so vectorized kernels and scalar evaluators agree about which control
wins.
"""

from __future__ import annotations

import numpy as np

from .hamiltonians import TIE_TOL


def field(fn, t, x, *args):
    """Evaluate ``fn(t, x, *args)`` on an array of nodes ``x``.

    Extra ``args`` may be scalars or arrays of the same shape as ``x``.
    Returns a float array shaped like ``x``.
    """
    x = np.asarray(x, dtype=float)
    try:
        out = np.asarray(fn(t, x, *args), dtype=float)
        if out.shape == x.shape:
            return out
        if out.ndim == 0:
            return np.full(x.shape, float(out))
    except Exception:
        pass
    arrs = [np.broadcast_to(np.asarray(a, dtype=float), x.shape) for a in args]
    flat_x = x.ravel()
    flat_args = [a.ravel() for a in arrs]
    out = np.empty(flat_x.shape, dtype=float)
    for i in range(flat_x.size):
        out[i] = fn(t, flat_x[i], *(a[i] for a in flat_args))
    return out.reshape(x.shape)


def max_sigma_sq(model, t_grid, x_grid):
    """Largest squared volatility over the space-time grid and nature set."""
    worst = 0.0
    for n in model.n_grid():
        for t in t_grid:
            sig = field(model.vol_sigma, float(t), x_grid, n)
            worst = max(worst, float(np.max(sig * sig)))
    return worst


def ghost_pad(v):
    """Pad a 1-D node array with linearly extrapolated ghost values.

    The extrapolation keeps first differences and zeroes the one-sided
    second difference at the boundary, which is the monotone choice for a
    domain-truncated problem.
    """
    v = np.asarray(v, dtype=float)
    return np.concatenate(([2.0 * v[0] - v[1]], v, [2.0 * v[-1] - v[-2]]))


def central_differences(v, dx):
    """First (central) and second differences of a padded interior array."""
    vp = ghost_pad(v)
    z = (vp[2:] - vp[:-2]) / (2.0 * dx)
    gam = (vp[2:] - 2.0 * vp[1:-1] + vp[:-2]) / (dx * dx)
    return z, gam


def apply1(fn, arr):
    """Evaluate a single-argument callable on an array, loop fallback."""
    arr = np.asarray(arr, dtype=float)
    try:
        out = np.asarray(fn(arr), dtype=float)
        if out.shape == arr.shape:
            return out
        if out.ndim == 0:
            return np.full(arr.shape, float(out))
    except Exception:
        pass
    flat = arr.ravel()
    out = np.array([float(fn(v)) for v in flat])
    return out.reshape(arr.shape)


def ghost_pad2(u):
    """Linear-extrapolation ghost frame around a 2-D node array."""
    u = np.asarray(u, dtype=float)
    nx, ny = u.shape
    up = np.empty((nx + 2, ny + 2))
    up[1:-1, 1:-1] = u
    up[0, 1:-1] = 2.0 * u[0] - u[1]
    up[-1, 1:-1] = 2.0 * u[-1] - u[-2]
    up[:, 0] = 2.0 * up[:, 1] - up[:, 2]
    up[:, -1] = 2.0 * up[:, -2] - up[:, -3]
    return up


def first_argmax(stack, tol=TIE_TOL):
    """Row index of the earliest entry within ``tol`` of the columnwise max."""
    stack = np.asarray(stack, dtype=float)
    best = np.max(stack, axis=0)
    return np.argmax(stack >= best - tol, axis=0), best


def first_argmin(stack, tol=TIE_TOL):
    """Row index of the earliest entry within ``tol`` of the columnwise min."""
    stack = np.asarray(stack, dtype=float)
    best = np.min(stack, axis=0)
    return np.argmin(stack - best > tol, axis=0), best


def take_rows(stack, idx):
    """Gather ``stack[idx[j], j]`` for each column j."""
    stack = np.asarray(stack)
    return stack[idx, np.arange(stack.shape[-1])]
