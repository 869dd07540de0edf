"""Shared test utilities: model builders and brute-force oracles.

The oracles re-run every reduction as plain nested Python loops with the
same enumeration order and tie-break rule as the library (candidates first,
ascending grids, earliest argument within 1e-12 of the exact optimum), so
agreement is required bit for bit.
"""

from __future__ import annotations

import numpy as np

from robustcontract import ModelSpec, GrowthParams
from robustcontract import eval_F, eval_g, level_set_V
from robustcontract.hamiltonians import uniform_grid

TIE = 1e-12


def build_model(b=None, sigma=None, c=None, k=None, A=(0.0, 1.0), N=(1.0, 2.0),
                a_points=21, n_points=5, z_points=21, gamma_points=21,
                kappa=1.0, allow_degenerate_vol=False, u_a=None, u_a_inv=None,
                u_p=None, L=None, truncation_M=2.0, **extra) -> ModelSpec:
    """Compact custom model for tests; defaults are the linear benchmark."""
    ident = lambda v: v
    return ModelSpec(
        drift_b=b if b is not None else (lambda t, x, a, n: a),
        vol_sigma=sigma if sigma is not None else (lambda t, x, n: n),
        cost_c=c if c is not None else (lambda t, x, a: 0.5 * a * a),
        discount_k=k if k is not None else (lambda t, x, a, n: 0.0),
        utility_agent=u_a if u_a is not None else ident,
        utility_agent_inv=u_a_inv if u_a_inv is not None else ident,
        utility_principal=u_p if u_p is not None else ident,
        liquidation_L=L if L is not None else ident,
        effort_set_A=A, nature_set_N=N,
        growth_params=GrowthParams(ell=1.0, m=2.0, m_lower=1.0, kappa=kappa),
        truncation_M=truncation_M,
        a_grid_points=a_points, n_grid_points=n_points,
        z_grid_points=z_points, gamma_grid_points=gamma_points,
        allow_degenerate_vol=allow_degenerate_vol,
        **extra,
    )


def first_within(values, target):
    for i, v in enumerate(values):
        if abs(v - target) <= TIE:
            return i
    raise AssertionError("target not in enumeration")


def effort_enumeration(model, t, x, z, sigma):
    out = []
    if model.candidate_effort is not None:
        out.append(model.clamp_effort(model.candidate_effort(t, x, z, sigma)))
    out.extend(float(a) for a in model.a_grid())
    return out


def oracle_F_star(model, t, x, y, z, Sigma, tol=None):
    """(value, arg_a, arg_n) by exhaustive loops."""
    level = level_set_V(model, t, x, Sigma, tol)
    assert level, "oracle needs a nonempty level set"
    efforts = effort_enumeration(model, t, x, z, float(np.sqrt(Sigma)))
    inner = []
    rows = []
    for a in efforts:
        row = [eval_F(model, t, x, y, z, a, n) for n in level]
        rows.append(row)
        inner.append(min(row))
    value = max(inner)
    ia = first_within(inner, value)
    jn = first_within(rows[ia], inner[ia])
    return value, efforts[ia], level[jn]


def oracle_H(model, t, x, y, z, gamma):
    """(value, arg_a, arg_n) of the n-outer, effort-inner reduction."""
    pair_vals = []
    per_n = []
    grid = [float(n) for n in model.n_grid()]
    for n in grid:
        sig = model.vol_sigma(t, x, n)
        efforts = effort_enumeration(model, t, x, z, sig)
        fs = [eval_F(model, t, x, y, z, a, n) for a in efforts]
        pair_vals.append(0.5 * sig * sig * gamma + max(fs))
        per_n.append((efforts, fs))
    value = min(pair_vals)
    jn = first_within(pair_vals, value)
    efforts, fs = per_n[jn]
    ia = first_within(fs, max(fs))
    return value, efforts[ia], grid[jn]


def oracle_G(model, t, x, y, p, p_tilde, q, q_tilde, r, radius):
    """(value, z, gamma, n) by exhaustive loops over the control box."""
    pairs = []
    if model.candidate_zgamma is not None:
        for (zc, gc) in model.candidate_zgamma(t, x, y, p, q):
            pairs.append((min(max(zc, -radius), radius),
                          min(max(gc, -radius), radius)))
    for zv in uniform_grid(-radius, radius, model.z_grid_points):
        for gv in uniform_grid(-radius, radius, model.gamma_grid_points):
            pairs.append((float(zv), float(gv)))
    n_grid = [float(n) for n in model.n_grid()]
    outer = []
    rows = []
    for (zv, gv) in pairs:
        row = [eval_g(model, t, x, y, p, p_tilde, q, q_tilde, r, zv, gv, n)
               for n in n_grid]
        rows.append(row)
        outer.append(min(row))
    value = max(outer)
    k = first_within(outer, value)
    jn = first_within(rows[k], outer[k])
    return value, pairs[k][0], pairs[k][1], n_grid[jn]


def random_polynomial_model(rng: np.random.Generator, max_points=7):
    """Random bounded-coefficient model with grids of at most max_points."""
    b0, b1, b2, b3, b4 = rng.uniform(-2.0, 2.0, size=5)
    s0 = rng.uniform(0.2, 2.0)
    s1 = rng.uniform(0.0, 1.5)
    s2 = rng.uniform(0.0, 1.0)
    c1 = rng.uniform(0.0, 1.5)
    c2 = rng.uniform(0.1, 2.0)
    k0 = rng.uniform(-0.8, 0.8)
    k1 = rng.uniform(-0.5, 0.5)
    n_lo = rng.uniform(0.1, 1.0)
    n_hi = n_lo + rng.uniform(0.1, 2.0)
    a_bar = rng.uniform(0.5, 2.0)
    kappa = abs(k0) + abs(k1) * a_bar * n_hi + 0.1
    counts = rng.integers(2, max_points + 1, size=4)
    return build_model(
        b=lambda t, x, a, n: b0 + b1 * a + b2 * n + b3 * a * n + b4 * x,
        sigma=lambda t, x, n: s0 + s1 * n + s2 * n * n,
        c=lambda t, x, a: c1 * a + c2 * a * a,
        k=lambda t, x, a, n: k0 + k1 * a * n,
        A=(0.0, float(a_bar)), N=(float(n_lo), float(n_hi)),
        a_points=int(counts[0]), n_points=int(counts[1]),
        z_points=int(counts[2]), gamma_points=int(counts[3]),
        kappa=float(kappa),
    )
