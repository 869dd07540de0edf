"""Robust value of the agent under a fixed terminal contract.

The agent observes the paid contract ``xi(X_T)`` and reacts with the effort
that is optimal against the worst admissible volatility, so the value
function solves a degenerate-parabolic equation whose spatial operator is
the saddle Hamiltonian evaluated at the local derivative estimates:

    dV/dt + H(t, x, V, dV/dx, d2V/dx2) = 0,      V(T, x) = U_A(xi(x)).

The solver marches backward with an explicit monotone scheme: derivative
probes are central, the chosen saddle controls are then re-realized with
upwinded drift so every node update is a convex combination under the
stability bound dt * max sigma^2 / dx^2 <= 1.  The bound is checked once up
front and violations are rejected rather than silently substepped.

A second, independent route to the same number exists for models without
drift, running cost or discounting: conditionally on a frozen nature control
the value is a Gaussian convolution of the terminal data, and robustness is
an infimum of those convolutions.  ``inf_of_bsdes`` computes that by
quadrature and is used to cross-check the PDE solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hamiltonians import ModelSpec, TIE_TOL
from . import numerics


_CFL_SLACK = 1e-12


@dataclass(frozen=True)
class ContractFunction:
    """Terminal payment ``xi(x)`` handed to the agent at the horizon."""

    payment: Callable[[float], float]
    label: str = "custom"

    @classmethod
    def from_preset(cls, text: str) -> "ContractFunction":
        """Parse ``"linear:slope,intercept"``, ``"call:strike"`` or
        ``"tabulated:path"`` into a payment function."""
        kind, _, arg = text.partition(":")
        if kind == "linear":
            parts = [float(p) for p in arg.split(",")] if arg else [1.0, 0.0]
            if len(parts) == 1:
                parts.append(0.0)
            slope, intercept = parts[0], parts[1]
            return cls(lambda x: slope * x + intercept, label=text)
        if kind == "call":
            strike = float(arg) if arg else 0.0
            return cls(lambda x: np.maximum(x - strike, 0.0), label=text)
        if kind == "tabulated":
            table = np.loadtxt(arg)
            if table.ndim != 2 or table.shape[1] != 2:
                raise ValueError("tabulated contract needs two columns (x, payment)")
            xs, ps = table[:, 0], table[:, 1]
            if not np.all(np.diff(xs) > 0):
                raise ValueError("tabulated contract abscissae must be increasing")
            return cls(lambda x: np.interp(x, xs, ps), label=text)
        raise ValueError(f"unknown contract preset {kind!r}")

    def __call__(self, x):
        return self.payment(x)


@dataclass
class AgentSolution:
    """Backward-solved robust value with the realized saddle controls."""

    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray          # (t, x)
    effort: np.ndarray          # (t, x), terminal row repeats the last step
    nature: np.ndarray          # (t, x)
    cfl_number: float
    max_abs_value: float = 0.0
    max_abs_gradient: float = 0.0

    def value(self, t: float, x: float) -> float:
        """Bilinear interpolation of the value surface."""
        ti = np.clip(np.searchsorted(self.t_grid, t) - 1, 0, len(self.t_grid) - 2)
        wt = (t - self.t_grid[ti]) / (self.t_grid[ti + 1] - self.t_grid[ti])
        wt = float(np.clip(wt, 0.0, 1.0))
        row = (1.0 - wt) * self.values[ti] + wt * self.values[ti + 1]
        return float(np.interp(x, self.x_grid, row))

    def policy(self, t: float, x: float) -> tuple[float, float]:
        """Nearest-node saddle controls (effort, nature)."""
        ti = int(np.clip(np.searchsorted(self.t_grid, t), 0, len(self.t_grid) - 1))
        xi = int(np.argmin(np.abs(self.x_grid - x)))
        return float(self.effort[ti, xi]), float(self.nature[ti, xi])


def _effort_stack(model: ModelSpec, t, x_arr, y_arr, z_arr, n, sig_arr):
    """Per-node effort enumeration: closed-form candidate first, then grid."""
    cands = []
    if model.candidate_effort is not None:
        a_c = numerics.field(model.candidate_effort, t, x_arr, z_arr, sig_arr)
        cands.append(np.clip(a_c, model.effort_set_A[0], model.effort_set_A[1]))
    for a in model.a_grid():
        cands.append(np.full(x_arr.shape, a))
    return cands


def _saddle_step(model: ModelSpec, t, x_arr, v, z, gam):
    """Vectorized one-slice saddle: returns (a_star, n_star, sig2, b, k, c).

    Mirrors the scalar evaluator selection rule: for each nature control the
    effort response maximizes the running reward (candidate first, earliest
    within tolerance wins), then the nature control minimizing the realized
    second-order Hamiltonian is chosen the same way.
    """
    n_grid = model.n_grid()
    h_rows, a_rows, s_rows = [], [], []
    for n in n_grid:
        sig = numerics.field(model.vol_sigma, t, x_arr, n)
        sig2 = sig * sig
        efforts = _effort_stack(model, t, x_arr, v, z, n, sig)
        f_rows = []
        for a_arr in efforts:
            b = numerics.field(model.drift_b, t, x_arr, a_arr, n)
            k = numerics.field(model.discount_k, t, x_arr, a_arr, n)
            c = numerics.field(model.cost_c, t, x_arr, a_arr)
            f_rows.append(-k * v - c + b * z)
        idx, f_best = numerics.first_argmax(np.stack(f_rows), TIE_TOL)
        a_best = numerics.take_rows(np.stack(efforts), idx)
        h_rows.append(0.5 * sig2 * gam + f_best)
        a_rows.append(a_best)
        s_rows.append(sig2)
    n_idx, _ = numerics.first_argmin(np.stack(h_rows), TIE_TOL)
    a_star = numerics.take_rows(np.stack(a_rows), n_idx)
    n_star = np.asarray(n_grid)[n_idx]
    sig2 = numerics.take_rows(np.stack(s_rows), n_idx)
    b = numerics.field(model.drift_b, t, x_arr, a_star, n_star)
    k = numerics.field(model.discount_k, t, x_arr, a_star, n_star)
    c = numerics.field(model.cost_c, t, x_arr, a_star)
    return a_star, n_star, sig2, b, k, c


def solve_agent(model: ModelSpec, contract: ContractFunction, *,
                x_lo: float, x_hi: float, x_nodes: int,
                t_steps: int, horizon: float) -> AgentSolution:
    """March the agent equation backward from ``U_A(xi(x))``.

    Raises ``ValueError`` when the diffusion stability bound fails; the
    caller picks grids, the solver never substeps on its own.
    """
    if x_nodes < 3:
        raise ValueError("need at least 3 space nodes")
    if t_steps < 1:
        raise ValueError("need at least 1 time step")
    if not x_hi > x_lo:
        raise ValueError("empty space interval")
    if horizon <= 0:
        raise ValueError("horizon must be positive")

    x_grid = np.linspace(x_lo, x_hi, x_nodes)
    t_grid = np.linspace(0.0, horizon, t_steps + 1)
    dx = x_grid[1] - x_grid[0]
    dt = t_grid[1] - t_grid[0]

    sig2_max = numerics.max_sigma_sq(model, t_grid, x_grid)
    cfl = dt * sig2_max / (dx * dx)
    if cfl > 1.0 + _CFL_SLACK:
        raise ValueError(
            f"stability bound violated: dt*max(sigma^2)/dx^2 = {cfl:.6g} > 1; "
            "refine the time grid")

    pay = np.array([float(contract.payment(xi)) for xi in x_grid])
    values = np.empty((t_steps + 1, x_nodes))
    effort = np.zeros((t_steps + 1, x_nodes))
    nature = np.full((t_steps + 1, x_nodes), model.nature_set_N[0], dtype=float)
    values[t_steps] = np.array([float(model.utility_agent(p)) for p in pay])

    max_grad = 0.0
    for step in range(t_steps - 1, -1, -1):
        t = float(t_grid[step])
        v = values[step + 1]
        z, gam = numerics.central_differences(v, dx)
        a_star, n_star, sig2, b, k, c = _saddle_step(model, t, x_grid, v, z, gam)

        up = (np.roll(v, -1) - v) / dx
        dn = (v - np.roll(v, 1)) / dx
        # ghost-consistent one-sided slopes at the walls
        up[-1] = dn[-1]
        dn[0] = up[0]
        b_pos = np.maximum(b, 0.0)
        b_neg = np.maximum(-b, 0.0)
        values[step] = v + dt * (0.5 * sig2 * gam - k * v - c
                                 + b_pos * up - b_neg * dn)
        effort[step] = a_star
        nature[step] = n_star
        max_grad = max(max_grad, float(np.max(np.abs(z))))

    effort[t_steps] = effort[t_steps - 1]
    nature[t_steps] = nature[t_steps - 1]
    return AgentSolution(
        t_grid=t_grid, x_grid=x_grid, values=values,
        effort=effort, nature=nature, cfl_number=float(cfl),
        max_abs_value=float(np.max(np.abs(values))),
        max_abs_gradient=max_grad)


# ---------------------------------------------------------------------------
# independent cross-check for driftless, costless, undiscounted models
# ---------------------------------------------------------------------------

_HERMITE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _hermite_rule(points: int):
    if points not in _HERMITE_CACHE:
        nodes, weights = np.polynomial.hermite.hermgauss(points)
        _HERMITE_CACHE[points] = (nodes, weights / np.sqrt(np.pi))
    return _HERMITE_CACHE[points]


def _require_linear_family(model: ModelSpec):
    probes_x = np.linspace(-model.truncation_M, model.truncation_M, 5)
    for x in probes_x:
        for a in model.a_grid()[:: max(1, len(model.a_grid()) // 3)]:
            for n in model.n_grid():
                if abs(model.drift_b(0.0, x, a, n)) > 1e-12 \
                        or abs(model.cost_c(0.0, x, a)) > 1e-12 \
                        or abs(model.discount_k(0.0, x, a, n)) > 1e-12:
                    raise ValueError(
                        "quadrature cross-check needs zero drift, cost and "
                        "discount")


def linear_bsde_value(model: ModelSpec, contract: ContractFunction,
                      n: float, t: float, x, horizon: float,
                      quad_points: int = 96):
    """Value under a frozen nature control: Gaussian convolution by
    Gauss-Hermite quadrature.  Only valid in the linear family."""
    _require_linear_family(model)
    sig = numerics.field(model.vol_sigma, t, np.asarray(x, dtype=float), n)
    tau = horizon - t
    if tau < 0:
        raise ValueError("evaluation time past the horizon")
    nodes, weights = _hermite_rule(quad_points)
    x = np.asarray(x, dtype=float)
    shifts = np.sqrt(2.0 * tau) * np.multiply.outer(np.asarray(sig), nodes)
    pts = x[..., None] + shifts
    vals = np.vectorize(lambda p: float(model.utility_agent(contract.payment(p))))(pts)
    out = vals @ weights
    return out if out.ndim else float(out)


def inf_of_bsdes(model: ModelSpec, contract: ContractFunction,
                 t: float, x, horizon: float, n_points: int = 41,
                 quad_points: int = 96):
    """Robust value as the infimum over frozen nature controls.

    This is the dual route to ``solve_agent`` for the linear family: no
    finite differences, no saddle search, just convolutions.
    """
    lo, hi = model.nature_set_N
    n_grid = np.linspace(lo, hi, n_points) if n_points > 1 else np.array([lo])
    stack = np.stack([
        np.atleast_1d(linear_bsde_value(model, contract, float(n), t, x,
                                        horizon, quad_points))
        for n in n_grid])
    out = np.min(stack, axis=0)
    return out if np.ndim(x) else float(out[0])


def participation_check(solution: AgentSolution, x0: float,
                        reservation: float, tol: float = 1e-9):
    """Does the agent weakly prefer the contract to the outside option?"""
    v0 = solution.value(solution.t_grid[0], x0)
    return v0 >= reservation - tol, v0 - reservation
