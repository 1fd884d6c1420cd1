"""Independent weak-solution oracle: minimize the convex flux energy.

The energy uses a variational (cell-based) discretization that is different
from the nodal central differences used by the nonlinear solver: each cell
carries two one-sided difference gradients, one taken from its lower corner
and one from its upper corner, and the density is averaged over the two.
This pairing makes the discrete integration-by-parts identity exact (the
energy gradient is literally the adjoint of the cell gradient map), and at
p = 2 the resulting operator collapses to the 2n+1-point Laplacian, so the
minimizer and the Poisson solver then solve the same linear system.

The scalar density is

    psi(t) = (mu+t)^p / p - mu (mu+t)^{p-1} / (p-1) + mu^p / (p (p-1)),

normalized so psi(0) = 0, with psi'(t) = (mu+t)^{p-2} t, i.e. the flux
magnitude.  At mu = 0 it reduces to t^p / p and the flux is extended by 0
where the gradient vanishes (continuous since p > 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .calculus import jet, lq_norm
from .grid import Grid, VectorField, enforce_dirichlet, field_from_fn, random_sine_field, zeros_field
from .linear_elliptic import solve_poisson

__all__ = [
    "EnergyReport",
    "psi",
    "psi_prime",
    "energy",
    "energy_gradient",
    "minimize",
    "manufactured_problem",
    "weak_residual",
    "cell_gradients",
]


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    gradient_norm: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def psi(t: np.ndarray | float, p: float, mu: float):
    """Scalar energy density with psi'(t) = (mu+t)^{p-2} t and psi(0) = 0."""
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    t = np.asarray(t, dtype=np.float64)
    if mu == 0.0:
        return t**p / p
    return (
        (mu + t) ** p / p
        - mu * (mu + t) ** (p - 1) / (p - 1)
        + mu**p / (p * (p - 1))
    )


def psi_prime(t: np.ndarray | float, p: float, mu: float):
    t = np.asarray(t, dtype=np.float64)
    if mu == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t > 0, t ** (p - 1), 0.0)
        return out
    return (mu + t) ** (p - 2) * t


def _flux(g: np.ndarray, p: float, mu: float) -> np.ndarray:
    """Flux (mu+|g|)^{p-2} g for cell gradients ``g`` of shape (N, n, *cells)."""
    s = np.sqrt((g * g).sum(axis=(0, 1)))
    if mu == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(s > 0, s ** (p - 2.0), 0.0)
    else:
        factor = (mu + s) ** (p - 2.0)
    return factor * g


def _lower(grid: Grid, axis_plus: int | None) -> tuple[slice, ...]:
    """Cell-shaped node selection anchored at lower corners."""
    sel = [slice(0, -1)] * grid.n_dims
    if axis_plus is not None:
        sel[axis_plus] = slice(1, None)
    return tuple(sel)


def _upper(grid: Grid, axis_minus: int | None) -> tuple[slice, ...]:
    """Cell-shaped node selection anchored at upper corners."""
    sel = [slice(1, None)] * grid.n_dims
    if axis_minus is not None:
        sel[axis_minus] = slice(0, -1)
    return tuple(sel)


def cell_gradients(values: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell one-sided difference gradients from the two extreme corners.

    Returns ``(g_lo, g_hi)`` of shape ``(N, n, *cells)`` where component j of
    ``g_lo`` differences the cell's lower-corner node against its axis-j
    neighbor, and ``g_hi`` does the mirrored thing from the upper corner.
    """
    N = values.shape[0]
    cells = tuple(m - 1 for m in grid.resolution)
    g_lo = np.empty((N, grid.n_dims, *cells))
    g_hi = np.empty((N, grid.n_dims, *cells))
    lead = (slice(None),)
    for j, h in enumerate(grid.spacing):
        g_lo[:, j] = (values[lead + _lower(grid, j)] - values[lead + _lower(grid, None)]) / h
        g_hi[:, j] = (values[lead + _upper(grid, None)] - values[lead + _upper(grid, j)]) / h
    return g_lo, g_hi


def _corner_divergence(w_lo: np.ndarray, w_hi: np.ndarray, grid: Grid) -> np.ndarray:
    """Adjoint of ``cell_gradients``: node array, zeroed at boundary nodes."""
    N = w_lo.shape[0]
    out = np.zeros((N, *grid.resolution))
    lead = (slice(None),)
    for j, h in enumerate(grid.spacing):
        out[lead + _lower(grid, j)] += w_lo[:, j] / h
        out[lead + _lower(grid, None)] -= w_lo[:, j] / h
        out[lead + _upper(grid, None)] += w_hi[:, j] / h
        out[lead + _upper(grid, j)] -= w_hi[:, j] / h
    out *= 0.5
    out[:, grid.boundary_mask] = 0.0
    return out


def _cell_corner_mean(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Mean of a nodal quantity over each cell's two extreme corners."""
    return 0.5 * (values[_lower(grid, None)] + values[_upper(grid, None)])


def energy(u: VectorField, f: VectorField, p: float, mu: float) -> float:
    """Discrete flux energy J(u) = sum_cells [psi(|grad u|) - f.u] * cellvol."""
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    grid = u.grid
    g_lo, g_hi = cell_gradients(u.values, grid)
    s_lo = np.sqrt((g_lo * g_lo).sum(axis=(0, 1)))
    s_hi = np.sqrt((g_hi * g_hi).sum(axis=(0, 1)))
    density = 0.5 * (psi(s_lo, p, mu) + psi(s_hi, p, mu))
    data = _cell_corner_mean((f.values * u.values).sum(axis=0), grid)
    return float(((density - data) * grid.cell_volume).sum())


def energy_gradient(u: VectorField, f: VectorField, p: float, mu: float) -> VectorField:
    """Exact gradient of the discrete energy w.r.t. interior node values.

    Equals minus the discrete divergence of the flux minus f on interior
    nodes and 0 on the boundary; the divergence is the negative adjoint of
    the cell gradient map, so the pairing with any Dirichlet-conforming test
    field reproduces the weak form exactly.
    """
    grid = u.grid
    g_lo, g_hi = cell_gradients(u.values, grid)
    out = _corner_divergence(_flux(g_lo, p, mu), _flux(g_hi, p, mu), grid)
    out[:, grid.interior_mask] -= f.values[:, grid.interior_mask]
    return VectorField(grid, out)


def _inner(a: VectorField, b: VectorField) -> float:
    return float((a.values * b.values).sum() * a.grid.cell_volume)


def minimize(
    f: VectorField,
    p: float,
    mu: float,
    tol: float,
    max_iters: int = 2000,
    x0: VectorField | None = None,
    lin_tol: float = 1e-10,
) -> tuple[VectorField, EnergyReport]:
    """Minimize the flux energy by preconditioned descent with backtracking.

    The descent direction is the negative gradient preconditioned by one
    inverse-Laplacian solve (plain gradient descent in the discrete H^1
    metric), which keeps every step a descent step.  The line search works on
    the directional derivative (secant iteration toward the one-dimensional
    stationary point) rather than on raw energy differences: the energy is
    convex along any ray, so the derivative is monotone in the step size, and
    unlike energy differences it does not drown in float64 rounding near the
    minimum.  A rejection of any measurably increasing step keeps the energy
    sequence nonincreasing up to float64 resolution.  Converged means the
    discrete L^2 gradient norm fell below ``tol * max(1, ||f||_2)``.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    grid = f.grid
    u = enforce_dirichlet(x0) if x0 is not None else zeros_field(grid, f.components)
    target = tol * max(1.0, lq_norm(f, 2.0))
    vol = grid.cell_volume
    J = energy(u, f, p, mu)
    floor = 8.0 * np.finfo(np.float64).eps
    t_init = 1.0
    iters = 0
    g = energy_gradient(u, f, p, mu)
    gn = lq_norm(g, 2.0)
    for iters in range(max_iters + 1):
        if gn <= target:
            return u, EnergyReport(J, gn, iters, True)
        precond, _ = solve_poisson(grid, g, lin_tol)
        step = -precond.values
        slope0 = float((g.values * step).sum() * vol)
        if slope0 >= 0:  # fallback, cannot happen with an SPD preconditioner
            step = -g.values
            slope0 = float((g.values * step).sum() * vol)

        def probe(t: float):
            cand = VectorField(grid, u.values + t * step)
            gc = energy_gradient(cand, f, p, mu)
            return cand, gc, float((gc.values * step).sum() * vol)

        t = t_init
        t_lo, phi_lo = 0.0, slope0
        t_hi, phi_hi = None, None
        cand, gc, phi = probe(t)
        for _ in range(10):
            if abs(phi) <= 0.25 * abs(slope0):
                break
            if phi > 0:
                t_hi, phi_hi = t, phi
            else:
                t_lo, phi_lo = t, phi
            if t_hi is None:
                t = 2.0 * t
            else:
                t_sec = t_lo + (t_hi - t_lo) * phi_lo / (phi_lo - phi_hi)
                lo_pad = t_lo + 0.05 * (t_hi - t_lo)
                hi_pad = t_hi - 0.05 * (t_hi - t_lo)
                t = min(max(t_sec, lo_pad), hi_pad)
            cand, gc, phi = probe(t)

        J_cand = energy(cand, f, p, mu)
        backtracks = 0
        while J_cand > J + floor * max(abs(J), 1.0) and backtracks < 60:
            t *= 0.5
            cand = VectorField(grid, u.values + t * step)
            J_cand = energy(cand, f, p, mu)
            gc = None
            backtracks += 1
        if backtracks >= 60:
            break
        u, J = cand, J_cand
        g = gc if gc is not None else energy_gradient(u, f, p, mu)
        gn = lq_norm(g, 2.0)
        t_init = t
    return u, EnergyReport(J, gn, iters, False)


def manufactured_problem(
    u_exact_fn: Callable,
    p: float,
    mu: float,
    grid: Grid,
    discretization: str,
    sing_guard: float = 1e-12,
) -> tuple[VectorField, VectorField]:
    """Build (u_exact, f) so the sampled field solves the chosen discrete system.

    ``discretization="nondivergence"`` applies the nodal central-difference
    operator of the fixed-point solver (requires mu > 0);
    ``discretization="variational"`` applies the cell-flux divergence of the
    energy oracle.  Either way f is an exact discrete datum for u_exact.
    """
    if discretization not in ("nondivergence", "variational"):
        raise ValueError(f"unknown discretization {discretization!r}")
    if discretization == "nondivergence" and mu == 0.0:
        raise ValueError("nondivergence manufacturing requires mu > 0")
    probe = np.atleast_1d(np.asarray(u_exact_fn(*[0.0] * grid.n_dims), dtype=np.float64))
    u = field_from_fn(grid, probe.size, u_exact_fn)
    bmax = float(np.abs(u.values[:, grid.boundary_mask]).max())
    if bmax > 1e-12:
        raise ValueError(f"u_exact_fn must vanish on the boundary (max |u| = {bmax:.3e})")
    u = enforce_dirichlet(u)

    fvals = np.zeros_like(u.values)
    if discretization == "variational":
        g_lo, g_hi = cell_gradients(u.values, grid)
        fvals = _corner_divergence(_flux(g_lo, p, mu), _flux(g_hi, p, mu), grid)
    else:
        from .calculus import cubic_term  # local import avoids cycle at module load

        jv = jet(u)
        s = np.sqrt((jv.grad * jv.grad).sum(axis=(0, 1)))
        cub = cubic_term(jv).values
        with np.errstate(divide="ignore", invalid="ignore"):
            S = np.where(s >= sing_guard, cub / ((mu + s) * s), 0.0)
        fvals[:, grid.interior_mask] = (
            (-jv.lap - (p - 2.0) * S) * (mu + s) ** (p - 2.0)
        )[:, grid.interior_mask]
    return u, VectorField(grid, fvals)


def weak_residual(
    u: VectorField,
    f: VectorField,
    p: float,
    mu: float,
    test_count: int,
    seed: int,
) -> float:
    """Worst weak-form defect against random unit-normalized test fields.

    Each test field is a Dirichlet-conforming sine sum normalized in discrete
    L^2; the residual is |sum_cells flux(u).grad(phi) - sum f.phi| evaluated
    with the oracle's cell discretization, so it vanishes exactly when the
    energy gradient does.
    """
    if test_count < 1:
        raise ValueError("test_count must be >= 1")
    grid = u.grid
    g_lo, g_hi = cell_gradients(u.values, grid)
    w_lo, w_hi = _flux(g_lo, p, mu), _flux(g_hi, p, mu)
    worst = 0.0
    for t in range(test_count):
        rng = np.random.default_rng([seed, t])
        phi = random_sine_field(grid, u.components, rng)
        norm = lq_norm(phi, 2.0)
        if norm < 1e-14:
            continue
        p_lo, p_hi = cell_gradients(phi.values, grid)
        lhs = 0.5 * ((w_lo * p_lo).sum() + (w_hi * p_hi).sum()) * grid.cell_volume
        rhs = (
            _cell_corner_mean((f.values * phi.values).sum(axis=0), grid).sum()
            * grid.cell_volume
        )
        worst = max(worst, abs(lhs - rhs) / norm)
    return worst
