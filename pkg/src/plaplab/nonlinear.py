"""Linearized fixed-point solver for the regularized p-Laplacian system.

Given an iterate v, one application of the map solves the linear Dirichlet
problem

    -lap u = (p-2) * S(v) + f * (mu + |grad v|)^{2-p},

where S(v) is the gradient/Hessian/gradient triple contraction divided by
(mu + |grad v|) |grad v| (set to zero wherever |grad v| falls below the
singular-term guard).  A damped Picard driver iterates the map from zero,
tracking Laplacian norms against the invariant-ball radius

    R = a * (||f||_q + ||f||_{r(q)}^{1/(p-1)}),

with the radius coefficient ``a`` the minimal solution of
``1 + 2 C3^{2-p} a^{2-p} <= a delta`` and ``delta = 1 - (2-p) C2``.
Admissibility requires (2-p) * C2 < 1 for the inflated constants; mu must be
positive here, the singular limit is reached by the continuation module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .calculus import cubic_term, jet, lq_norm, w2q_norm
from .grid import Grid, VectorField, zeros_field
from .linear_elliptic import ConstantsReport, PoissonSolveReport, solve_poisson

__all__ = [
    "ConfigError",
    "SolverConfig",
    "TraceRow",
    "IterationTrace",
    "r_of_q",
    "admissible_p_min",
    "compute_a",
    "ball_radius",
    "apply_F",
    "solve_fixed_point",
    "verify_apriori",
]


class ConfigError(ValueError):
    """Invalid solver or experiment configuration."""


@dataclass(frozen=True)
class SolverConfig:
    p: float
    mu: float
    q: float
    picard_tol: float = 1e-8
    picard_max_iters: int = 200
    damping_theta: float = 1.0
    sing_guard: float = 1e-12
    safety_factor: float = 1.25
    lin_tol: float = 1e-12

    def validate(self, grid: Grid) -> None:
        if not 1.0 < self.p <= 2.0:
            raise ConfigError(f"p must lie in (1, 2], got {self.p}")
        if not 0.0 < self.mu <= 1.0:
            raise ConfigError(
                f"mu must lie in (0, 1] here (the singular limit mu=0 is reached "
                f"only by continuation), got {self.mu}"
            )
        if self.q < 2:
            raise ConfigError(f"q must be >= 2, got {self.q}")
        if self.q == grid.n_dims:
            raise ConfigError(f"q must differ from the spatial dimension n = {grid.n_dims}")
        if self.picard_tol <= 0:
            raise ConfigError("picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise ConfigError("picard_max_iters must be >= 1")
        if not 0.0 < self.damping_theta <= 1.0:
            raise ConfigError(f"damping_theta must lie in (0, 1], got {self.damping_theta}")
        if self.sing_guard < 0:
            raise ConfigError("sing_guard must be >= 0")
        if self.safety_factor < 1:
            raise ConfigError("safety_factor must be >= 1")
        if self.lin_tol <= 0:
            raise ConfigError("lin_tol must be positive")


@dataclass(frozen=True)
class TraceRow:
    k: int
    lap_norm_q: float
    update_norm_q: float
    theta: float
    ball_violation: bool


@dataclass(frozen=True)
class IterationTrace:
    rows: tuple[TraceRow, ...]
    converged: bool
    R: float
    a: float
    delta: float
    constants_raw: dict
    constants_used: dict

    def to_csv_text(self) -> str:
        lines = ["k,lap_norm_q,update_norm_q,theta,ball_violation"]
        for r in self.rows:
            lines.append(
                f"{r.k},{r.lap_norm_q:.17g},{r.update_norm_q:.17g},"
                f"{r.theta:.17g},{int(r.ball_violation)}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "R": self.R,
            "a": self.a,
            "delta": self.delta,
            "constants_raw": self.constants_raw,
            "constants_used": self.constants_used,
            "rows": [
                {
                    "k": r.k,
                    "lap_norm_q": r.lap_norm_q,
                    "update_norm_q": r.update_norm_q,
                    "theta": r.theta,
                    "ball_violation": r.ball_violation,
                }
                for r in self.rows
            ],
        }


def r_of_q(q: float, p: float, n: int) -> float:
    """Integrability exponent required of the datum f for W^{2,q} regularity."""
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    if q >= n:
        return float(q)
    return n * q / (n * (p - 1.0) + q * (2.0 - p))


def admissible_p_min(c2_used: float) -> float:
    """Smallest inadmissible p for a given constant: any p above it is admissible."""
    if c2_used <= 0:
        raise ValueError(f"C2 must be positive, got {c2_used}")
    return 2.0 - 1.0 / c2_used


def compute_a(delta: float, c3: float, p: float) -> float:
    """Minimal a with 1 + 2 c3^{2-p} a^{2-p} <= a delta, by bisection.

    The gap function a -> a delta - 1 - 2 c3^{2-p} a^{2-p} is convex with a
    single sign change for delta > 0 and p in (1, 2], so bisection to relative
    accuracy 1e-10 finds the minimal admissible a.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive (inadmissible p), got {delta}")
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    if c3 < 0:
        raise ValueError(f"c3 must be >= 0, got {c3}")
    if p == 2.0:
        return 3.0 / delta

    coef = 2.0 * c3 ** (2.0 - p)

    def gap(a: float) -> float:
        return a * delta - 1.0 - coef * a ** (2.0 - p)

    hi = max(3.0 / delta, 1.0)
    while gap(hi) < 0:
        hi *= 2.0
    lo = 0.0
    while (hi - lo) > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if gap(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def ball_radius(a: float, f: VectorField, q: float, p: float, n: int) -> float:
    """Invariant-ball radius R = a (||f||_q + ||f||_{r(q)}^{1/(p-1)})."""
    if a <= 0:
        raise ValueError(f"a must be positive, got {a}")
    r = r_of_q(q, p, n)
    return a * (lq_norm(f, q) + lq_norm(f, r) ** (1.0 / (p - 1.0)))


def _singular_quotient(v_jet, mu: float, sing_guard: float) -> tuple[np.ndarray, np.ndarray]:
    """S(v) and the nodal gradient magnitude; S = 0 below the guard."""
    s = np.sqrt((v_jet.grad * v_jet.grad).sum(axis=(0, 1)))
    cub = cubic_term(v_jet).values
    with np.errstate(divide="ignore", invalid="ignore"):
        S = np.where(s >= max(sing_guard, 1e-300), cub / ((mu + s) * s), 0.0)
    # the quotient is bounded by the Hessian magnitude; a gross violation
    # would mean the assembly is wired wrong, not a numerical accident
    s_mag = np.sqrt((S * S).sum(axis=0))
    h_mag = np.sqrt((v_jet.hess * v_jet.hess).sum(axis=(0, 1, 2)))
    if np.any(s_mag > h_mag * (1.0 + 1e-6) + 1e-290):
        raise FloatingPointError("singular quotient exceeded its Hessian bound")
    return S, s


def apply_F(
    v: VectorField,
    f: VectorField,
    cfg: SolverConfig,
    v_jet=None,
) -> tuple[VectorField, PoissonSolveReport]:
    """One application of the linearized map: assemble the rhs and solve Poisson."""
    cfg.validate(v.grid)
    if v_jet is None:
        v_jet = jet(v)
    S, s = _singular_quotient(v_jet, cfg.mu, cfg.sing_guard)
    rhs = (cfg.p - 2.0) * S + f.values * (cfg.mu + s) ** (2.0 - cfg.p)
    return solve_poisson(v.grid, VectorField(v.grid, rhs), cfg.lin_tol)


def solve_fixed_point(
    f: VectorField,
    cfg: SolverConfig,
    constants: ConstantsReport | None,
    v0: VectorField | None = None,
) -> tuple[VectorField, IterationTrace]:
    """Damped Picard iteration of the linearized map, started from zero.

    Stops when the Laplacian norm of the update falls below
    ``picard_tol * max(1, R)``; three consecutive update-norm increases halve
    the damping factor.  Iterates outside the invariant ball are flagged, not
    rejected.  On iteration exhaustion the best iterate (smallest update norm)
    is returned with ``converged = False``.

    At p = 2 the map does not depend on v at all, so a single application
    lands on the fixed point and the driver returns after one iteration.
    """
    grid = f.grid
    cfg.validate(grid)
    n = grid.n_dims
    q, p, sf = cfg.q, cfg.p, cfg.safety_factor

    if p == 2.0:
        delta, a = 1.0, 3.0
        raw: dict[str, float] = {}
        used: dict[str, float] = {}
    else:
        if constants is None:
            raise ConfigError("constants are required for p < 2")
        c2_raw = constants.c2_at(q)
        c3_raw = _c3_for_solver(constants, q, n)
        c2, c3 = sf * c2_raw, sf * c3_raw
        delta = 1.0 - (2.0 - p) * c2
        if delta <= 0:
            raise ConfigError(
                f"inadmissible configuration: (2-p)*C2 = {(2.0 - p) * c2:.6g} >= 1 "
                f"with safety factor {sf} (p must exceed {admissible_p_min(c2):.6g})"
            )
        a = compute_a(delta, c3, p)
        raw = {"C2": c2_raw, "C3": c3_raw}
        used = {"C2": c2, "C3": c3}
    R = ball_radius(a, f, q, p, n)
    stop = cfg.picard_tol * max(1.0, R)

    v = v0 if v0 is not None else zeros_field(grid, f.components)
    if not v.is_dirichlet_conforming():
        raise ConfigError("initial iterate must be Dirichlet-conforming")
    jv = jet(v)

    if p == 2.0:
        u, rep = solve_poisson(grid, f, cfg.lin_tol)
        ju = jet(u)
        lap_v = lq_norm(jv.lap, q, grid)
        update = lq_norm(ju.lap - jv.lap, q, grid)
        rows = (
            TraceRow(0, lap_v, update, cfg.damping_theta, bool(lap_v > R)),
        )
        return u, IterationTrace(rows, rep.converged, R, a, delta, raw, used)

    theta = cfg.damping_theta
    rows: list[TraceRow] = []
    best_update, best_v = math.inf, v
    prev_update = math.inf
    growth_streak = 0
    converged = False
    for k in range(cfg.picard_max_iters):
        lap_v = lq_norm(jv.lap, q, grid)
        u, rep = apply_F(v, f, cfg, v_jet=jv)
        v_new = VectorField(grid, (1.0 - theta) * v.values + theta * u.values)
        jv_new = jet(v_new)
        update = lq_norm(jv_new.lap - jv.lap, q, grid)
        rows.append(TraceRow(k, lap_v, update, theta, bool(lap_v > R)))
        if update < best_update:
            best_update, best_v = update, v_new
        v, jv = v_new, jv_new
        if not rep.converged:
            break
        if update <= stop:
            converged = True
            break
        if update > prev_update:
            growth_streak += 1
            if growth_streak >= 3:
                theta = max(theta / 2.0, 1e-4)
                growth_streak = 0
        else:
            growth_streak = 0
        prev_update = update
    result = v if converged else best_v
    return result, IterationTrace(tuple(rows), converged, R, a, delta, raw, used)


def _c3_for_solver(constants: ConstantsReport, q: float, n: int) -> float:
    """C3 lookup for the driver; q = 2 with n >= 3 uses the Sobolev pair q* = 2n/(n-2)."""
    if q == 2.0 and n >= 3:
        if 2.0 in constants.C3_of_q:
            return constants.C3_of_q[2.0]
        raise ConfigError(
            "driver at q = 2 with n >= 3 needs a C3 value for q = 2; "
            "estimate it via the q < n embedding branch and include it in the report"
        )
    return constants.c3_at(q)


def verify_apriori(u: VectorField, f: VectorField, cfg: SolverConfig) -> float:
    """Ratio of the W^{2,q} norm of u to ||f||_q + ||f||_{r(q)}^{1/(p-1)}.

    Returns NaN when f vanishes (ratio undefined); boundedness across
    experiment families is the caller's check.
    """
    q, p, n = cfg.q, cfg.p, u.grid.n_dims
    denom = lq_norm(f, q) + lq_norm(f, r_of_q(q, p, n)) ** (1.0 / (p - 1.0))
    if denom == 0.0:
        return math.nan
    return w2q_norm(u, q) / denom
