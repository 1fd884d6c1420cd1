"""Discrete differential operators and grid norms.

Central second-order differences everywhere: gradients by the two-point
centered stencil, pure second derivatives by the 3-point stencil, mixed ones
by the centered 4-point cross stencil.  Derivatives are defined at interior
nodes only; derivative arrays carry zeros at boundary nodes, so norms of
derivative tensors effectively sum over the interior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, VectorField

__all__ = [
    "Jet",
    "jet",
    "cubic_term",
    "lq_norm",
    "w2q_norm",
    "holder_seminorm",
]


@dataclass(frozen=True)
class Jet:
    """Cached discrete gradient, Hessian and Laplacian of a field.

    Shapes: ``grad`` is ``(N, n, *res)``, ``hess`` is ``(N, n, n, *res)``
    (symmetric in its two spatial slots), ``lap`` is ``(N, *res)``.
    """

    grid: Grid
    grad: np.ndarray
    hess: np.ndarray
    lap: np.ndarray


def _shifted(u: np.ndarray, grid: Grid, offsets: dict[int, int]) -> np.ndarray:
    """Interior block of node array ``u`` shifted by ``offsets[axis]`` nodes."""
    lead = u.ndim - grid.n_dims
    sel: list[slice] = [slice(None)] * lead
    for axis, m in enumerate(grid.resolution):
        d = offsets.get(axis, 0)
        sel.append(slice(1 + d, m - 1 + d))
    return u[tuple(sel)]


def jet(field: VectorField) -> Jet:
    """Gradient, Hessian and Laplacian at interior nodes (zeros on the boundary)."""
    grid = field.grid
    n, res, h = grid.n_dims, grid.resolution, grid.spacing
    u = field.values
    N = field.components
    inner = grid.interior

    grad = np.zeros((N, n, *res))
    hess = np.zeros((N, n, n, *res))
    lap = np.zeros((N, *res))

    center = _shifted(u, grid, {})
    for j in range(n):
        plus = _shifted(u, grid, {j: +1})
        minus = _shifted(u, grid, {j: -1})
        grad[(slice(None), j) + inner] = (plus - minus) / (2.0 * h[j])
        pure = (plus - 2.0 * center + minus) / h[j] ** 2
        hess[(slice(None), j, j) + inner] = pure
        lap[(slice(None),) + inner] += pure
    for j in range(n):
        for l in range(j + 1, n):
            cross = (
                _shifted(u, grid, {j: +1, l: +1})
                - _shifted(u, grid, {j: +1, l: -1})
                - _shifted(u, grid, {j: -1, l: +1})
                + _shifted(u, grid, {j: -1, l: -1})
            ) / (4.0 * h[j] * h[l])
            hess[(slice(None), j, l) + inner] = cross
            hess[(slice(None), l, j) + inner] = cross

    for arr in (grad, hess, lap):
        arr.setflags(write=False)
    return Jet(grid=grid, grad=grad, hess=hess, lap=lap)


def cubic_term(j: Jet) -> VectorField:
    """Triple contraction of gradient, Hessian, gradient.

    Component ``i`` at each node is
    ``sum_{j,l,k} (d_l u_k)(d^2_{jl} u_k)(d_j u_i)``.
    """
    contracted = np.einsum("kl...,kjl...->j...", j.grad, j.hess)
    out = np.einsum("j...,ij...->i...", contracted, j.grad)
    return VectorField(j.grid, out)


def lq_norm(field_or_tensor, q: float, grid: Grid | None = None) -> float:
    """Discrete L^q norm of node values with trapezoidal weights.

    The magnitude at a node is the full Euclidean norm over all non-spatial
    (leading) axes.  ``q = inf`` returns the max magnitude.  Boundary nodes are
    weighted by their cell volume halved once per extremal axis.
    """
    if isinstance(field_or_tensor, VectorField):
        values = field_or_tensor.values
        grid = field_or_tensor.grid
    else:
        values = np.asarray(field_or_tensor, dtype=np.float64)
        if grid is None:
            raise ValueError("grid is required when passing a raw array")
    if not math.isinf(q) and q < 1:
        raise ValueError(f"q must be >= 1 or inf, got {q}")
    lead = values.ndim - grid.n_dims
    if lead < 0 or values.shape[lead:] != grid.resolution:
        raise ValueError(f"values of shape {values.shape} do not live on grid {grid.resolution}")
    sq = values * values
    for _ in range(lead):
        sq = sq.sum(axis=0)
    mag = np.sqrt(sq)
    if math.isinf(q):
        return float(mag.max())
    return float((mag**q * grid.quad_weights).sum() ** (1.0 / q))


def w2q_norm(field: VectorField, q: float) -> float:
    """Discrete W^{2,q} norm: field + gradient + Hessian L^q norms."""
    j = jet(field)
    return (
        lq_norm(field.values, q, field.grid)
        + lq_norm(j.grad, q, field.grid)
        + lq_norm(j.hess, q, field.grid)
    )


def holder_seminorm(
    field: VectorField,
    alpha: float,
    max_pairs: int = 200_000,
    seed: int = 0,
) -> float:
    """Gradient Hoelder seminorm: max of |grad(x) - grad(y)| / |x-y|^alpha.

    Gradients come from the interior-node jet.  All interior node pairs are
    used when their count fits in ``max_pairs``; otherwise that many pairs are
    sampled uniformly at random (deterministic for a fixed seed).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    grid = field.grid
    inner = grid.interior
    g = jet(field).grad[(slice(None), slice(None)) + inner]
    P = int(np.prod(g.shape[2:]))
    g = g.reshape(-1, P)
    pos = grid.mesh[(slice(None),) + inner].reshape(grid.n_dims, P)

    n_all = P * (P - 1) // 2
    if n_all <= max_pairs:
        ii, jj = np.triu_indices(P, k=1)
    else:
        rng = np.random.default_rng([seed, P])
        ii = rng.integers(0, P, size=max_pairs)
        jj = rng.integers(0, P, size=max_pairs)
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]
        if ii.size == 0:
            return 0.0
    dg = np.sqrt(((g[:, ii] - g[:, jj]) ** 2).sum(axis=0))
    dx = np.sqrt(((pos[:, ii] - pos[:, jj]) ** 2).sum(axis=0))
    return float((dg / dx**alpha).max(initial=0.0))
