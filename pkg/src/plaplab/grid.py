"""Cartesian box grids and node-sampled vector fields with Dirichlet boundaries.

The domain is always an axis-aligned box ``[0, L_1] x ... x [0, L_n]`` with
``n in {2, 3}``, discretized by a uniform node-centered grid.  Boundary nodes
are exactly the nodes with an extremal index on some axis; homogeneous
Dirichlet data is prescribed by zeroing field values at those nodes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Grid",
    "VectorField",
    "make_grid",
    "field_from_fn",
    "enforce_dirichlet",
    "zeros_field",
    "random_sine_field",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform node-centered grid on a box, with Dirichlet boundary marking."""

    n_dims: int
    resolution: tuple[int, ...]
    extents: tuple[float, ...]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (m - 1) for L, m in zip(self.extents, self.resolution))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def node_count(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def interior_node_count(self) -> int:
        return int(np.prod([m - 2 for m in self.resolution]))

    @property
    def interior(self) -> tuple[slice, ...]:
        """Index tuple selecting the interior block of a node array."""
        return tuple(slice(1, -1) for _ in range(self.n_dims))

    def axes(self) -> list[np.ndarray]:
        return [
            np.linspace(0.0, L, m) for L, m in zip(self.extents, self.resolution)
        ]

    @cached_property
    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(n_dims, *resolution)``."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        out = np.stack(grids)
        out.setflags(write=False)
        return out

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.resolution, dtype=bool)
        for axis in range(self.n_dims):
            sel_lo = [slice(None)] * self.n_dims
            sel_lo[axis] = 0
            mask[tuple(sel_lo)] = True
            sel_hi = [slice(None)] * self.n_dims
            sel_hi[axis] = -1
            mask[tuple(sel_hi)] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = ~self.boundary_mask
        mask.setflags(write=False)
        return mask

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Trapezoidal node weights: cell volume, halved per extremal axis."""
        w = np.full(self.resolution, self.cell_volume)
        for axis in range(self.n_dims):
            sel_lo = [slice(None)] * self.n_dims
            sel_lo[axis] = 0
            w[tuple(sel_lo)] *= 0.5
            sel_hi = [slice(None)] * self.n_dims
            sel_hi[axis] = -1
            w[tuple(sel_hi)] *= 0.5
        w.setflags(write=False)
        return w


def make_grid(
    n_dims: int,
    resolution: Sequence[int],
    extents: Sequence[float],
) -> Grid:
    """Build a grid, validating dimension, node counts and box extents."""
    if n_dims not in (2, 3):
        raise ValueError(f"n_dims must be 2 or 3, got {n_dims}")
    resolution = tuple(int(m) for m in resolution)
    extents = tuple(float(L) for L in extents)
    if len(resolution) != n_dims or len(extents) != n_dims:
        raise ValueError("resolution and extents must have one entry per axis")
    if any(m < 3 for m in resolution):
        raise ValueError(f"resolution must be >= 3 per axis (no interior nodes): {resolution}")
    if any(L <= 0 for L in extents):
        raise ValueError(f"extents must be positive: {extents}")
    return Grid(n_dims=n_dims, resolution=resolution, extents=extents)


@dataclass(frozen=True)
class VectorField:
    """N-component scalar values at grid nodes, stored as ``(N, *resolution)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != self.grid.n_dims + 1 or vals.shape[1:] != self.grid.resolution:
            raise ValueError(
                f"values must have shape (N, *{self.grid.resolution}), got {vals.shape}"
            )
        if vals.shape[0] < 1:
            raise ValueError("field needs at least one component")
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def is_dirichlet_conforming(self) -> bool:
        return bool(np.all(self.values[:, self.grid.boundary_mask] == 0.0))

    def with_values(self, values: np.ndarray) -> "VectorField":
        return VectorField(self.grid, values)


def zeros_field(grid: Grid, components: int = 1) -> VectorField:
    return VectorField(grid, np.zeros((components, *grid.resolution)))


def field_from_fn(grid: Grid, components: int, fn: Callable) -> VectorField:
    """Sample ``fn(*coords) -> scalar or length-N sequence`` at every node.

    Boundary values are whatever ``fn`` returns there; no zeros are forced.
    """
    pts = grid.mesh.reshape(grid.n_dims, -1).T
    vals = np.empty((pts.shape[0], components))
    for i, x in enumerate(pts):
        out = np.asarray(fn(*x), dtype=np.float64)
        vals[i] = out if out.shape else np.full(components, float(out))
    return VectorField(grid, vals.T.reshape(components, *grid.resolution))


def enforce_dirichlet(field: VectorField) -> VectorField:
    """Copy of ``field`` with every boundary node set to zero."""
    vals = field.values.copy()
    vals[:, field.grid.boundary_mask] = 0.0
    return VectorField(field.grid, vals)


def random_sine_field(
    grid: Grid,
    components: int,
    rng: np.random.Generator,
    max_modes: int = 8,
    max_wavenumber: int | None = None,
) -> VectorField:
    """Random truncated sine sum, Dirichlet-conforming by construction.

    Draws up to ``max_modes`` product-sine modes with random integer
    wavenumbers and normally distributed amplitudes, mildly damped at high
    frequency so samples stay resolvable on the grid.
    """
    if max_wavenumber is None:
        max_wavenumber = max(1, min(10, (min(grid.resolution) - 1) // 3))
    n_modes = int(rng.integers(1, max_modes + 1))
    ks = rng.integers(1, max_wavenumber + 1, size=(n_modes, grid.n_dims))
    decay = rng.uniform(0.0, 1.5)
    amps = rng.standard_normal((n_modes, components))
    amps *= (ks**2).sum(axis=1, keepdims=True) ** (-0.5 * decay)
    vals = np.zeros((components, *grid.resolution))
    for m in range(n_modes):
        mode = np.ones(grid.resolution)
        for axis in range(grid.n_dims):
            mode = mode * np.sin(
                ks[m, axis] * np.pi * grid.mesh[axis] / grid.extents[axis]
            )
        vals += amps[m][(...,) + (None,) * grid.n_dims] * mode
    field = VectorField(grid, vals)
    # sine products are analytically zero on the box boundary; enforce exactly
    return enforce_dirichlet(field)


def save_field(field: VectorField, path: str | Path) -> None:
    """Dump a field: little-endian float64 binary plus a JSON sidecar.

    Values are written in component-major, then row-major node order; the
    sidecar at ``<path>.json`` records n_dims, resolution, extents, components.
    """
    path = Path(path)
    raw = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    _atomic_write_bytes(path, raw)
    meta = {
        "n_dims": field.grid.n_dims,
        "resolution": list(field.grid.resolution),
        "extents": list(field.grid.extents),
        "components": field.components,
    }
    _atomic_write_bytes(
        path.with_name(path.name + ".json"),
        json.dumps(meta, indent=2, sort_keys=True).encode("utf-8"),
    )


def load_field(path: str | Path) -> VectorField:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text("utf-8"))
    grid = make_grid(meta["n_dims"], meta["resolution"], meta["extents"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    expected = meta["components"] * grid.node_count
    if raw.size != expected:
        raise ValueError(f"field dump has {raw.size} values, expected {expected}")
    vals = raw.astype(np.float64).reshape(meta["components"], *grid.resolution)
    return VectorField(grid, vals)


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
