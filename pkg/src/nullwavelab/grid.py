"""Discrete grids and slices for wave fields.

Two grid modes:

* ``full3d`` — Cartesian (x, y, z) box, node-centered, spacing h.
* ``axisym2d`` — meridian half-plane (x, rho) of an axisymmetric field;
  the rho axis is cell-centered (rho_j = (j + 1/2) h) so the coordinate
  singularity at rho = 0 never falls on a node, and fields are extended
  evenly across the axis.

Spatial derivatives are 4th-order centered stencils; outer boundaries are
zero-filled (domains are sized so the boundary stays causally disconnected
from anything measured), with a periodic option for plane-wave test grids.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

GHOST = 3  # supports the 4th-order stencils plus Kreiss-Oliger dissipation

CFL_DEFAULT = 0.4

GridMode = Literal["full3d", "axisym2d"]


class GridError(ValueError):
    pass


class NonFiniteFieldError(RuntimeError):
    """NaN/Inf detected on a slice; carries diagnostic context."""


@dataclass(frozen=True)
class SpacetimeGrid:
    """Uniform grid on one Sigma_t slab family.

    ``origin`` holds the coordinate of interior index 0 along each stored
    axis; in axisym2d mode only x is stored there and rho starts at h/2.
    """

    mode: GridMode
    shape: tuple[int, ...]
    h: float
    dt: float
    origin: tuple[float, ...]
    boundary: Literal["causal", "periodic"] = "causal"
    cfl_bound: float = CFL_DEFAULT

    def __post_init__(self):
        if self.mode not in ("full3d", "axisym2d"):
            raise GridError(f"unknown grid mode {self.mode!r}")
        ndim = 3 if self.mode == "full3d" else 2
        if len(self.shape) != ndim or len(self.origin) != ndim - (1 if self.mode == "axisym2d" else 0):
            # axisym2d stores only the x-origin; rho is pinned to the axis
            if not (self.mode == "axisym2d" and len(self.origin) == 1 and len(self.shape) == 2):
                raise GridError(f"shape/origin rank mismatch for mode {self.mode}")
        if min(self.shape) < 2 * GHOST + 2:
            raise GridError(f"grid too small for stencil support: {self.shape}")
        if self.h <= 0 or self.dt <= 0:
            raise GridError("spacing and time step must be positive")
        if self.dt > self.cfl_bound * self.h + 1e-15:
            raise GridError(
                f"dt/h = {self.dt / self.h:.4f} violates the CFL bound {self.cfl_bound}"
            )

    # -- factories ----------------------------------------------------------

    @staticmethod
    def axisym(x_span: tuple[float, float], rho_max: float, h: float,
               cfl: float = CFL_DEFAULT, boundary: str = "causal") -> "SpacetimeGrid":
        nx = int(round((x_span[1] - x_span[0]) / h)) + 1
        nrho = int(round(rho_max / h))
        return SpacetimeGrid("axisym2d", (nx, nrho), h, cfl * h, (x_span[0],),
                             boundary=boundary, cfl_bound=cfl)

    @staticmethod
    def cartesian(spans: tuple[tuple[float, float], ...], h: float,
                  cfl: float = CFL_DEFAULT, boundary: str = "causal") -> "SpacetimeGrid":
        shape = tuple(int(round((hi - lo) / h)) + 1 for lo, hi in spans)
        origin = tuple(lo for lo, _ in spans)
        return SpacetimeGrid("full3d", shape, h, cfl * h, origin,
                             boundary=boundary, cfl_bound=cfl)

    # -- coordinates ---------------------------------------------------------

    def axis_coords(self, axis: int) -> np.ndarray:
        if self.mode == "axisym2d" and axis == 1:
            return (np.arange(self.shape[1]) + 0.5) * self.h
        return self.origin[axis] + np.arange(self.shape[axis]) * self.h

    def coordinate_arrays(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays matching the field shape."""
        axes = [self.axis_coords(i) for i in range(len(self.shape))]
        return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))

    def cell_volume_weights(self) -> np.ndarray:
        """Quadrature weight per node for volume integrals over Sigma_t."""
        if self.mode == "full3d":
            return np.full(self.shape, self.h**3)
        rho = self.axis_coords(1)[None, :]
        return np.broadcast_to(2.0 * np.pi * rho * self.h**2, self.shape).copy()

    def points4(self, t: float) -> np.ndarray:
        """(t,x,y,z) coordinates of every node, in meridian coords for axisym."""
        if self.mode == "full3d":
            x, y, z = np.meshgrid(*[self.axis_coords(i) for i in range(3)], indexing="ij")
        else:
            x, rho = np.meshgrid(self.axis_coords(0), self.axis_coords(1), indexing="ij")
            y, z = rho, np.zeros_like(rho)
        tt = np.full_like(x, t)
        return np.stack([tt, x, y, z], axis=-1)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def with_resolution(self, factor: int) -> "SpacetimeGrid":
        """Refined grid covering the same domain (h -> h/factor)."""
        if self.mode == "axisym2d":
            nx = (self.shape[0] - 1) * factor + 1
            nrho = self.shape[1] * factor
            shape = (nx, nrho)
        else:
            shape = tuple((n - 1) * factor + 1 for n in self.shape)
        return replace(self, shape=shape, h=self.h / factor, dt=self.dt / factor)


@dataclass
class FieldSlice:
    """Values of one field on one Sigma_t."""

    values: np.ndarray
    grid: SpacetimeGrid
    time: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def check_finite(self, context: str = "") -> None:
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise NonFiniteFieldError(
                f"non-finite value at index {tuple(bad)}, t={self.time:.6g}"
                + (f" ({context})" if context else "")
            )

    def copy(self) -> "FieldSlice":
        return FieldSlice(self.values.copy(), self.grid, self.time)

    @staticmethod
    def zeros(grid: SpacetimeGrid, t: float = 0.0) -> "FieldSlice":
        return FieldSlice(np.zeros(grid.shape), grid, t)

    @staticmethod
    def from_function(grid: SpacetimeGrid, fn: Callable, t: float = 0.0) -> "FieldSlice":
        """Sample fn(x, y, z) on the grid (axisym passes the meridian y=rho, z=0)."""
        pts = grid.points4(t)
        return FieldSlice(fn(pts[..., 1], pts[..., 2], pts[..., 3]), grid, t)


@dataclass
class WaveState:
    """Cauchy pair (phi, d_t phi) on a shared slice."""

    phi: FieldSlice
    pi: FieldSlice

    def __post_init__(self):
        if self.phi.grid is not self.pi.grid and self.phi.grid != self.pi.grid:
            raise GridError("phi and pi live on different grids")
        if abs(self.phi.time - self.pi.time) > 1e-12:
            raise GridError("phi and pi carry different time stamps")

    @property
    def grid(self) -> SpacetimeGrid:
        return self.phi.grid

    @property
    def time(self) -> float:
        return self.phi.time

    @staticmethod
    def zeros(grid: SpacetimeGrid, t: float = 0.0) -> "WaveState":
        return WaveState(FieldSlice.zeros(grid, t), FieldSlice.zeros(grid, t))

    def copy(self) -> "WaveState":
        return WaveState(self.phi.copy(), self.pi.copy())


# ---------------------------------------------------------------------------
# Ghost padding and stencils
# ---------------------------------------------------------------------------


def pad_with_ghosts(values: np.ndarray, grid: SpacetimeGrid, g: int = GHOST) -> np.ndarray:
    """Extend by g ghost layers per side: zeros at causal outer boundaries,
    wraparound if periodic, even reflection across the axis in axisym mode."""
    if grid.boundary == "periodic":
        return np.pad(values, g, mode="wrap")
    out = np.pad(values, g, mode="constant")
    if grid.mode == "axisym2d":
        # cell-centered rho: ghost j = -1-k mirrors j = k (even extension)
        out[:, :g] = out[:, 2 * g - 1:g - 1:-1]
    return out


_D1_W = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_W = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _apply_stencil(padded: np.ndarray, axis: int, weights: np.ndarray,
                   g: int, out_shape: tuple[int, ...]) -> np.ndarray:
    r = len(weights) // 2
    out = np.zeros(out_shape)
    for k, w in enumerate(weights):
        if w == 0.0:
            continue
        off = k - r
        sl = [slice(g, g + n) for n in out_shape]
        sl[axis] = slice(g + off, g + off + out_shape[axis])
        out += w * padded[tuple(sl)]
    return out


def fd_derivative(fld: FieldSlice, axis: int, order: int = 1) -> FieldSlice:
    """4th-order centered d/dx_axis or d^2/dx_axis^2 of a slice.

    Validity shrinks by the stencil radius near boundaries that are not
    exactly representable by the ghost extension; causal domains keep the
    outer band zero so the full array is usable in practice.
    """
    grid = fld.grid
    if not 0 <= axis < grid.ndim:
        raise GridError(f"axis {axis} out of range for {grid.ndim}-d grid")
    if order not in (1, 2):
        raise GridError("derivative order must be 1 or 2")
    padded = pad_with_ghosts(fld.values, grid)
    w = (_D1_W if order == 1 else _D2_W) / grid.h**order
    vals = _apply_stencil(padded, axis, w, GHOST, grid.shape)
    return FieldSlice(vals, grid, fld.time)


def fd_derivative_array(values: np.ndarray, grid: SpacetimeGrid, axis: int,
                        order: int = 1) -> np.ndarray:
    padded = pad_with_ghosts(values, grid)
    w = (_D1_W if order == 1 else _D2_W) / grid.h**order
    return _apply_stencil(padded, axis, w, GHOST, grid.shape)


def mixed_second_derivative(values: np.ndarray, grid: SpacetimeGrid,
                            axis_a: int, axis_b: int) -> np.ndarray:
    """d^2/(dx_a dx_b), a != b, via nested 4th-order first derivatives."""
    first = fd_derivative_array(values, grid, axis_a, 1)
    return fd_derivative_array(first, grid, axis_b, 1)


def laplacian(values: np.ndarray, grid: SpacetimeGrid) -> np.ndarray:
    """Flat 3D Laplacian; in axisym mode d_xx + d_rhorho + (1/rho) d_rho."""
    if grid.mode == "full3d":
        out = fd_derivative_array(values, grid, 0, 2)
        out += fd_derivative_array(values, grid, 1, 2)
        out += fd_derivative_array(values, grid, 2, 2)
        return out
    out = fd_derivative_array(values, grid, 0, 2)
    out += fd_derivative_array(values, grid, 1, 2)
    rho = grid.axis_coords(1)[None, :]
    out += fd_derivative_array(values, grid, 1, 1) / rho
    return out


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def slice_norm(fld: FieldSlice, kind: str = "L2", weight: Callable | None = None) -> float:
    """Discrete norms on Sigma_t; the axisym quadrature carries the 2 pi rho
    cell factor.  ``weight`` receives the node coordinate arrays (x, y, z)."""
    vals = fld.values
    if weight is not None:
        pts = fld.grid.points4(fld.time)
        w = weight(pts[..., 1], pts[..., 2], pts[..., 3])
        vals = vals * w
    if kind == "Linf":
        return float(np.max(np.abs(vals)))
    if kind == "L2":
        cell = fld.grid.cell_volume_weights()
        return float(np.sqrt(np.sum(vals * vals * cell)))
    raise GridError(f"unknown norm kind {kind!r}")


def grad_energy_norm(state: WaveState) -> float:
    """sqrt(|d_t phi|^2 + |grad phi|^2) in L^2 — the data energy norm."""
    g = state.grid
    cell = g.cell_volume_weights()
    total = np.sum(state.pi.values**2 * cell)
    for ax in range(g.ndim):
        d = fd_derivative_array(state.phi.values, g, ax, 1)
        total += np.sum(d * d * cell)
    return float(np.sqrt(total))


def spacelike_energy_density(state: WaveState) -> np.ndarray:
    """(1/2)(|d_t phi|^2 + |grad phi|^2) pointwise (axisym gradient includes
    only the meridian components; the azimuthal derivative vanishes)."""
    g = state.grid
    dens = state.pi.values**2
    for ax in range(g.ndim):
        d = fd_derivative_array(state.phi.values, g, ax, 1)
        dens = dens + d * d
    return 0.5 * dens


# ---------------------------------------------------------------------------
# Interpolation (4-point Lagrange per axis, 4th-order accurate)
# ---------------------------------------------------------------------------


def _lagrange_weights(frac: np.ndarray) -> np.ndarray:
    """Weights for nodes at offsets (-1, 0, 1, 2) around the base index."""
    s = frac
    w_m1 = -s * (s - 1.0) * (s - 2.0) / 6.0
    w_0 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
    w_p1 = -(s + 1.0) * s * (s - 2.0) / 2.0
    w_p2 = (s + 1.0) * s * (s - 1.0) / 6.0
    return np.stack([w_m1, w_0, w_p1, w_p2], axis=0)


def interpolate_slice(fld: FieldSlice, points: np.ndarray) -> np.ndarray:
    """Interpolate a slice at spatial points, shape (..., 3) in (x, y, z).

    Axisym slices interpolate in (x, rho) with rho = hypot(y, z); values
    outside the grid evaluate to 0 (causally dark region).
    """
    g = fld.grid
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 3)
    if g.mode == "axisym2d":
        coords = np.stack([flat[:, 0], np.hypot(flat[:, 1], flat[:, 2])], axis=1)
    else:
        coords = flat
    padded = pad_with_ghosts(fld.values, g)
    idx = []
    wts = []
    for ax in range(g.ndim):
        offset = 0.5 * g.h if (g.mode == "axisym2d" and ax == 1) else 0.0
        x0 = (g.origin[ax] if not (g.mode == "axisym2d" and ax == 1) else 0.0) + offset
        u = (coords[:, ax] - x0) / g.h
        base = np.floor(u).astype(int)
        frac = u - base
        inside = (base >= -1) & (base <= g.shape[ax] - 2)
        base = np.clip(base, -1, g.shape[ax] - 2)
        w = _lagrange_weights(frac)
        w[:, ~inside] = 0.0
        idx.append(base + GHOST)
        wts.append(w)
    out = np.zeros(flat.shape[0])
    if g.ndim == 2:
        for a in range(4):
            for b in range(4):
                out += (
                    wts[0][a] * wts[1][b]
                    * padded[idx[0] + (a - 1), idx[1] + (b - 1)]
                )
    else:
        for a in range(4):
            wa = wts[0][a]
            ia = idx[0] + (a - 1)
            for b in range(4):
                wab = wa * wts[1][b]
                ib = idx[1] + (b - 1)
                for c in range(4):
                    out += wab * wts[2][c] * padded[ia, ib, idx[2] + (c - 1)]
    return out.reshape(pts.shape[:-1])
