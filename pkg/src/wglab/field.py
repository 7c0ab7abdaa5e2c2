"""Complex order-parameter fields on a disc discretized by a masked square grid.

Nodes sit at ``-R + h*i`` for ``i = 0..n`` in each direction (``h = 2R/n``);
arrays are indexed ``[iy, ix]``.  Interior nodes satisfy ``|x| < R``; boundary
nodes are the non-interior 4-neighbours of interior nodes and carry the
Dirichlet data.  The discrete energy is

    sum_edges p(midpoint) |u_a - u_b|^2  +  h^2 eps^-2 sum_nodes J(1 - |u|^2)

over edges with both ends active and at least one end interior.
"""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import CoincidentPointsError, DegenerateModulusError
from .potential import J_array, PotentialSpec, dJ_array
from .weight import WeightSpec, eval_p

log = logging.getLogger(__name__)

MIN_CONTOUR_MODULUS = 0.1
SNAPSHOT_HEADER = struct.Struct("<qdd")

Region = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    domain_radius: float = 1.0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("grid needs n >= 4 cells per side")
        if not self.domain_radius > 0:
            raise ValueError("domain_radius must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.domain_radius / self.n

    @cached_property
    def coords(self) -> np.ndarray:
        return -self.domain_radius + self.h * np.arange(self.n + 1)

    @cached_property
    def XY(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.coords, self.coords)

    @cached_property
    def interior(self) -> np.ndarray:
        X, Y = self.XY
        return X * X + Y * Y < self.domain_radius**2

    @cached_property
    def boundary(self) -> np.ndarray:
        inn = self.interior
        near = np.zeros_like(inn)
        near[1:, :] |= inn[:-1, :]
        near[:-1, :] |= inn[1:, :]
        near[:, 1:] |= inn[:, :-1]
        near[:, :-1] |= inn[:, 1:]
        return near & ~inn

    @cached_property
    def active(self) -> np.ndarray:
        return self.interior | self.boundary

    @cached_property
    def boundary_order(self) -> tuple[np.ndarray, np.ndarray]:
        """Boundary node indices (iy, ix) sorted by polar angle: one closed loop."""
        iy, ix = np.nonzero(self.boundary)
        ang = np.arctan2(self.coords[iy], self.coords[ix])
        k = np.argsort(ang, kind="stable")
        return iy[k], ix[k]

    def mask(self) -> np.ndarray:
        """0 exterior, 1 interior, 2 boundary."""
        return self.interior.astype(np.int8) + 2 * self.boundary.astype(np.int8)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    degree: int
    phase_offset: float
    samples: np.ndarray  # unit complex, in Grid.boundary_order

    def winding(self) -> int:
        return _loop_winding(self.samples)


def make_boundary(grid: Grid, d: int, phase_offset: float = 0.0) -> BoundaryData:
    """g = exp(i(d theta + offset)) at the boundary nodes."""
    iy, ix = grid.boundary_order
    theta = np.arctan2(grid.coords[iy], grid.coords[ix])
    g = np.exp(1j * (d * theta + phase_offset))
    return BoundaryData(int(d), float(phase_offset), g)


@dataclass(eq=False)
class Field2D:
    grid: Grid
    values: np.ndarray
    epsilon: float
    boundary: BoundaryData | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n + 1, self.grid.n + 1):
            raise ValueError("values must have shape (n+1, n+1)")
        v[~self.grid.active] = 0.0
        if self.boundary is not None:
            iy, ix = self.grid.boundary_order
            v[iy, ix] = self.boundary.samples
        self.values = v

    def with_values(self, values: np.ndarray) -> "Field2D":
        return Field2D(self.grid, values, self.epsilon, self.boundary)

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


@dataclass(frozen=True)
class EnergyBreakdown:
    weighted_dirichlet: float
    potential_term: float

    @property
    def total(self) -> float:
        return self.weighted_dirichlet + self.potential_term


class DiscreteEnergy:
    """Edge weights and masks for one (grid, weight, potential, eps, region)."""

    def __init__(self, grid: Grid, weight: WeightSpec | None, potential: PotentialSpec, epsilon: float,
                 region: Region | None = None):
        self.grid, self.potential, self.epsilon = grid, potential, float(epsilon)
        act, inn = grid.active, grid.interior
        c, h = grid.coords, grid.h
        # x-edges join [iy, ix] and [iy, ix+1]; y-edges join [iy, ix] and [iy+1, ix]
        ex = act[:, :-1] & act[:, 1:] & (inn[:, :-1] | inn[:, 1:])
        ey = act[:-1, :] & act[1:, :] & (inn[:-1, :] | inn[1:, :])
        mxX, mxY = np.meshgrid(0.5 * (c[:-1] + c[1:]), c)
        myX, myY = np.meshgrid(c, 0.5 * (c[:-1] + c[1:]))
        if region is not None:
            ex &= region(mxX, mxY)
            ey &= region(myX, myY)
        px = eval_p(weight, mxX, mxY) if weight is not None else np.ones(mxX.shape)
        py = eval_p(weight, myX, myY) if weight is not None else np.ones(myX.shape)
        self.wx = np.where(ex, px, 0.0)
        self.wy = np.where(ey, py, 0.0)
        nodes = act.copy()
        if region is not None:
            X, Y = grid.XY
            nodes &= region(X, Y)
        self.node_mask = nodes
        self.free = inn.copy()
        self.scale = h * h / self.epsilon**2

    def dirichlet(self, u: np.ndarray) -> float:
        dx = u[:, 1:] - u[:, :-1]
        dy = u[1:, :] - u[:-1, :]
        return float(np.sum(self.wx * (dx.real**2 + dx.imag**2)) + np.sum(self.wy * (dy.real**2 + dy.imag**2)))

    def potential_term(self, u: np.ndarray) -> float:
        t = 1.0 - (u.real**2 + u.imag**2)
        return float(self.scale * np.sum(J_array(self.potential, t[self.node_mask])))

    def __call__(self, u: np.ndarray) -> EnergyBreakdown:
        return EnergyBreakdown(self.dirichlet(u), self.potential_term(u))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """d/d(Re u) + i d/d(Im u) of the total; zero off the interior."""
        g = np.zeros_like(u)
        fx = 2.0 * self.wx * (u[:, :-1] - u[:, 1:])
        fy = 2.0 * self.wy * (u[:-1, :] - u[1:, :])
        g[:, :-1] += fx
        g[:, 1:] -= fx
        g[:-1, :] += fy
        g[1:, :] -= fy
        t = 1.0 - (u.real**2 + u.imag**2)
        jt = np.zeros(t.shape)
        jt[self.node_mask] = dJ_array(self.potential, t[self.node_mask])
        g -= 2.0 * self.scale * jt * u
        g[~self.free] = 0.0
        return g


def energy(field: Field2D, weight: WeightSpec | None, potential: PotentialSpec,
           region: Region | None = None) -> EnergyBreakdown:
    return DiscreteEnergy(field.grid, weight, potential, field.epsilon, region)(field.values)


def energy_gradient(field: Field2D, weight: WeightSpec | None, potential: PotentialSpec) -> np.ndarray:
    return DiscreteEnergy(field.grid, weight, potential, field.epsilon).gradient(field.values)


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real inner product on C viewed as R^2."""
    return float(np.sum(a.real * b.real + a.imag * b.imag))


# --- winding numbers -------------------------------------------------------

def _loop_winding(samples: np.ndarray) -> int:
    z = np.asarray(samples)
    steps = np.angle(np.roll(z, -1) / z)
    return int(round(float(np.sum(steps)) / (2 * math.pi)))


def winding_number(field: Field2D | np.ndarray, contour) -> int:
    """Degree along a closed loop of nodes, given as (iy, ix) pairs."""
    values = field.values if isinstance(field, Field2D) else np.asarray(field)
    idx = np.asarray(contour, int)
    z = values[idx[:, 0], idx[:, 1]]
    m = np.abs(z)
    if np.any(m < MIN_CONTOUR_MODULUS):
        raise DegenerateModulusError(f"|u| = {m.min():.3g} < {MIN_CONTOUR_MODULUS} on the contour")
    return _loop_winding(z)


def bilinear(grid: Grid, values: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    fx = (np.asarray(x) + grid.domain_radius) / grid.h
    fy = (np.asarray(y) + grid.domain_radius) / grid.h
    i0 = np.clip(np.floor(fx).astype(int), 0, grid.n - 1)
    j0 = np.clip(np.floor(fy).astype(int), 0, grid.n - 1)
    ax, ay = fx - i0, fy - j0
    v = values
    return ((1 - ax) * (1 - ay) * v[j0, i0] + ax * (1 - ay) * v[j0, i0 + 1]
            + (1 - ax) * ay * v[j0 + 1, i0] + ax * ay * v[j0 + 1, i0 + 1])


def circle_samples(grid: Grid, values: np.ndarray, center, radius: float) -> np.ndarray:
    m = 8 * math.ceil(2 * math.pi * radius / grid.h)
    th = np.linspace(0.0, 2 * math.pi, m, endpoint=False)
    return bilinear(grid, values, center[0] + radius * np.cos(th), center[1] + radius * np.sin(th))


def winding_on_circle(field: Field2D | np.ndarray, center, radius: float, grid: Grid | None = None) -> int:
    """Degree on a circle sampled bilinearly with 8*ceil(2 pi r/h) points."""
    if isinstance(field, Field2D):
        grid, values = field.grid, field.values
    else:
        values = np.asarray(field)
    z = circle_samples(grid, values, center, radius)
    m = np.abs(z)
    if np.any(m < MIN_CONTOUR_MODULUS):
        raise DegenerateModulusError(
            f"|u| = {m.min():.3g} < {MIN_CONTOUR_MODULUS} on circle r={radius:.4g} at {tuple(center)}")
    return _loop_winding(z)


# --- reference map ---------------------------------------------------------

def _nudged_points(grid: Grid | None, points):
    pts = [(complex(p[0], p[1]), int(d)) for p, d in points]
    for i in range(len(pts)):
        for k in range(i + 1, len(pts)):
            if abs(pts[i][0] - pts[k][0]) < 1e-12:
                raise CoincidentPointsError(f"points {i} and {k} coincide")
    if grid is None:
        return pts
    out = []
    for a, d in pts:
        fx = (a.real + grid.domain_radius) / grid.h
        fy = (a.imag + grid.domain_radius) / grid.h
        if abs(fx - round(fx)) < 1e-9 and abs(fy - round(fy)) < 1e-9:
            log.warning("point %s sits on a grid node; nudged by h/3", a)
            a = a + grid.h / 3 * (1 + 1j) / math.sqrt(2)
        out.append((a, d))
    return out


def reference_map_at(points, X, Y) -> np.ndarray:
    """prod ((z - a_i)/|z - a_i|)^d_i at arbitrary points."""
    Z = np.asarray(X) + 1j * np.asarray(Y)
    u = np.ones(Z.shape, complex)
    for a, d in _nudged_points(None, points):
        w = Z - a
        with np.errstate(invalid="ignore", divide="ignore"):
            q = w / np.abs(w)
        u *= np.where(np.abs(w) > 0, q, 1.0) ** d
    return u


def reference_map(grid: Grid, points) -> np.ndarray:
    """u0 on the grid's active nodes (zero elsewhere).  ``points``: [((x, y), d), ...]."""
    pts = _nudged_points(grid, points)
    X, Y = grid.XY
    u = reference_map_at([((a.real, a.imag), d) for a, d in pts], X, Y)
    u[~grid.active] = 0.0
    return u


# --- snapshots -------------------------------------------------------------

def write_snapshot(field: Field2D, path) -> None:
    """Binary: '<qdd' header (n, h, eps), then row-major (re, im) float64 pairs."""
    v = np.ascontiguousarray(field.values, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_HEADER.pack(field.grid.n, field.grid.h, field.epsilon))
        fh.write(v.view("<f8").tobytes())


def read_snapshot(path) -> tuple[int, float, float, np.ndarray]:
    data = Path(path).read_bytes()
    n, h, eps = SNAPSHOT_HEADER.unpack_from(data)
    vals = np.frombuffer(data, dtype="<f8", offset=SNAPSHOT_HEADER.size)
    if vals.size != 2 * (n + 1) ** 2:
        raise ValueError(f"snapshot size mismatch: {vals.size} floats for n={n}")
    return n, h, eps, vals.view("<c16").reshape(n + 1, n + 1).astype(complex)


def write_field_csv(field: Field2D, path) -> None:
    g = field.grid
    iy, ix = np.nonzero(g.active)
    v = field.values[iy, ix]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ix", "iy", "x", "y", "modulus", "phase"])
        for a, b, z in zip(ix, iy, v):
            w.writerow([a, b, f"{g.coords[a]:.12g}", f"{g.coords[b]:.12g}", f"{abs(z):.12g}", f"{np.angle(z):.12g}"])
