"""Energy minimization at fixed epsilon and vortex (bad disc) detection.

The descent direction is the gradient preconditioned by the interior-node
matrix P = 2 (L_p + sigma h^2/eps^2 I), where L_p is the p-weighted graph
Laplacian of the Dirichlet term.  Each step is projected onto |u| <= 1 and
accepted by Armijo backtracking, so the energy trace never increases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import splu

from .errors import DegenerateModulusError
from .field import (
    BoundaryData,
    DiscreteEnergy,
    EnergyBreakdown,
    Field2D,
    Grid,
    inner,
    make_boundary,
    reference_map_at,
    winding_on_circle,
)
from .potential import PotentialSpec
from .weight import WeightSpec

log = logging.getLogger(__name__)

INITS = ("reference_map_seeded", "random", "continuation")
STEP_RULES = ("backtracking", "fixed")


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float
    n: int = 128
    domain_radius: float = 1.0
    degree: int = 1
    phase_offset: float = 0.0
    max_iters: int = 4000
    step_rule: str = "backtracking"
    step: float = 1.0
    tolerance: float = 1e-9
    grad_tolerance: float = 1e-7
    patience: int = 5
    init: str = "reference_map_seeded"
    seed: int = 0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class MinimizeResult:
    field: Field2D
    trace: list[tuple[float, float]]
    final: EnergyBreakdown
    potential_budget: float
    converged: bool
    grad_norm: float
    iterations: int

    @property
    def energies(self) -> np.ndarray:
        return np.array([a + b for a, b in self.trace])


def seed_points(weight: WeightSpec | None, degree: int, epsilon: float) -> list[tuple[tuple[float, float], int]]:
    """Degree-one seeds: per site, on a ring of radius T_eps/2 (d >= 2) or at the site."""
    if degree == 0:
        return []
    sign = 1 if degree > 0 else -1
    sites = list(weight.sites) if weight is not None and weight.sites else []
    centers = [(s.b, s.s) for s in sites] or [((0.0, 0.0), 2.0)]
    counts = [0] * len(centers)
    for k in range(abs(degree)):
        counts[k % len(centers)] += 1
    pts = []
    for (b, s), dk in zip(centers, counts):
        T = math.log(1.0 / epsilon) ** (-1.0 / s) if epsilon < 1 else 0.5
        for j in range(dk):
            if dk == 1:
                pts.append(((b[0], b[1]), sign))
            else:
                th = 2 * math.pi * j / dk
                pts.append(((b[0] + 0.5 * T * math.cos(th), b[1] + 0.5 * T * math.sin(th)), sign))
    return pts


def seeded_field(grid: Grid, points, epsilon: float) -> np.ndarray:
    X, Y = grid.XY
    u = reference_map_at(points, X, Y) if points else np.ones(X.shape, complex)
    for (a, b), _ in points:
        u = u * np.tanh(np.hypot(X - a, Y - b) / epsilon)
    return u


def _preconditioner(D: DiscreteEnergy, sigma: float):
    grid = D.grid
    free = D.free
    idx = -np.ones(free.shape, int)
    idx[free] = np.arange(int(free.sum()))
    m = int(free.sum())
    rows, cols, vals = [], [], []
    diag = np.zeros(m)

    def add(w, a_mask_slice, b_mask_slice):
        ia = idx[a_mask_slice]
        ib = idx[b_mask_slice]
        for i_self, i_other in ((ia, ib), (ib, ia)):
            sel = (w > 0) & (i_self >= 0)
            np.add.at(diag, i_self[sel], w[sel])
            off = sel & (i_other >= 0)
            rows.append(i_self[off])
            cols.append(i_other[off])
            vals.append(-w[off])

    add(D.wx, (slice(None), slice(None, -1)), (slice(None), slice(1, None)))
    add(D.wy, (slice(None, -1), slice(None)), (slice(1, None), slice(None)))
    diag += sigma * D.scale
    L = sp.coo_matrix((np.concatenate(vals + [diag]),
                       (np.concatenate(rows + [np.arange(m)]), np.concatenate(cols + [np.arange(m)]))),
                      shape=(m, m)).tocsc()
    lu = splu(2.0 * L)

    def apply(g: np.ndarray) -> np.ndarray:
        r = g[free]
        out = np.zeros_like(g)
        out[free] = lu.solve(np.ascontiguousarray(r.real)) + 1j * lu.solve(np.ascontiguousarray(r.imag))
        return out

    return apply


def _project(u: np.ndarray) -> np.ndarray:
    m = np.abs(u)
    return np.where(m > 1.0, u / np.maximum(m, 1e-300), u)


def minimize(config: SolveConfig, weight: WeightSpec | None, potential: PotentialSpec,
             boundary: BoundaryData | None = None, initial: np.ndarray | None = None) -> MinimizeResult:
    """Projected, preconditioned gradient descent with the boundary held fixed."""
    grid = Grid(config.n, config.domain_radius)
    if boundary is None:
        boundary = make_boundary(grid, config.degree, config.phase_offset)
    if config.init == "continuation":
        if initial is None:
            raise ValueError("continuation needs an initial field")
        u = np.asarray(initial, complex)
    elif config.init == "random":
        rng = np.random.default_rng(config.seed)
        u = rng.uniform(0, 1, grid.XY[0].shape) * np.exp(2j * math.pi * rng.uniform(size=grid.XY[0].shape))
    else:
        u = seeded_field(grid, seed_points(weight, boundary.degree, config.epsilon), config.epsilon)
    f0 = Field2D(grid, _project(u), config.epsilon, boundary)
    u = f0.values
    D = DiscreteEnergy(grid, weight, potential, config.epsilon)
    precond = _preconditioner(D, config.sigma)

    e = D(u)
    E = e.total
    trace = [(e.weighted_dirichlet, e.potential_term)]
    alpha = config.step
    quiet = 0
    converged = False
    g = D.gradient(u)
    it = 0
    for it in range(1, config.max_iters + 1):
        d = -precond(g)
        slope = inner(g, d)
        if slope >= 0 or math.sqrt(-slope) <= config.grad_tolerance * max(math.sqrt(abs(E)), 1.0):
            converged = True
            break
        if config.step_rule == "fixed":
            u_new = _project(u + config.step * d)
            e_new = D(u_new)
        else:
            a = min(2.0 * alpha, 1.0)
            while True:
                u_new = _project(u + a * d)
                e_new = D(u_new)
                if e_new.total <= E + 1e-4 * a * slope:
                    break
                a *= 0.5
                if a < 1e-12:
                    e_new = None
                    break
            if e_new is None:
                converged = True  # no descent possible along the preconditioned direction
                break
            alpha = a
        dec = E - e_new.total
        u, E = u_new, e_new.total
        trace.append((e_new.weighted_dirichlet, e_new.potential_term))
        g = D.gradient(u)
        if dec <= config.tolerance * max(abs(E), 1e-300):
            quiet += 1
            if quiet >= config.patience:
                converged = True
                break
        else:
            quiet = 0
    final = D(u)
    gn = math.sqrt(inner(g, g))
    if not converged:
        log.warning("minimize: max_iters=%d reached, gradient norm %.3e", config.max_iters, gn)
    return MinimizeResult(Field2D(grid, u, config.epsilon, boundary), trace, final,
                          final.potential_term, converged, gn, it)


def sweep(epsilons, base: SolveConfig, weight: WeightSpec | None, potential: PotentialSpec) -> list[MinimizeResult]:
    """Solve along decreasing epsilon, warm-starting each solve from the previous field."""
    results = []
    prev = None
    for eps in sorted(epsilons, reverse=True):
        if prev is None:
            cfg = replace(base, epsilon=eps)
            res = minimize(cfg, weight, potential)
        else:
            cfg = replace(base, epsilon=eps, init="continuation")
            res = minimize(cfg, weight, potential, initial=prev.field.values)
        results.append(res)
        prev = res
    return results


# --- bad discs -------------------------------------------------------------

@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float
    nu: int


@dataclass
class VortexSet:
    discs: list[Disc]
    epsilon: float
    threshold: float = 0.75
    lambda_mult: float = 4.0
    separation_factor: float = 8.0
    warnings: list[str] = field(default_factory=list)

    @property
    def total_degree(self) -> int:
        return sum(d.nu for d in self.discs)

    @property
    def centers(self) -> np.ndarray:
        return np.array([d.center for d in self.discs]).reshape(-1, 2)


def _refine_zero(grid: Grid, u: np.ndarray, iy: int, ix: int) -> tuple[float, float]:
    """One Newton step for u = 0 from the minimum-modulus node, kept within one cell."""
    x0, y0 = grid.coords[ix], grid.coords[iy]
    if not (0 < ix < grid.n and 0 < iy < grid.n):
        return x0, y0
    h = grid.h
    ux = (u[iy, ix + 1] - u[iy, ix - 1]) / (2 * h)
    uy = (u[iy + 1, ix] - u[iy - 1, ix]) / (2 * h)
    A = np.array([[ux.real, uy.real], [ux.imag, uy.imag]])
    b = np.array([u[iy, ix].real, u[iy, ix].imag])
    try:
        step = np.linalg.solve(A, -b)
    except np.linalg.LinAlgError:
        return x0, y0
    if np.hypot(*step) > h:
        return x0, y0
    return x0 + step[0], y0 + step[1]


def find_bad_discs(field: Field2D, lambda_mult: float = 4.0, separation_factor: float = 8.0,
                   threshold: float = 0.75) -> VortexSet:
    """Discs covering {|u| <= threshold}, merged until centers are separation_factor*lambda*eps apart."""
    grid, u, eps = field.grid, field.values, field.epsilon
    X, Y = grid.XY
    mod = np.abs(u)
    low = grid.interior & (mod <= threshold)
    labels, k = ndimage.label(low, structure=np.ones((3, 3)))
    base_r = lambda_mult * eps
    warn = []
    discs = []  # [cx, cy, radius, weight]
    near_edge = ndimage.binary_dilation(grid.boundary, structure=np.ones((3, 3)))
    for lab in range(1, k + 1):
        comp = labels == lab
        iy, ix = np.nonzero(comp)
        j = int(np.argmin(mod[iy, ix]))
        cx, cy = _refine_zero(grid, u, iy[j], ix[j])
        extent = float(np.max(np.hypot(X[comp] - cx, Y[comp] - cy))) + grid.h
        discs.append([cx, cy, max(base_r, extent)])
        if np.any(comp & near_edge):
            warn.append(f"component near ({cx:.3g}, {cy:.3g}) touches the boundary")

    sep = separation_factor * lambda_mult * eps
    merged = True
    while merged and len(discs) > 1:
        merged = False
        best = None
        for a in range(len(discs)):
            for b in range(a + 1, len(discs)):
                dist = math.hypot(discs[a][0] - discs[b][0], discs[a][1] - discs[b][1])
                if dist < sep or dist < discs[a][2] + discs[b][2]:
                    if best is None or dist < best[0]:
                        best = (dist, a, b)
        if best is not None:
            dist, a, b = best
            A, B = discs[a], discs[b]
            # smallest disc enclosing both
            if dist + B[2] <= A[2]:
                new = A
            elif dist + A[2] <= B[2]:
                new = B
            else:
                r = 0.5 * (dist + A[2] + B[2])
                t = (r - A[2]) / dist
                new = [A[0] + t * (B[0] - A[0]), A[1] + t * (B[1] - A[1]), r]
            discs = [d for i, d in enumerate(discs) if i not in (a, b)] + [new]
            merged = True

    out = []
    for i, (cx, cy, r) in enumerate(discs):
        rho = 2.0 * r
        for k2, (ox, oy, orad) in enumerate(discs):
            if k2 != i:
                rho = min(rho, math.hypot(ox - cx, oy - cy) - orad - grid.h)
        rho = min(rho, grid.domain_radius - math.hypot(cx, cy) - grid.h)
        rho = max(rho, r * 1.05)
        nu = None
        for trial in np.linspace(rho, r * 1.05, 5):
            try:
                nu = winding_on_circle(u, (cx, cy), trial, grid=grid)
                break
            except DegenerateModulusError:
                continue
        if nu is None:
            raise DegenerateModulusError(f"no admissible winding circle around ({cx:.3g}, {cy:.3g})")
        out.append(Disc((cx, cy), r, nu))
    return VortexSet(out, eps, threshold, lambda_mult, separation_factor, warn)


# --- clustering across a sweep ---------------------------------------------

@dataclass
class ClusterReport:
    epsilons: list[float]
    assignments: list[list[int]]  # site index per disc, per epsilon
    degrees: list[list[int]]  # d_k per site, per epsilon
    max_distance: list[list[float]]  # max_i |y_i - b_k| per site (nan if empty)
    pairwise: list[list[list[float]]]  # pairwise center distances per site
    unstable: bool
    notes: list[str] = field(default_factory=list)


def cluster_vortices(sets: list[VortexSet], weight: WeightSpec | None) -> ClusterReport:
    if len(sets) < 3:
        raise ValueError("cluster_vortices needs at least 3 sweep points")
    sites = [s.b for s in weight.sites] if weight is not None and weight.sites else [(0.0, 0.0)]
    S = np.array(sites, float)
    eps_l, assign_l, deg_l, maxd_l, pair_l = [], [], [], [], []
    for vs in sets:
        C = vs.centers
        a = [int(np.argmin(np.hypot(*(S - c).T))) for c in C]
        degs = [0] * len(sites)
        maxd = [float("nan")] * len(sites)
        pairs = [[] for _ in sites]
        for k in range(len(sites)):
            members = [i for i, ak in enumerate(a) if ak == k]
            degs[k] = sum(vs.discs[i].nu for i in members)
            if members:
                maxd[k] = float(max(np.hypot(*(C[i] - S[k])) for i in members))
            for x in range(len(members)):
                for y in range(x + 1, len(members)):
                    pairs[k].append(float(np.hypot(*(C[members[x]] - C[members[y]]))))
        eps_l.append(vs.epsilon)
        assign_l.append(a)
        deg_l.append(degs)
        maxd_l.append(maxd)
        pair_l.append(pairs)
    unstable = any(deg_l[i] != deg_l[i + 1] for i in range(len(deg_l) - 1))
    notes = ["site degrees change between consecutive epsilons"] if unstable else []
    return ClusterReport(eps_l, assign_l, deg_l, maxd_l, pair_l, unstable, notes)
