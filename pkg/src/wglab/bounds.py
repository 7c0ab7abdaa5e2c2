"""Explicit trial fields, the perforated-domain lower bound and energy fits.

Trial field for sites b_k with degrees d_k at a given eps::

    T_k = (log 1/eps)^(-1/s_k),  seeds x_j: d_k points on |x - b_k| = T_k/2
    u = m(x) * Phi(x)

Phi is the canonical harmonic phase on the disc of radius R with one
degree-one singularity at every seed: an image charge at R^2/conj(x_j) makes
Phi equal to g = exp(i(d theta + offset)) on |x| = R exactly.  The modulus m
equals 1 except on the core discs |x - x_j| < T_k/(10 d_k), where it is the
three-piece radial profile: linear on [0, lam eps], f0(r/eps) on
[lam eps, T_k/(20 d_k)], and a linear ramp to 1 on [T_k/(20 d_k), T_k/(10 d_k)].
lam is twice the dead-zone radius of f0.  At the dead-zone radius itself f0
either jumps or, for the quartic potential, has a square-root edge with
infinite Dirichlet energy; starting the profile piece further out avoids both.

Energies of trial fields are evaluated by composite quadrature (polar patches
around the seeds plus a polar rule on the whole disc with the patches cut out
by a smooth partition of unity), so the cores are resolved at any eps.
``build_trial_field`` samples the same field on a grid.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateModulusError, PreconditionError, ResolutionError
from .field import (
    DiscreteEnergy,
    EnergyBreakdown,
    Field2D,
    Grid,
    _loop_winding,
    make_boundary,
    reference_map_at,
    winding_on_circle,
)
from .iquant import RadialProfile, compute_I, solve_profile
from .minimizer import ClusterReport
from .potential import J_array, PotentialSpec
from .weight import WeightSpec, eval_p

log = logging.getLogger(__name__)

INNER_DIV = 20.0  # profile piece ends at T/(20 d_k)
OUTER_DIV = 10.0  # ramp ends at T/(10 d_k)
CORE_MULT = 2.0  # linear core radius in units of the dead-zone radius of f0
_N_THETA = 64


def i_evaluator(potential: PotentialSpec):
    """Cached R -> I(R) by quadrature."""
    return functools.lru_cache(maxsize=None)(lambda R: compute_I(potential, float(R)).value)


# --- trial plan ------------------------------------------------------------

@dataclass(frozen=True)
class SitePlan:
    b: tuple[float, float]
    d: int
    s: float


@dataclass(frozen=True)
class TrialPlan:
    sites: tuple[SitePlan, ...]
    epsilon: float
    eta0: float
    domain_radius: float = 1.0
    phase_offset: float = 0.0
    budget: float = 1.0  # c in I(R, c) for the core profiles

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if not 0 < self.epsilon < math.exp(-1):
            raise ValueError("trial plans need 0 < eps < 1/e")
        if any(sp.d < 0 for sp in self.sites) or self.degree < 1:
            raise ValueError("site degrees must be >= 0 with positive total")
        for k, sp in enumerate(self.sites):
            if sp.d and not self.T(k) < self.eta0:
                raise PreconditionError(f"T_eps={self.T(k):.4g} >= eta0={self.eta0:.4g} at site {k}")
        pts = self.seeds
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if math.dist(pts[i][0], pts[j][0]) == 0.0:
                    raise PreconditionError("seed points coincide")

    @classmethod
    def from_weight(cls, weight: WeightSpec, degrees, epsilon: float, phase_offset: float = 0.0,
                    budget: float = 1.0) -> "TrialPlan":
        if len(degrees) != len(weight.sites):
            raise ValueError("one degree per pinning site")
        sites = tuple(SitePlan(s.b, int(d), s.s) for s, d in zip(weight.sites, degrees))
        return cls(sites, epsilon, weight.eta0, weight.domain_radius, phase_offset, budget)

    @property
    def degree(self) -> int:
        return sum(sp.d for sp in self.sites)

    def T(self, k: int) -> float:
        return math.log(1.0 / self.epsilon) ** (-1.0 / self.sites[k].s)

    @property
    def seeds(self) -> list[tuple[tuple[float, float], int]]:
        """(x_j, site index) for every seed."""
        out = []
        for k, sp in enumerate(self.sites):
            rad = 0.5 * self.T(k)
            for j in range(sp.d):
                th = 2 * math.pi * j / sp.d
                out.append(((sp.b[0] + rad * math.cos(th), sp.b[1] + rad * math.sin(th)), k))
        return out

    def radii(self, k: int) -> tuple[float, float]:
        """(T/(20 d_k), T/(10 d_k))."""
        d = self.sites[k].d
        return self.T(k) / (INNER_DIV * d), self.T(k) / (OUTER_DIV * d)


# --- the trial field -------------------------------------------------------

@dataclass(frozen=True)
class _Core:
    profile: RadialProfile
    lam: float  # core radius in units of eps
    a: float  # modulus at lam eps
    r1: float
    r2: float
    z0: float  # modulus at r1


def _smooth_step(x):
    # C-infinity: 0 for x <= 0, 1 for x >= 1
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def _gl(a: float, b: float, n: int, panels: int = 1):
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


class TrialField:
    """The explicit upper-bound construction as a function of position."""

    def __init__(self, plan: TrialPlan, potential: PotentialSpec):
        self.plan = plan
        self.potential = potential
        self.centers = np.array([complex(*x) for x, _ in plan.seeds])
        self.site_of = [k for _, k in plan.seeds]
        eps = plan.epsilon
        self.cores: dict[int, _Core] = {}
        for k, sp in enumerate(plan.sites):
            if not sp.d:
                continue
            T = plan.T(k)
            prof = solve_profile(potential, T / eps, plan.budget)
            if prof.lam == 0.0:
                raise PreconditionError(f"budget constraint inactive at R={T / eps:.4g}; eps too large")
            lam = CORE_MULT * prof.r_tilde0
            r1, r2 = plan.radii(k)
            if not r1 > lam * eps:
                raise PreconditionError(
                    f"scales not ordered at site {k}: T/(20 d)={r1:.3g} <= lam eps={lam * eps:.3g}")
            a = self._profile_modulus(prof, np.array([lam]))[0]
            z0 = self._profile_modulus(prof, np.array([r1 / eps]))[0]
            self.cores[k] = _Core(prof, lam, float(a), r1, r2, float(z0))

    @staticmethod
    def _profile_modulus(prof: RadialProfile, rho: np.ndarray) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - prof.deficit_at(rho), 0.0, 1.0))

    # phase ------------------------------------------------------------------
    def phase_gradient(self, z: np.ndarray) -> np.ndarray:
        """F'/F; |grad phase|^2 = |F'/F|^2."""
        R2 = self.plan.domain_radius**2
        G = np.zeros(np.shape(z), complex)
        for c in self.centers:
            G += 1.0 / (z - c) - np.conj(c) / (R2 - np.conj(c) * z)
        return G

    def phase(self, z: np.ndarray) -> np.ndarray:
        R2 = self.plan.domain_radius**2
        ang = np.full(np.shape(z), self.plan.phase_offset)
        for c in self.centers:
            ang = ang + np.angle(z - c) + np.angle(1.0 - np.conj(c) * z / R2)
        return np.exp(1j * ang)

    def core_modulus(self, k: int, r: np.ndarray) -> np.ndarray:
        core = self.cores[k]
        eps = self.plan.epsilon
        r = np.asarray(r, float)
        out = np.ones_like(r)
        lin = r < core.lam * eps
        out[lin] = core.a * r[lin] / (core.lam * eps)
        mid = (~lin) & (r < core.r1)
        out[mid] = self._profile_modulus(core.profile, r[mid] / eps)
        ramp = (r >= core.r1) & (r < core.r2)
        out[ramp] = core.z0 + (r[ramp] - core.r1) / core.r1 * (1.0 - core.z0)
        return out

    def modulus(self, X, Y) -> np.ndarray:
        z = np.asarray(X, float) + 1j * np.asarray(Y, float)
        m = np.ones(z.shape)
        for c, k in zip(self.centers, self.site_of):
            r = np.abs(z - c)
            near = r < self.cores[k].r2
            m[near] = self.core_modulus(k, r[near])
        return m

    def __call__(self, X, Y) -> np.ndarray:
        z = np.asarray(X, float) + 1j * np.asarray(Y, float)
        return self.modulus(X, Y) * self.phase(z)

    # energy -----------------------------------------------------------------
    def energy(self, weight: WeightSpec | None, region_radius: float | None = None,
               hole_radius: float = 0.0) -> EnergyBreakdown:
        """Energy on B_region minus the discs of radius ``hole_radius`` around the seeds."""
        Rw = self.plan.domain_radius if region_radius is None else float(region_radius)
        if Rw > self.plan.domain_radius * (1 + 1e-12):
            raise ValueError("region radius exceeds the domain")
        p = (lambda x, y: np.full(np.shape(x), 1.0)) if weight is None else (lambda x, y: eval_p(weight, x, y))
        dir_core = pot_core = 0.0
        for j, (c, k) in enumerate(zip(self.centers, self.site_of)):
            if abs(c) + self.cores[k].r2 > Rw:
                raise PreconditionError("core disc leaves the integration region")
            dj, pj = self._core_energy(j, p, hole_radius)
            dir_core += dj
            pot_core += pj
        return EnergyBreakdown(dir_core + self._outer_dirichlet(p, Rw), pot_core)

    def _core_energy(self, j: int, p, r_lo: float) -> tuple[float, float]:
        c, k = self.centers[j], self.site_of[j]
        core = self.cores[k]
        eps = self.plan.epsilon
        th = 2 * np.pi * np.arange(_N_THETA) / _N_THETA
        e_th = np.exp(1j * th)[None, :]
        wth = 2 * np.pi / _N_THETA

        def angular(r):
            z = c + r[:, None] * e_th
            pv = p(z.real, z.imag)
            G2 = np.abs(self.phase_gradient(z)) ** 2
            return pv.sum(axis=1) * wth, (pv * G2).sum(axis=1) * wth * r**2

        D = P = 0.0
        # linear piece, u = r / (lam eps) on [0, 1]
        rc = core.lam * eps
        if r_lo < rc:
            u, w = _gl(r_lo / rc, 1.0, 24)
            r = u * rc
            Pbar, PG = angular(r)
            D += float(np.sum(w * core.a**2 * u * (Pbar + PG)))
            J = J_array(self.potential, 1.0 - core.a**2 * u**2)
            P += float(np.sum(w * 2 * np.pi * core.lam**2 * J * u))
        # profile piece in log r
        lo = max(r_lo, rc)
        if lo < core.r1:
            l0, l1 = math.log(lo / eps), math.log(core.r1 / eps)
            ell, w = _gl(l0, l1, 12, panels=max(2, int(math.ceil(3 * (l1 - l0)))))
            rho = np.exp(ell)
            m = self._profile_modulus(core.profile, rho)
            dl = 1e-5
            dm = (self._profile_modulus(core.profile, rho * math.exp(dl))
                  - self._profile_modulus(core.profile, rho * math.exp(-dl))) / (2 * dl)
            Pbar, PG = angular(rho * eps)
            D += float(np.sum(w * (Pbar * dm**2 + m**2 * PG)))
            t = core.profile.deficit_at(rho)
            P += float(np.sum(w * 2 * np.pi * J_array(self.potential, t) * rho**2))
        # ramp
        lo = max(r_lo, core.r1)
        if lo < core.r2:
            r, w = _gl(lo, core.r2, 32)
            zr = core.z0 + (r - core.r1) / core.r1 * (1.0 - core.z0)
            dz = (1.0 - core.z0) / core.r1
            Pbar, PG = angular(r)
            D += float(np.sum(w * (Pbar * dz**2 * r + zr**2 * PG / r)))
            J = J_array(self.potential, 1.0 - zr**2)
            P += float(np.sum(w * 2 * np.pi * J * r)) / eps**2
        return D, P

    def _patch_radii(self, Rw: float) -> np.ndarray:
        rad = []
        for j, c in enumerate(self.centers):
            others = [abs(c - o) for i, o in enumerate(self.centers) if i != j]
            r3 = 0.45 * min(others + [Rw - abs(c)])
            r2 = self.cores[self.site_of[j]].r2
            if not r3 > 2.0 * r2:
                raise PreconditionError("seed cores too close to each other or to the boundary")
            rad.append(r3)
        return np.array(rad)

    def _outer_dirichlet(self, p, Rw: float) -> float:
        """int p |grad Phi|^2 over B_Rw minus the core discs."""
        r3 = self._patch_radii(Rw)

        def chi(j, r):
            return 1.0 - _smooth_step((r - 0.5 * r3[j]) / (0.5 * r3[j]))

        total = 0.0
        nth = 128
        th = 2 * np.pi * np.arange(nth) / nth
        e_th = np.exp(1j * th)[None, :]
        for j, c in enumerate(self.centers):
            r2 = self.cores[self.site_of[j]].r2
            l0, l1 = math.log(r2), math.log(r3[j])
            ell, w = _gl(l0, l1, 16, panels=max(2, int(math.ceil(2 * (l1 - l0)))))
            r = np.exp(ell)
            z = c + r[:, None] * e_th
            g = p(z.real, z.imag) * np.abs(self.phase_gradient(z)) ** 2
            total += float(np.sum(w * chi(j, r) * r**2 * g.sum(axis=1))) * 2 * np.pi / nth
        # the rest of the disc, patches removed by the partition of unity
        r, w = _gl(0.0, Rw, 8, panels=96)
        nth = 512
        th = 2 * np.pi * np.arange(nth) / nth
        z = r[:, None] * np.exp(1j * th)[None, :]
        keep = np.ones(z.shape)
        for j, c in enumerate(self.centers):
            keep *= 1.0 - chi(j, np.abs(z - c))
        live = keep > 0
        g = np.zeros(z.shape)
        g[live] = keep[live] * p(z.real[live], z.imag[live]) * np.abs(self.phase_gradient(z[live])) ** 2
        total += float(np.sum(w * r * g.sum(axis=1))) * 2 * np.pi / nth
        return total

    def winding(self, center, radius: float, n: int = 2048) -> int:
        th = 2 * np.pi * np.arange(n) / n
        z = complex(*center) + radius * np.exp(1j * th)
        vals = self(z.real, z.imag)
        if np.min(np.abs(vals)) < 1e-12:
            raise DegenerateModulusError("trial field vanishes on the contour")
        return _loop_winding(vals)


def harmonic_dirichlet(centers, degrees, region_radius: float, hole_radius: float,
                       domain_radius: float | None = None, n: int = 4096) -> float:
    """int |grad phi|^2 over B_region minus the discs B_hole(center) for a point-vortex phase.

    With ``domain_radius`` the phase carries image charges at R^2/conj(a)
    (the canonical harmonic phase of ``TrialField``); without it, it is the
    bare reference map prod ((z - a)/|z - a|)^d.  The conjugate function
    psi = log|F| is harmonic, so the integral is the boundary sum of psi dpsi/dn.
    """
    a = np.asarray([complex(*c) for c in centers])
    d = np.asarray(degrees, float)

    def G(z):
        out = np.zeros(z.shape, complex)
        for ai, di in zip(a, d):
            out += di / (z - ai)
            if domain_radius is not None:
                out -= di * np.conj(ai) / (domain_radius**2 - np.conj(ai) * z)
        return out

    def psi(z):
        out = np.zeros(z.shape)
        for ai, di in zip(a, d):
            out += di * np.log(np.abs(z - ai))
            if domain_radius is not None:
                out += di * np.log(np.abs(1.0 - np.conj(ai) * z / domain_radius**2))
        return out

    th = 2 * np.pi * np.arange(n) / n
    nu = np.exp(1j * th)
    z = region_radius * nu
    total = float(np.sum(psi(z) * np.real(G(z) * nu))) * region_radius * 2 * np.pi / n
    for ai in a:
        z = ai + hole_radius * nu
        total -= float(np.sum(psi(z) * np.real(G(z) * nu))) * hole_radius * 2 * np.pi / n
    return total


def build_trial_field(plan: TrialPlan, source, grid: Grid) -> Field2D:
    """Sample the trial field on ``grid``.

    ``source`` is a PotentialSpec (profiles are solved from it) or a TrialField.
    The grid must resolve the core: h <= lam eps / 4 and T/(20 d_k) > 2h.
    """
    trial = source if isinstance(source, TrialField) else TrialField(plan, source)
    if abs(grid.domain_radius - plan.domain_radius) > 1e-12:
        raise ValueError("grid and plan disagree on the domain radius")
    h = grid.h
    for k, core in trial.cores.items():
        if h > core.lam * plan.epsilon / 4:
            raise ResolutionError(f"h={h:.3g} does not resolve lam eps={core.lam * plan.epsilon:.3g} (need h <= lam eps/4)")
        if not core.r1 > 2 * h:
            raise ResolutionError(f"T/(20 d)={core.r1:.3g} is not above 2h={2 * h:.3g}")
    X, Y = grid.XY
    u = np.zeros(X.shape, complex)
    act = grid.active
    u[act] = trial(X[act], Y[act])
    return Field2D(grid, u, plan.epsilon, make_boundary(grid, plan.degree, plan.phase_offset))


# --- upper bound formula ---------------------------------------------------

def upper_bound_terms(eps: float, clusters, p0: float, I) -> tuple[float, float, float]:
    """(log, loglog, I) terms of the upper bound; clusters are (d_k, s_k) pairs."""
    if not 0 < eps < math.exp(-1):
        raise ValueError("upper bound needs 0 < eps < 1/e")
    L = math.log(1.0 / eps)
    d = sum(dk for dk, _ in clusters)
    t1 = 2 * math.pi * p0 * d * L
    t2 = 2 * math.pi * p0 * sum((dk * dk - dk) / sk for dk, sk in clusters if dk) * math.log(L)
    t3 = -2 * math.pi * p0 * sum(dk * I(L ** (-1.0 / sk) / eps) for dk, sk in clusters if dk)
    return t1, t2, t3


def upper_bound_formula(eps: float, d: int, clusters, p0: float, I) -> float:
    """Three-term upper bound without the O(1) constant.

    The I-term is summed per cluster with each cluster's own s_k.
    """
    clusters = [(int(dk), float(sk)) for dk, sk in clusters]
    if sum(dk for dk, _ in clusters) != d:
        raise ValueError("cluster degrees must add up to d")
    if len({sk for dk, sk in clusters if dk}) > 1:
        log.warning("clusters have distinct s_k; the I-term is a per-cluster sum")
    return sum(upper_bound_terms(eps, clusters, p0, I))


def slope_test(x, y) -> tuple[float, float]:
    """OLS slope of y against x and its standard error."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    dof = len(x) - 2
    if dof <= 0:
        return float(coef[0]), float("nan")
    s2 = float(res @ res) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), math.sqrt(max(cov[0, 0], 0.0))


# --- lower bound on a perforated disc --------------------------------------

@dataclass
class BoundReport:
    lhs_energy: float
    reference_energy: float
    i_correction: float
    interaction: float
    slack: float
    positive_rhs: float
    slack_positive: float
    budget: float  # R0^-2 int_Omega J(1 - |u|^2)
    min_modulus: float
    R: float
    R0: float
    a: float
    p0: float
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _check_geometry(centers, R: float, R0: float, domain_radius: float):
    if not 0 < R0 <= R / 4:
        raise PreconditionError(f"need 0 < R0 <= R/4 (R0={R0:.4g}, R={R:.4g})")
    if R > domain_radius * (1 + 1e-12):
        raise PreconditionError("B_R must lie in the domain")
    for i, a in enumerate(centers):
        if math.hypot(*a) > R / 2:
            raise PreconditionError(f"|a_{i}|={math.hypot(*a):.4g} > R/2")
        for j in range(i + 1, len(centers)):
            if math.dist(a, centers[j]) < 4 * R0:
                raise PreconditionError(f"|a_{i} - a_{j}| < 4 R0")


def perforated_lower_bound(field_: Field2D | TrialField, holes, R: float, a: float, weight: WeightSpec | None,
                    potential: PotentialSpec, I=None) -> BoundReport:
    """Terms of the perforated-disc lower bound and its slack.

    ``holes`` is a list of (center, R0, degree) with a common R0.  Omega is
    B_R(0) minus the discs B_R0(a_j).  Grid fields are integrated with the
    discrete energy on the edges inside Omega, and the reference map with the
    same rule, so the discretization errors largely cancel in the slack.
    """
    if not holes:
        raise ValueError("at least one hole is needed")
    centers = [tuple(map(float, h[0])) for h in holes]
    R0s = {float(h[1]) for h in holes}
    if len(R0s) != 1:
        raise ValueError("holes must share one radius R0")
    R0 = R0s.pop()
    degs = [int(h[2]) for h in holes]
    if not 0 < a <= 1:
        raise PreconditionError("modulus floor a must lie in (0, 1]")
    I = I or i_evaluator(potential)
    p0 = weight.p0 if weight is not None else 1.0
    notes = []
    if a <= 0.5:
        notes.append("a <= 1/2: the constant in the bound is not controlled")

    if isinstance(field_, TrialField):
        tf = field_
        _check_geometry(centers, R, R0, tf.plan.domain_radius)
        seeds = [complex(*c) for c in centers]
        for c in seeds:
            if np.min(np.abs(tf.centers - c)) > 1e-12:
                raise PreconditionError("trial-field holes must sit on the seed points")
        e = tf.energy(weight, region_radius=R, hole_radius=R0)
        lhs = e.weighted_dirichlet
        budget = e.potential_term * tf.plan.epsilon**2 / R0**2
        mins = [float(tf.core_modulus(k, np.array([R0]))[0]) for k in tf.site_of]
        min_mod = min(mins)
        ref = harmonic_dirichlet(centers, degs, R, R0)
        measured = [tf.winding(c, 1.5 * R0) for c in centers]
    else:
        grid = field_.grid
        _check_geometry(centers, R, R0, grid.domain_radius)

        def region(X, Y):
            ok = X * X + Y * Y < R * R
            for cx, cy in centers:
                ok &= (X - cx) ** 2 + (Y - cy) ** 2 > R0 * R0
            return ok

        D = DiscreteEnergy(grid, weight, potential, field_.epsilon, region)
        lhs = D.dirichlet(field_.values)
        X, Y = grid.XY
        inside = grid.interior & region(X, Y)
        mod = np.abs(field_.values[inside])
        min_mod = float(mod.min())
        budget = float(np.sum(J_array(potential, 1.0 - mod**2))) * grid.h**2 / R0**2
        u0 = reference_map_at(list(zip(centers, degs)), X, Y)
        ref = DiscreteEnergy(grid, None, potential, field_.epsilon, region).dirichlet(u0)
        measured = []
        for c in centers:
            try:
                measured.append(winding_on_circle(field_, c, 1.5 * R0))
            except DegenerateModulusError as exc:
                raise PreconditionError(f"degree around {c} undefined: {exc}") from exc

    if min_mod < a * (1 - 1e-12):
        raise PreconditionError(f"modulus floor violated: min |u| = {min_mod:.4g} < a = {a}")
    if measured != degs:
        raise PreconditionError(f"degrees around the holes are {measured}, expected {degs}")

    logRR0 = math.log(R / R0)
    i_corr = 2 * math.pi * p0 * sum(d * d for d in degs) * I(R / R0)
    inter = 0.0
    pair = 0.0
    for i in range(len(centers)):
        for j in range(len(centers)):
            if i != j:
                lg = math.log(R / math.dist(centers[i], centers[j]))
                inter += abs(degs[i]) * abs(degs[j]) * lg
                pair += degs[i] * degs[j] * lg
    interaction = 2 * math.pi * (1 - a * a) * p0 * inter
    slack = lhs - (p0 * ref - i_corr - interaction)
    if all(d >= 0 for d in degs):
        pos = (2 * math.pi * p0 * sum(d * d for d in degs) * (logRR0 - I(R / R0))
               + 2 * math.pi * p0 * a * a * pair)
        slack_pos = lhs - pos
    else:
        pos = slack_pos = float("nan")
    return BoundReport(lhs, ref, i_corr, interaction, slack, pos, slack_pos, budget, min_mod,
                       R, R0, a, p0, notes)


# --- asymptotic fit --------------------------------------------------------

TERMS = ("log", "loglog", "I", "const")


@dataclass
class AsymptoticFit:
    epsilons: np.ndarray
    energies: np.ndarray
    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    theory: dict[str, float]
    residuals: np.ndarray
    dropped: list[str]
    condition: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients,
            "standard_errors": self.standard_errors,
            "theory": self.theory,
            "dropped": self.dropped,
            "condition": self.condition,
            "warnings": self.warnings,
            "residuals": [float(r) for r in self.residuals],
        }


def regressors(eps, clusters, I) -> dict[str, np.ndarray]:
    eps = np.asarray(eps, float)
    L = np.log(1.0 / eps)
    d = sum(dk for dk, _ in clusters)
    Icol = np.array([sum(dk * I(Li ** (-1.0 / sk) / e) for dk, sk in clusters if dk) / d
                     for e, Li in zip(eps, L)])
    return {"log": L, "loglog": np.log(L), "I": Icol, "const": np.ones_like(L)}


def fit_asymptotics(sweep, clusters, p0: float, I, terms=TERMS, collinear_tol: float = 1e-9) -> AsymptoticFit:
    """Least-squares fit of E(eps) on log, loglog, the I-term and a constant."""
    clusters = [(int(dk), float(sk)) for dk, sk in clusters]
    data = sorted(((float(e), float(E)) for e, E in sweep), reverse=True)
    eps = np.array([e for e, _ in data])
    E = np.array([v for _, v in data])
    if len(eps) < 4:
        raise ValueError("fit_asymptotics needs at least 4 sweep points")
    if eps.max() / eps.min() < 8 * (1 - 1e-12):
        raise ValueError("sweep must span a factor of at least 8 in eps")
    if not np.all(eps < math.exp(-1)):
        raise ValueError("all eps must be below 1/e")
    unknown = set(terms) - set(TERMS)
    if unknown:
        raise ValueError(f"unknown terms {sorted(unknown)}")
    d = sum(dk for dk, _ in clusters)
    theory = {"log": 2 * math.pi * p0 * d,
              "loglog": 2 * math.pi * p0 * sum((dk * dk - dk) / sk for dk, sk in clusters if dk),
              "I": -2 * math.pi * p0 * d}
    cols = regressors(eps, clusters, I)
    warnings = []
    # greedy column selection: drop a column whose part orthogonal to the kept ones vanishes
    order = [t for t in ("const", "log", "loglog", "I") if t in terms]
    kept, dropped = [], []
    for t in order:
        v = cols[t]
        if kept:
            B = np.column_stack([cols[k] for k in kept])
            proj = B @ np.linalg.lstsq(B, v, rcond=None)[0]
            rel = np.linalg.norm(v - proj) / max(np.linalg.norm(v), 1e-300)
        else:
            rel = 1.0
        if rel < collinear_tol:
            dropped.append(t)
            warnings.append(f"regressor '{t}' is collinear with {kept}; dropped")
        else:
            kept.append(t)
    A = np.column_stack([cols[k] for k in kept])
    scale = np.linalg.norm(A, axis=0)
    cond = float(np.linalg.cond(A / scale))
    if cond > 1e8:
        warnings.append(f"regressors nearly collinear (condition number {cond:.3g})")
    coef, *_ = np.linalg.lstsq(A, E, rcond=None)
    res = E - A @ coef
    dof = len(E) - len(kept)
    if dof > 0:
        s2 = float(res @ res) / dof
        cov = s2 * np.linalg.pinv(A.T @ A)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    else:
        se = np.full(len(kept), np.nan)
    coefs = {t: float(c) for t, c in zip(kept, coef)}
    ses = {t: float(s) for t, s in zip(kept, se)}
    return AsymptoticFit(eps, E, coefs, ses, theory, res, dropped, cond, warnings)


# --- vortex distances within a cluster -------------------------------------

@dataclass
class DistanceReport:
    rows: list[dict]  # epsilon, site, d_k, min/max normalized pairwise distance
    C9: dict[int, float]
    C8: dict[int, float]
    nonincreasing: dict[int, bool]


def vortex_distance_report(report: ClusterReport, weight: WeightSpec, I) -> DistanceReport:
    """Pairwise distances in clusters with d_k > 1, normalized by (log 1/eps)^(-1/s_k)."""
    rows = []
    sites = weight.sites
    for eps, degs, pairs in zip(report.epsilons, report.degrees, report.pairwise):
        L = math.log(1.0 / eps)
        for k, (dk, pk) in enumerate(zip(degs, pairs)):
            if dk <= 1 or not pk:
                continue
            s = sites[k].s
            scale = L ** (-1.0 / s)
            Ival = I(L ** (1.0 / s)) if L ** (1.0 / s) >= 1.0 else 0.0
            rows.append({"epsilon": eps, "site": k, "d_k": dk, "min_normalized": min(pk) / scale,
                         "max_normalized": max(pk) / scale, "I_arg_value": Ival})
    C9, C8, mono = {}, {}, {}
    for k in {r["site"] for r in rows}:
        rk = [r for r in rows if r["site"] == k]
        C9[k] = max(r["max_normalized"] for r in rk)
        # smallest C8 with min_normalized >= exp(-C8 I) at every eps
        need = [-math.log(r["min_normalized"]) / r["I_arg_value"] for r in rk
                if r["I_arg_value"] > 0 and r["min_normalized"] < 1.0]
        C8[k] = max(need, default=0.0)
        mx = [r["max_normalized"] for r in sorted(rk, key=lambda r: -r["epsilon"])]
        mono[k] = all(b <= a * (1 + 0.05) for a, b in zip(mx, mx[1:]))
    return DistanceReport(rows, C9, C8, mono)
