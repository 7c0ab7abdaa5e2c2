"""The quantity I(R, c) and its constrained maximizer.

    I(R, c) = sup { int_1^R (1 - f^2)/r dr : int_1^R J(1 - f^2) r dr <= c }

Write t = 1 - f^2 (the deficit).  With multiplier lam the Lagrangian is
maximized pointwise: at radius r, with s = 1/(lam r^2), choose t in [0, 1]
maximizing t - J(t)/s.  The candidates are the stationary point
t* = j^-1(s) (capped at rho0) and the endpoint t = 1 (the dead zone, f = 0).
The switch value s_sw where both give the same value does not depend on lam,
so the dead-zone radius is r~0 = 1/sqrt(lam * s_sw), clipped to [1, R].
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import BracketError, DomainError, NonMonotoneError
from .potential import J_array, PotentialSpec, dJ_array, invert_j, j_at_rho0, t_floor

DEFAULT_KNOTS = 2048
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class IValue:
    R: float
    c: float
    value: float
    method: str
    estimated_error: float = 0.0
    warning: str = ""


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Maximizer on a log-spaced grid.

    ``deficit`` holds t = 1 - f0^2 at ``knots``.  The dead-zone radius appears
    twice among the knots when f0 jumps there.
    """

    R: float
    c: float
    lam: float
    r_tilde0: float
    knots: np.ndarray
    deficit: np.ndarray
    spec: PotentialSpec | None = None
    s_switch: float = float("nan")
    residual: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - self.deficit, 0.0, 1.0))

    @property
    def lambda_(self) -> float:
        return self.lam

    def deficit_at(self, r) -> np.ndarray:
        """Exact t(r) from the closed form (needs a solved profile)."""
        r = np.asarray(r, float)
        out = np.ones_like(r)
        if self.spec is None or self.lam == 0.0:
            return out
        live = r > self.r_tilde0
        out[live] = _live_deficit(self.spec, 1.0 / (self.lam * r[live] ** 2))
        return out

    @classmethod
    def constant(cls, R: float, f_value: float, n: int = DEFAULT_KNOTS) -> "RadialProfile":
        knots = np.geomspace(1.0, R, n)
        return cls(R, float("nan"), float("nan"), 1.0, knots, np.full(n, 1.0 - f_value**2))


def r0_of_c(spec: PotentialSpec, c: float) -> float:
    """Radius r0 with c = J(1)(r0^2 - 1)/2."""
    J1 = float(J_array(spec, np.array([1.0]))[0])
    return math.sqrt(1.0 + 2.0 * c / J1)


def compute_I(spec: PotentialSpec, R: float) -> IValue:
    """I(R) = 1/2 int_{1/R^2}^{j(rho0)} j^-1(t)/t dt, integrated in log t."""
    if not R >= 1.0:
        raise DomainError("compute_I needs R >= 1")
    top = j_at_rho0(spec)
    bottom = 1.0 / R**2
    if bottom > top:
        return IValue(R, 1.0, 0.0, "quadrature", 0.0,
                      warning=f"1/R^2 = {bottom:.3g} exceeds j(rho0) = {top:.3g}; sup is degenerate")
    if bottom == top:
        return IValue(R, 1.0, 0.0, "quadrature", 0.0)

    def integrand(sigma):
        return invert_j(spec, math.exp(sigma))

    val, err = integrate.quad(integrand, math.log(bottom), math.log(top), epsabs=0.0, epsrel=1e-10, limit=200)
    return IValue(R, 1.0, 0.5 * val, "quadrature", 0.5 * err)


@functools.lru_cache(maxsize=64)
def branch_spec(spec: PotentialSpec) -> PotentialSpec:
    """Same potential with rho0 moved to the peak of j on (0, 1].

    The pointwise maximizer of t - J(t)/s may sit anywhere on the increasing
    branch of j, which for flat wells extends past the convexity window.
    """
    if spec.kind == "exp_family":
        peak = (spec.h / (spec.h + 1.0)) ** (1.0 / spec.h)
    else:
        t = np.geomspace(t_floor(spec), 1.0, 4097)
        k = int(np.argmax(dJ_array(spec, t)))
        if k == t.size - 1:
            peak = 1.0
        else:
            res = optimize.minimize_scalar(lambda x: -float(dJ_array(spec, np.array([x]))[0]),
                                           bounds=(t[max(k - 1, 0)], t[k + 1]), method="bounded",
                                           options={"xatol": 1e-12})
            peak = float(res.x)
    peak = min(max(peak * (1 - 1e-9), spec.rho0), 1.0)
    return dataclasses.replace(spec, rho0=peak)


def _live_deficit(spec: PotentialSpec, s: np.ndarray) -> np.ndarray:
    b = branch_spec(spec)
    return invert_j(b, np.minimum(s, j_at_rho0(b)))


@functools.lru_cache(maxsize=64)
def switch_value(spec: PotentialSpec) -> float:
    """s_sw: for s >= s_sw the dead zone t = 1 beats the stationary deficit."""
    J1 = float(J_array(spec, np.array([1.0]))[0])
    b = branch_spec(spec)
    top = j_at_rho0(b)
    if b.rho0 >= 1.0:
        return top

    def gap(s):
        t = float(_live_deficit(spec, np.array([s]))[0])
        Jt = float(J_array(spec, np.array([t]))[0])
        return (1.0 - t) - (J1 - Jt) / s

    if gap(top) < 0.0:
        # past the peak of j only t = 1 is a pointwise candidate
        return top
    lo = math.log(max(float(dJ_array(spec, np.array([t_floor(spec)]))[0]), 1e-300))
    hi = math.log(top)
    return math.exp(optimize.brentq(lambda x: gap(math.exp(x)), lo, hi, xtol=1e-14, rtol=1e-15))


def _constraint(spec: PotentialSpec, R: float, lam: float, s_sw: float, n_panels: int = 48) -> float:
    J1 = float(J_array(spec, np.array([1.0]))[0])
    rt = min(max(1.0 / math.sqrt(lam * s_sw), 1.0), R)
    total = 0.5 * J1 * (rt * rt - 1.0)
    if rt < R:
        edges = np.linspace(math.log(rt), math.log(R), n_panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        ell = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        r2 = np.exp(2.0 * ell)
        t = _live_deficit(spec, 1.0 / (lam * r2))
        vals = (J_array(spec, t) * r2).reshape(n_panels, -1)
        total += float(np.sum(half * (vals @ _GL_WEIGHTS)))
    return total


def solve_profile(spec: PotentialSpec, R: float, c: float, n_knots: int = DEFAULT_KNOTS) -> RadialProfile:
    """Maximizer f0 of I(R, c) with its multiplier and dead-zone radius.

    When R <= r0(c) the constraint is inactive: f0 = 0 and lam = 0.
    """
    if not R > 1.0:
        raise DomainError("solve_profile needs R > 1")
    if not c > 0.0:
        raise DomainError("solve_profile needs c > 0")
    s_sw = switch_value(spec)
    J1 = float(J_array(spec, np.array([1.0]))[0])
    if 0.5 * J1 * (R * R - 1.0) <= c:
        knots = np.geomspace(1.0, R, n_knots)
        return RadialProfile(R, c, 0.0, R, knots, np.ones(n_knots), spec, s_sw,
                             residual=0.5 * J1 * (R * R - 1.0) - c)

    def F(x):
        return _constraint(spec, R, math.exp(x), s_sw) - c

    lo, hi = -5.0, 5.0
    f_lo, f_hi = F(lo), F(hi)
    for _ in range(40):
        if f_lo > 0.0:
            break
        lo -= 5.0
        f_lo = F(lo)
    for _ in range(40):
        if f_hi < 0.0:
            break
        hi += 5.0
        f_hi = F(hi)
    if not (f_lo > 0.0 > f_hi):
        raise BracketError(f"no multiplier found for R={R}, c={c} (constraint {f_lo + c:.3g} .. {f_hi + c:.3g})")
    x = optimize.brentq(F, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    lam = math.exp(x)
    resid = F(x)
    # the constraint must decrease in lam; probe either side of the root
    if F(x - 1e-3) < resid or F(x + 1e-3) > resid:
        raise NonMonotoneError("constraint is not decreasing in the multiplier near the root")

    rt = min(max(1.0 / math.sqrt(lam * s_sw), 1.0), R)
    knots, deficit = _discretize(spec, R, lam, rt, n_knots)
    return RadialProfile(R, c, lam, rt, knots, deficit, spec, s_sw, residual=resid)


def _discretize(spec, R, lam, rt, n):
    L = math.log(R)
    lt = math.log(rt)
    n_dead = 0 if rt <= 1.0 else max(2, int(round(n * lt / L / 4)))
    n_live = max(n - n_dead, 8)
    live = np.exp(np.linspace(lt, L, n_live))
    live[0], live[-1] = rt, R
    t_live = _live_deficit(spec, 1.0 / (lam * live**2))
    if n_dead:
        dead = np.exp(np.linspace(0.0, lt, n_dead))
        dead[-1] = rt
        return np.concatenate([dead, live]), np.concatenate([np.ones(n_dead), t_live])
    return live, t_live


def _log_trapezoid(knots: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    ell = np.log(knots)
    full = float(np.trapezoid(g, ell))
    # Richardson-style estimate per smooth piece; pieces are split at repeated knots
    cuts = np.nonzero(np.diff(ell) == 0)[0] + 1
    err = 0.0
    for a, b in zip(np.r_[0, cuts], np.r_[cuts, len(ell)]):
        e, v = ell[a:b], g[a:b]
        if e.size < 3:
            continue
        idx = np.unique(np.r_[np.arange(0, e.size, 2), e.size - 1])
        err += abs(float(np.trapezoid(v, e)) - float(np.trapezoid(v[idx], e[idx]))) / 3.0
    return full, err


def compute_I_Rc(profile: RadialProfile) -> IValue:
    """int_1^R (1 - f0^2)/r dr by the trapezoid rule in log r."""
    val, err = _log_trapezoid(profile.knots, profile.deficit)
    return IValue(profile.R, profile.c, val, "profile", err)


def compute_Itilde(profile: RadialProfile) -> IValue:
    """I plus 4 int_1^R (1 - f0^2)^2/r dr."""
    t = profile.deficit
    val, err = _log_trapezoid(profile.knots, t + 4.0 * t * t)
    return IValue(profile.R, profile.c, val, "profile", err)


def profile_derivative_energy(profile: RadialProfile, mu0: float) -> float:
    """Finite-difference int_{mu0}^R (f0')^2 dr over knots r >= mu0 past the dead zone."""
    if not mu0 >= 1.0:
        raise DomainError("mu0 must be >= 1")
    r = profile.knots
    f = profile.values
    start = max(mu0, profile.r_tilde0)
    keep = r > start
    r, f = r[keep], f[keep]
    if r.size < 1:
        return 0.0
    if start > profile.r_tilde0 or profile.r_tilde0 <= 1.0:
        # partial first cell: value at mu0 from the exact profile when available
        f_start = math.sqrt(max(1.0 - float(profile.deficit_at(np.array([start]))[0]), 0.0)) \
            if profile.spec is not None and profile.lam == profile.lam else float(np.interp(start, profile.knots, profile.values))
        r, f = np.r_[start, r], np.r_[f_start, f]
    if r.size < 2:
        return 0.0
    dr = np.diff(r)
    ok = dr > 0
    return float(np.sum(np.diff(f)[ok] ** 2 / dr[ok]))
