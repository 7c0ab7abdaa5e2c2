"""Potentials J with J(0)=0, J>0, J'>0 on (0,1] and J''>0 near 0.

Three kinds are supported:

* ``quartic``      J(t) = t**2 / 4, the classical Ginzburg-Landau well
* ``exp_family``   J(t) = exp(-1/t**h) for t > 0, zero otherwise (flat well)
* ``tabulated``    monotone cubic interpolation of user pairs (t, J)

All evaluators accept scalars or numpy arrays.  Values that would underflow
to subnormals are clamped to zero.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, NonMonotoneError, RangeError
from .validation import Check, ValidationReport

KINDS = ("quartic", "exp_family", "tabulated")

_TINY = np.finfo(float).tiny
_J_FLOOR = 1e-300  # lower bracket for j^-1 starts where j first exceeds this


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "quartic"
    h: float = 1.0
    rho0: float | None = None
    inversion_tol: float = 1e-10
    table_t: tuple[float, ...] = field(default=(), repr=False)
    table_J: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "exp_family" and not self.h > 0:
            raise ValueError("exp_family needs h > 0")
        if self.kind == "tabulated":
            t = np.asarray(self.table_t, float)
            J = np.asarray(self.table_J, float)
            if t.ndim != 1 or t.size < 4 or t.shape != J.shape:
                raise ValueError("tabulated potential needs >= 4 matching (t, J) pairs")
            if t[0] != 0.0 or J[0] != 0.0 or t[-1] < 1.0 or np.any(np.diff(t) <= 0):
                raise ValueError("table must start at (0, 0), increase strictly, and reach t >= 1")
        if self.rho0 is None:
            object.__setattr__(self, "rho0", default_rho0(self.kind, self.h))
        if not 0.0 < self.rho0 <= 1.0:
            raise ValueError("rho0 must lie in (0, 1]")
        if not self.inversion_tol > 0:
            raise ValueError("inversion_tol must be positive")

    @functools.cached_property
    def _pchip(self) -> PchipInterpolator:
        return PchipInterpolator(np.asarray(self.table_t), np.asarray(self.table_J), extrapolate=True)

    @functools.cached_property
    def _dpchip(self):
        return self._pchip.derivative()

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "rho0": self.rho0}
        if self.kind == "exp_family":
            out["h"] = self.h
        if self.kind == "tabulated":
            out["table_t"] = list(self.table_t)
            out["table_J"] = list(self.table_J)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        d = dict(d)
        if "table_t" in d:
            d["table_t"] = tuple(d["table_t"])
            d["table_J"] = tuple(d["table_J"])
        return cls(**d)


def default_rho0(kind: str, h: float = 1.0) -> float:
    # exp(-1/t^h) is convex exactly for t < (h/(h+1))^(1/h); stay at 80% of that
    if kind == "exp_family":
        return 0.8 * (h / (h + 1.0)) ** (1.0 / h)
    return 1.0


def _as_array(t):
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


def J_array(spec: PotentialSpec, t: np.ndarray) -> np.ndarray:
    if spec.kind == "quartic":
        return 0.25 * t * t
    if spec.kind == "exp_family":
        out = np.zeros_like(t)
        pos = t > 0
        with np.errstate(over="ignore", under="ignore"):
            out[pos] = np.exp(-np.power(t[pos], -spec.h))
        out[out < _TINY] = 0.0
        return out
    tt = np.clip(t, 0.0, None)
    return np.maximum(spec._pchip(tt), 0.0)


def dJ_array(spec: PotentialSpec, t: np.ndarray) -> np.ndarray:
    """J'(t) extended by continuity to t <= 0 (used by the energy gradient)."""
    if spec.kind == "quartic":
        return 0.5 * t
    if spec.kind == "exp_family":
        out = np.zeros_like(t)
        pos = t > 0
        tp = t[pos]
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            logj = math.log(spec.h) - (spec.h + 1.0) * np.log(tp) - np.power(tp, -spec.h)
            out[pos] = np.exp(logj)
        out[out < _TINY] = 0.0
        return out
    tt = np.clip(t, 0.0, None)
    return spec._dpchip(tt)


def eval_J(spec: PotentialSpec, t):
    """J(t); total, vectorised."""
    arr, scalar = _as_array(t)
    return _out(J_array(spec, arr), scalar)


def eval_j(spec: PotentialSpec, t):
    """j(t) = J'(t) for t > 0."""
    arr, scalar = _as_array(t)
    if np.any(~(arr > 0)):
        raise DomainError("j(t) is only evaluated for t > 0")
    return _out(dJ_array(spec, arr), scalar)


@functools.lru_cache(maxsize=64)
def t_floor(spec: PotentialSpec) -> float:
    """Smallest t with j(t) > 1e-300, the lower end of every bisection."""
    lo, hi = math.log(1e-320), math.log(spec.rho0)
    if dJ_array(spec, np.array([math.exp(lo)]))[0] > _J_FLOOR:
        return math.exp(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dJ_array(spec, np.array([math.exp(mid)]))[0] > _J_FLOOR:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13:
            break
    return math.exp(hi)


@functools.lru_cache(maxsize=64)
def _window_is_monotone(spec: PotentialSpec) -> tuple[bool, float]:
    t = np.geomspace(t_floor(spec), spec.rho0, 1024)
    jv = dJ_array(spec, t)
    bad = np.nonzero(np.diff(jv) < 0)[0]
    if bad.size:
        return False, float(t[bad[0] + 1])
    return True, float("nan")


def j_at_rho0(spec: PotentialSpec) -> float:
    return float(dJ_array(spec, np.array([spec.rho0]))[0])


def invert_j(spec: PotentialSpec, s):
    """t in (0, rho0] with j(t) = s, by bisection in log t.

    Bisection rather than Newton: for flat wells j' underflows near 0.
    """
    arr, scalar = _as_array(s)
    if arr.size == 0:
        return arr.astype(float)
    if np.any(~(arr > 0)):
        raise DomainError("invert_j needs s > 0")
    jr = j_at_rho0(spec)
    if np.any(arr > jr * (1.0 + 1e-13)):
        raise RangeError(f"s exceeds j(rho0) = {jr:.6g}; no preimage in (0, rho0]")
    ok, where = _window_is_monotone(spec)
    if not ok:
        raise NonMonotoneError(f"j decreases near t = {where:.6g} < rho0 = {spec.rho0}")

    s_flat = np.atleast_1d(arr).ravel()
    lo = np.full(s_flat.shape, math.log(t_floor(spec)))
    hi = np.full(s_flat.shape, math.log(spec.rho0))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = dJ_array(spec, np.exp(mid)) < s_flat
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < 1e-15:
            break
    t = np.exp(0.5 * (lo + hi))
    t[s_flat >= jr] = spec.rho0
    t = t.reshape(arr.shape)
    return _out(t, scalar)


def validate_hypotheses(spec: PotentialSpec, n_samples: int = 64) -> ValidationReport:
    """Sample H1 (positivity), H2 (monotonicity) and H3 (convexity below rho0)."""
    if n_samples < 16:
        raise ValueError("n_samples must be >= 16")
    report = ValidationReport()
    # below 1e-3 (or where j underflows) samples test the float format, not J
    tf = max(t_floor(spec), 1e-3)

    t1 = np.geomspace(tf, 2.0, n_samples)
    J1 = J_array(spec, t1)
    J0 = float(J_array(spec, np.array([0.0]))[0])
    bad = np.nonzero(J1 <= 0)[0]
    if J0 != 0.0:
        report.add(Check("H1", False, 0.0, f"J(0) = {J0}"))
    else:
        report.add(Check("H1", bad.size == 0, float(t1[bad[0]]) if bad.size else None,
                         f"J(0)=0, J>0 on [{tf:.3g}, 2]"))

    t2 = np.geomspace(tf, 1.0, n_samples)
    j2 = dJ_array(spec, t2)
    bad = np.nonzero(j2 <= 0)[0]
    report.add(Check("H2", bad.size == 0, float(t2[bad[0]]) if bad.size else None,
                     f"j>0 on [{tf:.3g}, 1]"))

    # interior samples of (tf, rho0); centred second difference with relative step
    t3 = np.geomspace(tf, spec.rho0, n_samples + 2)[1:-1]
    delta = 1e-3
    d2 = J_array(spec, t3 * (1 + delta)) - 2.0 * J_array(spec, t3) + J_array(spec, t3 * (1 - delta))
    bad = np.nonzero(d2 <= 0)[0]
    report.add(Check("H3", bad.size == 0, float(t3[bad[0]]) if bad.size else None,
                     f"J''>0 on ({tf:.3g}, {spec.rho0:.6g})"))
    return report
