"""Pinning weight p with finitely many interior minima.

Model::

    p(x) = p0 + sum_k w_k(x) * (alpha_k r_k^s_k + bump_k(x))
              + plateau * (1 - sum_k w_k(x))          (only if sites exist)

with r_k = |x - b_k| and w_k a quintic smoothstep cutoff equal to 1 on
r_k <= cutoff and 0 on r_k >= 2 cutoff.  ``cutoff`` defaults to eta0 (the
radius used by trial constructions) but may be larger: it only has to keep
the supports of different sites disjoint, so at most one w_k is nonzero at any
point.  The optional bump is ``background * r^s * (1 + cos(pi r / (2 cutoff))) / 2``,
which keeps alpha r^s <= p - p0 <= (alpha + background) r^s on r <= cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .validation import Check, ValidationReport


@dataclass(frozen=True)
class PinningSite:
    b: tuple[float, float]
    s: float = 2.0
    alpha: float = 1.0
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "b", (float(self.b[0]), float(self.b[1])))
        if self.beta is None:
            object.__setattr__(self, "beta", self.alpha)
        if not self.s > 1:
            raise ValueError("flatness exponent s must be > 1")
        if not (0 < self.alpha <= self.beta):
            raise ValueError("need 0 < alpha <= beta")


@dataclass(frozen=True)
class WeightSpec:
    p0: float = 1.0
    sites: tuple[PinningSite, ...] = ()
    background: float = 0.0
    domain_radius: float = 1.0
    eta0: float | None = None
    plateau: float | None = None
    cutoff: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if not self.p0 > 0:
            raise ValueError("p0 must be positive")
        if self.background < 0:
            raise ValueError("background amplitude must be >= 0")
        for site in self.sites:
            if math.hypot(*site.b) >= self.domain_radius:
                raise ValueError(f"site {site.b} is not strictly inside the domain")
        limit = max_eta0(self.sites, self.domain_radius)
        if self.eta0 is None:
            object.__setattr__(self, "eta0", limit)
        elif self.sites and not 0 < self.eta0 <= limit * (1 + 1e-12):
            raise ValueError(f"eta0={self.eta0} violates 0 < eta0 <= {limit:.6g} (1/4 of min separation)")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", self.eta0)
        sep = min((math.dist(a.b, b.b) for i, a in enumerate(self.sites) for b in self.sites[i + 1:]),
                  default=math.inf)
        if not 0 < self.cutoff <= 0.25 * sep * (1 + 1e-12):
            raise ValueError(f"cutoff={self.cutoff} must be positive and <= 1/4 of the min site separation")
        if self.plateau is None:
            pl = max((s.alpha * (2 * self.cutoff) ** s.s for s in self.sites), default=0.0)
            object.__setattr__(self, "plateau", pl)

    @property
    def cutoff_radius(self) -> float:
        return 2.0 * self.cutoff

    def to_dict(self) -> dict:
        return {
            "p0": self.p0,
            "background": self.background,
            "eta0": self.eta0,
            "cutoff": self.cutoff,
            "sites": [{"b": list(s.b), "s": s.s, "alpha": s.alpha, "beta": s.beta} for s in self.sites],
        }


def max_eta0(sites, domain_radius: float) -> float:
    """1/4 of min(inter-site distance, site-to-boundary distance)."""
    if not sites:
        return domain_radius / 4.0
    dists = [domain_radius - math.hypot(*s.b) for s in sites]
    for i, a in enumerate(sites):
        for b in sites[i + 1:]:
            dists.append(math.hypot(a.b[0] - b.b[0], a.b[1] - b.b[1]))
    return 0.25 * min(dists)


def _smoothstep_cutoff(r: np.ndarray, c: float) -> np.ndarray:
    # 1 on [0, c], 0 on [2c, inf), C^2 quintic in between
    x = np.clip((r - c) / c, 0.0, 1.0)
    return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def eval_p(spec: WeightSpec, x, y=None):
    """p at points.  Accepts ``eval_p(spec, (x, y))`` or ``eval_p(spec, X, Y)``."""
    if y is None:
        x, y = x
    X = np.asarray(x, float)
    Y = np.asarray(y, float)
    scalar = X.ndim == 0 and Y.ndim == 0
    X, Y = np.broadcast_arrays(X, Y)
    out = np.full(X.shape, spec.p0)
    if spec.sites:
        wsum = np.zeros(X.shape)
        for site in spec.sites:
            r = np.hypot(X - site.b[0], Y - site.b[1])
            w = _smoothstep_cutoff(r, spec.cutoff)
            rs = r**site.s
            local = site.alpha * rs
            if spec.background:
                local = local + spec.background * rs * 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, 2 * spec.cutoff) / (2 * spec.cutoff)))
            out += w * local
            wsum += w
        out += spec.plateau * (1.0 - wsum)
    return float(out) if scalar else out


def validate_sandwich(spec: WeightSpec, radius: float, n_samples: int = 64) -> ValidationReport:
    """Check alpha r^s <= p - p0 <= beta r^s on 8 rings of radius <= ``radius`` per site.

    The model is exact only where the cutoff is identically one, so ``radius``
    may not exceed ``spec.cutoff``.
    """
    if radius > spec.cutoff * (1 + 1e-12):
        raise ValueError("radius must not exceed the cutoff, where w equals 1")
    report = ValidationReport()
    theta = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    for k, site in enumerate(spec.sites):
        witness = None
        for rr in radius * np.arange(1, 9) / 8.0:
            X = site.b[0] + rr * np.cos(theta)
            Y = site.b[1] + rr * np.sin(theta)
            excess = eval_p(spec, X, Y) - spec.p0
            lo = site.alpha * rr**site.s
            hi = site.beta * rr**site.s
            slack = 1e-12 * max(hi, 1e-300)
            bad = np.nonzero((excess < lo - slack) | (excess > hi + slack))[0]
            if bad.size:
                witness = (float(X[bad[0]]), float(Y[bad[0]]))
                break
        report.add(Check(f"sandwich[{k}]", witness is None, witness,
                         f"alpha={site.alpha} beta={site.beta} s={site.s} r<={radius:.4g}"))
    return report
