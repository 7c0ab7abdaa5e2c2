"""Experiment configuration: a YAML file validated against a strict schema.

Unknown keys are errors at every level.  ``config_hash`` is the SHA-256 of the
canonical JSON form of the validated config, so it changes exactly when some
field value changes (comments and key order do not matter).
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .minimizer import SolveConfig
from .potential import PotentialSpec
from .weight import PinningSite, WeightSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PotentialSection(_Strict):
    kind: Literal["quartic", "exp_family", "tabulated"] = "quartic"
    h: float = 1.0
    rho0: float | None = None
    table_t: list[float] = []
    table_J: list[float] = []

    def build(self) -> PotentialSpec:
        return PotentialSpec(self.kind, self.h, self.rho0, table_t=tuple(self.table_t), table_J=tuple(self.table_J))


class SiteSection(_Strict):
    b: tuple[float, float]
    s: float = 2.0
    alpha: float = 1.0
    beta: float | None = None


class WeightSection(_Strict):
    p0: float = 1.0
    background: float = 0.0
    eta0: float | None = None
    cutoff: float | None = None
    sites: list[SiteSection] = []

    def build(self, domain_radius: float) -> WeightSpec:
        sites = tuple(PinningSite(s.b, s.s, s.alpha, s.beta) for s in self.sites)
        return WeightSpec(self.p0, sites, self.background, domain_radius, self.eta0, None, self.cutoff)


class GridSection(_Strict):
    n: int = 128
    radius: float = 1.0

    @field_validator("n")
    @classmethod
    def _pow2(cls, n):
        if not (64 <= n <= 1024 and n & (n - 1) == 0):
            raise ValueError("n must be a power of two between 64 and 1024")
        return n

    @field_validator("radius")
    @classmethod
    def _pos(cls, r):
        if not r > 0:
            raise ValueError("radius must be positive")
        return r


class BoundarySection(_Strict):
    d: int = 1
    phase: float = 0.0


class SweepSection(_Strict):
    epsilons: list[float] | None = None
    start: float | None = None
    stop: float | None = None
    count: int | None = None

    @model_validator(mode="after")
    def _values(self):
        geo = (self.start, self.stop, self.count)
        if self.epsilons is None and None in geo:
            raise ValueError("give either epsilons or start/stop/count")
        if self.epsilons is not None and any(v is not None for v in geo):
            raise ValueError("epsilons and start/stop/count are exclusive")
        eps = self.values
        if not eps:
            raise ValueError("the sweep is empty")
        if any(not e > 0 for e in eps):
            raise ValueError("epsilon values must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon values must be strictly decreasing")
        return self

    @property
    def values(self) -> list[float]:
        if self.epsilons is not None:
            return list(self.epsilons)
        if self.count < 1:
            return []
        return [float(e) for e in np.geomspace(self.start, self.stop, self.count)]


class SolverSection(_Strict):
    max_iters: int = 4000
    step_rule: Literal["backtracking", "fixed"] = "backtracking"
    step: float = 1.0
    tolerance: float = 1e-9
    grad_tolerance: float = 1e-7
    patience: int = 5
    init: Literal["reference_map_seeded", "random"] = "reference_map_seeded"
    sigma: float = 1.0


class DetectorSection(_Strict):
    lambda_mult: float = 4.0
    separation_factor: float = 8.0
    threshold: float = 0.75


class IQuantSection(_Strict):
    R: list[float] = [10.0, 100.0, 1000.0]
    c: list[float] = [1.0]


class TrialSection(_Strict):
    degrees: list[int] | None = None  # per site; defaults to all of d on site 0
    epsilons: list[float] = [1e-3, 1e-4, 1e-5, 1e-6]
    budget: float = 1.0

    @field_validator("epsilons")
    @classmethod
    def _decreasing(cls, eps):
        if any(not 0 < e < 1 / math.e for e in eps):
            raise ValueError("trial epsilons must lie in (0, 1/e)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon values must be strictly decreasing")
        return eps


class BoundSection(_Strict):
    source: Literal["trial", "minimizer"] = "trial"
    R: float = 1.0
    a: float = 0.75
    R0: float | None = None  # absolute hole radius
    R0_mult: float = 2.5  # otherwise R0 = R0_mult * eps (minimizer) or core radius (trial)


class OutputSection(_Strict):
    directory: str = "out"
    svg: bool = False
    snapshots: bool = True


class ExperimentConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    potential: PotentialSection = PotentialSection()
    weight: WeightSection = WeightSection()
    grid: GridSection = GridSection()
    boundary: BoundarySection = BoundarySection()
    sweep: SweepSection = SweepSection(epsilons=[0.1, 0.05, 0.025])
    solver: SolverSection = SolverSection()
    detector: DetectorSection = DetectorSection()
    iquant: IQuantSection = IQuantSection()
    trial: TrialSection = TrialSection()
    bound: BoundSection = BoundSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _consistent(self):
        if self.trial.degrees is not None:
            if self.weight.sites and len(self.trial.degrees) != len(self.weight.sites):
                raise ValueError("trial.degrees needs one entry per weight site")
            if sum(self.trial.degrees) != self.boundary.d:
                raise ValueError("trial.degrees must add up to boundary.d")
        return self

    # builders ---------------------------------------------------------------
    def potential_spec(self) -> PotentialSpec:
        return self.potential.build()

    def weight_spec(self) -> WeightSpec:
        return self.weight.build(self.grid.radius)

    def solve_config(self, epsilon: float) -> SolveConfig:
        s = self.solver
        return SolveConfig(epsilon=epsilon, n=self.grid.n, domain_radius=self.grid.radius, degree=self.boundary.d,
                           phase_offset=self.boundary.phase, max_iters=s.max_iters, step_rule=s.step_rule,
                           step=s.step, tolerance=s.tolerance, grad_tolerance=s.grad_tolerance,
                           patience=s.patience, init=s.init, seed=self.seed, sigma=s.sigma)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = data
    for k in keys[:-1]:
        nxt = cur.get(k)
        if nxt is None:
            nxt = cur[k] = {}
        if not isinstance(nxt, dict):
            raise ValueError(f"override {dotted!r}: {k!r} is not a section")
        cur = nxt
    cur[keys[-1]] = value


def load_config(path: str | Path | None, overrides: list[str] = ()) -> ExperimentConfig:
    """Read YAML (or defaults when ``path`` is None) and apply ``key.path=value`` overrides."""
    data = {}
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ValueError("config root must be a mapping")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValueError(f"override {item!r} is not of the form key.path=value")
        _set_path(data, key.strip(), yaml.safe_load(raw))
    return ExperimentConfig.model_validate(data)
