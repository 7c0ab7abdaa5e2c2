import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from wglab.errors import DomainError, NonMonotoneError, RangeError
from wglab.potential import (
    PotentialSpec,
    eval_J,
    eval_j,
    invert_j,
    j_at_rho0,
    validate_hypotheses,
)

QUARTIC = PotentialSpec("quartic")
EXP1 = PotentialSpec("exp_family", h=1.0)
EXP2 = PotentialSpec("exp_family", h=2.0)


def _tabulated():
    t = np.linspace(0.0, 1.2, 41)
    return PotentialSpec("tabulated", table_t=tuple(t), table_J=tuple(t**2 / 4 + t**3 / 10), rho0=1.0)


ALL_SPECS = [QUARTIC, EXP1, EXP2, _tabulated()]


def test_eval_J_examples():
    assert eval_J(EXP1, 0.0) == 0.0
    assert eval_J(EXP1, -0.3) == 0.0
    assert eval_J(EXP1, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert eval_J(QUARTIC, 0.5) == pytest.approx(0.0625, rel=1e-15)


def test_eval_J_no_overflow_small_t():
    with np.errstate(all="raise"):
        v = eval_J(EXP2, np.array([1e-3, 1e-2, 0.1]))
    assert v[0] == 0.0 and v[1] == 0.0
    assert v[2] == pytest.approx(math.exp(-100.0))


def test_eval_j_examples():
    assert eval_j(QUARTIC, 0.5) == pytest.approx(0.25, rel=1e-15)
    assert eval_j(EXP1, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-14)
    assert eval_j(EXP2, 1e-2) == 0.0
    with pytest.raises(DomainError):
        eval_j(EXP1, 0.0)
    with pytest.raises(DomainError):
        eval_j(QUARTIC, np.array([0.2, -1.0]))


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind + str(s.h))
def test_eval_j_matches_central_difference(spec):
    t = np.geomspace(1e-2, 1.0, 60)
    # step on the local scale of variation of J (h t^-h per unit log t for flat wells)
    step = 1e-4 * t / np.maximum(1.0, spec.h * t ** (-spec.h) if spec.kind == "exp_family" else 1.0)
    fd = (eval_J(spec, t + step) - eval_J(spec, t - step)) / (2 * step)
    jv = eval_j(spec, t)
    mask = jv > 1e-200  # EXP2 underflows to exactly 0 for t near 1e-2
    assert np.all(np.abs(jv[mask] - fd[mask]) <= 1e-5 * np.abs(jv[mask]))


def test_invert_j_examples():
    assert invert_j(QUARTIC, 0.25) == pytest.approx(0.5, rel=1e-10)
    for spec in ALL_SPECS:
        assert invert_j(spec, j_at_rho0(spec)) == spec.rho0
    spec = PotentialSpec("exp_family", h=1.0, rho0=0.5)
    # j restricted to (0, 1/2] has s=e^-1 below j(1/2); the branch on (0, 1] with rho0=1 is not monotone
    assert eval_j(spec, invert_j(spec, math.exp(-1.0))) == pytest.approx(math.exp(-1.0), rel=1e-10)


def test_invert_j_exp_family_closed_form_at_one():
    # rho0=1 is outside the convexity window, so invert_j must refuse
    spec = PotentialSpec("exp_family", h=1.0, rho0=1.0)
    with pytest.raises(NonMonotoneError):
        invert_j(spec, math.exp(-1.0))


def test_invert_j_lambert_oracle():
    # j(t) = s  <=>  x^2 e^{-x} = s with x = 1/t > 2, i.e. x = -2 W_{-1}(-sqrt(s)/2)
    s = np.geomspace(1e-250, j_at_rho0(EXP1), 50)
    x = -2.0 * lambertw(-np.sqrt(s) / 2.0, k=-1).real
    assert np.allclose(invert_j(EXP1, s), 1.0 / x, rtol=1e-11)


def test_invert_j_range_error():
    with pytest.raises(RangeError):
        invert_j(EXP1, 2 * j_at_rho0(EXP1))
    with pytest.raises(DomainError):
        invert_j(EXP1, 0.0)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind + str(s.h))
def test_invert_is_inverse_within_tol(spec):
    t = np.geomspace(0.05, spec.rho0, 40)
    s = eval_j(spec, t)
    back = invert_j(spec, s)
    assert np.all(np.abs(eval_j(spec, back) - s) <= spec.inversion_tol * s)
    assert np.allclose(back, t, rtol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1.0), st.sampled_from(ALL_SPECS))
def test_J_below_t_times_j(u, spec):
    t = u * spec.rho0
    assert eval_J(spec, t) <= t * eval_j(spec, t) * (1 + 1e-12)


def test_validate_hypotheses_examples():
    assert validate_hypotheses(QUARTIC, 64).passed
    rep = validate_hypotheses(PotentialSpec("exp_family", h=1.0, rho0=0.4), 64)
    assert rep.passed, rep.lines()
    rep = validate_hypotheses(PotentialSpec("exp_family", h=1.0, rho0=0.9), 64)
    assert rep["H1"].passed and rep["H2"].passed
    assert not rep["H3"].passed
    assert rep["H3"].witness > 0.5


def test_validate_needs_enough_samples():
    with pytest.raises(ValueError):
        validate_hypotheses(QUARTIC, 8)


def test_default_rho0():
    assert QUARTIC.rho0 == 1.0
    assert EXP1.rho0 == pytest.approx(0.4)
    assert validate_hypotheses(EXP2, 64).passed


def test_roundtrip_dict():
    for spec in ALL_SPECS:
        assert PotentialSpec.from_dict(spec.to_dict()) == spec
