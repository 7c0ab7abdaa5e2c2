import math

import numpy as np
import pytest

from wglab.bounds import (
    TrialField,
    TrialPlan,
    build_trial_field,
    fit_asymptotics,
    harmonic_dirichlet,
    i_evaluator,
    perforated_lower_bound,
    regressors,
    upper_bound_formula,
    upper_bound_terms,
    vortex_distance_report,
)
from wglab.errors import PreconditionError, ResolutionError
from wglab.field import Field2D, Grid, energy, make_boundary, reference_map
from wglab.minimizer import ClusterReport, find_bad_discs
from wglab.potential import PotentialSpec
from wglab.weight import PinningSite, WeightSpec

QUARTIC = PotentialSpec("quartic")
EXP1 = PotentialSpec("exp_family", h=1.0)
# eta0 = 1/2 on a disc of radius 2, plateau 1 outside the unit disc
W2 = WeightSpec(sites=(PinningSite((0.0, 0.0), s=2.0, alpha=1.0),), domain_radius=2.0)
IQ = i_evaluator(QUARTIC)
IE = i_evaluator(EXP1)


def test_plan_geometry():
    plan = TrialPlan.from_weight(W2, [3], 1e-4)
    T = math.log(1e4) ** -0.5
    assert plan.T(0) == pytest.approx(T)
    pts = [x for x, _ in plan.seeds]
    assert len(pts) == 3
    for x in pts:
        assert math.hypot(*x) == pytest.approx(T / 2)
    assert plan.radii(0) == pytest.approx((T / 60, T / 30))


def test_plan_preconditions():
    with pytest.raises(PreconditionError):
        TrialPlan.from_weight(W2, [1], 0.1)  # T = 0.66 > eta0
    with pytest.raises(ValueError):
        TrialPlan.from_weight(W2, [0], 1e-4)
    with pytest.raises(ValueError):
        TrialPlan.from_weight(W2, [1], 0.5)
    with pytest.raises(PreconditionError):
        TrialField(TrialPlan.from_weight(W2, [2], 3e-3), QUARTIC)  # T/40 below the core


@pytest.mark.parametrize("pot", [QUARTIC, EXP1], ids=["quartic", "exp1"])
def test_trial_field_shape(pot):
    tf = TrialField(TrialPlan.from_weight(W2, [2], 1e-4), pot)
    core = tf.cores[0]
    r = np.linspace(0, 1.2 * core.r2, 2000)
    m = tf.core_modulus(0, r)
    assert m[0] == 0.0 and np.all(np.diff(m) >= -1e-12)
    assert np.all(m[r >= core.r2] == 1.0)
    # continuity at the joins
    for r_join in (core.lam * 1e-4, core.r1):
        lo, hi = tf.core_modulus(0, np.array([r_join * (1 - 1e-9), r_join * (1 + 1e-9)]))
        assert abs(lo - hi) < 1e-6
    # phase is the boundary datum on |x| = R
    th = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    z = 2.0 * np.exp(1j * th)
    assert np.allclose(tf.phase(z), np.exp(2j * th), atol=1e-12)
    assert tf.winding((0.0, 0.0), 1.0) == 2
    for c in tf.centers:
        assert tf.winding((c.real, c.imag), 0.5 * core.r2) == 1


def test_harmonic_dirichlet_closed_forms():
    assert harmonic_dirichlet([(0.0, 0.0)], [1], 1.0, 0.01) == pytest.approx(2 * math.pi * math.log(100), rel=1e-12)
    assert harmonic_dirichlet([(0.0, 0.0)], [3], 1.0, 0.1) == pytest.approx(18 * math.pi * math.log(10), rel=1e-12)
    # off-centre vortex without images: 2 pi log(R/R0) + pi log(1 - |a|^2/R^2) up to O(R0^2)
    a = 0.3
    E = harmonic_dirichlet([(a, 0.0)], [1], 1.0, 1e-4)
    assert E == pytest.approx(2 * math.pi * math.log(1e4) + math.pi * math.log(1 - a * a), abs=1e-6)


@pytest.mark.parametrize("d", [1, 2])
def test_outer_quadrature_matches_boundary_integral(d):
    tf = TrialField(TrialPlan.from_weight(W2, [d], 1e-5), QUARTIC)
    r2 = tf.cores[0].r2
    outer = tf._outer_dirichlet(lambda x, y: np.ones(np.shape(x)), 2.0)
    exact = harmonic_dirichlet([(c.real, c.imag) for c in tf.centers], [1] * d, 2.0, r2, domain_radius=2.0)
    assert outer == pytest.approx(exact, abs=1e-5)


def test_trial_energy_grid_cross_check():
    # first-order grid convergence of the sampled field to the quadrature value
    W = WeightSpec(sites=(PinningSite((0.0, 0.0), s=2.0),), domain_radius=2.0)
    plan = TrialPlan.from_weight(W, [1], 3e-3)
    tf = TrialField(plan, QUARTIC)
    Eq = tf.energy(W).total
    Eg = [energy(build_trial_field(plan, tf, Grid(n, 2.0)), W, QUARTIC).total for n in (1280, 2560)]
    rich = 2 * Eg[1] - Eg[0]
    assert abs(Eg[1] - Eq) < abs(Eg[0] - Eq)
    assert abs(rich - Eq) < 0.05


def test_build_trial_field_single_vortex_detected():
    plan = TrialPlan.from_weight(W2, [1], 3e-3)
    f = build_trial_field(plan, QUARTIC, Grid(1280, 2.0))
    vs = find_bad_discs(f)
    assert len(vs.discs) == 1 and vs.discs[0].nu == 1
    x1 = plan.seeds[0][0]
    assert math.dist(vs.discs[0].center, x1) < f.grid.h
    assert f.boundary.winding() == 1


def test_build_trial_field_resolution_errors():
    plan = TrialPlan.from_weight(W2, [1], 3e-3)
    with pytest.raises(ResolutionError):
        build_trial_field(plan, QUARTIC, Grid(256, 2.0))
    with pytest.raises(ValueError):
        build_trial_field(plan, QUARTIC, Grid(256, 1.0))


def test_trial_energy_halving_eps_adds_leading_term():
    E = [TrialField(TrialPlan.from_weight(W2, [1], e), EXP1).energy(W2).total for e in (1e-6, 5e-7)]
    assert E[1] - E[0] == pytest.approx(2 * math.pi * math.log(2), rel=0.1)


def test_upper_bound_examples():
    eps = 1e-4
    L = math.log(1e4)
    _, t2, _ = upper_bound_terms(eps, [(1, 2.0)], 1.0, IQ)
    assert t2 == 0.0
    _, t2, _ = upper_bound_terms(eps, [(2, 2.0)], 1.0, IQ)
    assert t2 == pytest.approx(2 * math.pi * math.log(L))
    v1 = upper_bound_formula(eps, 2, [(2, 2.0)], 1.0, IE)
    v2 = upper_bound_formula(eps, 2, [(2, 2.0)], 2.0, IE)
    assert v2 == pytest.approx(2 * v1, rel=1e-14)
    expected = 4 * math.pi * L + 2 * math.pi * math.log(L) - 4 * math.pi * IE(L**-0.5 / eps)
    assert v1 == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        upper_bound_formula(eps, 3, [(2, 2.0)], 1.0, IE)
    with pytest.raises(ValueError):
        upper_bound_formula(0.5, 1, [(1, 2.0)], 1.0, IE)


def test_upper_bound_distinct_s_warns(caplog):
    upper_bound_formula(1e-4, 2, [(1, 2.0), (1, 3.0)], 1.0, IE)
    assert "distinct s_k" in caplog.text


def test_lower_bound_reference_map_itself():
    g = Grid(256)
    pts = [((0.15, 0.0), 1), ((-0.15, 0.05), 1)]
    f = Field2D(g, reference_map(g, pts), 0.01, make_boundary(g, 2))
    # R < 1 keeps the boundary datum out of the region
    rep = perforated_lower_bound(f, [(c, 0.05, d) for c, d in pts], 0.9, 1.0, None, QUARTIC, IQ)
    assert rep.interaction == 0.0
    assert rep.lhs_energy == pytest.approx(rep.reference_energy, rel=1e-12)
    assert rep.slack == pytest.approx(rep.i_correction)
    assert rep.slack >= 0 and rep.budget == pytest.approx(0.0, abs=1e-20)
    # homogeneity in p0
    rep2 = perforated_lower_bound(f, [(c, 0.05, d) for c, d in pts], 0.9, 1.0, WeightSpec(p0=2.0), QUARTIC, IQ)
    for k in ("lhs_energy", "i_correction", "slack"):
        assert getattr(rep2, k) == pytest.approx(2 * getattr(rep, k), rel=1e-12)


def test_lower_bound_interaction_grows_as_holes_approach():
    g = Grid(256)
    vals = []
    for sep in (0.6, 0.3, 0.15):
        pts = [((sep / 2, 0.0), 1), ((-sep / 2, 0.0), 1)]
        f = Field2D(g, reference_map(g, pts), 0.01, make_boundary(g, 2))
        rep = perforated_lower_bound(f, [(c, 0.03, d) for c, d in pts], 1.0, 0.75, None, QUARTIC, IQ)
        assert rep.interaction == pytest.approx(2 * math.pi * (1 - 9 / 16) * 2 * math.log(1.0 / sep))
        vals.append(rep.interaction)
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] - vals[1] == pytest.approx(vals[1] - vals[0])


def test_lower_bound_preconditions():
    g = Grid(128)
    pts = [((0.1, 0.0), 1), ((-0.1, 0.0), 1)]
    f = Field2D(g, reference_map(g, pts), 0.01, make_boundary(g, 2))
    holes = [(c, 0.04, d) for c, d in pts]
    with pytest.raises(PreconditionError):  # |a_i - a_j| < 4 R0
        perforated_lower_bound(f, [(c, 0.06, d) for c, d in pts], 1.0, 0.75, None, QUARTIC, IQ)
    with pytest.raises(PreconditionError):  # R0 > R/4
        perforated_lower_bound(f, holes, 0.15, 0.75, None, QUARTIC, IQ)
    with pytest.raises(PreconditionError):  # |a_i| > R/2
        perforated_lower_bound(f, holes, 0.18, 0.75, None, QUARTIC, IQ)
    with pytest.raises(PreconditionError):  # wrong degree
        perforated_lower_bound(f, [(pts[0][0], 0.04, 2), (pts[1][0], 0.04, 1)], 1.0, 0.75, None, QUARTIC, IQ)
    X, Y = g.XY
    dip = Field2D(g, f.values * (1 - 0.5 * np.exp(-((X - 0.5) ** 2 + Y**2) / 0.01)), 0.01, f.boundary)
    with pytest.raises(PreconditionError):  # modulus floor
        perforated_lower_bound(dip, holes, 1.0, 0.75, None, QUARTIC, IQ)


@pytest.mark.parametrize("pot", [QUARTIC, EXP1], ids=["quartic", "exp1"])
def test_lower_bound_trial_fields_positive_slack(pot):
    for eps in (1e-4, 1e-5):
        tf = TrialField(TrialPlan.from_weight(W2, [2], eps), pot)
        R0 = tf.cores[0].lam * eps
        holes = [((c.real, c.imag), R0, 1) for c in tf.centers]
        rep = perforated_lower_bound(tf, holes, 2.0, 0.75, W2, pot)
        assert rep.min_modulus >= 0.75 and rep.slack > 0 and rep.slack_positive > 0
    with pytest.raises(PreconditionError):
        perforated_lower_bound(tf, [((0.0, 0.0), R0, 2)], 2.0, 0.75, W2, pot)


def _synthetic(eps, clusters, p0, I, const):
    cols = regressors(eps, clusters, I)
    d = sum(dk for dk, _ in clusters)
    th = {"log": 2 * math.pi * p0 * d,
          "loglog": 2 * math.pi * p0 * sum((dk * dk - dk) / sk for dk, sk in clusters),
          "I": -2 * math.pi * p0 * d}
    return sum(th[k] * cols[k] for k in th) + const, th


@pytest.mark.parametrize("clusters", [[(2, 2.0)], [(1, 2.0), (2, 3.0)]])
def test_fit_recovers_synthetic_coefficients(clusters):
    eps = np.geomspace(1e-2, 1e-12, 6)
    E, th = _synthetic(eps, clusters, 1.3, IE, 0.7)
    fit = fit_asymptotics(list(zip(eps, E)), clusters, 1.3, IE)
    assert fit.dropped == []
    for k, v in th.items():
        assert fit.coefficients[k] == pytest.approx(v, abs=1e-8)
        assert fit.theory[k] == pytest.approx(v)
    assert fit.coefficients["const"] == pytest.approx(0.7, abs=1e-8)
    assert np.max(np.abs(fit.residuals)) < 1e-8


def test_fit_drops_collinear_quartic_I():
    # quartic I(R) = j(rho0) - 1/R^2 is constant to rounding at these R
    eps = np.geomspace(1e-6, 1e-12, 5)
    E, _ = _synthetic(eps, [(1, 2.0)], 1.0, IQ, 0.0)
    fit = fit_asymptotics(list(zip(eps, E)), [(1, 2.0)], 1.0, IQ)
    assert "I" in fit.dropped and fit.warnings
    assert fit.coefficients["log"] == pytest.approx(2 * math.pi, abs=1e-6)


def test_fit_input_errors():
    with pytest.raises(ValueError):
        fit_asymptotics([(0.1, 1), (0.05, 2), (0.01, 3)], [(1, 2.0)], 1.0, IE)
    with pytest.raises(ValueError):
        fit_asymptotics([(0.1, 1), (0.08, 2), (0.05, 3), (0.02, 4)], [(1, 2.0)], 1.0, IE)


def test_fit_loglog_indistinguishable_from_zero_for_d1():
    rng = np.random.default_rng(11)
    eps = np.geomspace(1e-2, 1e-8, 8)
    E = 2 * math.pi * np.log(1 / eps) + 1.1 + rng.normal(scale=0.02, size=eps.size)
    fit = fit_asymptotics(list(zip(eps, E)), [(1, 2.0)], 1.0, IQ, terms=("log", "loglog", "const"))
    assert abs(fit.coefficients["loglog"]) < 3 * fit.standard_errors["loglog"]
    assert fit.coefficients["log"] == pytest.approx(2 * math.pi, rel=0.1)


def test_distance_report():
    W = WeightSpec(sites=(PinningSite((0.0, 0.0)),))
    single = ClusterReport([0.1, 0.07, 0.05], [[0]] * 3, [[1]] * 3, [[0.0]] * 3, [[[]]] * 3, False)
    rep = vortex_distance_report(single, W, IE)
    assert rep.rows == [] and rep.C9 == {}
    eps = [0.1, 0.07, 0.05, 0.035]
    dist = [0.9 * math.log(1 / e) ** -0.5 * f for e, f in zip(eps, (1.0, 0.98, 0.97, 0.95))]
    pair = ClusterReport(eps, [[0, 0]] * 4, [[2]] * 4, [[x / 2] for x in dist], [[[x]] for x in dist], False)
    rep = vortex_distance_report(pair, W, IE)
    assert len(rep.rows) == 4
    assert rep.C9[0] == pytest.approx(0.9)
    assert rep.nonincreasing[0]
    for r in rep.rows:
        assert r["min_normalized"] >= math.exp(-rep.C8[0] * r["I_arg_value"]) - 1e-12
