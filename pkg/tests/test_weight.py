import numpy as np
import pytest

from wglab.weight import PinningSite, WeightSpec, eval_p, max_eta0, validate_sandwich


def one_site(**kw):
    return WeightSpec(p0=1.0, sites=(PinningSite((0.0, 0.0), s=2.0, alpha=1.0, **kw),))


def test_eval_p_examples():
    spec = one_site()
    assert eval_p(spec, (0.0, 0.0)) == 1.0
    assert eval_p(spec, (0.1, 0.0)) == pytest.approx(1.01, rel=1e-14)
    flat = WeightSpec(p0=1.0)
    assert eval_p(flat, (0.3, -0.2)) == 1.0
    assert np.all(eval_p(flat, np.zeros(5), np.linspace(-0.9, 0.9, 5)) == 1.0)


def test_eta0_default_quarter_min_distance():
    sites = (PinningSite((-0.4, 0.0)), PinningSite((0.4, 0.0)))
    spec = WeightSpec(sites=sites)
    assert spec.eta0 == pytest.approx(0.25 * 0.6)
    assert max_eta0(sites, 1.0) == pytest.approx(0.15)
    with pytest.raises(ValueError):
        WeightSpec(sites=sites, eta0=0.3)


def test_cutoff_decoupled_from_eta0():
    one = WeightSpec(sites=(PinningSite((0.0, 0.0)),), cutoff=1.0)
    assert one.eta0 == pytest.approx(0.25)
    assert eval_p(one, (0.9, 0.0)) == pytest.approx(1.81)
    assert validate_sandwich(one, 1.0, 32).passed
    with pytest.raises(ValueError):
        WeightSpec(sites=(PinningSite((-0.4, 0.0)), PinningSite((0.4, 0.0))), cutoff=0.3)


def test_invariants_at_construction():
    with pytest.raises(ValueError):
        PinningSite((0.0, 0.0), s=2.0, alpha=1.0, beta=0.5)
    with pytest.raises(ValueError):
        PinningSite((0.0, 0.0), s=1.0)
    with pytest.raises(ValueError):
        WeightSpec(sites=(PinningSite((1.0, 0.0)),))


def test_sandwich_tight_model_passes():
    spec = one_site()
    assert validate_sandwich(spec, spec.eta0, 64).passed


def test_sandwich_with_bump():
    spec = WeightSpec(p0=1.0, sites=(PinningSite((0.1, -0.2), s=2.0, alpha=1.0, beta=1.5),), background=0.3)
    assert validate_sandwich(spec, spec.eta0, 64).passed
    # the bump is visible: a beta=alpha sandwich fails
    tight = WeightSpec(p0=1.0, sites=(PinningSite((0.1, -0.2), s=2.0, alpha=1.0),), background=0.3)
    assert not validate_sandwich(tight, tight.eta0, 64).passed


def test_sandwich_oracle_pointwise():
    # independent pointwise evaluation of both sides on a polar sample
    spec = WeightSpec(p0=2.0, sites=(PinningSite((0.0, 0.0), s=3.0, alpha=0.5, beta=0.75),), background=0.25)
    r = np.linspace(1e-3, spec.eta0, 200)[:, None]
    th = np.linspace(0, 2 * np.pi, 37)[None, :]
    excess = eval_p(spec, r * np.cos(th), r * np.sin(th)) - 2.0
    assert np.all(excess >= 0.5 * r**3 * (1 - 1e-12))
    assert np.all(excess <= 0.75 * r**3 * (1 + 1e-12))


def test_minimum_on_grid_at_site():
    sites = (PinningSite((-0.3, 0.1), s=2.0), PinningSite((0.35, -0.2), s=1.5, alpha=2.0))
    spec = WeightSpec(p0=0.7, sites=sites)
    n = 401
    xs = np.linspace(-1, 1, n)
    X, Y = np.meshgrid(xs, xs)
    inside = np.hypot(X, Y) < 1
    P = np.where(inside, eval_p(spec, X, Y), np.inf)
    h = xs[1] - xs[0]
    assert P.min() >= 0.7
    i = np.unravel_index(np.argmin(P), P.shape)
    dmin = min(np.hypot(X[i] - s.b[0], Y[i] - s.b[1]) for s in sites)
    assert dmin <= np.sqrt(2) * h
    # strictly above p0 away from the sites
    far = np.ones_like(inside)
    for s in sites:
        far &= np.hypot(X - s.b[0], Y - s.b[1]) > 2 * h
    assert np.all(P[far & inside] > 0.7)


def test_gradient_second_order_consistency():
    spec = WeightSpec(p0=1.0, sites=(PinningSite((0.0, 0.0), s=2.5),), background=0.2)
    pts = np.array([[0.05, 0.02], [0.2, 0.1], [0.3, -0.3], [0.45, 0.05]])

    def cdiff(hh):
        gx = (eval_p(spec, pts[:, 0] + hh, pts[:, 1]) - eval_p(spec, pts[:, 0] - hh, pts[:, 1])) / (2 * hh)
        return gx

    g1, g2, g3 = cdiff(4e-3), cdiff(2e-3), cdiff(1e-3)
    # Richardson ratio of successive differences ~ 4 for a C^3 function
    ratio = np.abs(g1 - g2) / np.maximum(np.abs(g2 - g3), 1e-14)
    assert np.all(ratio > 3.0) and np.all(ratio < 5.0)
