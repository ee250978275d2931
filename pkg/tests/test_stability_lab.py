import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsfde.fading_memory import Segment
from nsfde.integrator import SchemeConfig, initial_segment, simulate_ensemble
from nsfde.measures import FadingMeasure
from nsfde.model import DeclaredParams, NeutralModel, constant_ledger, example5_model
from nsfde.stability_lab import (Curve, FitError, FunctionalFamily, coupling_decay,
                                 decreasing_beyond_floor, empirical_dl, fit_decay_rate,
                                 path_invariants, second_moment_curve, segment_norm_curve,
                                 stability_in_distribution_report)

DECL = DeclaredParams(0.01, 1.0, 1e-6, 1e-6, 1e-6)


def scalar(mu=None, **kw):
    return NeutralModel(mu or FadingMeasure.atom(0.0), 0.5, DECL, **kw)


def test_second_moment_frozen():
    m = scalar()
    cfg = SchemeConfig(h=0.1, T=2.0)
    ens = simulate_ensemble(m, initial_segment(m, cfg, 2.0), 3, cfg, force=True)
    c = second_moment_curve(ens, [0.5, 1.0, 2.0])
    assert np.all(c.estimate == 4.0) and np.all(c.stderr == 0.0)


def test_second_moment_ou_oracle():
    m = scalar(A=-1.0, sigma0=1.0)
    cfg = SchemeConfig(h=1e-2, T=2.0, master_seed=123)
    ens = simulate_ensemble(m, initial_segment(m, cfg, 1.0), 4000, cfg)
    ts = [0.5, 1.0, 2.0]
    c = second_moment_curve(ens, ts)
    # the exact second moment of the Euler chain, then the continuous one
    h = cfg.h
    for t, est, se in zip(ts, c.estimate, c.stderr):
        n = round(t / h)
        q = (1 - h) ** 2
        chain = q ** n + h * (1 - q ** n) / (1 - q)
        assert abs(est - chain) <= 3 * se
        exact = math.exp(-2 * t) + (1 - math.exp(-2 * t)) / 2
        assert abs(est - exact) <= 3 * se + h


def test_segment_norm_frozen():
    m = scalar()
    cfg = SchemeConfig(h=0.1, T=1.0)
    for v, target in ((0.0, 0.0), (1.0, 1.0)):
        ens = simulate_ensemble(m, initial_segment(m, cfg, v), 2, cfg, force=True)
        c = segment_norm_curve(ens, 0.5, [0.5, 1.0])
        assert np.all(c.estimate == target)


def test_curve_csv_and_violations():
    c = Curve.build("x", [1.0, 2.0], [1.0, 5.0], [0.1, 0.1], [2.0, 2.0], h=0.01)
    lines = c.to_csv().splitlines()
    assert lines[0] == "t,estimate,stderr,bound,pass"
    assert lines[1].endswith(",true") and lines[2].endswith(",false")
    (v,) = c.violations()
    assert v["t"] == 2.0 and v["bound"] == 2.0
    assert Curve.build("y", [1.0], [3.0], [0.0]).to_csv().splitlines()[1] == "1.0,3.0,0.0,,true"


def test_fit_exact_exponential():
    t = np.linspace(0, 5, 11)
    f = fit_decay_rate(t, 3 * np.exp(-0.7 * t))
    assert f.rate == pytest.approx(0.7, abs=1e-9)
    assert f.r2 == pytest.approx(1.0, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3), abs=1e-9)


def test_fit_with_estimated_plateau():
    t = np.linspace(0, 30, 61)
    f = fit_decay_rate(t, 1 + 2 * np.exp(-0.5 * t), plateau_mode="estimated")
    assert f.rate == pytest.approx(0.5, abs=0.05)


def test_fit_impossible():
    with pytest.raises(FitError):
        fit_decay_rate(np.arange(6.0), np.zeros(6))
    with pytest.raises(FitError):
        fit_decay_rate(np.arange(3.0), np.ones(3))
    with pytest.raises(FitError):
        fit_decay_rate(np.arange(8.0), np.ones(8), plateau_mode="estimated")


def test_coupling_identical_is_zero():
    m = scalar(A=-1.0)
    cfg = SchemeConfig(h=0.01, T=2.0)
    xi = initial_segment(m, cfg, 1.0)
    res = coupling_decay(m, xi, xi, cfg, 4, checkpoints=[1.0, 2.0])
    assert res.identical and res.fit is None
    assert np.all(res.envelope.estimate == 0)


def test_coupling_ode_rate():
    m = scalar(A=-1.0)
    cfg = SchemeConfig(h=1e-3, T=5.0)
    res = coupling_decay(m, initial_segment(m, cfg, 1.0), initial_segment(m, cfg, 0.0), cfg, 2,
                         checkpoints=[1.0, 2.0, 3.0, 4.0, 5.0], window=0.5)
    assert res.fit.rate == pytest.approx(2.0, abs=0.05)
    assert res.fit_error is None


def test_coupling_non_decaying_is_reported_not_raised():
    m = scalar(A=0.5)
    cfg = SchemeConfig(h=0.01, T=4.0)
    res = coupling_decay(m, initial_segment(m, cfg, 1.0), initial_segment(m, cfg, 0.0), cfg, 2,
                         checkpoints=[1.0, 2.0, 4.0], force=True)
    assert res.fit_error is not None and not res.passed
    assert res.summary()["violation_candidate"]


# ---------------------------------------------------------------- d_L


def point(v, depth=101, h=0.01):
    return [Segment.constant(v, h, depth)]


def test_dl_identical_is_zero():
    segs = [Segment(0.01, np.random.default_rng(i).normal(size=(50, 1))) for i in range(20)]
    assert empirical_dl(segs, segs, 200, seed=1, r=0.25) == 0.0


@pytest.mark.parametrize("d,target", [(0.5, 0.5), (1.0, 1.0), (5.0, 2.0)])
def test_dl_point_masses(d, target):
    est = empirical_dl(point(0.0), point(d), 1000, seed=0, r=0.25)
    assert est == pytest.approx(target, abs=0.05)
    assert est <= min(d, 2.0) + 1e-12  # lower bound of the true distance


@given(st.integers(0, 2**32 - 1))
def test_dl_symmetric_bounded_and_nested(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(30, 40, 2))
    B = rng.normal(loc=0.3, size=(25, 40, 2))
    a = empirical_dl(A, B, 64, seed=seed % 1000, r=0.1, h=0.05)
    b = empirical_dl(B, A, 64, seed=seed % 1000, r=0.1, h=0.05)
    assert a == b
    assert 0.0 <= a <= 2.0
    small = empirical_dl(A, B, 16, seed=seed % 1000, r=0.1, h=0.05)
    assert small <= a


def test_dl_family_is_lipschitz_one():
    fam = FunctionalFamily.draw(300, 60, 3, seed=4)
    assert np.allclose(np.abs(fam.coefs).sum(axis=1), 1.0)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 60, 3))
    y = x + rng.normal(scale=0.1, size=x.shape)
    gx, gy = fam.evaluate(x, 0.1, 0.2), fam.evaluate(y, 0.1, 0.2)
    sup = np.max(np.linalg.norm(x - y, axis=2), axis=1)
    assert np.all(np.abs(gx - gy) <= sup[:, None] + 1e-12)
    assert np.all(np.abs(gx) <= 1)


def test_dl_shape_mismatch():
    with pytest.raises(ValueError):
        empirical_dl(point(0.0, depth=10), point(0.0, depth=11), 10)
    with pytest.raises(ValueError):
        empirical_dl([], point(0.0), 10)


def test_distribution_report_identical_and_frozen():
    m = scalar(A=-1.0, sigma0=1.0)
    cfg = SchemeConfig(h=0.05, T=2.0, master_seed=8)
    xi = initial_segment(m, cfg, 1.0)
    rep = stability_in_distribution_report(m, [xi, xi], cfg, [1.0, 2.0], 50, 100)
    assert rep.cross["0-1"] == [0.0, 0.0]
    frozen = scalar()
    eta = initial_segment(frozen, cfg, 0.0)
    rep = stability_in_distribution_report(frozen, [xi, eta], cfg, [0.5, 1.0, 2.0], 20, 1000,
                                           force=True)
    vals = rep.cross["0-1"]
    assert vals[0] == vals[1] == vals[2]
    assert vals[0] == pytest.approx(1.0, abs=0.02)
    assert not rep.passed


def test_distribution_report_errors():
    m = scalar(A=-1.0, sigma0=1.0)
    cfg = SchemeConfig(h=0.05, T=2.0)
    xi = initial_segment(m, cfg, 1.0)
    with pytest.raises(ValueError):
        stability_in_distribution_report(m, [xi], cfg, [1.0], 10)
    with pytest.raises(ValueError):
        stability_in_distribution_report(m, [xi, xi], cfg, [2.0, 1.0], 10)


def test_decreasing_rule():
    floors = [0.01] * 4
    assert decreasing_beyond_floor([0.8, 0.5, 0.2, 0.05], floors)
    assert not decreasing_beyond_floor([0.8, 0.795, 0.2, 0.05], floors)
    assert decreasing_beyond_floor([0.8, 0.4, 0.015, 0.018], floors)
    assert not decreasing_beyond_floor([0.8, 0.4, 0.015, 0.3], floors)


def test_path_invariants_example5():
    m = example5_model(450.0, math.sqrt(2), 1.0, 0.25)
    cfg = SchemeConfig(h=0.01, T=4.0, master_seed=2, drift_implicit=True)
    ens = simulate_ensemble(m, initial_segment(m, cfg, lambda th: 1 + np.sin(th)), 10, cfg)
    checks = path_invariants(m, ens, constant_ledger(m), 10)
    assert [c.name for c in checks] == ["memory_energy", "neutral_sup"]
    assert all(c.passed for c in checks)


def test_path_invariants_catch_wrong_k():
    # pure neutral dynamics: y = x - D(x_t) stays at its initial value (about 0 here)
    # while x = D(x_t) stays near 1/2, so a tiny declared k breaks the sup lemma
    m = NeutralModel(FadingMeasure.exponential(1.0), 0.25, DeclaredParams(1e-6, 1, 1, 1, 1),
                     kappa=0.5)
    cfg = SchemeConfig(h=0.01, T=2.0)
    xi = initial_segment(m, cfg, lambda th: np.where(th < 0, 1.0, 0.5))
    ens = simulate_ensemble(m, xi, 1, cfg, force=True)
    checks = path_invariants(m, ens, None, 1)
    assert checks[0].passed
    assert not checks[1].passed and checks[1].witness is not None
