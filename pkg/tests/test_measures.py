import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from nsfde.fading_memory import Segment
from nsfde.measures import (Atom, ExpComponent, FadingMeasure, TruncationError, in_Mr,
                            integrate_segment, lag_weights, r_moment, required_depth)


def random_measure(rng):
    na, ne = rng.integers(0, 3), rng.integers(0, 3)
    if na + ne == 0:
        ne = 1
    w = rng.dirichlet(np.ones(na + ne))
    atoms = [Atom(-float(rng.uniform(0, 3)), float(w[i])) for i in range(na)]
    exps = [ExpComponent(float(rng.uniform(0.6, 5)), float(w[na + j])) for j in range(ne)]
    total = sum(a.w for a in atoms) + sum(e.w for e in exps)
    # renormalise exactly enough to pass validation
    if exps:
        exps[0] = ExpComponent(exps[0].rho, exps[0].w + 1.0 - total)
    else:
        atoms[0] = Atom(atoms[0].theta, atoms[0].w + 1.0 - total)
    return FadingMeasure(tuple(atoms), tuple(exps))


def quad_moment(mu, r):
    """Independent oracle: numerical integration of the exponential densities."""
    total = sum(a.w * math.exp(-r * a.theta) for a in mu.atoms)
    for e in mu.exp_components:
        val, _ = integrate.quad(lambda th: e.w * e.rho * math.exp((e.rho - r) * th),
                                -np.inf, 0, epsabs=0, epsrel=1e-12, limit=200)
        total += val
    return total


def test_moment_examples():
    assert r_moment(FadingMeasure.atom(-1.0), 0.5) == pytest.approx(math.exp(0.5), rel=1e-15)
    assert r_moment(FadingMeasure.exponential(1.0), 0.5) == 2.0
    assert quad_moment(FadingMeasure.exponential(1.0), 0.5) == pytest.approx(2.0, rel=1e-10)


def test_membership():
    assert in_Mr(FadingMeasure.exponential(1.0), 0.5)
    assert not in_Mr(FadingMeasure.exponential(1.0), 1.0)
    assert r_moment(FadingMeasure.exponential(1.0), 1.0) == math.inf
    assert in_Mr(FadingMeasure.atom(-5.0), 100.0)


def test_random_mixtures_against_quadrature(rng):
    for _ in range(50):
        mu = random_measure(rng)
        assert r_moment(mu, 0.0) == pytest.approx(1.0, abs=1e-12)
        r = float(rng.uniform(0, 0.5))
        assert r_moment(mu, r) == pytest.approx(quad_moment(mu, r), rel=1e-8)


@given(st.integers(0, 2**32 - 1), st.floats(0, 0.59), st.floats(0, 0.59))
def test_monotone_in_r_and_nesting(seed, r1, r2):
    mu = random_measure(np.random.default_rng(seed))
    r1, r2 = sorted((r1, r2))
    assert r_moment(mu, r1) <= r_moment(mu, r2)
    if in_Mr(mu, r2):
        assert in_Mr(mu, r1)


def test_validation():
    with pytest.raises(ValueError):
        FadingMeasure((Atom(-1.0, 0.5),))
    with pytest.raises(ValueError):
        FadingMeasure((Atom(1.0, 1.0),))
    with pytest.raises(ValueError):
        FadingMeasure(exp_components=(ExpComponent(-1.0, 1.0),))
    with pytest.raises(ValueError):
        r_moment(FadingMeasure.exponential(1.0), -0.1)


def test_json_roundtrip():
    mu = FadingMeasure((Atom(-1.0, 0.5),), (ExpComponent(1.0, 0.5),))
    assert FadingMeasure.from_json(mu.to_json()) == mu
    with pytest.raises(ValueError):
        FadingMeasure.from_json({"atoms": [], "exp": [], "extra": 1})


def test_required_depth_examples():
    assert required_depth(FadingMeasure.atom(-2.0), 0.3, 1e-3) == 2.0
    T = required_depth(FadingMeasure.exponential(1.0), 0.25, 1e-6)
    assert T == pytest.approx(2 * math.log(2e6), abs=1e-9)
    assert T == pytest.approx(29.0173, abs=1e-4)
    # the tail at T, by quadrature, is at the tolerance
    tail, _ = integrate.quad(lambda th: math.exp(-0.5 * th) * math.exp(th), -np.inf, -T)
    assert tail == pytest.approx(1e-6, rel=1e-6)
    Tg = required_depth(FadingMeasure.exponential(1.0), 0.25, 1e-6, h=0.01)
    assert Tg >= T and Tg - T < 0.01 + 1e-9
    assert abs(Tg / 0.01 - round(Tg / 0.01)) < 1e-9


def test_required_depth_mixture_covers_each_component():
    mu = FadingMeasure((Atom(-40.0, 0.5),), (ExpComponent(2.0, 0.25), ExpComponent(0.8, 0.25)))
    T = required_depth(mu, 0.2, 1e-8)
    assert T >= 40.0
    assert mu.tail(T, 0.4) < 1e-8
    for e in mu.exp_components:
        assert e.w * e.rho / (e.rho - 0.4) * math.exp(-(e.rho - 0.4) * T) < 1e-8


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.001, 0.01, 0.1]))
def test_lag_weights_normalised(seed, h):
    mu = random_measure(np.random.default_rng(seed))
    depth = int(round(required_depth(mu, 0.25, 1e-8, h) / h)) + 1
    W = lag_weights(mu, h, depth)
    assert abs(W.sum() - 1.0) < 1e-12
    assert np.all(W >= 0)


def test_integrate_constant_and_square():
    mu = FadingMeasure((Atom(-0.37, 0.3),), (ExpComponent(1.5, 0.7),))
    h = 0.01
    depth = int(round(required_depth(mu, 0.25, 1e-8 * r_moment(mu, 0.5), h) / h)) + 1
    seg = Segment.constant([3.0, -2.0], h, depth)
    lin = integrate_segment(mu, seg, "linear", r=0.25)
    assert np.allclose(lin.value, [3.0, -2.0], atol=1e-10)
    sq = integrate_segment(mu, seg, "squared", r=0.25)
    assert sq.value == pytest.approx(13.0, abs=1e-10)


def test_integrate_theta_against_atom_and_exponential():
    h = 1e-3
    seg = Segment.from_function(lambda th: th, h, 2001)
    assert integrate_segment(FadingMeasure.atom(-1.0), seg).value[0] == pytest.approx(-1.0, abs=1e-12)
    # exact for piecewise-linear data apart from the far tail
    mu = FadingMeasure.exponential(5.0)
    seg = Segment.from_function(lambda th: th, h, 10_001)
    val = integrate_segment(mu, seg, r=0.0, tol_tail=1e-12).value[0]
    assert val == pytest.approx(-1 / 5.0, abs=1e-12)


def test_integrate_squared_oracle():
    mu = FadingMeasure.exponential(2.0)
    h = 1e-3
    seg = Segment.from_function(np.cos, h, 20_001)
    val = integrate_segment(mu, seg, "squared", r=0.1).value
    oracle, _ = integrate.quad(lambda th: np.cos(th) ** 2 * 2 * np.exp(2 * th), -20, 0, limit=400)
    assert val == pytest.approx(oracle, abs=1e-6)


def test_truncation_error_carries_bound():
    mu = FadingMeasure.exponential(1.0)
    seg = Segment.constant(2.0, 0.1, 11)
    with pytest.raises(TruncationError) as info:
        integrate_segment(mu, seg, r=0.25)
    assert info.value.bound == pytest.approx(4.0 * mu.tail(1.0, 0.5))
    with pytest.raises(TruncationError):
        integrate_segment(FadingMeasure.atom(-5.0), Segment.constant(1.0, 0.1, 11))
