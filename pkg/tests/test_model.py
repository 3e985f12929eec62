import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from energydelay.exceptions import DomainError, ModelViolation, QueueUnstable
from energydelay.model import (
    GameSpec,
    LinkCoefficients,
    SuccessFunction,
    SuccessModel,
    delay_cost,
    energy_cost,
    lambda_power,
    link_cost,
    link_cost_derivative,
    omega,
    sinr,
    sinr_all,
    success,
    success_inverse,
)
from energydelay.numerics import central_diff
from energydelay.scenario import random_game

from conftest import single_link


def link(**kw):
    return single_link(**kw).link(0)


# ----------------------------------------------------------------- sinr


def test_sinr_zero_power():
    spec = random_game(np.random.default_rng(0), K=4)
    p = np.array(spec.p_max)
    p[2] = 0.0
    assert sinr(2, p, spec) == 0.0


def test_sinr_single_link_substitution():
    spec = single_link(alpha=3.0, phi=0.0, sigma2=6.0)
    assert sinr(0, [2.0], spec) == pytest.approx(1.0, rel=1e-15)


def test_sinr_approaches_self_interference_ceiling():
    spec = single_link(alpha=3.0, phi=0.5, sigma2=6.0)
    ps = np.logspace(-3, 6, 200) * 6.0 / 3.0
    g = np.array([sinr(0, [x], spec) for x in ps])
    assert np.all(np.diff(g) > 0)
    assert np.all(g < 3.0 / 0.5)
    assert sinr(0, [1e6 * 6.0 / 3.0], spec) == pytest.approx(6.0, rel=1e-2)


def test_sinr_matches_omega_form(rng):
    for _ in range(20):
        spec = random_game(rng, K=5, require_sufficient=False)
        p = rng.uniform(0, 1, 5) * spec.p_max
        g = sinr_all(p, spec)
        for k in range(5):
            w = omega(k, p, spec)
            direct = p[k] * spec.alpha[k] / (spec.sigma2[k] + spec.phi[k] * p[k]
                                             + sum(spec.beta[k, j] * p[j] for j in range(5) if j != k))
            assert g[k] == pytest.approx(direct, rel=1e-14)
            assert g[k] == pytest.approx(p[k] * spec.alpha[k] / (spec.phi[k] * p[k] + w), rel=1e-14)


def test_sinr_increasing_and_concave_in_own_power(rng):
    spec = random_game(rng, K=4, require_sufficient=False)
    p = np.array(spec.p_max) / 2
    xs = np.linspace(1e-3, 2.0, 400)
    g = []
    for x in xs:
        p[1] = x
        g.append(sinr(1, p, spec))
    g = np.array(g)
    assert np.all(np.diff(g) > 0)
    assert np.all(np.diff(g, 2) <= 1e-12)


# -------------------------------------------------------------- success


def test_success_examples():
    s = SuccessModel(1.0)
    assert success(s, 0.0) == 0.0
    assert success(s, math.log(2.0)) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(DomainError):
        success(s, -1e-3)


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("delta", [0.3, 1.0])
def test_success_derivative_matches_fd(gamma, delta):
    s = SuccessModel(delta)
    fd = central_diff(s.value, gamma, h=1e-6 * gamma)
    assert s.derivative(gamma) == pytest.approx(fd, rel=1e-6)
    fd2 = central_diff(s.derivative, gamma, h=1e-5 * gamma)
    assert s.second_derivative(gamma) == pytest.approx(fd2, rel=1e-6)


def test_success_inverse_examples():
    assert success_inverse(SuccessModel(1.0), 1 - math.exp(-1)) == pytest.approx(1.0, rel=1e-14)
    assert success_inverse(SuccessModel(2.0), 0.999) == pytest.approx(math.log(1000) / 2, rel=1e-12)
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            success_inverse(SuccessModel(1.0), bad)


@given(st.floats(0.01, 50.0), st.floats(1e-6, 1 - 1e-9))
@settings(max_examples=200, deadline=None)
def test_success_inverse_roundtrip(delta, y):
    s = SuccessModel(delta)
    assert s.value(s.inverse(y)) == pytest.approx(y, rel=1e-10)


@pytest.mark.parametrize("delta", [0.01, 0.185, 1.0, 10.0, 100.0])
def test_success_properties_hold(delta):
    ok, why = SuccessModel(delta).check_properties()
    assert ok, why


def test_property_check_rejects_convex_curve():
    class Convex(SuccessFunction):
        def value(self, g):
            return np.asarray(g, dtype=float) ** 2

        def derivative(self, g):
            return 2 * np.asarray(g, dtype=float)

        def second_derivative(self, g):
            return 2 + 0 * np.asarray(g, dtype=float)

        def inverse(self, y):
            return np.sqrt(y)

    ok, why = Convex().check_properties()
    assert not ok and why


def test_success_model_validation():
    with pytest.raises(ValueError):
        SuccessModel(0.0)
    with pytest.raises(ValueError):
        SuccessModel(1.0, lam=1.0)
    with pytest.raises(ValueError):
        SuccessModel(1.0, rate=0.0)
    assert issubclass(ModelViolation, Exception)


# ---------------------------------------------------------------- costs


def _gamma_for(s, delta=1.0):
    return -math.log1p(-s) / delta


def test_delay_cost_examples():
    assert delay_cost(link(lam=0.0), _gamma_for(0.5)) == pytest.approx(2.0, rel=1e-12)
    l2 = link(lam=0.2, rate=1e6)
    expect = 1.0 / (1e6 * (1 - math.exp(-1) - 0.2))
    assert delay_cost(l2, 1.0) == pytest.approx(expect, rel=1e-14)


def test_delay_cost_pole_and_error():
    l = link(lam=0.3)
    g_lam = _gamma_for(0.3)
    assert delay_cost(l, g_lam * (1 + 1e-8)) > 1e6
    with pytest.raises(QueueUnstable):
        delay_cost(l, g_lam * 0.999)


def test_energy_cost_examples():
    l = link(p_c=1.0)
    g = _gamma_for(0.5)
    assert energy_cost(l, 1.0, g) == pytest.approx(4.0, rel=1e-12)
    assert energy_cost(l, 1.0, 0.0) == math.inf
    # reciprocal of energy efficiency
    f = energy_cost(l, 1.0, g)
    assert f * (l.rate * 0.5 / (1.0 + 1.0)) == pytest.approx(1.0, rel=1e-12)
    l0 = link(p_c=0.0)
    assert energy_cost(l0, 2.0, g) == pytest.approx(2 * energy_cost(l0, 1.0, g), rel=1e-15)


def test_link_cost_examples():
    l = link(lam=0.0, p_c=0.0, rho=1.0)
    assert link_cost(l, 1.0, _gamma_for(0.5)) == pytest.approx(4.0, rel=1e-12)
    tiny = link(rho=1e-12, p_c=0.4)
    g = 0.8
    assert link_cost(tiny, 0.7, g) == pytest.approx(energy_cost(tiny, 0.7, g), rel=1e-9)
    unstable = link(lam=0.5, theta=0.9)
    with pytest.raises(QueueUnstable):
        link_cost(unstable, 1.0, 0.1)
    assert link_cost(unstable, 1.0, 0.1, strict=False) == math.inf


def test_link_cost_composition(rng):
    for _ in range(100):
        l = link(delta=rng.uniform(0.1, 3), lam=rng.uniform(0, 0.5), rate=rng.uniform(1, 1e6),
                 p_c=rng.uniform(0, 1), rho=rng.uniform(0.1, 10), theta=0.9)
        g = _gamma_for(rng.uniform(l.lam + 0.01, 0.99), l.success.delta)
        p = rng.uniform(0, 1)
        want = l.rho * delay_cost(l, g) + energy_cost(l, p, g)
        assert link_cost(l, p, g) == pytest.approx(want, rel=1e-12)


# ------------------------------------------------- stationarity residual


def _cost_of_power(l, w, p):
    return link_cost(l, p, p * l.alpha / (l.phi * p + w))


def test_residual_sign_and_scale_vs_fd(rng):
    checked = 0
    while checked < 50:
        spec = random_game(rng, K=3, require_sufficient=False)
        l = spec.link(0)
        w = omega(0, spec.p_max, spec)
        p_lam = lambda_power(l, w)
        p = p_lam + rng.uniform(0.05, 3.0) * (p_lam + 0.1)
        g = link_cost_derivative(l, p, w)
        h = 1e-6 * p
        d = central_diff(lambda x: _cost_of_power(l, w, x), p, h)
        gam = p * l.alpha / (l.phi * p + w)
        s = l.success
        scale = l.rate * s.value(gam) ** 2 / (s.derivative(gam) * l.alpha * w / (l.phi * p + w) ** 2)
        if abs(g) < 1e-6 * (p + l.p_c + 1):
            continue  # sign undefined at the root itself
        assert math.copysign(1, g) == math.copysign(1, d)
        assert d * scale == pytest.approx(g, rel=1e-5, abs=1e-7 * (1 + abs(g)))
        checked += 1


def test_residual_monotone_and_divergent(rng):
    for _ in range(30):
        spec = random_game(rng, K=3, require_sufficient=False)
        l = spec.link(1)
        w = omega(1, spec.p_max, spec)
        p_lam = lambda_power(l, w)
        xs = p_lam + (p_lam + 1e-3) * np.logspace(-9, 4, 300)
        r = np.array([link_cost_derivative(l, x, w) for x in xs])
        assert np.all(np.diff(r) > 0)
        assert r[-1] > 0
        if l.lam > 0:
            assert r[0] < -1e3
        else:
            assert r[0] < 0


def test_residual_domain_error():
    l = link(lam=0.3)
    with pytest.raises(DomainError):
        link_cost_derivative(l, lambda_power(l, 6.0) * 0.5, 6.0)


def test_game_spec_validation():
    with pytest.raises(ValueError):
        LinkCoefficients(0.0, 0.1, [0.0], 1.0)
    with pytest.raises(ValueError):
        LinkCoefficients(1.0, -0.1, [0.0], 1.0)
    with pytest.raises(ValueError):
        LinkCoefficients(1.0, 0.1, [0.0], 0.0)
    with pytest.raises(ValueError):
        GameSpec(())
    spec = random_game(np.random.default_rng(3), K=3)
    assert spec.K == 3 and np.all(np.diag(spec.beta) == 0)
    again = GameSpec.from_arrays(**spec.to_arrays())
    assert np.array_equal(again.beta, spec.beta) and np.array_equal(again.alpha, spec.alpha)
