import numpy as np
import pytest
from scipy.integrate import quad

from catenoid_tails.inequalities import (
    hardy_check,
    interpolation_check,
    optimizer_ratio,
    random_bump_sum,
)


def test_hardy_power_example():
    # phi = 1/r, p = 0 on [1, inf): lhs = 1/12, rhs = 1/3 + 1/2
    res = hardy_check(lambda r: 1 / r, 0.0, 1.0, np.inf, dphi=lambda r: -1 / r ** 2)
    assert res.lhs == pytest.approx(1 / 12, rel=1e-10)
    assert res.rhs == pytest.approx(5 / 6, rel=1e-10)
    assert res.passed


def test_hardy_rejects_p_one_and_q_n():
    phi = lambda r: np.sin(r)
    with pytest.raises(ValueError):
        hardy_check(phi, 1.0, 1.0, 2.0, dphi=np.cos)
    with pytest.raises(ValueError):
        hardy_check(phi, 4.0, 1.0, 2.0, dphi=np.cos, variant=True, n=4)


@pytest.mark.parametrize("variant", [False, True])
def test_hardy_random_compact_profiles(variant):
    rng = np.random.default_rng(3)
    r = np.linspace(1.0, 11.0, 4001)
    for p in (0.0, 0.5, 1.5):
        for _ in range(20):
            phi, dphi = random_bump_sum(rng, 1.0, 11.0)
            res = hardy_check(phi(r), p, 1.0, 11.0, r=r, dphi=dphi(r), variant=variant)
            assert res.passed
            assert res.lhs < res.rhs  # strict for generic phi; boundary terms vanish


def test_hardy_samples_match_callable():
    rng = np.random.default_rng(4)
    phi, dphi = random_bump_sum(rng, 2.0, 6.0)
    r = np.linspace(2.0, 6.0, 8001)
    a = hardy_check(phi(r), 0.5, 2.0, 6.0, r=r)
    b = hardy_check(phi, 0.5, 2.0, 6.0, dphi=dphi)
    assert a.lhs == pytest.approx(b.lhs, rel=1e-8)
    assert a.rhs == pytest.approx(b.rhs, rel=1e-6)


def test_hardy_boundary_terms():
    # phi = r on [1, 2], p = 0: lhs = 1/4 * 1, rhs = int 1 + (-1/2)(r^{-1} r^2)|_1^2 = 1 - 1/2
    res = hardy_check(lambda r: r, 0.0, 1.0, 2.0, dphi=lambda r: 1.0 + 0 * r)
    assert res.lhs == pytest.approx(0.25, rel=1e-12)
    assert res.rhs == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("p", [0.0, 0.5, 1.5])
def test_optimizer_family_approaches_one(p):
    ratios = [optimizer_ratio(p, eps) for eps in (0.2, 0.05, 0.01)]
    assert all(r <= 1 + 1e-9 for r in ratios)
    assert ratios[0] < ratios[1] < ratios[2]
    assert ratios[-1] >= 0.9


def test_optimizer_family_variant():
    for q in (2.0, 3.0, 5.5):
        r = optimizer_ratio(q, 0.01, variant=True)
        assert 0.9 <= r <= 1 + 1e-9


def test_interpolation_closed_form_example():
    # f = (1 + tau)^{-q/2} r^{-(p+1)/2 - mu}
    p, s, eps, q, mu, R = 1.0, 1.0, 0.5, 3.0, 0.3, 1.0
    f = lambda t, r: (1 + t) ** (-q / 2) * r ** (-(p + 1) / 2 - mu)
    rep = interpolation_check(f, p, s, eps, q, R=R)
    assert rep.passed
    assert rep.D1 == pytest.approx(R ** (-eps - 2 * mu) / (eps + 2 * mu), rel=1e-8)
    # second hypothesis: int r^{s - eps - 1 - 2 mu} times (1 + tau)^{-1}, largest at tau = 1
    ref = quad(lambda r: r ** (s - eps - 1 - 2 * mu), R, np.inf)[0]
    assert rep.D2 == pytest.approx(ref / 2.0, rel=1e-6)
    assert rep.exponent == -2.5


def test_interpolation_zero_and_divergent():
    rep = interpolation_check(lambda t, r: 0.0 * r, 1.0, 1.0, 0.5, 3.0)
    assert rep.passed and rep.worst_ratio == 0
    bad = interpolation_check(lambda t, r: r ** -1.1, 1.0, 1.0, 0.5, 3.0)
    assert not bad.passed and "second" in bad.hypothesis_failed
    low = interpolation_check(lambda t, r: (1 + t) ** -1.5 * r ** -1.3, 1.0, 1.0, 0.5, 3.0, D1=1e-6)
    assert not low.passed and low.hypothesis_failed == "first hypothesis"


def test_interpolation_sampled_input():
    p, s, eps, q = 0.5, 1.0, 0.25, 2.0
    taus = np.array([1.0, 10.0, 100.0])
    r = np.linspace(1.0, 4001.0, 40001)
    F = np.array([(1 + t) ** (-q / 2) * np.exp(-r / (1 + t)) for t in taus])
    assert interpolation_check(F, p, s, eps, q, taus=taus, r_grid=r).passed
    with pytest.raises(ValueError):
        interpolation_check(F, p, 1.5, eps, q, taus=taus, r_grid=r)
