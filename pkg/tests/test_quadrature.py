import math

import numpy as np
import pytest
from scipy import integrate, special

from fractalcomp.channel import gamma_pdf
from fractalcomp.quadrature import alpha_rule, fading_rule, integrate_log_s, upper_gamma


def test_alpha_rule_moments(law):
    rule, tail = alpha_rule(law, 48, 20.0)
    assert rule.weights.sum() + tail == pytest.approx(1.0, abs=1e-13)
    mean, _ = integrate.quad(lambda a: a * gamma_pdf(a, law), 2, 20)
    assert rule.nodes @ rule.weights == pytest.approx(mean, rel=1e-12)
    assert 0 < tail < 1e-6


def test_alpha_rule_needs_room(law):
    with pytest.raises(ValueError):
        alpha_rule(law, 8, 1.5)


@pytest.mark.parametrize("p", [0.0, 0.4, 1.0, 2.5])
def test_fading_rule_moments(p):
    rule = fading_rule(4)
    assert rule.nodes ** p @ rule.weights == pytest.approx(special.gamma(1 + p), rel=1e-9)


def test_split_fading_rule_handles_kink():
    split = np.array([0.01, 1.0, 3.0, 40.0])
    rule = fading_rule(3, split)
    assert rule.nodes.shape[1] == len(split)
    got = (np.minimum(rule.nodes, split) * rule.weights).sum(axis=0)
    np.testing.assert_allclose(got, -np.expm1(-split), rtol=1e-11)
    assert np.all(rule.nodes >= 0)


def test_log_s_integral_closed_form():
    # int_0^inf e^{-s} / (1 + s) ds = e E1(1)
    out = integrate_log_s(lambda s: s / (1 + s), 1.0, 1.0, 1e-12, 1e-10)
    assert out.value == pytest.approx(math.e * special.exp1(1.0), rel=1e-8)
    assert out.error < 1e-8


def test_log_s_integral_finds_far_peak():
    # the integrand only lives near s = 1e-8 while the search starts at 1e12
    f = lambda s: math.exp(-s * 1e8) * s * 1e8  # noqa: E731
    out = integrate_log_s(f, 0.0, 1e12, 1e-12, 1e-10)
    assert out.value == pytest.approx(1.0, rel=1e-8)


def test_upper_gamma():
    val, _ = integrate.quad(lambda x: x ** (-0.3) * math.exp(-x), 2.0, np.inf)
    assert upper_gamma(0.7, 2.0) == pytest.approx(val, rel=1e-10)
