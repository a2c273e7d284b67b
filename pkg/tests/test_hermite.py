import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from neuronlab.activations import parse_activation
from neuronlab.errors import ConfigurationError
from neuronlab.hermite import (CorrelationFunction, H_eval, default_order, dilated_coeff, expand,
                               gauss_hermite, hermite_basis, hermite_eval)


def _gauss_expect(g):
    val, _ = integrate.quad(lambda z: g(z) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi), -np.inf, np.inf,
                            limit=200)
    return val


def test_basis_is_orthonormal():
    rule = gauss_hermite(80)
    B = hermite_basis(30, rule.nodes)
    assert_allclose((B * rule.weights) @ B.T, np.eye(31), atol=1e-12)


def test_low_order_closed_forms():
    z = np.linspace(-3, 3, 7)
    assert_allclose(hermite_eval(2, z), (z * z - 1) / math.sqrt(2))
    assert_allclose(hermite_eval(3, z), (z**3 - 3 * z) / math.sqrt(6))
    with pytest.raises(IndexError):
        hermite_eval(129, 0.0)


def test_quadrature_moments_and_limits():
    rule = gauss_hermite(20)
    assert rule.expect(np.ones(20)) == pytest.approx(1.0)
    assert rule.expect(rule.nodes**4) == pytest.approx(3.0)
    for m in (1, 513):
        with pytest.raises(ConfigurationError):
            gauss_hermite(m)
    assert gauss_hermite(20) is rule


@pytest.mark.parametrize("freq", [1, 2, 3])
def test_sine_first_coefficient(freq):
    spec = parse_activation(f"sine:{freq}")
    c = expand(spec, 5).coeffs
    assert c[1] == pytest.approx(freq * math.exp(-freq * freq / 2), rel=1e-10)
    # sine is odd: even coefficients vanish
    assert_allclose(c[::2], 0, atol=1e-14)


def test_sine_order_is_scaled():
    assert default_order(parse_activation("sine:2")) == 400
    assert default_order(parse_activation("sine:10")) == 500
    assert default_order(parse_activation("sine:20")) == 512


def test_relu_coefficients_against_adaptive_quadrature():
    spec = parse_activation("relu")
    c = expand(spec, 6).coeffs
    for k in range(7):
        ref = _gauss_expect(lambda z: max(z, 0.0) * hermite_eval(k, z))
        assert c[k] == pytest.approx(ref, abs=1e-9)
    assert c[0] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-13)
    assert c[1] == pytest.approx(0.5, abs=1e-13)


def test_kinked_default_rule_beats_plain_gauss_hermite():
    spec = parse_activation("relu")
    exact = 1 / math.sqrt(2 * math.pi)
    plain = expand(spec, 4, gauss_hermite(400)).coeffs[0]
    split = expand(spec, 4).coeffs[0]
    assert abs(split - exact) < 1e-12 < 1e-5 < abs(plain - exact)


def test_counterexample_expansion_is_exact():
    exp = expand(parse_activation("hermite:0,0,1,1"))
    assert_allclose(exp.coeffs[2:4], [1, 1], atol=1e-12)
    assert_allclose(exp.coeffs[4:], 0, atol=1e-12)
    assert_allclose(exp.correlation().deriv_coeffs[:3], [0, 2, 3], atol=1e-12)


def test_aliasing_guard_and_truncation_warning():
    with pytest.raises(ConfigurationError):
        expand(parse_activation("silu"), 40, gauss_hermite(60))
    with pytest.raises(ConfigurationError):
        expand(parse_activation("silu"), 129, gauss_hermite(400))
    with pytest.warns(RuntimeWarning):
        expand(parse_activation("sine:8"), 10)


def test_parseval_residual_small_for_smooth():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        exp = expand(parse_activation("silu"))
    assert exp.residual < 1e-10
    assert exp.l2_total == pytest.approx(_gauss_expect(lambda z: parse_activation("silu")(z) ** 2), rel=1e-9)


def test_correlation_series_matches_direct_expectation():
    spec = parse_activation("tanh")
    cf = expand(spec).correlation()
    a = 0.4
    rule = gauss_hermite(60)
    X, Y = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    W = np.outer(rule.weights, rule.weights)
    direct = np.sum(W * spec(X) * spec(a * X + math.sqrt(1 - a * a) * Y))
    # the series is truncated at K=40; tanh coefficients decay sub-geometrically
    assert cf.f(a) == pytest.approx(direct, abs=1e-9)


def test_q_sigma_definition():
    cf = CorrelationFunction([0.0, 0.25, 0.1, 0.3, 0.05])
    assert cf.q_sigma(0.5) == pytest.approx(0.25 - 2 * 0.1 * 0.5 - 4 * 0.05 * 0.5**3)
    with pytest.raises(ValueError):
        cf.q_sigma(0.0)
    with pytest.raises(ValueError):
        CorrelationFunction([0.1, -0.2])
    with pytest.warns(RuntimeWarning):
        cf.f(1.5)


def test_derivative_energy_identity_for_relu():
    # f'(-1) = c_1^2 - sum_even k c_k^2 = 0 for ReLU (odd c_k vanish beyond k = 1);
    # the partial sums reach zero only like K^(-1/2)
    cf = expand(parse_activation("relu"), 128).correlation()
    s = cf.power_coeffs
    assert_allclose(s[3::2], 0, atol=1e-25)
    partial = {K: s[1] - sum(k * s[k] for k in range(2, K + 1, 2)) for K in (32, 40, 128)}
    assert partial[40] == pytest.approx(0.0201, abs=1e-4)
    assert partial[128] / partial[32] == pytest.approx(0.5, abs=0.01)


def test_dilation_and_kernel():
    spec = parse_activation("silu")
    # c_1(s) = E[sigma(s z) z] = s E[sigma'(s z)]
    s = 1.7
    ref = _gauss_expect(lambda z: spec(s * z) * z)
    assert dilated_coeff(spec, s, 1) == pytest.approx(ref, rel=1e-10)
    c = expand(spec).coeffs
    assert H_eval(spec, 0.3, 1.0, 1.0) == pytest.approx(float(np.polyval((c * c)[::-1], 0.3)))
    with pytest.raises(ValueError):
        H_eval(spec, 1.2, 1.0, 1.0)
