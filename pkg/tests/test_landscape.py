import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from neuronlab.activations import parse_activation
from neuronlab.hermite import expand, gauss_hermite
from neuronlab.landscape import (AssumptionBound, c_delta, check_pop_condition, gaussian_density_floor,
                                 offsphere_risk, r_sigma, r_sigma_prime, region_integral_check, scan_1d,
                                 sphere_risk, wedge_second_moment)

RELU = parse_activation("relu")


def _relu_risk(s, a):
    # arc-cosine kernel: E[relu(u.x) relu(v.x)] = (sin t + (pi - t) cos t) / (2 pi) for unit u, v
    t = math.acos(a)
    return s * s / 4 + 1 / 4 - s * (math.sin(t) + (math.pi - t) * math.cos(t)) / (2 * math.pi)


def _sine_profile(freq, b):
    f2 = freq * freq
    return (0.25 * (1 - np.exp(-2 * f2 * b * b)) + 0.25 * (1 - math.exp(-2 * f2))
            - 0.5 * (np.exp(-f2 * (1 - b) ** 2 / 2) - np.exp(-f2 * (1 + b) ** 2 / 2)))


def test_relu_profile_both_sides():
    b = np.linspace(-1, 1.5, 26)
    ref = np.where(b >= 0, (b - 1) ** 2 / 4, (b * b + 1) / 4)
    assert_allclose(r_sigma(RELU, b), ref, atol=1e-13)
    assert_allclose(r_sigma_prime(RELU, np.array([0.2, 0.7])), [-0.4, -0.15], atol=1e-13)


@pytest.mark.parametrize("freq", [1, 2, 3])
def test_sine_profile_closed_form(freq):
    b = np.linspace(0, 1.5, 31)
    assert_allclose(r_sigma(parse_activation(f"sine:{freq}"), b), _sine_profile(freq, b), atol=1e-12)


def test_scan_finds_only_the_teacher_for_relu():
    scan = scan_1d(RELU)
    assert len(scan.minima) == 1
    b, r = scan.minima[0]
    assert b == pytest.approx(1.0, abs=1e-8)
    assert r == pytest.approx(0.0, abs=1e-14)
    assert scan.interior_minima(0, 1.5, exclude_global=1e-10) == []
    assert scan.is_local_min().sum() == 1


def test_sine2_bad_minimum_location():
    scan = scan_1d(parse_activation("sine:2"))
    bad = scan.interior_minima(0, 1, exclude_global=1e-10)
    assert len(bad) == 1
    b, r = bad[0]
    # the bad minimum is a stationary point of the closed-form profile
    h = 1e-6
    assert (_sine_profile(2, b + h) - _sine_profile(2, b - h)) / (2 * h) == pytest.approx(0, abs=1e-6)
    assert r > 0.01


def test_scan_rejects_bad_grid():
    with pytest.raises(ValueError):
        scan_1d(RELU, 1.0, 0.5)


def test_scan_csv(tmp_path):
    path = tmp_path / "scan.csv"
    scan_1d(RELU, steps=11).to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "beta,r,r_prime,is_local_min"
    assert len(rows) == 12


def test_population_condition():
    relu = check_pop_condition(RELU)
    assert relu.holds and relu.C == pytest.approx(0.5, abs=1e-12)
    plateau = check_pop_condition(parse_activation("plateau"))
    assert not plateau.holds
    assert scan_1d(parse_activation("plateau")).flat_at_origin()


def test_sphere_risk_endpoints():
    cf = expand(parse_activation("silu")).correlation()
    assert sphere_risk(cf, 1.0) == 0.0
    assert sphere_risk(cf, -1.0) == pytest.approx(cf.f(1) - cf.f(-1))
    with pytest.raises(ValueError):
        sphere_risk(cf, 1.1)


@pytest.mark.parametrize("name", ["silu", "tanh", "sine:1"])
def test_offsphere_reduces_to_sphere_on_unit_norm(name):
    spec = parse_activation(name)
    cf = expand(spec, 128).correlation()
    for a in (-0.8, 0.0, 0.5):
        assert offsphere_risk(spec, 1.0, a) == pytest.approx(float(sphere_risk(cf, a)), abs=1e-12)


@pytest.mark.parametrize("s,a", [(0.5, 0.3), (1.0, -0.6), (2.0, 0.9), (3.0, -0.2)])
def test_offsphere_relu_matches_arc_cosine(s, a):
    # truncation at K=128 leaves an O(K^-3/2) tail scaled by s
    assert offsphere_risk(RELU, s, a) == pytest.approx(_relu_risk(s, a), abs=1e-4 * s)


def test_offsphere_validation():
    with pytest.raises(ValueError):
        offsphere_risk(RELU, 0.0, 0.5)
    with pytest.raises(ValueError):
        offsphere_risk(RELU, 1.0, -1.5)


def test_half_disk_second_moment():
    alpha = 1.3
    vals = wedge_second_moment(alpha, math.pi, np.linspace(0, math.pi, 7))
    assert_allclose(vals, alpha**4 * math.pi / 8, rtol=1e-12)


@pytest.mark.parametrize("delta", [0.3, 1.0, 2.0, math.pi])
def test_region_infimum_closed_form(delta):
    rc = region_integral_check(1.0, delta)
    assert rc.numeric_inf == pytest.approx((delta - math.sin(delta)) / 8, rel=1e-9)
    assert rc.holds and rc.numeric_inf >= rc.paper_lb


def test_wedge_against_polar_grid():
    alpha, gap, psi = 0.8, 1.1, 0.4
    n = 800
    r = (np.arange(n) + 0.5) * alpha / n
    phi = (np.arange(n) + 0.5) * gap / n
    R, PHI = np.meshgrid(r, phi, indexing="ij")
    brute = np.sum((R * np.cos(PHI - psi)) ** 2 * R) * (alpha / n) * (gap / n)
    assert wedge_second_moment(alpha, gap, psi) == pytest.approx(brute, rel=1e-5)


def test_region_check_validation():
    for bad in (0.0, 3.2):
        with pytest.raises(ValueError):
            region_integral_check(1.0, bad)
    with pytest.raises(ValueError):
        region_integral_check(1.0, 1.0, u_grid=90)
    assert region_integral_check(0.0, 1.0).holds


def test_lambda_constant():
    assert c_delta(math.pi) == pytest.approx(math.sin(math.pi / 4) ** 3 / (8 * math.sqrt(2)))
    bound = AssumptionBound(alpha=1.0, density=gaussian_density_floor(1.0), gamma=0.5, zeta=0.0,
                            tau=1.0, delta=math.pi / 2)
    assert bound.lam == pytest.approx(0.25 * math.exp(-0.5) / (2 * math.pi) * c_delta(math.pi / 2))
    assert AssumptionBound(1.0, 0.1, 0.5, 0.3, 1.0, 1.0).lam < 0


def test_explicit_rule_is_respected():
    silu = parse_activation("silu")
    coarse = r_sigma(silu, 0.5, gauss_hermite(4))
    assert abs(coarse - r_sigma(silu, 0.5)) > 1e-6
