import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.special import erf

from neuronlab.activations import (assumption2_check, assumption_profile, make_activation,
                                   parse_activation)
from neuronlab.errors import DomainError, UnsupportedOperationError

SMOOTH = ["identity", "sigmoid", "tanh", "silu", "swish:1.5", "gelu", "sine:2",
          "hermite:0,0,1,1", "gated:normal:2", "gated:arctan:1"]


def test_gelu_value_against_erf():
    z = np.array([-2.0, -0.3, 1.0, 2.5])
    assert_allclose(parse_activation("gelu")(z), z * 0.5 * (1 + erf(z / math.sqrt(2))), rtol=1e-14)
    assert parse_activation("gelu")(1.0) == pytest.approx(0.841345, abs=1e-6)


def test_relu_kink_convention():
    relu = parse_activation("relu")
    assert_allclose(relu.deriv(np.array([-1.0, 0.0, 2.0])), [0.0, 1.0, 1.0])
    assert make_activation("relu", kink_deriv=0.0).deriv(0.0) == 0.0
    with pytest.raises(UnsupportedOperationError):
        relu.second_deriv(1.0)


def test_plateau_shape():
    p = parse_activation("plateau")
    assert_allclose(p(np.array([-3.0, 0.0, 1.5, 2.0, 3.5])), [0, 0, 0, 0, 1.5])
    assert_allclose(p.deriv(np.array([1.0, 2.0, 3.0])), [0, 1, 1])


def test_zero_normalisation():
    for name in SMOOTH + ["relu", "plateau"]:
        assert parse_activation(name)(0.0) == pytest.approx(0.0, abs=1e-15)
    assert parse_activation("hermite:0,0,1,1").zero_shift == pytest.approx(-1 / math.sqrt(2))


@pytest.mark.parametrize("name", ["relu", "swish:1.5", "sine:2", "hermite:0,0,1,1", "gated:normal:2", "linear"])
def test_id_round_trip(name):
    spec = parse_activation(name)
    assert parse_activation(spec.id) == spec


@pytest.mark.parametrize("bad", ["softmax", "swish:-1", "sine:0", "relu:2", "hermite:", "gated:cubic:1"])
def test_bad_ids_rejected(bad):
    with pytest.raises(ValueError):
        parse_activation(bad)


def test_non_finite_input():
    with pytest.raises(DomainError):
        parse_activation("silu")(np.array([0.0, np.nan]))
    with pytest.raises(DomainError):
        parse_activation("tanh").deriv(np.inf)


@settings(max_examples=60, deadline=None)
@given(z=st.floats(-6, 6), name=st.sampled_from(SMOOTH))
def test_derivatives_match_central_differences(z, name):
    spec = parse_activation(name)
    h = 1e-5
    fd1 = (spec(z + h) - spec(z - h)) / (2 * h)
    fd2 = (spec.deriv(z + h) - spec.deriv(z - h)) / (2 * h)
    assert spec.deriv(z) == pytest.approx(fd1, rel=1e-6, abs=1e-7)
    assert spec.second_deriv(z) == pytest.approx(fd2, rel=1e-6, abs=1e-7)


def test_silu_assumption_constants():
    prof = assumption_profile(parse_activation("silu"), alpha=1.0)
    assert prof.increasing_on_pos
    # sigma'(0) = 1/2 is the infimum on (0, 1)
    assert prof.gamma == pytest.approx(0.5, abs=1e-3)
    # most negative sigma' is at z ~ -2.40, largest at z ~ 2.40
    z = np.linspace(-20, 20, 400001)
    d = parse_activation("silu").deriv(z)
    assert prof.zeta_sq == pytest.approx(-d.min() * d.max(), rel=1e-6)


def test_monotone_activations_have_zero_zeta():
    for name in ("relu", "sigmoid", "tanh", "identity"):
        assert assumption_profile(parse_activation(name)).zeta_sq == 0.0


def test_assumption2_shape_checks():
    silu = assumption2_check(parse_activation("silu"))
    assert silu.holds
    assert silu.z0 == pytest.approx(1.279, abs=2e-3)
    assert not assumption2_check(parse_activation("sine:3")).q_increasing
    ident = assumption2_check(parse_activation("identity"))
    assert math.isinf(ident.z0) and ident.q_increasing and ident.p_increasing
