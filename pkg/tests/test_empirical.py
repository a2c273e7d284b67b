import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from neuronlab.activations import parse_activation
from neuronlab.dynamics import FlowConfig, population_risk
from neuronlab.empirical import (EmpiricalContext, GaussianDataset, empirical_flow_sphere,
                                 empirical_flow_zero_init, empirical_gradient, empirical_gradient_batch,
                                 empirical_risk, lipschitz_ratio, noise_floor, sample_ball, sup_gap)

SILU = parse_activation("silu")


def _teacher(d):
    w = np.zeros(d)
    w[0] = 1.0
    return w


def _ctx(n=500, d=4, seed=0, spec=SILU, Q=1.0):
    return EmpiricalContext(GaussianDataset.generate(n, d, seed), spec, _teacher(d), Q)


def test_dataset_is_deterministic_and_nested():
    a = GaussianDataset.generate(100, 3, 7)
    assert_array_equal(a.X, GaussianDataset.generate(100, 3, 7).X)
    assert_array_equal(GaussianDataset.generate(40, 3, 7).X, a.X[:40])
    assert a.XT.flags.c_contiguous and not a.XT.flags.writeable
    with pytest.raises(ValueError):
        GaussianDataset.generate(0, 3, 7)


def test_dataset_round_trip(tmp_path):
    ds = GaussianDataset.generate(25, 3, 1)
    path = tmp_path / "x.bin"
    ds.save(path)
    raw = path.read_bytes()
    assert raw[:4] == b"NDL1" and len(raw) == 16 + 25 * 3 * 8
    assert_array_equal(GaussianDataset.load(path).X, ds.X)


def test_dataset_load_rejects_corruption(tmp_path):
    ds = GaussianDataset.generate(5, 2, 1)
    path = tmp_path / "x.bin"
    ds.save(path)
    raw = path.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    (tmp_path / "head.bin").write_bytes(raw[:10])
    for name in ("magic.bin", "short.bin", "head.bin"):
        with pytest.raises(ValueError):
            GaussianDataset.load(tmp_path / name)


def test_context_validation():
    ds = GaussianDataset.generate(10, 3, 0)
    with pytest.raises(ValueError):
        EmpiricalContext(ds, SILU, _teacher(4))
    with pytest.raises(ValueError):
        EmpiricalContext(ds, SILU, 2 * _teacher(3))
    with pytest.raises(ValueError):
        empirical_risk(_ctx(d=3), np.ones(4))


def test_teacher_has_zero_risk_and_gradient():
    ctx = _ctx()
    assert empirical_risk(ctx, ctx.w_star) == 0.0
    assert_array_equal(empirical_gradient(ctx, ctx.w_star), 0.0)


def test_identity_risk_is_a_quadratic_form():
    ctx = _ctx(n=300, d=3, spec=parse_activation("identity"))
    X = ctx.dataset.X
    S = X.T @ X / ctx.n
    v = np.array([0.3, -0.2, 0.5])
    assert empirical_risk(ctx, ctx.w_star + v) == pytest.approx(0.5 * v @ S @ v, rel=1e-12)
    assert_allclose(empirical_gradient(ctx, ctx.w_star + v), S @ v, rtol=1e-12)


def test_gradient_finite_differences():
    ctx = _ctx(n=200, d=3, seed=4)
    w = np.array([0.2, 0.9, -0.4])
    h = 1e-6
    fd = [(empirical_risk(ctx, w + h * e) - empirical_risk(ctx, w - h * e)) / (2 * h) for e in np.eye(3)]
    assert_allclose(empirical_gradient(ctx, w), fd, atol=1e-8)
    W = np.stack([w, -w])
    assert_allclose(empirical_gradient_batch(ctx, W)[0], empirical_gradient(ctx, w), atol=1e-15)


def test_large_sample_approaches_population():
    ctx = _ctx(n=100_000, d=3, seed=2)
    w = np.array([0.5, 0.5, -0.5])
    assert empirical_risk(ctx, w) == pytest.approx(population_risk(SILU, w, ctx.w_star), abs=5e-3)


def test_sample_ball_stays_inside():
    pts = sample_ball(np.ones(5), 0.7, 2000, np.random.default_rng(0))
    r = np.linalg.norm(pts - 1, axis=1)
    assert r.max() <= 0.7
    # radial law: P(r <= t Q) = t^d
    assert np.mean(r <= 0.7 * 0.5 ** (1 / 5)) == pytest.approx(0.5, abs=0.05)


def test_sup_gap_is_deterministic():
    ctx = _ctx(n=400, d=3, seed=1)
    assert sup_gap(ctx, 100, seed=3) == sup_gap(ctx, 100, seed=3)
    with pytest.raises(ValueError):
        sup_gap(ctx, 10)
    zero = sup_gap(_ctx(n=400, d=3, seed=1, Q=0.0), 100)
    assert zero.risk_gap == 0.0 and zero.grad_gap == pytest.approx(0.0, abs=1e-15)


def test_sup_gap_shrinks_with_n():
    small = sup_gap(_ctx(n=500, d=4, seed=5), 100).grad_gap
    big = sup_gap(_ctx(n=50_000, d=4, seed=5), 100).grad_gap
    assert big < small / 3


def test_zero_init_flow_recovers_teacher():
    tr = empirical_flow_zero_init(_ctx(n=2000, d=4, seed=6), FlowConfig(h=0.1, T=60.0))
    assert tr.extras["distance"][-1] < 1e-3
    assert np.all(np.diff(tr.risks) <= 1e-15)


def test_sphere_flow_stays_on_sphere():
    ctx = _ctx(n=2000, d=4, seed=7)
    w0 = np.array([0.1, 0.7, -0.5, 0.5])
    w0 /= np.linalg.norm(w0)
    tr = empirical_flow_sphere(ctx, w0, FlowConfig(h=0.1, T=40.0))
    assert_allclose(np.linalg.norm(tr.states, axis=1), 1.0, atol=1e-12)
    assert noise_floor(tr) < 1e-4
    assert tr.extras["best_distance"] <= tr.extras["distance"][0]
    with pytest.raises(ValueError):
        empirical_flow_sphere(ctx, 2 * w0)


def test_population_gradient_lipschitz_ratio():
    ratio = lipschitz_ratio(SILU, d=5, Q=1.0, pairs=200, seed=0)
    assert 0 < ratio < 1
    # identity: grad R(w) = w - w*, so the ratio is exactly 1 / (1 + Q)
    assert lipschitz_ratio(parse_activation("identity"), 4, 1.0, 50, 1) == pytest.approx(0.5, rel=1e-10)
    assert math.isfinite(ratio)
