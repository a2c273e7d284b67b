"""Finite-sample risk, gradients and flows for a teacher neuron.

Samples are held column-major (``d x n``) so every sum over samples runs along
a contiguous axis, where numpy uses pairwise summation.  That keeps results
bit-identical across BLAS builds and thread counts.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .dynamics import FlowConfig, Trajectory, integrate, plane_rule, default_plane_order
from .dynamics import population_gradient_batch, population_risk_batch

MAGIC = b"NDL1"
_HEADER = struct.Struct("<4sII4x")


@dataclass(frozen=True)
class GaussianDataset:
    n: int
    d: int
    seed: int
    XT: np.ndarray = field(repr=False)  # (d, n), contiguous rows

    @classmethod
    def generate(cls, n: int, d: int, seed: int) -> "GaussianDataset":
        """Draw ``n`` samples from N(0, I_d).

        Rows are drawn in order, so a dataset with more samples extends the
        one with fewer for the same seed.
        """
        if n < 1 or d < 1:
            raise ValueError("n and d must be positive")
        X = np.random.default_rng(seed).standard_normal((n, d))
        return cls._from_rows(X, seed)

    @classmethod
    def _from_rows(cls, X, seed):
        XT = np.ascontiguousarray(X.T)
        XT.setflags(write=False)
        return cls(X.shape[0], X.shape[1], int(seed), XT)

    @property
    def X(self) -> np.ndarray:
        """Samples as an ``n x d`` view."""
        return self.XT.T

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, self.n, self.d))
            fh.write(np.ascontiguousarray(self.X, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, seed: int = -1) -> "GaussianDataset":
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise ValueError("truncated header")
            magic, n, d = _HEADER.unpack(head)
            if magic != MAGIC:
                raise ValueError(f"bad magic {magic!r}")
            X = np.frombuffer(fh.read(), dtype="<f8")
        if X.size != n * d:
            raise ValueError(f"expected {n * d} values, found {X.size}")
        return cls._from_rows(X.reshape(n, d).astype(float), seed)


@dataclass
class EmpiricalContext:
    dataset: GaussianDataset
    spec: object  # ActivationSpec
    w_star: np.ndarray
    Q: float = 1.0
    labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.w_star = np.asarray(self.w_star, dtype=float)
        if self.w_star.shape != (self.dataset.d,):
            raise ValueError("teacher dimension does not match the dataset")
        if abs(np.linalg.norm(self.w_star) - 1.0) > 1e-12:
            raise ValueError("teacher must be a unit vector")
        if self.Q < 0:
            raise ValueError("Q must be non-negative")
        self.labels = self.spec._v(_project(self.dataset.XT, self.w_star[None, :])[0])

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d


def _project(XT, W):
    """``W @ X^T`` as a sum over the (short) feature axis; shape (B, n)."""
    out = np.zeros((W.shape[0], XT.shape[1]))
    for j in range(XT.shape[0]):
        out += W[:, j:j + 1] * XT[j][None, :]
    return out


def _as_batch(ctx, W):
    W = np.asarray(W, dtype=float)
    single = W.ndim == 1
    W = np.atleast_2d(W)
    if W.shape[1] != ctx.d:
        raise ValueError(f"expected dimension {ctx.d}, got {W.shape[1]}")
    return W, single


def empirical_risk_batch(ctx: EmpiricalContext, W) -> np.ndarray:
    W, _ = _as_batch(ctx, W)
    diff = ctx.spec._v(_project(ctx.dataset.XT, W)) - ctx.labels[None, :]
    return 0.5 * np.sum(diff * diff, axis=1) / ctx.n


def empirical_gradient_batch(ctx: EmpiricalContext, W) -> np.ndarray:
    W, _ = _as_batch(ctx, W)
    pre = _project(ctx.dataset.XT, W)
    resid = (ctx.spec._v(pre) - ctx.labels[None, :]) * ctx.spec._d(pre)  # (B, n)
    XT = ctx.dataset.XT
    return np.stack([np.sum(resid * XT[j][None, :], axis=1) for j in range(ctx.d)], axis=1) / ctx.n


def empirical_risk(ctx: EmpiricalContext, w) -> float:
    """``1/(2n) sum_i (sigma(w.x_i) - sigma(w*.x_i))^2``."""
    W, single = _as_batch(ctx, w)
    out = empirical_risk_batch(ctx, W)
    return float(out[0]) if single else out


def empirical_gradient(ctx: EmpiricalContext, w) -> np.ndarray:
    W, single = _as_batch(ctx, w)
    out = empirical_gradient_batch(ctx, W)
    return out[0] if single else out


def sample_ball(center, radius: float, count: int, rng) -> np.ndarray:
    """Uniform points in the ball of given radius around ``center``."""
    center = np.asarray(center, dtype=float)
    d = center.size
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / d)
    return center[None, :] + r[:, None] * g


@dataclass(frozen=True)
class SupGap:
    risk_gap: float
    grad_gap: float
    probes: int


def sup_gap(ctx: EmpiricalContext, probes: int = 100, seed: int = 0, rule2d=None) -> SupGap:
    """Largest empirical-vs-population deviation over random points of the ball.

    The maximum over ``probes`` uniform points is a lower bound on the true
    supremum; it is what the scaling experiments measure.
    """
    if probes < 100:
        raise ValueError("need at least 100 probes")
    rule2d = rule2d or plane_rule(default_plane_order(ctx.spec))
    W = sample_ball(ctx.w_star, ctx.Q, probes, np.random.default_rng(seed))
    r_emp = empirical_risk_batch(ctx, W)
    g_emp = empirical_gradient_batch(ctx, W)
    r_pop = population_risk_batch(ctx.spec, W, ctx.w_star, rule2d)
    g_pop = population_gradient_batch(ctx.spec, W, ctx.w_star, rule2d)
    return SupGap(float(np.max(np.abs(r_emp - r_pop))),
                  float(np.max(np.linalg.norm(g_emp - g_pop, axis=1))), probes)


def _distance_extras(traj, w_star):
    dist = np.linalg.norm(traj.states - w_star[None, :], axis=1)
    traj.extras["distance"] = dist
    traj.extras["best_distance"] = float(dist.min())
    return traj


def empirical_flow_zero_init(ctx: EmpiricalContext, cfg: FlowConfig = FlowConfig(h=0.05, T=30.0)) -> Trajectory:
    """Empirical gradient flow from the origin; records distance to the teacher."""
    traj = integrate(lambda w: -empirical_gradient_batch(ctx, w[None, :])[0], np.zeros(ctx.d), cfg,
                     lambda w: float(empirical_risk_batch(ctx, w[None, :])[0]), label="w")
    return _distance_extras(traj, ctx.w_star)


def empirical_flow_sphere(ctx: EmpiricalContext, w0, cfg: FlowConfig = FlowConfig(h=0.05, T=40.0)) -> Trajectory:
    """Projected empirical flow ``w' = -(I - w w^T) grad R_n(w)`` on the unit sphere."""
    w0 = np.asarray(w0, dtype=float)
    if abs(np.linalg.norm(w0) - 1.0) > 1e-10:
        raise ValueError("w0 must be a unit vector")

    def rhs(w):
        g = empirical_gradient_batch(ctx, w[None, :])[0]
        return -(g - (w @ g) * w)

    traj = integrate(rhs, w0, cfg, lambda w: float(empirical_risk_batch(ctx, w[None, :])[0]),
                     project=lambda w: w / np.linalg.norm(w), label="w")
    traj.extras["a"] = traj.states @ ctx.w_star
    return _distance_extras(traj, ctx.w_star)


def noise_floor(traj: Trajectory, tail: float = 0.1) -> float:
    """Median of ``1 - a_t`` over the last ``tail`` fraction of a sphere trajectory."""
    a = traj.extras["a"]
    k = max(1, int(math.ceil(tail * a.size)))
    return float(np.median(1.0 - a[-k:]))


def lipschitz_ratio(spec, d: int, Q: float, pairs: int, seed: int, rule2d=None) -> float:
    """``max |grad R(w1) - grad R(w2)| / ((1 + Q) |w1 - w2|)`` over random pairs in the ball."""
    rng = np.random.default_rng(seed)
    w_star = np.zeros(d)
    w_star[0] = 1.0
    W1 = sample_ball(w_star, Q, pairs, rng)
    W2 = sample_ball(w_star, Q, pairs, rng)
    rule2d = rule2d or plane_rule(default_plane_order(spec))
    G1 = population_gradient_batch(spec, W1, w_star, rule2d)
    G2 = population_gradient_batch(spec, W2, w_star, rule2d)
    num = np.linalg.norm(G1 - G2, axis=1)
    den = (1.0 + Q) * np.linalg.norm(W1 - W2, axis=1)
    return float(np.max(num / den))
