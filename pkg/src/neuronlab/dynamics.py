"""Gradient flows for the single-neuron risk.

Three flows are integrated with fixed-step RK4:

* ``beta' = -r'(beta)``: the zero-initialised flow, which never leaves the
  teacher line;
* ``a' = f'(a) (1 - a^2)``: the spherical flow reduced to the overlap
  ``a = w.w*``, together with its full ``d``-dimensional counterpart;
* ``w' = -grad R(w)``: the population flow in R^d, whose gradient is computed
  from a two-dimensional Gaussian integral over the plane ``span{w*, w}``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError
from .hermite import CorrelationFunction, QuadratureRule, default_rule, gauss_hermite
from .landscape import r_sigma, r_sigma_prime, sphere_risk

DEFAULT_2D_ORDER = 100


@dataclass(frozen=True)
class FlowConfig:
    h: float = 1e-3
    T: float = 50.0
    tol: float = 1e-10
    record_every: int = 1
    stop_early: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigurationError("step size must be positive")
        if self.T < self.h:
            raise ConfigurationError("horizon must be at least one step")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (N,) for scalar flows, (N, d) for vector flows
    risks: np.ndarray
    terminal_reason: str  # "horizon" | "converged" | "diverged"
    label: str = "state"
    extras: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.states[-1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if self.states.ndim == 1:
                writer.writerow(["t", self.label, "risk"])
                for t, s, r in zip(self.times, self.states, self.risks):
                    writer.writerow([repr(float(t)), repr(float(s)), repr(float(r))])
            else:
                d = self.states.shape[1]
                writer.writerow(["t"] + [f"w{i}" for i in range(d)] + ["risk"])
                for t, s, r in zip(self.times, self.states, self.risks):
                    writer.writerow([repr(float(t))] + [repr(float(x)) for x in s] + [repr(float(r))])


def rk4_step(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(rhs, y0, cfg: FlowConfig, risk, project=None, label="state") -> Trajectory:
    """Fixed-step RK4 on ``y' = rhs(y)``.

    ``project`` (if given) maps each new state back onto a constraint set.
    Stops early when ``risk < tol`` or ``|y_{k+1} - y_k| / h < tol``.
    """
    y = np.array(y0, dtype=float)
    times, states, risks = [0.0], [y.copy()], [risk(y)]
    reason = "horizon"
    n = cfg.n_steps
    for k in range(1, n + 1):
        y_new = rk4_step(rhs, y, cfg.h)
        if project is not None:
            y_new = project(y_new)
        if not np.all(np.isfinite(y_new)):
            reason = "diverged"
            break
        speed = float(np.linalg.norm(y_new - y)) / cfg.h
        y = y_new
        done = cfg.stop_early and (speed < cfg.tol or risks[-1] < cfg.tol)
        if k % cfg.record_every == 0 or k == n or done:
            rk = risk(y)
            times.append(k * cfg.h)
            states.append(y.copy())
            risks.append(rk)
            if cfg.stop_early and (rk < cfg.tol or speed < cfg.tol):
                reason = "converged"
                break
    return Trajectory(np.array(times), np.array(states), np.array(risks), reason, label)


# --------------------------------------------------------------------------
# Zero initialisation: the flow on the teacher line
# --------------------------------------------------------------------------

def flow_1d(spec, beta0: float = 0.0, cfg: FlowConfig = FlowConfig(),
            rule: QuadratureRule | None = None) -> Trajectory:
    rule = rule or default_rule(spec)
    return integrate(lambda b: -r_sigma_prime(spec, b, rule), float(beta0), cfg,
                     lambda b: r_sigma(spec, float(b), rule), label="beta")


# --------------------------------------------------------------------------
# Spherical flows
# --------------------------------------------------------------------------

def _clip_unit(a):
    return np.clip(a, -1.0, 1.0)


def sphere_field(cf: CorrelationFunction, a):
    return cf.f_prime(a) * (1.0 - a * a)


def flow_sphere_reduced(cf: CorrelationFunction, a0: float, cfg: FlowConfig = FlowConfig()) -> Trajectory:
    """Integrate ``a' = f'(a)(1 - a^2)`` from ``a0``."""
    if abs(a0) > 1:
        raise ValueError("|a0| must be <= 1")
    return integrate(lambda a: sphere_field(cf, a), float(a0), cfg,
                     lambda a: float(sphere_risk(cf, a)), project=_clip_unit, label="a")


@dataclass
class BatchFlow:
    """Many scalar spherical flows integrated in lock-step."""

    times: np.ndarray  # (N,)
    a: np.ndarray  # (N, B)

    @property
    def final(self) -> np.ndarray:
        return self.a[-1]


def flow_sphere_reduced_batch(cf: CorrelationFunction, a0, cfg: FlowConfig = FlowConfig()) -> BatchFlow:
    """Vectorised :func:`flow_sphere_reduced`; always runs to the horizon."""
    a = _clip_unit(np.array(a0, dtype=float))
    times, rows = [0.0], [a.copy()]
    for k in range(1, cfg.n_steps + 1):
        a = _clip_unit(rk4_step(lambda x: sphere_field(cf, x), a, cfg.h))
        if k % cfg.record_every == 0 or k == cfg.n_steps:
            times.append(k * cfg.h)
            rows.append(a.copy())
    return BatchFlow(np.array(times), np.array(rows))


def _check_unit(v, name):
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError(f"{name} must be a unit vector")
    return v


def flow_sphere_full(cf: CorrelationFunction, w0, w_star, cfg: FlowConfig = FlowConfig()) -> Trajectory:
    """Riemannian flow ``w' = (I - w w^T) f'(w.w*) w*``, renormalised every step."""
    w0 = _check_unit(w0, "w0")
    w_star = _check_unit(w_star, "w_star")

    def rhs(w):
        return cf.f_prime(w @ w_star) * (w_star - (w @ w_star) * w)

    traj = integrate(rhs, w0, cfg, lambda w: float(sphere_risk(cf, np.clip(w @ w_star, -1, 1))),
                     project=lambda w: w / np.linalg.norm(w), label="w")
    traj.extras["a"] = traj.states @ w_star
    return traj


# --------------------------------------------------------------------------
# Population gradient through the two-dimensional reduction
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneRule:
    """Tensor-product Gauss-Hermite rule for ``(x1, x2) ~ N(0, I_2)``."""

    x1: np.ndarray
    x2: np.ndarray
    w: np.ndarray

    @classmethod
    def of_order(cls, m: int) -> "PlaneRule":
        if m < 2:
            raise ConfigurationError("plane rule needs at least 2 nodes per axis")
        r = gauss_hermite(m)
        x1, x2 = np.meshgrid(r.nodes, r.nodes, indexing="ij")
        return cls(x1.ravel(), x2.ravel(), np.outer(r.weights, r.weights).ravel())


@lru_cache(maxsize=None)
def plane_rule(m: int = DEFAULT_2D_ORDER) -> PlaneRule:
    return PlaneRule.of_order(m)


def default_plane_order(spec) -> int:
    if spec.kind == "sine":
        return min(512, max(DEFAULT_2D_ORDER, 4 * math.ceil(spec.freq**2) + 100))
    return DEFAULT_2D_ORDER


def _student_frame(W, w_star):
    """Orthonormal frame of ``span{w, w*}`` with the first axis along ``w``.

    Returns ``(s, what, a, b, e2)`` with ``w = s what`` and
    ``w* = a what + b e2``.  Placing ``w`` on a grid axis means the jump of
    ``sigma'(w.x)`` for kinked activations falls on a grid line of the
    tensor-product rule instead of cutting across it.
    """
    s = np.linalg.norm(W, axis=1)
    nz = s > 1e-15
    what = np.where(nz[:, None], W / np.where(nz, s, 1.0)[:, None], w_star[None, :])
    s = np.where(nz, s, 0.0)
    a = np.clip(what @ w_star, -1.0, 1.0)
    perp = w_star[None, :] - a[:, None] * what
    b = np.linalg.norm(perp, axis=1)
    ok = b > 1e-15
    e2 = np.where(ok[:, None], perp / np.where(ok, b, 1.0)[:, None], 0.0)
    return s, what, a, np.where(ok, b, 0.0), e2


def _plane_terms(spec, W, w_star, rule2d):
    s, what, a, b, e2 = _student_frame(W, w_star)
    y1, y2 = rule2d.x1, rule2d.x2
    pre = s[:, None] * y1[None, :]
    diff = spec._v(pre) - spec._v(a[:, None] * y1[None, :] + b[:, None] * y2[None, :])
    return pre, diff, what, e2


def population_gradient_batch(spec, W, w_star, rule2d: PlaneRule | None = None) -> np.ndarray:
    """``grad R`` for every row of ``W`` (shape (B, d))."""
    rule2d = rule2d or plane_rule(default_plane_order(spec))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    w_star = np.asarray(w_star, dtype=float)
    pre, diff, what, e2 = _plane_terms(spec, W, w_star, rule2d)
    common = diff * spec._d(pre) * rule2d.w[None, :]
    return (common @ rule2d.x1)[:, None] * what + (common @ rule2d.x2)[:, None] * e2


def population_gradient(spec, w, w_star, rule2d: PlaneRule | None = None) -> np.ndarray:
    """Population gradient ``E[(sigma(w.x) - sigma(w*.x)) sigma'(w.x) x]`` for Gaussian x."""
    w_star = _check_unit(w_star, "w_star")
    return population_gradient_batch(spec, np.asarray(w, dtype=float)[None, :], w_star, rule2d)[0]


def population_risk_batch(spec, W, w_star, rule2d: PlaneRule | None = None) -> np.ndarray:
    rule2d = rule2d or plane_rule(default_plane_order(spec))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    _, diff, _, _ = _plane_terms(spec, W, np.asarray(w_star, dtype=float), rule2d)
    return 0.5 * (diff * diff) @ rule2d.w


def population_risk(spec, w, w_star, rule2d: PlaneRule | None = None) -> float:
    return float(population_risk_batch(spec, np.asarray(w)[None, :], w_star, rule2d)[0])


def flow_population_full(spec, w0, w_star, cfg: FlowConfig = FlowConfig(),
                         rule2d: PlaneRule | None = None) -> Trajectory:
    """Population gradient flow ``w' = -grad R(w)`` in R^d."""
    w_star = _check_unit(w_star, "w_star")
    rule2d = rule2d or plane_rule(default_plane_order(spec))
    traj = integrate(lambda w: -population_gradient_batch(spec, w[None, :], w_star, rule2d)[0],
                     np.asarray(w0, dtype=float), cfg,
                     lambda w: population_risk(spec, w, w_star, rule2d), label="w")
    traj.extras["distance"] = np.linalg.norm(traj.states - w_star[None, :], axis=1)
    return traj


@dataclass
class BatchVectorFlow:
    times: np.ndarray  # (N,)
    W: np.ndarray  # (N, B, d)
    risks: np.ndarray  # (N, B)


def flow_population_batch(spec, W0, w_star, cfg: FlowConfig = FlowConfig(),
                          rule2d: PlaneRule | None = None) -> BatchVectorFlow:
    """Many population flows integrated in lock-step (no early stopping)."""
    w_star = _check_unit(w_star, "w_star")
    rule2d = rule2d or plane_rule(default_plane_order(spec))
    W = np.array(W0, dtype=float)
    rhs = lambda X: -population_gradient_batch(spec, X, w_star, rule2d)  # noqa: E731
    times, rows, risks = [0.0], [W.copy()], [population_risk_batch(spec, W, w_star, rule2d)]
    for k in range(1, cfg.n_steps + 1):
        W = rk4_step(rhs, W, cfg.h)
        if k % cfg.record_every == 0 or k == cfg.n_steps:
            times.append(k * cfg.h)
            rows.append(W.copy())
            risks.append(population_risk_batch(spec, W, w_star, rule2d))
    return BatchVectorFlow(np.array(times), np.array(rows), np.array(risks))


# --------------------------------------------------------------------------
# Critical points of the spherical landscape
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalPoint:
    a: float
    kind: str  # "min" | "max" | "saddle-candidate" (kinds refer to the risk)


def _classify(left, right):
    # left/right: sign of a' just below / above the point; +1, -1 or 0
    if left > 0 and right < 0:
        return "min"
    if left < 0 and right > 0:
        return "max"
    return "saddle-candidate"


def critical_points(cf: CorrelationFunction, tol: float = 1e-12, grid: int = 20001) -> list:
    """Critical overlaps ``a``: roots of f' in (-1, 1) plus the poles ``a = +-1``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    a = np.linspace(-1.0, 1.0, grid)
    fp = cf.f_prime(a)
    roots = []
    for i in range(1, grid - 1):
        if abs(fp[i]) <= tol:
            if not (roots and a[i] - roots[-1] < 2.5 * (a[1] - a[0])):
                roots.append(float(a[i]))
        elif i < grid - 2 and fp[i] * fp[i + 1] < 0 and abs(fp[i + 1]) > tol:
            roots.append(brentq(cf.f_prime, a[i], a[i + 1], xtol=1e-14))
    eps = 1e-6
    # the poles are one-sided: attracting iff the field points into them
    right = np.sign(sphere_field(cf, -1 + eps))
    out = [CriticalPoint(-1.0, "min" if right < 0 else ("max" if right > 0 else "saddle-candidate"))]
    for r in roots:
        out.append(CriticalPoint(r, _classify(np.sign(sphere_field(cf, r - eps)),
                                              np.sign(sphere_field(cf, r + eps)))))
    left = np.sign(sphere_field(cf, 1 - eps))
    out.append(CriticalPoint(1.0, "min" if left > 0 else ("max" if left < 0 else "saddle-candidate")))
    return out
