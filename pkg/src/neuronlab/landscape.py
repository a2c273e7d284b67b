"""Risk landscapes of a single neuron under standard Gaussian inputs.

Three closed forms are provided:

* the one-dimensional profile ``r(beta) = 1/2 E[(sigma(beta z) - sigma(z))^2]``,
  which is the risk along the teacher direction ``w = beta w*``;
* the spherical risk ``f(1) - f(a)`` with ``a = w.w*`` and ``|w| = 1``;
* the off-sphere risk for any norm through the dilated kernel ``H``.

It also holds the lower bound on ``<grad R(w), w - w*>`` for activations that
are increasing on the positive half line, and a numerical check of the
two-dimensional wedge integral that bound relies on.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq, minimize_scalar
from scipy.special import roots_legendre

from .hermite import (CorrelationFunction, QuadratureRule, default_rule, dilated_coeffs, gauss_hermite,
                      kink_points, piecewise_rule)


# --------------------------------------------------------------------------
# One-dimensional profile
# --------------------------------------------------------------------------

def r_sigma(spec, beta, rule: QuadratureRule | None = None):
    """``1/2 E[(sigma(beta z) - sigma(z))^2]``; vectorised over ``beta``."""
    rule = rule or default_rule(spec)
    b = np.asarray(beta, dtype=float)
    n = rule.nodes
    diff = spec._v(b[..., None] * n) - spec._v(n)
    out = 0.5 * rule.expect(diff * diff)
    return out if b.ndim else float(out)


def r_sigma_prime(spec, beta, rule: QuadratureRule | None = None):
    """Derivative of :func:`r_sigma`: ``E[(sigma(beta z) - sigma(z)) sigma'(beta z) z]``.

    The gradient of the full risk on the teacher line is ``r'(beta) w*``, so the
    zero-initialised flow obeys ``beta' = -r'(beta)``.
    """
    rule = rule or default_rule(spec)
    b = np.asarray(beta, dtype=float)
    n = rule.nodes
    u = b[..., None] * n
    out = rule.expect((spec._v(u) - spec._v(n)) * spec._d(u) * n)
    return out if b.ndim else float(out)


@dataclass
class OneDimLandscape:
    activation: str
    betas: np.ndarray
    r: np.ndarray
    r_prime: np.ndarray
    minima: list = field(default_factory=list)  # [(beta*, r(beta*)), ...] refined

    def interior_minima(self, lo: float, hi: float, exclude_global: float | None = None):
        """Minima with ``lo < beta* < hi``.

        With ``exclude_global`` set, minima whose risk is below that tolerance
        (i.e. the teacher itself) are dropped, leaving only bad minima.
        """
        out = [(b, r) for b, r in self.minima if lo < b < hi]
        if exclude_global is not None:
            out = [(b, r) for b, r in out if r > exclude_global]
        return out

    def is_local_min(self) -> np.ndarray:
        flags = np.zeros(self.betas.shape, dtype=bool)
        for b, _ in self.minima:
            flags[np.argmin(np.abs(self.betas - b))] = True
        return flags

    def flat_at_origin(self, tol: float = 1e-10) -> bool:
        i = np.argmin(np.abs(self.betas))
        return abs(self.betas[i]) < 1e-12 and abs(self.r_prime[i]) <= tol

    def to_csv(self, path):
        flags = self.is_local_min()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["beta", "r", "r_prime", "is_local_min"])
            for b, r, rp, m in zip(self.betas, self.r, self.r_prime, flags):
                writer.writerow([repr(float(b)), repr(float(r)), repr(float(rp)), int(m)])


def scan_1d(spec, beta_lo: float = 0.0, beta_hi: float = 1.5, steps: int = 301,
            rule: QuadratureRule | None = None, xtol: float = 1e-8) -> OneDimLandscape:
    """Tabulate ``r`` and ``r'`` and locate local minima of ``r``.

    A minimum is flagged where ``r'`` goes from negative to non-negative between
    neighbouring grid points; it is refined by bisection on ``r'`` and kept only
    if the second difference of ``r`` around it is non-negative.
    """
    if not beta_lo < beta_hi or steps < 2:
        raise ValueError("need beta_lo < beta_hi and steps >= 2")
    rule = rule or default_rule(spec)
    betas = np.linspace(beta_lo, beta_hi, steps)
    r = r_sigma(spec, betas, rule)
    rp = r_sigma_prime(spec, betas, rule)
    scale = max(1.0, float(np.abs(rp).max()))
    tiny = 1e-13 * scale
    minima = []
    for i in range(steps - 1):
        if rp[i] < -tiny and rp[i + 1] >= -tiny:
            if abs(rp[i + 1]) <= tiny:
                b = float(betas[i + 1])
            else:
                b = brentq(lambda x: r_sigma_prime(spec, x, rule), betas[i], betas[i + 1], xtol=xtol)
            h = 1e-4 * (beta_hi - beta_lo)
            curv = r_sigma(spec, b + h, rule) - 2 * r_sigma(spec, b, rule) + r_sigma(spec, b - h, rule)
            if curv >= -1e-14:
                minima.append((b, r_sigma(spec, b, rule)))
    return OneDimLandscape(str(spec), betas, r, rp, minima)


@dataclass(frozen=True)
class PopCondition:
    holds: bool
    C: float


def check_pop_condition(spec, rule: QuadratureRule | None = None, steps: int = 1000,
                        edge: float = 1e-3) -> PopCondition:
    """Largest ``C`` with ``r'(beta) <= -C (1 - beta)`` on a grid of ``[0, 1 - edge]``."""
    betas = np.linspace(0.0, 1.0 - edge, steps)
    ratio = -r_sigma_prime(spec, betas, rule) / (1.0 - betas)
    C = float(ratio.min())
    return PopCondition(C > 1e-12, C)


# --------------------------------------------------------------------------
# Spherical and off-sphere risk
# --------------------------------------------------------------------------

def sphere_risk(cf: CorrelationFunction, a):
    """Population risk of a unit-norm student with ``a = w.w*``: ``f(1) - f(a)``."""
    if np.any(np.abs(a) > 1 + 1e-12):
        raise ValueError("sphere_risk needs |a| <= 1")
    return cf.f(1.0) - cf.f(a)


def offsphere_risk(spec, w_norm: float, a: float, K: int = 128,
                   rule: QuadratureRule | None = None) -> float:
    """Risk of a student with norm ``w_norm`` and ``cos(angle to w*) = a``.

    ``1/2 H(1,1,1) + 1/2 H(1,s,s) - H(a,s,1)`` with every ``H`` truncated at K.
    """
    if not w_norm > 0:
        raise ValueError("w_norm must be positive")
    if abs(a) > 1 + 1e-12:
        raise ValueError("|a| must be <= 1")
    rule = rule or _offsphere_rule(spec, w_norm, K)
    c1 = dilated_coeffs(spec, 1.0, K, rule)
    cs = c1 if w_norm == 1.0 else dilated_coeffs(spec, w_norm, K, rule)
    return float(0.5 * c1 @ c1 + 0.5 * cs @ cs - P.polyval(a, cs * c1))


def _offsphere_rule(spec, s, K):
    kinks = set(kink_points(spec)) | set(kink_points(spec, s))
    if kinks:
        return piecewise_rule(tuple(sorted(kinks)), max(600, 2 * K))
    m = max(2 * K, default_rule(spec).order)
    if spec.kind == "sine":
        m = max(m, 4 * math.ceil((spec.freq * max(s, 1.0)) ** 2) + 100)
    return gauss_hermite(min(m, 512))


# --------------------------------------------------------------------------
# Monotone-part lower bound
# --------------------------------------------------------------------------

def c_delta(delta: float) -> float:
    return math.sin(delta / 4) ** 3 / (8 * math.sqrt(2))


@dataclass(frozen=True)
class AssumptionBound:
    """Constants of the spread-input / increasing-activation assumption.

    ``density`` is the lower bound on the planar marginal density over the
    alpha-disk; ``delta`` the angle gap ``pi - theta(w, w*)``.
    """

    alpha: float
    density: float
    gamma: float
    zeta: float
    tau: float
    delta: float

    @property
    def c_delta(self) -> float:
        return c_delta(self.delta)

    @property
    def lam(self) -> float:
        return ((self.gamma**2 + self.zeta**2) * self.density * self.alpha**4 * self.c_delta
                - self.tau * self.zeta**2)


def lambda_bound(bound: AssumptionBound) -> float:
    return bound.lam


def gaussian_density_floor(alpha: float) -> float:
    """Minimum of the bivariate standard normal density over the disk of radius alpha."""
    return math.exp(-alpha * alpha / 2) / (2 * math.pi)


@dataclass(frozen=True)
class RegionCheck:
    numeric_inf: float
    paper_lb: float
    holds: bool


@lru_cache(maxsize=8)
def _legendre(n):
    return roots_legendre(n)


def wedge_second_moment(alpha: float, gap: float, psi, n_angle: int = 10_000):
    """``int_W (u.y)^2 dy`` over the wedge ``{0 < arg y < gap, |y| <= alpha}``.

    ``u = (cos psi, sin psi)``.  The radial factor ``alpha^4 / 4`` is exact;
    the angular integral uses Gauss-Legendre with ``n_angle`` nodes.
    """
    x, w = _legendre(n_angle)
    phi = 0.5 * gap * (x + 1)
    psi = np.asarray(psi, dtype=float)
    ang = (np.cos(phi[None, :] - psi.reshape(-1, 1)) ** 2) @ w * (0.5 * gap)
    out = alpha**4 / 4 * ang
    return out.reshape(psi.shape) if psi.ndim else float(out[0])


def region_integral_check(alpha: float, angle: float, u_grid: int = 360,
                          n_angle: int = 10_000) -> RegionCheck:
    """Numeric infimum over unit ``u`` of the wedge integral versus its lower bound.

    ``angle`` is the gap ``delta`` in ``arccos(a.b) <= pi - delta``; the worst
    admissible pair of half-planes meets in a wedge of opening ``delta``.
    """
    if not 0 < angle <= math.pi:
        raise ValueError("angle gap must lie in (0, pi]; a = -b is degenerate")
    if u_grid < 180:
        raise ValueError("u_grid must be >= 180")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    lb = alpha**4 / (8 * math.sqrt(2)) * math.sin(angle / 4) ** 3
    if alpha == 0:
        return RegionCheck(0.0, lb, True)
    psis = np.linspace(0.0, math.pi, u_grid, endpoint=False)
    vals = wedge_second_moment(alpha, angle, psis, n_angle)
    i = int(np.argmin(vals))
    step = math.pi / u_grid
    res = minimize_scalar(lambda p: wedge_second_moment(alpha, angle, p, n_angle),
                          bounds=(psis[i] - step, psis[i] + step), method="bounded",
                          options={"xatol": 1e-10})
    inf = min(float(vals[i]), float(res.fun))
    return RegionCheck(inf, lb, inf >= lb - 1e-9)
