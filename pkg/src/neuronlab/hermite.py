"""Orthonormal Hermite polynomials and Gaussian expectations.

``h_k`` denotes the probabilists' Hermite polynomial scaled to unit norm under
the standard normal measure, so ``E[h_j(z) h_k(z)] = [j == k]``.  An activation
expands as ``sigma = sum_k c_k h_k`` and, for unit vectors,
``E[sigma(u.x) sigma(v.x)] = sum_k c_k**2 (u.v)**k``; the power series
``f(a) = sum_k c_k**2 a**k`` drives the whole spherical landscape.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import roots_hermitenorm, roots_legendre

from .errors import ConfigurationError

K_MAX = 128
M_MIN, M_MAX = 2, 512
DEFAULT_K = 40
DEFAULT_ORDER = 400
RESIDUAL_WARN = 1e-3


def hermite_basis(K: int, z) -> np.ndarray:
    """Values ``h_0(z) .. h_K(z)`` stacked along a new leading axis."""
    if K < 0:
        raise ValueError("K must be non-negative")
    z = np.asarray(z, dtype=float)
    out = np.empty((K + 1,) + z.shape)
    out[0] = 1.0
    if K >= 1:
        out[1] = z
    for k in range(1, K):
        out[k + 1] = (z * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def hermite_eval(k: int, z):
    """Orthonormal probabilists' Hermite polynomial ``h_k(z)``."""
    if not 0 <= k <= K_MAX:
        raise IndexError(f"Hermite degree {k} outside [0, {K_MAX}]")
    out = hermite_basis(k, z)[k]
    return out if np.ndim(z) else float(out)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule for ``E_{z ~ N(0,1)}[g(z)] ~= sum_i w_i g(n_i)``."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, values) -> np.ndarray:
        """Contract the last axis of ``values`` against the weights."""
        return np.asarray(values) @ self.weights


@lru_cache(maxsize=None)
def gauss_hermite(m: int) -> QuadratureRule:
    """Nodes and weights for the standard normal weight, exact to degree 2m-1."""
    if not M_MIN <= m <= M_MAX:
        raise ConfigurationError(f"quadrature order {m} outside [{M_MIN}, {M_MAX}]")
    x, w = roots_hermitenorm(m)
    w = w / math.sqrt(2 * math.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(m, x, w)


@lru_cache(maxsize=64)
def piecewise_rule(breaks: tuple = (0.0,), n: int = 600, span: float = 40.0) -> QuadratureRule:
    """Gauss-Legendre panels on ``[-span, span]`` split at ``breaks``, weighted by the normal density.

    Integrands with kinks at the break points are smooth on every panel, so
    this converges spectrally where a Gauss-Hermite rule only reaches O(1/m).
    ``order`` reports the per-panel node count.
    """
    if n < 2:
        raise ConfigurationError("need at least 2 nodes per panel")
    edges = [-span] + sorted(b for b in breaks if -span < b < span) + [span]
    x, w = roots_legendre(n)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        z = lo + half * (x + 1.0)
        nodes.append(z)
        weights.append(half * w * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi))
    z, wt = np.concatenate(nodes), np.concatenate(weights)
    z.setflags(write=False)
    wt.setflags(write=False)
    return QuadratureRule(n, z, wt)


def kink_points(spec, scale: float = 1.0) -> tuple:
    """Points where ``sigma(scale * z)`` is not smooth (empty for smooth activations)."""
    loc = {"relu": (0.0,), "plateau": (2.0,)}.get(getattr(spec, "kind", None), ())
    return tuple(k / scale for k in loc)


def default_order(spec) -> int:
    """Quadrature order for an activation: 400, raised for fast oscillation."""
    if getattr(spec, "kind", None) == "sine" and spec.freq >= 3:
        return min(M_MAX, max(DEFAULT_ORDER, 4 * math.ceil(spec.freq**2) + 100))
    return DEFAULT_ORDER


def default_rule(spec) -> QuadratureRule:
    """Gauss-Hermite of :func:`default_order`, or split panels for kinked activations."""
    kinks = kink_points(spec)
    if kinks:
        return piecewise_rule(kinks)
    return gauss_hermite(default_order(spec))


def _check_alias(K, rule):
    if not 0 <= K <= K_MAX:
        raise ConfigurationError(f"truncation order {K} outside [0, {K_MAX}]")
    if rule.order < 2 * K:
        raise ConfigurationError(
            f"quadrature order {rule.order} < 2K = {2 * K}; coefficients would alias")


@dataclass(frozen=True)
class HermiteExpansion:
    activation: str
    coeffs: np.ndarray  # c_0 .. c_K
    order: int  # quadrature order used
    l2_total: float  # E[sigma^2]
    residual: float  # l2_total - sum c_k^2

    @property
    def K(self) -> int:
        return len(self.coeffs) - 1

    def correlation(self) -> "CorrelationFunction":
        return CorrelationFunction(self.coeffs**2)

    def csv_rows(self):
        return [(k, float(c)) for k, c in enumerate(self.coeffs)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "coeff"])
            for k, c in self.csv_rows():
                writer.writerow([k, repr(c)])


def expand(spec, K: int = DEFAULT_K, rule: QuadratureRule | None = None) -> HermiteExpansion:
    """Hermite coefficients ``c_k = E[sigma(z) h_k(z)]`` for k <= K."""
    rule = rule or default_rule(spec)
    _check_alias(K, rule)
    vals = spec._v(np.asarray(rule.nodes))
    coeffs = hermite_basis(K, rule.nodes) @ (rule.weights * vals)
    l2 = float(rule.weights @ vals**2)
    resid = l2 - float(coeffs @ coeffs)
    if l2 > 0 and resid / l2 > RESIDUAL_WARN:
        warnings.warn(f"{spec}: truncation at K={K} leaves {resid / l2:.2e} of E[sigma^2]",
                      RuntimeWarning, stacklevel=2)
    coeffs.setflags(write=False)
    return HermiteExpansion(str(spec), coeffs, rule.order, l2, resid)


class CorrelationFunction:
    """The power series ``f(a) = sum_i s_i a**i`` with ``s_i = c_i**2 >= 0``."""

    def __init__(self, power_coeffs):
        s = np.array(power_coeffs, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("need a non-empty 1-D coefficient vector")
        if np.any(s < 0):
            raise ValueError("correlation coefficients are squares and must be >= 0")
        s.setflags(write=False)
        self.power_coeffs = s
        self._deriv = P.polyder(s) if s.size > 1 else np.zeros(1)

    @classmethod
    def from_hermite(cls, coeffs):
        return cls(np.asarray(coeffs, dtype=float) ** 2)

    @property
    def deriv_coeffs(self) -> np.ndarray:
        """Coefficients of f' in increasing powers: ``[s_1, 2 s_2, 3 s_3, ...]``."""
        return self._deriv

    def f(self, a):
        _flag_extrapolation(a)
        return P.polyval(a, self.power_coeffs)

    def f_prime(self, a):
        _flag_extrapolation(a)
        return P.polyval(a, self._deriv)

    def q_sigma(self, delta: float) -> float:
        if not 0 < delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        s = self.power_coeffs
        even = np.arange(2, s.size, 2)
        return float((s[1] if s.size > 1 else 0.0) - np.sum(even * s[even] * delta ** (even - 1)))

    def first_nonzero(self, tol: float = 1e-14) -> int:
        """Smallest k >= 1 with a non-negligible coefficient (0 if none)."""
        idx = np.flatnonzero(self.power_coeffs[1:] > tol)
        return int(idx[0]) + 1 if idx.size else 0


def _flag_extrapolation(a):
    if np.any(np.abs(a) > 1 + 1e-12):
        warnings.warn("correlation argument outside [-1, 1]; series is extrapolated",
                      RuntimeWarning, stacklevel=3)


def f_eval(cf: CorrelationFunction, a):
    return cf.f(a)


def f_prime(cf: CorrelationFunction, a):
    return cf.f_prime(a)


def q_sigma(cf: CorrelationFunction, delta: float) -> float:
    return cf.q_sigma(delta)


# --------------------------------------------------------------------------
# Dilations and the bivariate kernel H
# --------------------------------------------------------------------------

def dilated_coeffs(spec, s: float, K: int, rule: QuadratureRule | None = None) -> np.ndarray:
    """``c_k(s) = E[sigma(s z) h_k(z)]`` for k <= K."""
    if not s > 0:
        raise ValueError("dilation must be positive")
    rule = rule or default_rule(spec)
    _check_alias(K, rule)
    return hermite_basis(K, rule.nodes) @ (rule.weights * spec._v(s * np.asarray(rule.nodes)))


def dilated_coeff(spec, s: float, k: int, rule: QuadratureRule | None = None) -> float:
    return float(dilated_coeffs(spec, s, k, rule)[k])


def H_eval(spec, z: float, s1: float, s2: float, K: int = DEFAULT_K,
           rule: QuadratureRule | None = None) -> float:
    """Truncated ``H(z, s1, s2) = sum_k c_k(s1) c_k(s2) z**k``."""
    if abs(z) > 1 + 1e-12:
        raise ValueError("H is evaluated for |z| <= 1")
    c1 = dilated_coeffs(spec, s1, K, rule)
    c2 = c1 if s2 == s1 else dilated_coeffs(spec, s2, K, rule)
    return float(P.polyval(z, c1 * c2))
