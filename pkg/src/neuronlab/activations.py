"""Activation functions with exact first and second derivatives.

Every activation is normalised so that ``sigma(0) == 0``; the constant that
was removed is kept in ``zero_shift``.  The risk of a single neuron only sees
differences ``sigma(u) - sigma(v)``, so the shift never changes a landscape.

Activations are addressed by short string ids::

    identity  relu  sigmoid  tanh  silu  swish:1.5  gelu  sine:2
    plateau   hermite:0,0,1,1   gated:normal:2.0
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtr

from .errors import DomainError, UnsupportedOperationError
from .hermite import hermite_basis

_SQRT_2PI = np.sqrt(2.0 * np.pi)

KINDS = (
    "identity", "relu", "sigmoid", "tanh", "silu", "swish", "gelu",
    "sine", "plateau", "hermite", "gated",
)
_KINKED = ("relu", "plateau")
# where the non-differentiable point sits, and the derivative we report there
_KINK_LOCATION = {"relu": 0.0, "plateau": 2.0}


# Gates phi for the self-gated family z * phi(beta z): (phi, phi', phi'').
def _sigmoid_gate(u):
    s = expit(u)
    return s, s * (1 - s), s * (1 - s) * (1 - 2 * s)


def _normal_gate(u):
    pdf = np.exp(-0.5 * u * u) / _SQRT_2PI
    return ndtr(u), pdf, -u * pdf


def _arctan_gate(u):
    g = 1.0 / (np.pi * (1 + u * u))
    return 0.5 + np.arctan(u) / np.pi, g, -2 * u * g * g * np.pi


GATES = {"sigmoid": _sigmoid_gate, "normal": _normal_gate, "arctan": _arctan_gate}


@dataclass(frozen=True)
class ActivationSpec:
    """A named activation sigma with sigma', sigma'' and structural parameters.

    Use :func:`make_activation` or :func:`parse_activation` rather than the
    constructor; both validate parameters.
    """

    kind: str
    beta: float = 1.0  # gate sharpness for swish / gated
    freq: float = 1.0  # frequency for sine
    coeffs: tuple[float, ...] = ()  # hermite combination c_0..c_K
    gate: str = ""
    kink_deriv: float = 1.0  # declared sigma' at the kink (ReLU: 1)
    zero_shift: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind in ("swish", "gated") and not self.beta > 0:
            raise ValueError("gate sharpness must be positive")
        if self.kind == "sine" and not self.freq > 0:
            raise ValueError("sine frequency must be positive")
        if self.kind == "gated" and self.gate not in GATES:
            raise ValueError(f"unknown gate {self.gate!r}; choose from {sorted(GATES)}")
        if self.kind == "hermite" and len(self.coeffs) == 0:
            raise ValueError("hermite combination needs at least one coefficient")
        object.__setattr__(self, "zero_shift", float(self._raw(np.zeros(1))[0]))

    # -- identification ---------------------------------------------------
    @property
    def id(self) -> str:
        if self.kind == "swish":
            return f"swish:{self.beta:g}"
        if self.kind == "sine":
            return f"sine:{self.freq:g}"
        if self.kind == "hermite":
            return "hermite:" + ",".join(f"{c:g}" for c in self.coeffs)
        if self.kind == "gated":
            return f"gated:{self.gate}:{self.beta:g}"
        return self.kind

    def __str__(self):
        return self.id

    @property
    def twice_differentiable(self) -> bool:
        return self.kind not in _KINKED

    @property
    def monotone(self) -> bool:
        """Whether sigma is known to be nondecreasing on the whole line."""
        return self.kind in ("identity", "relu", "sigmoid", "tanh", "plateau")

    # -- raw (unshifted) closed forms -------------------------------------
    def _gate(self):
        if self.kind in ("silu", "swish"):
            return _sigmoid_gate, (1.0 if self.kind == "silu" else self.beta)
        if self.kind == "gelu":
            return _normal_gate, 1.0
        return GATES[self.gate], self.beta

    def _raw(self, z):
        k = self.kind
        if k == "identity":
            return z.copy()
        if k == "relu":
            return np.maximum(z, 0.0)
        if k == "sigmoid":
            return expit(z)
        if k == "tanh":
            return np.tanh(z)
        if k in ("silu", "swish", "gelu", "gated"):
            gate, b = self._gate()
            return z * gate(b * z)[0]
        if k == "sine":
            return np.sin(self.freq * z)
        if k == "plateau":
            return np.maximum(1.0, np.maximum(z - 1.0, 0.0))
        # hermite combination
        basis = hermite_basis(len(self.coeffs) - 1, z)
        return np.tensordot(np.asarray(self.coeffs), basis, axes=1)

    def _raw_deriv(self, z):
        k = self.kind
        if k == "identity":
            return np.ones_like(z)
        if k == "relu":
            return np.where(z > 0, 1.0, np.where(z < 0, 0.0, self.kink_deriv))
        if k == "sigmoid":
            s = expit(z)
            return s * (1 - s)
        if k == "tanh":
            return 1.0 / np.cosh(z) ** 2
        if k in ("silu", "swish", "gelu", "gated"):
            gate, b = self._gate()
            phi, dphi, _ = gate(b * z)
            return phi + b * z * dphi
        if k == "sine":
            return self.freq * np.cos(self.freq * z)
        if k == "plateau":
            # right derivative at the kink z = 2
            return np.where(z >= 2.0, 1.0, 0.0)
        c = np.asarray(self.coeffs)
        if len(c) == 1:
            return np.zeros_like(z)
        basis = hermite_basis(len(c) - 2, z)
        # h_k' = sqrt(k) h_{k-1}
        dc = c[1:] * np.sqrt(np.arange(1, len(c)))
        return np.tensordot(dc, basis, axes=1)

    def _raw_second(self, z):
        k = self.kind
        if k == "identity":
            return np.zeros_like(z)
        if k == "sigmoid":
            s = expit(z)
            return s * (1 - s) * (1 - 2 * s)
        if k == "tanh":
            t = np.tanh(z)
            return -2 * t * (1 - t * t)
        if k in ("silu", "swish", "gelu", "gated"):
            gate, b = self._gate()
            _, dphi, d2phi = gate(b * z)
            return 2 * b * dphi + b * b * z * d2phi
        if k == "sine":
            return -self.freq**2 * np.sin(self.freq * z)
        c = np.asarray(self.coeffs)
        if len(c) <= 2:
            return np.zeros_like(z)
        basis = hermite_basis(len(c) - 3, z)
        kk = np.arange(2, len(c))
        return np.tensordot(c[2:] * np.sqrt(kk * (kk - 1.0)), basis, axes=1)

    # -- public evaluators -------------------------------------------------
    def value(self, z):
        """Normalised sigma(z); scalar in, scalar out."""
        arr = _as_finite(z)
        out = self._raw(arr) - self.zero_shift
        return out if np.ndim(z) else float(out)

    __call__ = value

    def deriv(self, z):
        arr = _as_finite(z)
        out = self._raw_deriv(arr)
        return out if np.ndim(z) else float(out)

    def second_deriv(self, z):
        if not self.twice_differentiable:
            raise UnsupportedOperationError(f"{self.id} has a kink; sigma'' is not defined")
        arr = _as_finite(z)
        out = self._raw_second(arr)
        return out if np.ndim(z) else float(out)

    # Unchecked array paths for hot loops inside quadrature and flows.
    def _v(self, z):
        return self._raw(z) - self.zero_shift

    def _d(self, z):
        return self._raw_deriv(z)


def _as_finite(z):
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("activation argument must be finite")
    return arr


def make_activation(kind: str, *params, gate: str = "", kink_deriv: float = 1.0) -> ActivationSpec:
    """Build an activation from its kind and positional parameters.

    >>> make_activation("swish", 1.5).id
    'swish:1.5'
    """
    kind = kind.lower()
    if kind == "linear":
        kind = "identity"
    if kind in ("swish", "gated"):
        beta = float(params[0]) if params else 1.0
        return ActivationSpec(kind, beta=beta, gate=gate or ("sigmoid" if kind == "gated" else ""),
                              kink_deriv=kink_deriv)
    if kind == "sine":
        return ActivationSpec(kind, freq=float(params[0]) if params else 1.0)
    if kind == "hermite":
        return ActivationSpec(kind, coeffs=tuple(float(p) for p in params))
    if params:
        raise ValueError(f"activation {kind!r} takes no parameters")
    return ActivationSpec(kind, kink_deriv=kink_deriv)


def parse_activation(text: str) -> ActivationSpec:
    """Parse an id such as ``"swish:1.5"``, ``"hermite:0,0,1,1"`` or ``"gated:normal:2"``."""
    head, _, rest = text.strip().partition(":")
    head = head.lower()
    try:
        if head == "gated":
            gate, _, beta = rest.partition(":")
            return make_activation("gated", float(beta) if beta else 1.0, gate=gate or "sigmoid")
        if head == "hermite":
            return make_activation("hermite", *[float(c) for c in rest.split(",") if c.strip()])
        if rest:
            return make_activation(head, float(rest))
        return make_activation(head)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"cannot parse activation id {text!r}: {exc}") from None


# --------------------------------------------------------------------------
# Structural checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionProfile:
    gamma: float  # inf of sigma' over (0, alpha)
    zeta_sq: float  # max(0, -inf_{z1>=0, z2<=0} sigma'(z1) sigma'(z2))
    increasing_on_pos: bool


def assumption_profile(spec: ActivationSpec, alpha: float = 1.0, grid_step: float = 1e-4,
                       bound: float = 20.0) -> AssumptionProfile:
    """Grid estimates of the constants gamma and zeta^2 for an activation.

    ``gamma`` is the infimum (not supremum) of sigma' over (0, alpha).
    """
    if alpha <= 0 or grid_step <= 0:
        raise ValueError("alpha and grid_step must be positive")
    zpos = np.arange(0.0, bound + grid_step / 2, grid_step)
    dpos = spec._d(zpos)
    dneg = spec._d(-zpos)
    inside = (zpos > 0) & (zpos < alpha)
    if not inside.any():
        inside = zpos == zpos[1]
    gamma = float(dpos[inside].min())
    # inf of a product over a box = min over the four corners
    corners = np.outer([dpos.min(), dpos.max()], [dneg.min(), dneg.max()])
    zeta_sq = max(0.0, -float(corners.min()))
    increasing = bool(np.all(dpos[1:] >= -1e-12))
    return AssumptionProfile(gamma, zeta_sq, increasing)


@dataclass(frozen=True)
class Assumption2Report:
    z0: float  # inf when no such point exists within the grid
    q_increasing: bool
    p_increasing: bool
    lower_deriv_C: float

    @property
    def holds(self) -> bool:
        return (np.isfinite(self.z0) and self.q_increasing and self.p_increasing
                and self.lower_deriv_C > 0)


def assumption2_check(spec: ActivationSpec, grid_step: float = 1e-3, bound: float = 20.0,
                      tol: float = 1e-12) -> Assumption2Report:
    """Check the shape conditions used for non-monotonic zero-init convergence.

    Looks for the smallest grid point ``z0 > 0`` with sigma' >= 0 on
    ``[z0, bound]`` and sigma' <= 0 on ``[-bound, -z0]``, then tests that
    ``q(z) = sigma(z) - sigma(-z)`` and ``p(z) = sigma(z) + sigma(-z)`` are
    nondecreasing on ``[0, bound]``.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    z = np.arange(0.0, bound + grid_step / 2, grid_step)
    dpos, dneg = spec._d(z), spec._d(-z)
    # ok[i] is True when the condition holds for every grid index >= i
    ok = np.logical_and.accumulate(((dpos >= -tol) & (dneg <= tol))[::-1])[::-1]
    ok[0] = False
    idx = np.flatnonzero(ok)
    z0 = float(z[idx[0]]) if idx.size else np.inf

    vp, vn = spec._v(z), spec._v(-z)
    q, p = vp - vn, vp + vn
    scale = max(1.0, float(np.abs(vp).max()))
    q_inc = bool(np.all(np.diff(q) >= -tol * scale))
    p_inc = bool(np.all(np.diff(p) >= -tol * scale))
    upto = z <= min(z0, bound)
    lower = float(dpos[upto].min())
    return Assumption2Report(z0, q_inc, p_inc, lower)
