"""Jacobi polynomial bases P_0..P_n on [-1, 1] via the three-term recurrence.

The Legendre (alpha = beta = 0), Chebyshev (alpha = beta = -1/2 and +1/2) and
Gegenbauer (alpha = beta) families are special cases; closed-form oracles for
the first three live at the bottom of this module for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from . import tensor as T
from .errors import ConfigError, UsageError

DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    degree: int
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 0:
            raise ConfigError(f"degree must be a non-negative integer, got {self.degree!r}")
        if not (self.alpha > -1.0 and self.beta > -1.0):
            raise ConfigError(f"alpha and beta must exceed -1, got ({self.alpha}, {self.beta})")
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_terms(self) -> int:
        return self.degree + 1


class RecurrenceCoefficients(NamedTuple):
    A: float
    B: float
    C: float


def recurrence_coefficients(n: int, spec: BasisSpec) -> RecurrenceCoefficients:
    """Coefficients of P_n = (A_n z + B_n) P_{n-1} + C_n P_{n-2}, for n >= 2."""
    if n < 2:
        raise UsageError(f"recurrence coefficients are defined for n >= 2, got {n}")
    a, b = spec.alpha, spec.beta
    s = 2 * n + a + b
    denom = 2 * n * (n + a + b)
    A = (s - 1) * s / denom
    B = (s - 1) * (a * a - b * b) / (denom * (s - 2))
    C = -2 * (n + a - 1) * (n + b - 1) * s / (denom * (s - 2))
    return RecurrenceCoefficients(A, B, C)


def _first_order(spec: BasisSpec) -> tuple[float, float]:
    """P_1(z) = slope * z + offset."""
    return 0.5 * (spec.alpha + spec.beta + 2.0), 0.5 * (spec.alpha - spec.beta)


def _check_domain(z: np.ndarray) -> None:
    if T.is_checked() and np.any(np.abs(z) > 1.0 + DOMAIN_SLACK):
        raise UsageError("Jacobi basis evaluated outside [-1, 1]")


def jacobi_values(z, spec: BasisSpec) -> np.ndarray:
    """Plain numpy evaluation; returns array of shape z.shape + (n+1,)."""
    z = np.asarray(z, dtype=np.float64)
    _check_domain(z)
    out = np.empty(z.shape + (spec.n_terms,))
    out[..., 0] = 1.0
    if spec.degree >= 1:
        slope, offset = _first_order(spec)
        out[..., 1] = slope * z + offset
    for k in range(2, spec.degree + 1):
        A, B, C = recurrence_coefficients(k, spec)
        out[..., k] = (A * z + B) * out[..., k - 1] + C * out[..., k - 2]
    return out


def jacobi_derivatives(z, spec: BasisSpec) -> np.ndarray:
    """dP_k/dz for k = 0..n, by differentiating the recurrence."""
    z = np.asarray(z, dtype=np.float64)
    p = jacobi_values(z, spec)
    d = np.zeros_like(p)
    if spec.degree >= 1:
        d[..., 1] = _first_order(spec)[0]
    for k in range(2, spec.degree + 1):
        A, B, C = recurrence_coefficients(k, spec)
        d[..., k] = A * p[..., k - 1] + (A * z + B) * d[..., k - 1] + C * d[..., k - 2]
    return d


def eval_basis(z: T.Tensor, spec: BasisSpec) -> T.Tensor:
    """Differentiable stack [P_0(z), ..., P_n(z)] along a new trailing axis.

    Built from generic tape ops, so gradients flow through the recurrence.
    """
    _check_domain(z.data)
    terms = [T.Tensor(np.ones(z.shape))]
    if spec.degree >= 1:
        slope, offset = _first_order(spec)
        terms.append(z * slope + offset)
    for k in range(2, spec.degree + 1):
        A, B, C = recurrence_coefficients(k, spec)
        terms.append((z * A + B) * terms[k - 1] + terms[k - 2] * C)
    return T.stack(terms, axis=-1)


def _coefficient_table(spec: BasisSpec) -> np.ndarray:
    table = np.zeros((max(spec.degree - 1, 1), 3))
    for k in range(2, spec.degree + 1):
        table[k - 2] = recurrence_coefficients(k, spec)
    return table


def jacobi_features(x: T.Tensor, spec: BasisSpec) -> T.Tensor:
    """Fused tanh squash + basis expansion for a KAN layer.

    For x of shape [..., d] returns [..., n+1, d]: entry [..., i, j] is
    P_i(tanh(x[..., j])). Term-major so each degree is a contiguous block.
    The backward pass differentiates the recurrence alongside the values.
    """
    n = spec.degree
    d = x.shape[-1]
    slope, offset = _first_order(spec)
    table = _coefficient_table(spec)
    z = np.tanh(x.data.reshape(-1, d))
    basis = _kernels.jacobi_forward(z, table, slope, offset, n)
    shape = x.shape

    def bw(g):
        g = np.ascontiguousarray(g.reshape(-1, n + 1, d))
        return (_kernels.jacobi_backward(g, z, basis, table, slope, n).reshape(shape),)

    return T.make_op(basis.reshape(shape[:-1] + (n + 1, d)), (x,), bw, "jacobi_features")


# -- closed-form oracles (cross-checks only) ----------------------------------

_LEGENDRE = {
    0: ([1], 1),
    1: ([0, 1], 1),
    2: ([-1, 0, 3], 2),
    3: ([0, -3, 0, 5], 2),
    4: ([3, 0, -30, 0, 35], 8),
    5: ([0, 15, 0, -70, 0, 63], 8),
    6: ([-5, 0, 105, 0, -315, 0, 231], 16),
    7: ([0, -35, 0, 315, 0, -693, 0, 429], 16),
    8: ([35, 0, -1260, 0, 6930, 0, -12012, 0, 6435], 128),
}
ORACLE_MAX_DEGREE = 8


def _oracle_degree(k: int) -> None:
    if not 0 <= k <= ORACLE_MAX_DEGREE:
        raise UsageError(f"closed-form oracles cover degrees 0..{ORACLE_MAX_DEGREE}, got {k}")


def legendre_oracle(k: int, z):
    _oracle_degree(k)
    coeffs, scale = _LEGENDRE[k]
    return np.polynomial.polynomial.polyval(np.asarray(z, dtype=np.float64), coeffs) / scale


def chebyshev_T_oracle(k: int, z):
    _oracle_degree(k)
    return np.cos(k * np.arccos(np.clip(z, -1.0, 1.0)))


def chebyshev_U_oracle(k: int, z):
    _oracle_degree(k)
    z = np.clip(np.asarray(z, dtype=np.float64), -1.0, 1.0)
    theta = np.arccos(z)
    s = np.sin(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sin((k + 1) * theta) / s
    # endpoint limits: U_k(1) = k+1, U_k(-1) = (-1)^k (k+1)
    endpoint = np.where(z > 0, k + 1.0, (-1.0) ** k * (k + 1.0))
    return np.where(np.abs(s) < 1e-300, endpoint, val)


def jacobi_at_one(k: int, alpha: float) -> float:
    """P_k^(alpha, beta)(1) = binom(k + alpha, k)."""
    return math.gamma(k + alpha + 1) / (math.gamma(k + 1) * math.gamma(alpha + 1))
