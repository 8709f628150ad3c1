import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kapointnet import tensor as T
from kapointnet.errors import ConfigError, UsageError
from kapointnet.jacobi import (
    BasisSpec,
    chebyshev_T_oracle,
    chebyshev_U_oracle,
    eval_basis,
    jacobi_at_one,
    jacobi_derivatives,
    jacobi_features,
    jacobi_values,
    legendre_oracle,
    recurrence_coefficients,
)

Z100 = np.linspace(-1.0, 1.0, 100)


def test_recurrence_coefficients_hand_values():
    A, B, C = recurrence_coefficients(2, BasisSpec(2, 0.0, 0.0))
    assert (A, B, C) == pytest.approx((1.5, 0.0, -0.5), abs=1e-15)
    # alpha = beta = 1: s = 6, A = 5*6/(4*4), C = -2*2*2*6/(4*4*4)
    A, B, C = recurrence_coefficients(2, BasisSpec(2, 1.0, 1.0))
    assert (A, B, C) == pytest.approx((15 / 8, 0.0, -3 / 4), abs=1e-15)


def test_degree_two_closed_form_alpha_beta_one():
    # P_2^(1,1)(z) = (3/4)(5 z^2 - 1)
    np.testing.assert_allclose(jacobi_values(Z100, BasisSpec(2, 1.0, 1.0))[:, 2], 0.75 * (5 * Z100**2 - 1), atol=1e-14)


def test_recurrence_needs_n_at_least_two():
    with pytest.raises(UsageError):
        recurrence_coefficients(1, BasisSpec(3))


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.99, 5.0), st.integers(2, 12))
def test_B_vanishes_for_gegenbauer(a, n):
    assert recurrence_coefficients(n, BasisSpec(n, a, a)).B == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.99, 5.0), st.floats(-0.99, 5.0), st.integers(2, 12))
def test_coefficients_finite_on_classical_domain(a, b, n):
    assert all(math.isfinite(c) for c in recurrence_coefficients(n, BasisSpec(n, a, b)))


def test_basis_spec_validation():
    with pytest.raises(ConfigError):
        BasisSpec(-1)
    with pytest.raises(ConfigError):
        BasisSpec(3, -1.0, 0.0)
    with pytest.raises(ConfigError):
        BasisSpec(2.5)


def test_low_order_values():
    assert np.all(jacobi_values(np.array([-0.3, 0.9]), BasisSpec(0, 2.0, 0.5))[..., 0] == 1.0)
    assert jacobi_values(0.5, BasisSpec(1, 1.0, 1.0))[1] == 1.0
    assert jacobi_values(0.5, BasisSpec(2, 0.0, 0.0))[2] == pytest.approx(-0.125, abs=1e-15)


def test_legendre_special_case():
    p = jacobi_values(Z100, BasisSpec(6, 0.0, 0.0))
    for k in range(7):
        np.testing.assert_allclose(p[:, k], legendre_oracle(k, Z100), rtol=0, atol=1e-12)


@pytest.mark.parametrize("ab,oracle", [(-0.5, chebyshev_T_oracle), (0.5, chebyshev_U_oracle)])
def test_chebyshev_proportionality(ab, oracle):
    z = np.linspace(-0.999, 0.999, 100)
    p = jacobi_values(z, BasisSpec(6, ab, ab))
    for k in range(1, 7):
        ratio = p[:, k] / oracle(k, z)
        ok = np.abs(oracle(k, z)) > 1e-3
        assert np.ptp(ratio[ok]) < 1e-10
        # constant fixed by the endpoint value P_k(1) = binom(k + alpha, k)
        assert ratio[ok][0] == pytest.approx(jacobi_at_one(k, ab) / oracle(k, 1.0), rel=1e-10)


def test_oracles():
    assert chebyshev_T_oracle(3, math.cos(math.pi / 5)) == pytest.approx(math.cos(3 * math.pi / 5), abs=1e-15)
    assert legendre_oracle(4, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert chebyshev_U_oracle(3, 1.0) == 4.0
    assert chebyshev_U_oracle(3, -1.0) == -4.0
    with pytest.raises(UsageError):
        legendre_oracle(9, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 8), st.floats(-0.95, 3.0), st.floats(-0.95, 3.0))
def test_endpoint_identity(k, a, b):
    assert jacobi_values(1.0, BasisSpec(k, a, b))[k] == pytest.approx(jacobi_at_one(k, a), rel=1e-11)


def test_derivatives_match_finite_differences():
    spec = BasisSpec(5, 0.7, -0.3)
    z = np.linspace(-0.95, 0.95, 31)
    h = 1e-6
    fd = (jacobi_values(z + h, spec) - jacobi_values(z - h, spec)) / (2 * h)
    np.testing.assert_allclose(jacobi_derivatives(z, spec), fd, atol=1e-7)


def test_checked_mode_domain_guard():
    with T.checked_mode():
        jacobi_values(1.0 + 1e-13, BasisSpec(3))
        with pytest.raises(UsageError):
            jacobi_values(1.0 + 1e-9, BasisSpec(3))


def test_jacobi_features_matches_numpy_and_layout():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 5, 3))
    spec = BasisSpec(4, 1.0, 1.0)
    out = jacobi_features(T.Tensor(x), spec).data
    assert out.shape == (2, 5, 5, 3)
    ref = np.moveaxis(jacobi_values(np.tanh(x), spec), -1, -2)
    np.testing.assert_allclose(out, ref, atol=1e-14)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 6])
def test_jacobi_features_gradient(degree):
    rng = np.random.default_rng(degree)
    x0 = rng.normal(size=(2, 3, 4))
    spec = BasisSpec(degree, 0.4, 1.3)
    w = rng.normal(size=(2, 3, degree + 1, 4))
    x = T.Tensor(x0, requires_grad=True)
    T.tsum(jacobi_features(x, spec) * T.Tensor(w)).backward()

    def f(v):
        return np.sum(np.moveaxis(jacobi_values(np.tanh(v), spec), -1, -2) * w)

    h = 1e-6
    fd = np.zeros_like(x0)
    for i in np.ndindex(x0.shape):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        fd[i] = (f(xp) - f(xm)) / (2 * h)
    np.testing.assert_allclose(x.grad, fd, atol=1e-7)


def test_eval_basis_tape_agrees_with_fused_kernel():
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=(3, 4))
    spec = BasisSpec(3)
    w = rng.normal(size=(3, 4, 4))
    a = T.Tensor(x0, requires_grad=True)
    b = T.Tensor(x0, requires_grad=True)
    T.tsum(eval_basis(T.tanh(a), spec) * T.Tensor(w)).backward()
    T.tsum(jacobi_features(b, spec) * T.Tensor(np.swapaxes(w, -1, -2))).backward()
    np.testing.assert_allclose(a.grad, b.grad, atol=1e-13)
