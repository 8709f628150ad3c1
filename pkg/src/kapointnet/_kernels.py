"""Compiled elementwise loops for the hot paths (single pass, fixed summation order)."""

import numba
import numpy as np


@numba.njit(cache=True)
def jacobi_forward(z, coeffs, slope, offset, n):
    """z: [M, d] already squashed into [-1, 1]. Returns basis[M, n+1, d]."""
    m_rows, d = z.shape
    basis = np.empty((m_rows, n + 1, d))
    for m in range(m_rows):
        for j in range(d):
            basis[m, 0, j] = 1.0
        if n >= 1:
            for j in range(d):
                basis[m, 1, j] = slope * z[m, j] + offset
        for k in range(2, n + 1):
            a = coeffs[k - 2, 0]
            b = coeffs[k - 2, 1]
            c = coeffs[k - 2, 2]
            for j in range(d):
                basis[m, k, j] = (a * z[m, j] + b) * basis[m, k - 1, j] + c * basis[m, k - 2, j]
    return basis


@numba.njit(cache=True)
def jacobi_backward(g, z, basis, coeffs, slope, n):
    """dL/dx given dL/dbasis g[M, n+1, d]; derivative recurrence run inline."""
    m_rows, d = z.shape
    dx = np.zeros((m_rows, d))
    if n == 0:
        return dx
    for m in range(m_rows):
        for j in range(d):
            t = z[m, j]
            d_prev2 = 0.0
            d_prev1 = slope
            acc = g[m, 1, j] * slope
            for k in range(2, n + 1):
                a = coeffs[k - 2, 0]
                dk = a * basis[m, k - 1, j] + (a * t + coeffs[k - 2, 1]) * d_prev1 + coeffs[k - 2, 2] * d_prev2
                acc += g[m, k, j] * dk
                d_prev2 = d_prev1
                d_prev1 = dk
            dx[m, j] = acc * (1.0 - t * t)
    return dx


@numba.njit(cache=True)
def batch_norm_train_forward(x, gamma, beta, eps):
    """x: [M, C]. Returns (out, xhat, mean, var, inv_std), biased variance."""
    m_rows, c = x.shape
    mu = np.zeros(c)
    for m in range(m_rows):
        for k in range(c):
            mu[k] += x[m, k]
    mu /= m_rows
    var = np.zeros(c)
    for m in range(m_rows):
        for k in range(c):
            dlt = x[m, k] - mu[k]
            var[k] += dlt * dlt
    var /= m_rows
    inv = 1.0 / np.sqrt(var + eps)
    xhat = np.empty((m_rows, c))
    out = np.empty((m_rows, c))
    for m in range(m_rows):
        for k in range(c):
            h = (x[m, k] - mu[k]) * inv[k]
            xhat[m, k] = h
            out[m, k] = h * gamma[k] + beta[k]
    return out, xhat, mu, var, inv


@numba.njit(cache=True)
def batch_norm_train_backward(g, xhat, gamma, inv):
    m_rows, c = g.shape
    dgamma = np.zeros(c)
    dbeta = np.zeros(c)
    for m in range(m_rows):
        for k in range(c):
            dgamma[k] += g[m, k] * xhat[m, k]
            dbeta[k] += g[m, k]
    dx = np.empty((m_rows, c))
    for m in range(m_rows):
        for k in range(c):
            dx[m, k] = inv[k] * gamma[k] * (g[m, k] - dbeta[k] / m_rows - xhat[m, k] * dgamma[k] / m_rows)
    return dx, dgamma, dbeta
