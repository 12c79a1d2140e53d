"""Small numerical kernels shared by the solvers."""
from __future__ import annotations

import numpy as np
from scipy.fft import dct


def fornberg_weights(z: float, x: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights at ``z`` for derivatives 0..order on nodes ``x`` (Fornberg 1988)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5 = 1.0, c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def fd_derivative(x: np.ndarray, f: np.ndarray, stencil: int = 9) -> np.ndarray:
    """First derivative of samples on a (possibly non-uniform) grid with a sliding stencil."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(f)
    n = x.size
    if n < stencil:
        raise ValueError(f"need at least {stencil} points, got {n}")
    half = stencil // 2
    out = np.empty_like(f, dtype=np.result_type(f, float))
    for i in range(n):
        lo = min(max(i - half, 0), n - stencil)
        idx = slice(lo, lo + stencil)
        w = fornberg_weights(x[i], x[idx], 1)[:, 1]
        out[i] = w @ f[idx]
    return out


def cheb_nodes(N: int, a: float, b: float) -> np.ndarray:
    """Chebyshev-Lobatto nodes on [a, b] in increasing order (N points)."""
    k = np.arange(N)
    xi = -np.cos(np.pi * k / (N - 1))
    return 0.5 * (a + b) + 0.5 * (b - a) * xi


def cheb_diff_matrix(N: int, a: float, b: float) -> np.ndarray:
    """Spectral differentiation matrix on increasing Lobatto nodes of [a, b]."""
    k = np.arange(N)
    xi = -np.cos(np.pi * k / (N - 1))
    c = np.ones(N)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** k
    dx = xi[:, None] - xi[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(N))
    D -= np.diag(D.sum(axis=1))
    return D * (2.0 / (b - a))


def cheb_coeffs(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Chebyshev coefficients from samples at increasing Lobatto nodes (DCT-I)."""
    v = np.flip(np.asarray(values), axis=axis)  # DCT-I expects xi = cos(pi k/(N-1)), decreasing
    N = v.shape[axis]
    if np.iscomplexobj(v):
        c = dct(v.real, type=1, axis=axis) + 1j * dct(v.imag, type=1, axis=axis)
    else:
        c = dct(v, type=1, axis=axis)
    c = c / (N - 1)
    sl0 = [slice(None)] * c.ndim
    sl0[axis] = 0
    c[tuple(sl0)] *= 0.5
    sl0[axis] = -1
    c[tuple(sl0)] *= 0.5
    return c


def cheb_eval(coeffs: np.ndarray, s, a: float, b: float) -> np.ndarray:
    """Evaluate Chebyshev series (coefficients on the last axis) at points s in [a, b]."""
    s_arr = np.asarray(s, dtype=float)
    xi = np.atleast_1d((2.0 * s_arr - (a + b)) / (b - a))
    coeffs = np.asarray(coeffs)
    b1 = np.zeros(coeffs.shape[:-1] + xi.shape, dtype=coeffs.dtype)
    b2 = np.zeros_like(b1)
    for k in range(coeffs.shape[-1] - 1, 0, -1):
        b1, b2 = 2.0 * xi * b1 - b2 + coeffs[..., k, None], b1
    out = xi * b1 - b2 + coeffs[..., 0, None]
    return out[..., 0] if s_arr.ndim == 0 else out


def cheb_deriv_coeffs(coeffs: np.ndarray, a: float, b: float) -> np.ndarray:
    """Coefficients of the derivative series (last axis)."""
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[-1]
    d = np.zeros_like(coeffs)
    for k in range(n - 2, -1, -1):
        d[..., k] = (d[..., k + 2] if k + 2 < n else 0.0) + 2.0 * (k + 1) * coeffs[..., k + 1]
    d[..., 0] *= 0.5
    return d * (2.0 / (b - a))

