"""First-order splitting function (Melnikov integral) and its Fourier decay.

Restricted to the torus z = 0 a trigonometric perturbation reads
V_0(phi, x) = sum_k e^{ik.phi} sum_j a_{k,j} e^{ijx}.  Along the homoclinic orbit
x_0(t) the integral

    M(alpha) = int V_0(alpha + omega t, x_0(t)) dt

splits into one scalar oscillatory integral per mode k:

    M_k = int g_k(t) e^{i nu t} dt,   g_k(t) = sum_j a_{k,j} (e^{ij x_0(t)} - 1),   nu = k.omega,

where the "-1" is free because sum_j a_{k,j} = 0 (V_0 vanishes at x_0 = 0).
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .model import ModelError, PerturbationSpec


class MelnikovError(ValueError):
    pass


class InsufficientModes(MelnikovError):
    pass


@dataclass
class QuadOptions:
    T_quad: float | None = None  # None: chosen from the tail bound
    tol: float = 1e-13
    limit: int = 400


@dataclass
class FourierSeries:
    n: int
    K: int
    coeffs: dict[tuple, complex]
    real: bool = True
    errors: dict[tuple, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.real:
            for k, c in self.coeffs.items():
                mk = tuple(-v for v in k)
                partner = self.coeffs.get(mk, 0.0)
                if abs(partner - np.conj(c)) > 1e-12 * max(1.0, abs(c)):
                    raise MelnikovError(f"reality violated at k={k}: {c} vs {partner}")

    def modes(self) -> np.ndarray:
        return np.array(sorted(self.coeffs), dtype=int).reshape(-1, self.n)

    def half_modes(self) -> list[tuple]:
        """One representative of each {k, -k} pair (leading nonzero entry positive), k = 0 excluded."""
        out = []
        for k in sorted(self.coeffs):
            nz = [v for v in k if v != 0]
            if nz and nz[0] > 0:
                out.append(k)
        return out

    def _alpha(self, alpha) -> np.ndarray:
        a = np.asarray(alpha, dtype=float)
        if self.n == 1 and (a.ndim == 0 or a.shape[-1] != 1):
            a = a[..., None]
        return a

    def evaluate(self, alpha) -> np.ndarray:
        a = self._alpha(alpha)
        out = np.zeros(a.shape[:-1], dtype=complex)
        for k, c in self.coeffs.items():
            out += c * np.exp(1j * (a @ np.asarray(k, dtype=float)))
        return out.real if self.real else out

    def gradient(self, alpha) -> np.ndarray:
        """Partial derivatives, shape (..., n)."""
        a = self._alpha(alpha)
        out = np.zeros(a.shape, dtype=complex)
        for k, c in self.coeffs.items():
            kk = np.asarray(k, dtype=float)
            out += (1j * c * np.exp(1j * (a @ kk)))[..., None] * kk
        return out.real if self.real else out

    def derivative(self, alpha) -> np.ndarray:
        """dM/dalpha for n = 1."""
        if self.n != 1:
            raise MelnikovError("derivative() is for n = 1; use gradient()")
        return self.gradient(alpha)[..., 0]

    def sup_norm(self, resolution: int = 256) -> float:
        axes = [np.linspace(0, 2 * np.pi, resolution, endpoint=False)] * self.n
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return float(np.max(np.abs(self.evaluate(pts))))

    def weighted_norm(self, omega: Sequence[float], rho: float, sigma: float) -> float:
        """sum |c_k| exp(rho |k.omega| + sigma |k|), |k| the sup-norm."""
        w = np.asarray(omega, dtype=float)
        total = 0.0
        for k, c in self.coeffs.items():
            kk = np.asarray(k, dtype=float)
            total += abs(c) * np.exp(rho * abs(kk @ w) + sigma * np.max(np.abs(kk), initial=0))
        return float(total)

    def to_rows(self, omega: Sequence[float]) -> list[tuple]:
        w = np.asarray(omega, dtype=float)
        return [(k, abs(np.asarray(k) @ w), abs(self.coeffs[k])) for k in self.half_modes()]


def _theta_minus(u: np.ndarray, j: int) -> np.ndarray:
    """j x_0 reduced mod 2 pi j to stay small in both tails (e^{2 pi i j} = 1)."""
    return np.where(u <= 0, 4.0 * j * np.arctan(np.exp(np.minimum(u, 0.0))),
                    -4.0 * j * np.arctan(np.exp(-np.maximum(u, 0.0))))


def _g_mode(row: dict[int, complex], lambda0: float):
    items = [(j, a) for j, a in row.items() if j != 0]

    def g(t):
        u = lambda0 * np.asarray(t, dtype=float)
        acc = np.zeros(u.shape, dtype=complex)
        for j, a in items:
            th = _theta_minus(u, j)
            acc += a * (2j * np.sin(0.5 * th) * np.exp(0.5j * th))  # e^{i th} - 1, no cancellation
        return acc

    return g


def check_vanishing(V0: PerturbationSpec, tol: float = 1e-12) -> dict[tuple, dict[int, complex]]:
    """Group V_0 by k and require sum_j a_{k,j} = 0 (V_0(phi, 0) = 0)."""
    table = V0.restrict_z0()
    for k, row in table.items():
        total = sum(row.values())
        if abs(total) > tol:
            raise MelnikovError(
                f"V0 does not vanish at x0 = 0: mode k={k} has sum of amplitudes {total:.3e}; "
                "the Melnikov integral diverges"
            )
    return table


def tail_bound(row: dict[int, complex], lambda0: float, T: float) -> float:
    """|e^{ij x_0} - 1| <= 4|j| e^{-lambda0 |t|}, so both tails beyond |t| = T contribute at most this."""
    S = sum(abs(a) * abs(j) for j, a in row.items())
    return 8.0 * S * np.exp(-lambda0 * T) / lambda0


def _choose_T(row, lambda0: float, tol: float) -> float:
    S = sum(abs(a) * abs(j) for j, a in row.items())
    if S == 0:
        return 1.0
    return max(1.0, np.log(80.0 * S / (lambda0 * tol)) / lambda0)


def melnikov_mode(row: dict[int, complex], nu: float, lambda0: float = 1.0,
                  opts: QuadOptions | None = None) -> tuple[complex, float]:
    """M_k = int g_k(t) e^{i nu t} dt and an error estimate (quadrature + tail)."""
    opts = opts or QuadOptions()
    T = opts.T_quad if opts.T_quad is not None else _choose_T(row, lambda0, opts.tol)
    g = _g_mode(row, lambda0)
    kw = dict(limit=opts.limit, epsabs=opts.tol / 10, epsrel=1e-14)
    gr = lambda t: g(t).real  # noqa: E731
    gi = lambda t: g(t).imag  # noqa: E731
    with warnings.catch_warnings():
        # QUADPACK flags roundoff once it hits machine precision; the returned error estimate is kept
        warnings.simplefilter("ignore", IntegrationWarning)
        re, im, err = _mode_integrals(gr, gi, nu, T, kw)
    return complex(re, im), float(err + tail_bound(row, lambda0, T))


def _mode_integrals(gr, gi, nu: float, T: float, kw: dict) -> tuple[float, float, float]:
    if nu == 0.0:
        re, e1 = quad(gr, -T, T, **kw)
        im, e2 = quad(gi, -T, T, **kw)
    else:
        # oscillatory weights (QAWO); the integrals are taken in the variable t
        cr, e1 = quad(gr, -T, T, weight="cos", wvar=nu, **kw)
        sr, e2 = quad(gr, -T, T, weight="sin", wvar=nu, **kw)
        ci, e3 = quad(gi, -T, T, weight="cos", wvar=nu, **kw)
        si, e4 = quad(gi, -T, T, weight="sin", wvar=nu, **kw)
        re, im = cr - si, sr + ci
        e1, e2 = e1 + e4, e2 + e3
    return re, im, e1 + e2


def melnikov_function(V0: PerturbationSpec, omega: Sequence[float], alpha_grid=None,
                      quad_opts: QuadOptions | None = None, lambda0: float = 1.0
                      ) -> tuple[np.ndarray | None, FourierSeries]:
    """Sampled M(alpha) on ``alpha_grid`` (None: no sampling) and its Fourier series."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if w.size != V0.n:
        raise ModelError(f"omega has {w.size} entries, perturbation has n = {V0.n}")
    table = check_vanishing(V0)
    coeffs, errs = {}, {}
    done = set()
    for k in sorted(table):
        if k in done:
            continue
        nu = float(np.asarray(k) @ w)
        c, e = melnikov_mode(table[k], nu, lambda0, quad_opts)
        coeffs[k], errs[k] = c, e
        mk = tuple(-v for v in k)
        done.add(k)
        if mk in table and mk not in done:
            # reality: the partner integral is the conjugate
            coeffs[mk], errs[mk] = complex(np.conj(c)), e
            done.add(mk)
    K = max((max(abs(v) for v in k) for k in coeffs), default=0)
    series = FourierSeries(V0.n, int(K), coeffs, real=True, errors=errs)
    sampled = None if alpha_grid is None else series.evaluate(alpha_grid)
    return sampled, series


def melnikov_direct(V0: PerturbationSpec, omega: Sequence[float], alpha, T: float = 40.0,
                    lambda0: float = 1.0) -> float:
    """M(alpha) by direct quadrature of V_0(alpha + omega t, x_0(t)) (cross-check route)."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    check_vanishing(V0)

    def f(t):
        x0 = 4.0 * np.arctan(np.exp(lambda0 * t))
        angles = np.zeros(1 + V0.m)
        angles[0] = x0
        return float(np.real(V0.evaluate(a + w * t, angles)))

    val, _ = quad(f, -T, T, limit=1000, epsabs=1e-13, epsrel=1e-13)
    return val


def closed_form_amplitude(omega: float) -> float:
    """int 2 sech^2(t) cos(omega t) dt = 2 pi omega / sinh(pi omega / 2)."""
    if omega == 0:
        return 4.0
    return 2.0 * np.pi * omega / np.sinh(0.5 * np.pi * omega)


def critical_points(series: FourierSeries, resolution: int = 4096) -> np.ndarray:
    """Critical points of M on T^n.

    n = 1: zeros of M' bracketed by sign changes on a uniform grid and refined by brentq.
    n >= 2: grid cells in which every partial derivative changes sign (cell centres returned).
    """
    if series.n == 1:
        a = np.linspace(0.0, 2 * np.pi, resolution + 1)
        d = series.derivative(a)
        roots = []
        for i in range(resolution):
            if d[i] == 0.0:
                roots.append(a[i])
            elif d[i] * d[i + 1] < 0:
                roots.append(brentq(lambda s: float(series.derivative(s)), a[i], a[i + 1], xtol=1e-14))
        return np.array(roots)
    res = max(8, int(round(resolution ** (1.0 / series.n))))
    axes = [np.linspace(0, 2 * np.pi, res + 1)] * series.n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    grad = series.gradient(pts)
    h = 2 * np.pi / res
    found = []
    for idx in np.ndindex(*([res] * series.n)):
        ok = True
        for comp in range(series.n):
            vals = [grad[tuple(np.array(idx) + np.array(c)) + (comp,)]
                    for c in np.ndindex(*([2] * series.n))]
            if min(vals) > 0 or max(vals) < 0:
                ok = False
                break
        if ok:
            found.append((np.array(idx) + 0.5) * h)
    return np.array(found).reshape(-1, series.n)


@dataclass
class DecayFit:
    rho_hat: float
    sigma_hat: float
    C_hat: float
    max_violation: float
    power_hat: float = 0.0
    sigma_fixed: bool = False
    n_modes: int = 0
    covariance: np.ndarray | None = None
    rho_plain: float | None = None  # rate from the model without the algebraic prefactor

    def to_dict(self) -> dict:
        return {
            "rho_hat": self.rho_hat, "sigma_hat": self.sigma_hat, "C_hat": self.C_hat,
            "power_hat": self.power_hat, "max_violation": self.max_violation,
            "sigma_fixed": self.sigma_fixed, "n_modes": self.n_modes,
            "rho_plain": self.rho_plain,
            "covariance": None if self.covariance is None else self.covariance.tolist(),
        }


def melnikov_fourier_decay(series: FourierSeries, omega: Sequence[float], sigma_ref: float = 0.0,
                           power: bool = True, rel_floor: float = 10.0) -> DecayFit:
    """Least-squares fit of log|c_k| = log C + p log|k.omega| - rho |k.omega| - sigma |k|.

    Only coefficients exceeding ``rel_floor`` times their error estimate enter.  When
    |k| is collinear with |k.omega| (n = 1) sigma is held at ``sigma_ref``.  ``power=False``
    drops the algebraic prefactor term.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    rows = []
    for k in series.half_modes():
        c = abs(series.coeffs[k])
        err = series.errors.get(k, 0.0)
        nu = abs(float(np.asarray(k) @ w))
        if c > 0 and c > rel_floor * err and nu > 0:
            rows.append((nu, float(np.max(np.abs(k))), np.log(c)))
    data = np.array(rows).reshape(-1, 3)
    if np.unique(np.round(data[:, 0], 12)).size < 4:
        raise InsufficientModes(
            f"insufficient modes: {np.unique(np.round(data[:, 0], 12)).size} distinct nonzero |k.omega| "
            "values (need >= 4)"
        )
    nu, knorm, y = data.T

    def fit(use_power: bool):
        cols = [np.ones_like(nu)]
        if use_power:
            cols.append(np.log(nu))
        cols.append(-nu)
        X = np.column_stack(cols + [-knorm])
        sigma_fixed = np.linalg.matrix_rank(X) < X.shape[1]
        yy = y.copy()
        if sigma_fixed:
            X = X[:, :-1]
            yy = yy + sigma_ref * knorm
        beta, *_ = np.linalg.lstsq(X, yy, rcond=None)
        dof = X.shape[0] - X.shape[1]
        cov = None
        if dof > 0:
            r = yy - X @ beta
            cov = (r @ r / dof) * np.linalg.pinv(X.T @ X)
        return beta, sigma_fixed, cov

    beta, sigma_fixed, cov = fit(power)
    logC = beta[0]
    p = beta[1] if power else 0.0
    rho = beta[2] if power else beta[1]
    sigma = sigma_ref if sigma_fixed else beta[-1]
    model = logC + p * np.log(nu) - rho * nu - sigma * knorm
    viol = float(np.max(np.exp(y - model)))
    plain, _, _ = fit(False)
    return DecayFit(float(rho), float(sigma), float(np.exp(logC)), viol, float(p), bool(sigma_fixed),
                    int(nu.size), cov, float(plain[1]))


def envelope_constant(series: FourierSeries, omega: Sequence[float], rho: float,
                      sigma: float = 0.0) -> np.ndarray:
    """|c_k| exp(rho |k.omega| + sigma |k|) over the half lattice (ordered by |k.omega|)."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    rows = sorted((abs(float(np.asarray(k) @ w)), k) for k in series.half_modes())
    return np.array([abs(series.coeffs[k]) * np.exp(rho * nu + sigma * max(abs(v) for v in k))
                     for nu, k in rows])


def write_decay_csv(path, series: FourierSeries, omega: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "abs_k_omega", "abs_c_k"])
        for k, nu, c in series.to_rows(omega):
            wr.writerow([" ".join(str(v) for v in k), f"{nu:.17g}", f"{c:.17g}"])


def write_decay_plot(path, series: FourierSeries, omega: Sequence[float], fit: DecayFit) -> None:
    """Whitespace-separated columns for gnuplot: |k.omega|  |c_k|  fitted envelope."""
    with open(path, "w") as fh:
        fh.write("# abs_k_omega abs_c_k fitted_bound\n")
        for k, nu, c in sorted(series.to_rows(omega), key=lambda r: r[1]):
            kn = max(abs(v) for v in k)
            bound = fit.C_hat * (nu ** fit.power_hat if nu > 0 else 1.0) * np.exp(
                -fit.rho_hat * nu - fit.sigma_hat * kn)
            fh.write(f"{nu:.17g} {c:.17g} {bound:.17g}\n")
