"""Homoclinic orbit, the energy-time chart (s, e) and the complex strip domains.

For the model separatrix function psi(x) = 2 sin(x/2) the chart has closed forms

    s(x) = ln tan(x/4),   x(s) = 4 arctan(e^s),   chi(s) = psi(x(s)) = 2 sech(s).

The lower branch x in (2pi, 4pi) corresponds to s + i*pi; it is carried by an
explicit ``branch`` flag and the real part of s.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.integrate import quad

Branch = Literal["upper", "lower"]


class ChartError(ValueError):
    pass


def psi(x):
    return 2.0 * np.sin(np.asarray(x) / 2.0)


def dpsi(x):
    return np.cos(np.asarray(x) / 2.0)


def separatrix_orbit(t, lambda0: float = 1.0, branch: Branch = "upper"):
    """Homoclinic orbit x_0(t) = 4 arctan(e^{lambda0 t}) of the pendulum with l_0 = lambda0^-2.

    Returns (x_0, y_0).  With lambda0 = 1 (unit arm) y_0 = psi(x_0); in general
    y_0 = psi(x_0) / lambda0^3 so that dx_0/dt = lambda0^3 y_0 = lambda0 psi(x_0).
    The lower branch is x -> 4pi - x with y -> -y.
    """
    if lambda0 <= 0:
        raise ChartError("lambda0 must be positive")
    u = lambda0 * np.asarray(t, dtype=float)
    x = 4.0 * np.arctan(np.exp(u))
    # psi(x_0(t)) = 2 sech(u), avoids cancellation in the tails
    y = 2.0 / np.cosh(u) / lambda0 ** 3
    if branch == "lower":
        return 4.0 * np.pi - x, -y
    if branch != "upper":
        raise ChartError(f"unknown branch {branch!r}")
    return x, y


def separatrix_velocity(t, lambda0: float = 1.0):
    """dx_0/dt by differentiating the closed form."""
    u = lambda0 * np.asarray(t, dtype=float)
    return 2.0 * lambda0 / np.cosh(u)


def branch_of_x(x) -> np.ndarray:
    xr = np.mod(np.asarray(x, dtype=float), 4.0 * np.pi)
    return np.where(xr < 2.0 * np.pi, "upper", "lower")


def s_of_x(x):
    """Energy-time coordinate s(x) = int_pi^x dzeta / psi(zeta), real part.

    On the lower branch the full value is s_of_x(x) + i*pi.
    """
    xr = np.mod(np.asarray(x, dtype=float), 4.0 * np.pi)
    if np.any(np.mod(xr, 2.0 * np.pi) == 0.0):
        raise ChartError("s(x) is singular at x = 0 mod 2pi (separatrix endpoints)")
    return np.log(np.abs(np.tan(xr / 4.0)))


def chi(s):
    """chi(s) = 2 sech(s); accepts complex s (poles at +-i pi/2)."""
    return 2.0 / np.cosh(s)


def dlog_chi(s):
    """d/ds ln chi(s) = -tanh(s) = 1 + chi(s) w(s) with w(s) = -e^s / 2."""
    return -np.tanh(s)


def chi_w(s):
    """w(s) in the representation D ln chi = 1 + chi w; bounded and vanishing at -inf."""
    return -0.5 * np.exp(s)


@dataclass(frozen=True)
class ChartPoint:
    x: float
    s: float
    chi: float
    e: float
    branch: str = "upper"


def chart_of_s(s, y=None, branch: Branch = "upper") -> ChartPoint:
    """Inverse chart x(s) = 4 arctan(e^s); chi and e = y chi (e = chi^2 on the separatrix if y is None)."""
    s = np.asarray(s, dtype=float)
    x = 4.0 * np.arctan(np.exp(s))
    c = chi(s)
    if branch == "lower":
        x, c = 4.0 * np.pi - x, -c
    elif branch != "upper":
        raise ChartError(f"unknown branch {branch!r}")
    yy = c if y is None else np.asarray(y, dtype=float)
    return ChartPoint(x=x, s=s, chi=c, e=yy * c, branch=branch)


def s_of_x_quadrature(x, psi_fn: Callable = psi, epsabs: float = 1e-14) -> float:
    """General-psi route: s(x) = int_pi^x dzeta / psi(zeta) by adaptive quadrature.

    Valid for x in (0, 2pi) for any separatrix function with the model's zero set.
    """
    x = float(x)
    if not 0.0 < x < 2.0 * np.pi:
        raise ChartError("quadrature chart is defined on (0, 2pi)")
    val, _ = quad(lambda z: 1.0 / psi_fn(z), np.pi, x, epsabs=epsabs, epsrel=1e-14, limit=200)
    return val


def chart_jacobian_det(x: float, y: float, h: float = 1e-6) -> float:
    """Determinant of d(s, e)/d(x, y) by central differences; equals 1 for a canonical change."""

    def f(xx, yy):
        return np.array([s_of_x(xx), yy * psi(xx)])

    dx = (f(x + h, y) - f(x - h, y)) / (2 * h)
    dy = (f(x, y + h) - f(x, y - h)) / (2 * h)
    return float(dx[0] * dy[1] - dx[1] * dy[0])


@dataclass(frozen=True)
class AnalyticityParams:
    sigma: float = 0.5
    T: float = 10.0
    rho: float = 1.0
    r: float = 0.1
    T0: float = 12.0
    delta: float = 0.05
    kappa: float = 0.5
    delta_log_constant: float | None = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ChartError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.rho < np.pi / 2:
            raise ChartError(f"rho must lie in (0, pi/2), got {self.rho}")
        if self.r <= 0:
            raise ChartError(f"r must be positive, got {self.r}")
        if self.T <= 0 or self.T0 <= 0:
            raise ChartError("T and T0 must be positive")
        if self.T > self.T0:
            raise ChartError(f"T = {self.T} exceeds T0 = {self.T0}")
        if not 0 < self.delta < 1:
            raise ChartError(f"delta must lie in (0, 1), got {self.delta}")
        if self.kappa <= 0:
            raise ChartError(f"kappa must be positive, got {self.kappa}")
        c = self.delta_log_constant
        if c is not None and self.delta < c * np.log(self.T):
            raise ChartError(
                f"delta = {self.delta} < {c} * log(T) = {c * np.log(self.T):.6g}"
            )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("sigma", "T", "rho", "r", "T0", "delta", "kappa", "delta_log_constant")}


def _near_lines(im: np.ndarray, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Distance tests on C / 2 pi i: |Im s| <= rho and |Im s - pi| <= rho."""
    v = np.mod(im, 2.0 * np.pi)
    real_line = (v <= rho) | (2.0 * np.pi - v <= rho)
    shifted = np.abs(v - np.pi) <= rho
    return real_line, shifted


def domain_membership(s, params: AnalyticityParams,
                      kind: Literal["semi", "bi", "finite"] = "semi") -> np.ndarray | bool:
    """Membership in the semi-infinite bi-strip, its symmetrisation, or the finite rectangle."""
    if not params.rho < np.pi / 2:
        raise ChartError("rho must be < pi/2")
    s = np.asarray(s, dtype=complex)
    T, T0, rho = params.T, params.T0, params.rho

    def semi(w):
        real_line, shifted = _near_lines(w.imag, rho)
        return ((w.real <= T) & (real_line | shifted)) | (w.real <= T - 2.0 * T0)

    if kind == "semi":
        out = semi(s)
    elif kind == "bi":
        out = semi(s) | semi(-s)
    elif kind == "finite":
        real_line, _ = _near_lines(s.imag, rho)
        out = (np.abs(s.real) <= T) & real_line
    else:
        raise ChartError(f"unknown domain kind {kind!r}")
    return bool(out) if out.ndim == 0 else out


def chart_table(t, lambda0: float = 1.0, branch: Branch = "upper") -> np.ndarray:
    """Columns (t, x, y, s, chi) along the separatrix."""
    t = np.asarray(t, dtype=float)
    x, y = separatrix_orbit(t, lambda0, branch)
    s = lambda0 * t
    c = chi(s) if branch == "upper" else -chi(s)
    return np.column_stack([t, x, y, s, c])


def write_chart_csv(path, table: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "s", "chi"])
        for row in table:
            w.writerow([f"{v:.17g}" for v in row])
