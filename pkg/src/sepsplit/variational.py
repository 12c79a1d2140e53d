"""Linearised flow along the separatrix and the transverse unstable/stable directions.

Along gamma the transverse pair (z, zbar) of direction i obeys

    dz/dt = zbar / l_i^2,    dzbar/dt = (l_0 cos x_0(t) + L_i) z,    L_i = l_1 + ... + l_i,

so the slope p = zbar / z of any solution satisfies the Riccati equation

    dp/dt = (l_0 cos x_0(t) + L_i) - p^2 / l_i^2.

The unstable slope lambda_u is the solution that tends to the attracting value
l_i sqrt(L_i + l_0) as t -> -inf.  With l_0 = 1, l_1 = l this is the single
transverse direction of the m = 1 model.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.integrate import DOP853, OdeSolution, solve_ivp

from .numerics import fd_derivative
from .separatrix import psi, s_of_x, separatrix_orbit


class VariationalError(RuntimeError):
    pass


class RiccatiBlowUp(VariationalError):
    pass


class GridTooCoarse(VariationalError):
    pass


@dataclass
class VariationalState:
    xhat: np.ndarray
    yhat: np.ndarray
    zhat: np.ndarray
    zbarhat: np.ndarray
    t: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.xhat, self.yhat, self.zhat, self.zbarhat])


def cos_x0(t, lambda0: float = 1.0):
    """cos x_0(t) = 1 - 2 sech^2(lambda0 t) on the upper separatrix."""
    return 1.0 - 2.0 / np.cosh(lambda0 * np.asarray(t)) ** 2


def dpsi_on_orbit(t, lambda0: float = 1.0):
    """Dpsi(x_0(t)) = cos(x_0/2) = -tanh(lambda0 t)."""
    return -np.tanh(lambda0 * np.asarray(t))


@dataclass(frozen=True)
class TransverseDirection:
    """Coefficient data for one transverse direction: mass l_i, offset L_i, pendulum arm l_0."""

    l: float
    offset: float
    l0: float = 1.0

    @classmethod
    def from_arms(cls, arms: Sequence[float], i: int) -> "TransverseDirection":
        if not 1 <= i < len(arms):
            raise ValueError(f"direction index {i} out of range for {len(arms)} arms")
        return cls(l=float(arms[i]), offset=float(np.sum(arms[1:i + 1])), l0=float(arms[0]))

    @property
    def lambda0(self) -> float:
        return 1.0 / np.sqrt(self.l0)

    def coefficient(self, t):
        return self.l0 * cos_x0(t, self.lambda0) + self.offset

    def coefficient_x(self, x):
        return self.l0 * np.cos(x) + self.offset

    @property
    def limit_slope(self) -> float:
        return self.l * np.sqrt(self.offset + self.l0)

    @property
    def slope_interval(self) -> tuple[float, float]:
        return self.l * np.sqrt(self.offset - self.l0), self.l * np.sqrt(self.offset + self.l0)


def variational_flow(l: float, t0: float, t1: float, init: VariationalState | Sequence[float],
                     t_eval=None, rtol: float = 1e-12, atol: float = 1e-14) -> VariationalState:
    """Integrate the linearisation along gamma (l_0 = 1, l_1 = l) from t0 to t1.

    Pendulum pair:  xhat' = Dpsi(x_0) xhat + yhat,  yhat' = -Dpsi(x_0) yhat.
    Transverse:     zhat' = zbarhat / l^2,           zbarhat' = (l + cos x_0) zhat.
    t1 < t0 integrates backwards.
    """
    if l <= 1:
        raise VariationalError(f"need l > 1, got {l}")
    if isinstance(init, VariationalState):
        y0 = np.array([init.xhat, init.yhat, init.zhat, init.zbarhat], dtype=float).ravel()
    else:
        y0 = np.asarray(init, dtype=float).ravel()
    if y0.size != 4:
        raise VariationalError("initial state must have 4 components")

    def rhs(t, u):
        d = dpsi_on_orbit(t)
        return [d * u[0] + u[1], -d * u[1], u[3] / l ** 2, (l + cos_x0(t)) * u[2]]

    def jac(t, u):
        d = dpsi_on_orbit(t)
        return [[d, 1, 0, 0], [0, -d, 0, 0], [0, 0, 0, 1 / l ** 2], [0, 0, l + cos_x0(t), 0]]

    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        t_fail = sol.t[-1] if sol.t.size else t0
        raise VariationalError(f"integration failed at t = {t_fail:.6g}: {sol.message}")
    return VariationalState(sol.y[0], sol.y[1], sol.y[2], sol.y[3], sol.t)


def _integrate_riccati(direction: TransverseDirection, t_start: float, t_end: float, p0: float,
                       rtol: float, atol: float, check_interval: bool = True) -> OdeSolution:
    lo, hi = direction.slope_interval
    slack = 1e-9 * hi
    mass = direction.l ** 2

    def rhs(t, p):
        return direction.coefficient(t) - p ** 2 / mass

    solver = DOP853(rhs, t_start, np.array([p0]), t_end, rtol=rtol, atol=atol,
                    first_step=1e-3)
    ts, interps = [t_start], []
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise RiccatiBlowUp(f"Riccati step failed at t = {solver.t:.6g}: {msg}")
        p = float(solver.y[0])
        if not np.isfinite(p) or (check_interval and not lo - slack <= p <= hi + slack):
            raise RiccatiBlowUp(
                f"slope {p:.12g} left the invariant interval [{lo:.12g}, {hi:.12g}] at t = {solver.t:.6g}"
            )
        ts.append(solver.t)
        interps.append(solver.dense_output())
    return OdeSolution(ts, interps)


@dataclass
class TransverseDirectionField:
    """Sampled slopes of the unstable and stable transverse directions over the upper branch."""

    grid: np.ndarray
    lambda_u: np.ndarray
    lambda_s: np.ndarray
    direction: TransverseDirection
    T_asym: float
    _dense_u: OdeSolution | None = field(default=None, repr=False)

    @property
    def l(self) -> float:
        return self.direction.l

    @property
    def Lambda_u(self) -> np.ndarray:
        return self.lambda_u / self.direction.l ** 2

    @property
    def t(self) -> np.ndarray:
        return s_of_x(self.grid) / self.direction.lambda0

    def _u_of_t(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self._dense_u is None:
            return np.interp(t, self.t, self.lambda_u)
        # before the integration start the slope sits at its limit value (the initial datum)
        T = self.T_asym
        return np.where(t < -T, self.direction.limit_slope, self._dense_u(np.clip(t, -T, T))[0])

    def lambda_u_at(self, x) -> np.ndarray:
        """Unstable slope at arbitrary x on either branch (the branches share the t-profile)."""
        return self._u_of_t(s_of_x(x) / self.direction.lambda0)

    def lambda_s_at(self, x) -> np.ndarray:
        return -self._u_of_t(-s_of_x(x) / self.direction.lambda0)


def default_grid(delta: float = 0.05, npts: int = 2000) -> np.ndarray:
    return np.linspace(delta, 2.0 * np.pi - delta, npts)


def riccati_direction(l: float, branch: Literal["unstable", "stable"] = "unstable",
                      grid=None, T_asym: float | None = None, rtol: float = 1e-12,
                      atol: float = 1e-14, direction: TransverseDirection | None = None
                      ) -> TransverseDirectionField:
    """Unstable/stable transverse slope fields on the x-grid.

    ``branch`` selects which slope is integrated directly; the other follows from the
    time-reversal identity lambda_s(x) = -lambda_u(2pi - x).  The integration starts at
    the attracting limit value at t = -T_asym (forward) or t = +T_asym (backward).
    """
    if direction is None:
        if l <= 1:
            raise VariationalError(f"need l > 1, got {l}")
        direction = TransverseDirection(l=float(l), offset=float(l), l0=1.0)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    lam1 = direction.limit_slope / direction.l ** 2
    if T_asym is None:
        T_asym = 15.0 / lam1
    t_grid = s_of_x(grid) / direction.lambda0
    t_max = max(T_asym, float(np.max(np.abs(t_grid))) + 1.0)
    p_inf = direction.limit_slope
    if branch == "unstable":
        dense = _integrate_riccati(direction, -t_max, t_max, p_inf, rtol, atol)
        lam_u = dense(t_grid)[0]
        lam_s = -dense(-t_grid)[0]
        dense_u = dense
    elif branch == "stable":
        back = _integrate_riccati(
            TransverseDirection(direction.l, direction.offset, direction.l0), t_max, -t_max,
            -p_inf, rtol, atol, check_interval=False)
        lam_s = back(t_grid)[0]
        lam_u = -back(-t_grid)[0]
        dense_u = None
        lo, hi = direction.slope_interval
        if np.any(-lam_s < lo - 1e-9 * hi) or np.any(-lam_s > hi + 1e-9 * hi):
            raise RiccatiBlowUp("stable slope left the invariant interval")
    else:
        raise VariationalError(f"unknown branch {branch!r}")
    return TransverseDirectionField(grid, lam_u, lam_s, direction, float(t_max), dense_u)


def riccati_limit_check(direction: TransverseDirection, start_fraction: float = 0.9,
                        T_asym: float | None = None, rtol: float = 1e-12) -> float:
    """Start the forward Riccati flow off the limit value at t = -2 T_asym and return
    the slope reached at t = -T_asym (it should have relaxed onto l sqrt(L + l_0))."""
    lam1 = direction.limit_slope / direction.l ** 2
    T = 15.0 / lam1 if T_asym is None else T_asym
    dense = _integrate_riccati(direction, -2.0 * T, -T, start_fraction * direction.limit_slope,
                               rtol, 1e-14, check_interval=False)
    return float(dense(-T)[0])


def tilde_lambda(fld: TransverseDirectionField, lambda_u: np.ndarray | None = None,
                 stencil: int = 9) -> np.ndarray:
    """lambda~(x) = psi(x) d lambda_u/dx - (l_0 cos x + L) + lambda_u^2 / l^2 on the grid.

    The x-derivative is formed through the chart: lambda0 psi(x) d/dx = d/dt with t = s(x)/lambda0,
    using high-order finite differences on the (non-uniform) t-samples.
    """
    d = fld.direction
    lam = fld.lambda_u if lambda_u is None else np.asarray(lambda_u, dtype=float)
    t = fld.t
    half = stencil // 2
    x = fld.grid
    if lambda_u is None and fld._dense_u is not None and x.size > 1:
        # pad with extra samples so every stencil is centred (one-sided stencils amplify noise)
        hl, hr = x[1] - x[0], x[-1] - x[-2]
        xl = x[0] - hl * np.arange(half, 0, -1)
        xr = x[-1] + hr * np.arange(1, half + 1)
        if xl[0] > 0 and xr[-1] < 2.0 * np.pi:
            xe = np.concatenate([xl, x, xr])
            te = s_of_x(xe) / d.lambda0
            lam_e = fld._dense_u(te)[0]
            lam_e[half:half + x.size] = lam
            dlam_dt = fd_derivative(te, lam_e, stencil)[half:half + x.size]
            return dlam_dt - d.coefficient_x(x) + lam ** 2 / d.l ** 2
    dlam_dt = fd_derivative(t, lam, stencil)
    return dlam_dt - d.coefficient_x(x) + lam ** 2 / d.l ** 2


def tilde_lambda_residual(fld: TransverseDirectionField | None, l: float | None = None,
                          lambda_u: np.ndarray | None = None, coarse_tol: float = 1e-7) -> float:
    """sup |lambda~| over the grid; 0 for an empty field (no transverse directions)."""
    if fld is None or fld.grid.size == 0:
        return 0.0
    if l is not None and abs(l - fld.direction.l) > 0:
        raise VariationalError(f"field was built for l = {fld.direction.l}, not {l}")
    if fld.grid.size < 40:
        raise GridTooCoarse(f"grid has {fld.grid.size} points; need at least 40")
    res9 = tilde_lambda(fld, lambda_u, 9)
    res7 = tilde_lambda(fld, lambda_u, 7)
    scale = max(1.0, float(np.max(np.abs(fld.lambda_u))))
    if np.max(np.abs(res9 - res7)) > coarse_tol * scale and lambda_u is None:
        raise GridTooCoarse(
            f"derivative not resolved: stencil disagreement {np.max(np.abs(res9 - res7)):.3e}"
        )
    return float(np.max(np.abs(res9)))


def transversality_angles(fld: TransverseDirectionField) -> np.ndarray:
    """Angle between (1, lambda_u) and (1, lambda_s) in the (z, zbar) plane at every grid x."""
    return np.abs(np.arctan(fld.lambda_u) - np.arctan(fld.lambda_s))


def transversality_angle(fld: TransverseDirectionField) -> tuple[float, float]:
    """(minimum angle, x where it is attained)."""
    ang = transversality_angles(fld)
    i = int(np.argmin(ang))
    return float(ang[i]), float(fld.grid[i])


def wronskian_pairing(fld: TransverseDirectionField) -> np.ndarray:
    """|z_u zbar_s - zbar_u z_s| / (|v_u| |v_s|) for v = (1, slope); equals |sin(angle)|."""
    u, s = fld.lambda_u, fld.lambda_s
    return np.abs(s - u) / np.sqrt((1 + u ** 2) * (1 + s ** 2))


def transverse_fields(arms: Sequence[float], grid=None, **kw) -> list[TransverseDirectionField]:
    """One slope field per transverse direction i = 1..m (decoupled at z = 0)."""
    return [riccati_direction(arms[i], grid=grid, direction=TransverseDirection.from_arms(arms, i), **kw)
            for i in range(1, len(arms))]


def write_field_csv(path, fld: TransverseDirectionField) -> None:
    res = tilde_lambda(fld)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "lambda_u", "lambda_s", "tilde_lambda"])
        for row in zip(fld.grid, fld.lambda_u, fld.lambda_s, res):
            w.writerow([f"{v:.17g}" for v in row])


def read_field_csv(path, direction: TransverseDirection, T_asym: float = float("nan")
                   ) -> TransverseDirectionField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return TransverseDirectionField(data[:, 0], data[:, 1], data[:, 2], direction, T_asym)


def unstable_solution_slope(l: float, t0: float, t1: float, t_eval) -> np.ndarray:
    """zbar/z along the variational solution seeded on the unstable eigendirection at t0."""
    p_inf = l * np.sqrt(l + 1.0)
    st = variational_flow(l, t0, t1, [0.0, 0.0, 1.0, p_inf], t_eval=t_eval)
    return st.zbarhat / st.zhat


__all__ = [
    "VariationalState", "TransverseDirection", "TransverseDirectionField", "variational_flow",
    "riccati_direction", "riccati_limit_check", "tilde_lambda", "tilde_lambda_residual",
    "transversality_angle", "transversality_angles", "wronskian_pairing", "transverse_fields",
    "write_field_csv", "read_field_csv", "cos_x0", "dpsi_on_orbit", "separatrix_orbit", "psi",
    "VariationalError", "RiccatiBlowUp", "GridTooCoarse", "default_grid", "unstable_solution_slope",
    "riccati_limit_check",
]
