"""Truncated spectral solvers for the linearised conjugacy equations on the cylinder.

Functions live on (phi, s, z) in T^n x (-inf, T_num] x C^m and are stored as

    u = sum_alpha z^alpha sum_k e^{ik.phi} [ const_{alpha,k} + tail_{alpha,k}(s) + wedge_{alpha,k} / chi(s) ]

with ``tail`` vanishing as s -> -inf (sampled on Chebyshev-Lobatto nodes of [-T_num, T_num]),
``const`` the value at s = -inf and ``wedge`` the coefficient of 1/chi(s).  The operators are

    L u = D_{lambda0, omega} u + <z, Lambda(s) D_z> u  [ -Lambda^T(s) u  |  +Lambda(s) u ]

with D_{lambda0, omega} = <omega, d/dphi> + lambda0 d/ds and Lambda(s) = Lambda0 + Lambda1(s),
Lambda0 diagonal.  Each Fourier mode reduces to the ODE system

    lambda0 u' + (i k.omega + A(s)) u = v

on the (component, monomial) index space; the constant part is solved by division and the tail
by Chebyshev collocation with the left boundary condition of an e^s profile.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.linalg import schur, solve_triangular

from .model import lattice_box
from .numerics import cheb_coeffs, cheb_deriv_coeffs, cheb_diff_matrix, cheb_eval, cheb_nodes
from .separatrix import chi, chi_w

Variant = Literal["none", "minus", "plus"]

S_FAR = -40.0  # where limits s -> -inf of bounded ratios are read off


class HomologicalError(ValueError):
    pass


class MeanObstruction(HomologicalError):
    def __init__(self, mean, where=""):
        super().__init__(f"right-hand side has nonzero mean {complex(mean):.6g}{where}; "
                         "the kernel (constants) obstructs the solve")
        self.mean = complex(mean)


class SmallDivisor(HomologicalError):
    def __init__(self, divisor, k, alpha, comp):
        super().__init__(f"divisor {abs(divisor):.3e} below threshold at k={tuple(k)}, "
                         f"alpha={tuple(alpha)}, component {comp}")
        self.k, self.alpha, self.comp = tuple(k), tuple(alpha), comp


class ResonanceError(HomologicalError):
    def __init__(self, margin, witness):
        super().__init__(f"resonance |lambda0 - sum k_j lambda_j| = {margin:.3e} at k={tuple(witness)}")
        self.margin, self.witness = margin, tuple(witness)


class StageError(HomologicalError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {err}")
        self.stage, self.cause = stage, err


def taylor_indices(m: int, D: int) -> list[tuple]:
    """Multi-indices alpha in Z_+^m with |alpha| <= D, ordered by degree then reverse-lex."""
    out = [()] if m == 0 else []
    if m == 0:
        return out
    for d in range(D + 1):
        for combo in itertools.combinations_with_replacement(range(m), d):
            a = [0] * m
            for i in combo:
                a[i] += 1
            out.append(tuple(a))
    return out


@dataclass(frozen=True)
class Truncation:
    """Fourier radius K, Taylor degree D and the s-grid.

    The s-grid is Chebyshev-Lobatto in xi in [-1, 1] pulled through the map
    s = a sinh(beta xi), a sinh(beta) = T_num, which clusters nodes near s = 0 where the
    functions of the class have their nearest complex singularities (chi has poles at
    +-i pi/2).  ``map_beta = 0`` gives the plain affine grid.
    """

    n: int
    m: int
    K: int
    D: int
    T_num: float
    N_s: int = 128
    map_beta: float = 3.0

    def __post_init__(self):
        if self.K < 0 or self.D < 0 or self.N_s < 8 or self.T_num <= 0 or self.map_beta < 0:
            raise HomologicalError(f"invalid truncation {self}")

    @property
    def _a(self) -> float:
        return self.T_num / np.sinh(self.map_beta) if self.map_beta > 0 else self.T_num

    def s_of_xi(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self._a * np.sinh(self.map_beta * xi) if self.map_beta > 0 else self.T_num * xi

    def xi_of_s(self, s):
        s = np.asarray(s, dtype=float)
        if self.map_beta > 0:
            return np.clip(np.arcsinh(s / self._a) / self.map_beta, -1.0, 1.0)
        return np.clip(s / self.T_num, -1.0, 1.0)

    def ds_dxi(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.map_beta > 0:
            return self._a * self.map_beta * np.cosh(self.map_beta * xi)
        return np.full_like(xi, self.T_num)

    @cached_property
    def _xi(self) -> np.ndarray:
        return cheb_nodes(self.N_s, -1.0, 1.0)

    def interpolation_matrix(self, s, derivative: bool = False) -> np.ndarray:
        """Matrix taking node samples to values (or s-derivatives) of the interpolant at s."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        xi = self.xi_of_s(s)
        C = cheb_coeffs(np.eye(self.N_s), axis=0)  # column j: coefficients of the j-th cardinal function
        if derivative:
            C = cheb_deriv_coeffs(C.T, -1.0, 1.0).T
        P = cheb_eval(C.T, xi, -1.0, 1.0).T  # (len(s), N_s)
        return P / self.ds_dxi(xi)[:, None] if derivative else P

    @cached_property
    def _fine_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.fine_nodes()
        return self.interpolation_matrix(s), self.interpolation_matrix(s, derivative=True)

    def interpolate(self, samples: np.ndarray, s, derivative: bool = False) -> np.ndarray:
        """Evaluate the grid interpolant of samples (last axis on the nodes) at s, or its s-derivative."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        fine = self.fine_nodes()
        if s.shape == fine.shape and np.array_equal(s, fine):
            P = self._fine_matrices[1 if derivative else 0]
        else:
            P = self.interpolation_matrix(s, derivative)
        return samples @ P.T

    @cached_property
    def modes(self) -> np.ndarray:
        return lattice_box(self.n, self.K)

    @cached_property
    def zero_mode(self) -> int:
        return int(np.flatnonzero(~self.modes.any(axis=1))[0])

    @cached_property
    def taylor(self) -> list[tuple]:
        return taylor_indices(self.m, self.D)

    @cached_property
    def taylor_index(self) -> dict[tuple, int]:
        return {a: i for i, a in enumerate(self.taylor)}

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([sum(a) for a in self.taylor], dtype=int)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.s_of_xi(self._xi)

    @cached_property
    def diff(self) -> np.ndarray:
        """d/ds on the nodes: (dxi/ds) times the Chebyshev matrix in xi."""
        return cheb_diff_matrix(self.N_s, -1.0, 1.0) / self.ds_dxi(self._xi)[:, None]

    @cached_property
    def _bc_schur(self):
        # lambda0 D~ + sigma I with D~ = D except row 0 = e_0 realises the collocation
        # system together with the left boundary condition (lambda0 + sigma) u_0 = rhs_0.
        Dt = self.diff.astype(complex).copy()
        Dt[0, :] = 0.0
        Dt[0, 0] = 1.0
        T, Z = schur(Dt, output="complex")
        return T, Z

    def mode_index(self, k) -> int:
        k = np.asarray(k, dtype=int).reshape(self.n)
        if np.max(np.abs(k), initial=0) > self.K:
            raise HomologicalError(f"mode {tuple(k)} outside truncation K={self.K}")
        idx = 0
        for v in k:
            idx = idx * (2 * self.K + 1) + (int(v) + self.K)
        return idx

    def fine_nodes(self) -> np.ndarray:
        """Nodes of twice the resolution (every other one is off the collocation grid)."""
        return self.s_of_xi(cheb_nodes(2 * self.N_s - 1, -1.0, 1.0))

    @classmethod
    def default(cls, n: int, m: int, K: int = 32, D: int = 4, lambda0: float = 1.0,
                N_s: int = 128) -> "Truncation":
        return cls(n, m, K, D, 15.0 / lambda0, N_s)


@dataclass
class CylinderFunction:
    trunc: Truncation
    ncomp: int
    const: np.ndarray
    tail: np.ndarray
    wedge: np.ndarray | None = None

    @classmethod
    def zeros(cls, trunc: Truncation, ncomp: int = 1, wedge: bool = False) -> "CylinderFunction":
        nt, nk = len(trunc.taylor), trunc.modes.shape[0]
        return cls(trunc, ncomp, np.zeros((ncomp, nt, nk), complex),
                   np.zeros((ncomp, nt, nk, trunc.N_s), complex),
                   np.zeros((ncomp, nt, nk), complex) if wedge else None)

    def copy(self) -> "CylinderFunction":
        return CylinderFunction(self.trunc, self.ncomp, self.const.copy(), self.tail.copy(),
                                None if self.wedge is None else self.wedge.copy())

    @property
    def has_wedge(self) -> bool:
        return self.wedge is not None and bool(np.any(self.wedge != 0))

    def add(self, coef: complex, k=None, alpha=None, comp: int = 0, kind: str = "const",
            profile: Callable | None = None) -> "CylinderFunction":
        """Add coef * z^alpha e^{ik.phi} * [1 | profile(s) | 1/chi(s)] in place; returns self."""
        tr = self.trunc
        k = (0,) * tr.n if k is None else k
        alpha = (0,) * tr.m if alpha is None else tuple(alpha)
        a, q = tr.taylor_index[alpha], tr.mode_index(k)
        if kind == "const":
            self.const[comp, a, q] += coef
        elif kind == "tail":
            prof = np.asarray(profile(tr.nodes), dtype=complex)
            if abs(profile(np.array([S_FAR]))[0]) > 1e-12 * max(1.0, np.max(np.abs(prof))):
                raise HomologicalError("tail profile does not vanish at s -> -inf")
            self.tail[comp, a, q] += coef * prof
        elif kind == "wedge":
            if self.wedge is None:
                self.wedge = np.zeros_like(self.const)
            self.wedge[comp, a, q] += coef
        else:
            raise HomologicalError(f"unknown kind {kind!r}")
        return self

    def add_real(self, c: float, s: float, k, alpha=None, comp: int = 0, kind: str = "const",
                 profile: Callable | None = None) -> "CylinderFunction":
        """Add (c cos(k.phi) + s sin(k.phi)) z^alpha times the profile (real function)."""
        k = tuple(int(v) for v in np.atleast_1d(k))
        if not any(k):
            return self.add(c, k, alpha, comp, kind, profile)
        self.add(0.5 * (c - 1j * s), k, alpha, comp, kind, profile)
        self.add(0.5 * (c + 1j * s), tuple(-v for v in k), alpha, comp, kind, profile)
        return self

    def __add__(self, other: "CylinderFunction") -> "CylinderFunction":
        w = None
        if self.wedge is not None or other.wedge is not None:
            w = (0 if self.wedge is None else self.wedge) + (0 if other.wedge is None else other.wedge)
        return CylinderFunction(self.trunc, self.ncomp, self.const + other.const,
                                self.tail + other.tail, w)

    def __mul__(self, a: complex) -> "CylinderFunction":
        return CylinderFunction(self.trunc, self.ncomp, a * self.const, a * self.tail,
                                None if self.wedge is None else a * self.wedge)

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def component(self, sl) -> "CylinderFunction":
        sl = slice(sl, sl + 1) if isinstance(sl, int) else sl
        c = self.const[sl]
        return CylinderFunction(self.trunc, c.shape[0], c.copy(), self.tail[sl].copy(),
                                None if self.wedge is None else self.wedge[sl].copy())

    @staticmethod
    def stack(parts: Sequence["CylinderFunction"]) -> "CylinderFunction":
        tr = parts[0].trunc
        wedge = None
        if any(p.wedge is not None for p in parts):
            wedge = np.concatenate([p.wedge if p.wedge is not None else np.zeros_like(p.const)
                                    for p in parts])
        return CylinderFunction(tr, sum(p.ncomp for p in parts),
                                np.concatenate([p.const for p in parts]),
                                np.concatenate([p.tail for p in parts]), wedge)

    def mean(self) -> np.ndarray:
        """<u>: the phi-average at (s, z) = (-inf, 0), one value per component."""
        tr = self.trunc
        return self.const[:, tr.taylor_index[(0,) * tr.m], tr.zero_mode].copy()

    def coefficients_at(self, s) -> np.ndarray:
        """Mode/monomial coefficients at arbitrary s: shape (ncomp, n_taylor, n_modes, len(s))."""
        tr = self.trunc
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = self.const[..., None] + tr.interpolate(self.tail, s)
        if self.wedge is not None:
            out = out + self.wedge[..., None] / chi(s)
        return out

    def evaluate(self, phi, s, z=None) -> np.ndarray:
        """Point values; phi (..., n) or scalar for n = 1, s scalar, z (m,) or None (z = 0)."""
        tr = self.trunc
        phi = np.asarray(phi, dtype=float)
        if tr.n == 1 and (phi.ndim == 0 or phi.shape[-1] != 1):
            phi = phi[..., None]
        z = np.zeros(tr.m) if z is None else np.asarray(z, dtype=complex)
        zpow = np.array([np.prod(z ** np.array(a)) if a else 1.0 for a in tr.taylor])
        c = self.coefficients_at([float(s)])[..., 0]  # (ncomp, nt, nk)
        cz = np.einsum("cak,a->ck", c, zpow)
        e = np.exp(1j * (phi @ tr.modes.T))  # (..., nk)
        return np.einsum("...k,ck->...c", e, cz)

    def sup_coeffs(self) -> np.ndarray:
        """sup over the s-grid of each coefficient, shape (ncomp, n_taylor, n_modes)."""
        vals = self.const[..., None] + self.tail
        if self.wedge is not None:
            vals = vals + self.wedge[..., None] / chi(self.trunc.nodes)
        return np.max(np.abs(vals), axis=-1)

    def norm_max(self) -> float:
        return float(np.max(self.sup_coeffs(), initial=0.0))

    def norm_l1(self) -> float:
        """sum over modes and monomials of the sup over s; dominates the sup-norm on |z_i| <= 1."""
        return float(np.sum(self.sup_coeffs()))

    def smoothed(self, delta: float) -> "CylinderFunction":
        """Apply the analyticity-loss weight e^{-delta |k|}."""
        w = np.exp(-delta * np.abs(self.trunc.modes).max(axis=1))
        return CylinderFunction(self.trunc, self.ncomp, self.const * w,
                                self.tail * w[None, None, :, None],
                                None if self.wedge is None else self.wedge * w)

    def d_phi(self) -> "CylinderFunction":
        """Gradient in phi as an n-component function (scalar input)."""
        if self.ncomp != 1:
            raise HomologicalError("d_phi expects a scalar function")
        ik = 1j * self.trunc.modes.T  # (n, nk)
        return CylinderFunction(self.trunc, self.trunc.n, ik[:, None, :] * self.const[0][None],
                                ik[:, None, :, None] * self.tail[0][None],
                                None if self.wedge is None else ik[:, None, :] * self.wedge[0][None])

    def d_s(self) -> "CylinderFunction":
        if self.has_wedge:
            raise HomologicalError("d_s of a wedge-class function is not representable")
        return CylinderFunction(self.trunc, self.ncomp, np.zeros_like(self.const),
                                self.tail @ self.trunc.diff.T)

    def d_z(self) -> "CylinderFunction":
        """Gradient in z as an m-component function (scalar input)."""
        tr = self.trunc
        if self.ncomp != 1:
            raise HomologicalError("d_z expects a scalar function")
        out = CylinderFunction.zeros(tr, tr.m, wedge=self.wedge is not None)
        for a, alpha in enumerate(tr.taylor):
            for j in range(tr.m):
                if alpha[j] == 0:
                    continue
                beta = list(alpha)
                beta[j] -= 1
                b = tr.taylor_index[tuple(beta)]
                out.const[j, b] += alpha[j] * self.const[0, a]
                out.tail[j, b] += alpha[j] * self.tail[0, a]
                if self.wedge is not None:
                    out.wedge[j, b] += alpha[j] * self.wedge[0, a]
        return out

    def mix(self, Q: np.ndarray) -> "CylinderFunction":
        """Constant linear map on the component axis: result_r = sum_c Q[r, c] u_c."""
        Q = np.asarray(Q)
        return CylinderFunction(self.trunc, Q.shape[0], np.einsum("rc,c...->r...", Q, self.const),
                                np.einsum("rc,c...->r...", Q, self.tail),
                                None if self.wedge is None else np.einsum("rc,c...->r...", Q, self.wedge))

    def save(self, stem) -> tuple[str, str]:
        """Write ``stem.json`` (mode table, monomial table, layout) and ``stem.npz`` (arrays)."""
        tr = self.trunc
        meta = {
            "format": "cylinder-function/1",
            "truncation": {"n": tr.n, "m": tr.m, "K": tr.K, "D": tr.D, "T_num": tr.T_num, "N_s": tr.N_s,
                           "map_beta": tr.map_beta},
            "ncomp": self.ncomp,
            "modes": tr.modes.tolist(),
            "taylor": [list(a) for a in tr.taylor],
            "s_nodes": "s = a sinh(map_beta xi), xi chebyshev-lobatto increasing, a sinh(map_beta) = T_num",
            "arrays": {"const": "(ncomp, n_taylor, n_modes) complex",
                       "tail": "(ncomp, n_taylor, n_modes, N_s) complex",
                       "wedge": "(ncomp, n_taylor, n_modes) complex, coefficient of 1/chi(s)"},
            "has_wedge": self.wedge is not None,
        }
        jp, npz = f"{stem}.json", f"{stem}.npz"
        with open(jp, "w") as fh:
            json.dump(meta, fh, indent=1)
        arrays = {"const": self.const, "tail": self.tail}
        if self.wedge is not None:
            arrays["wedge"] = self.wedge
        np.savez(npz, **arrays)
        return jp, npz

    @classmethod
    def load(cls, stem) -> "CylinderFunction":
        with open(f"{stem}.json") as fh:
            meta = json.load(fh)
        tr = Truncation(**meta["truncation"])
        with np.load(f"{stem}.npz") as data:
            return cls(tr, meta["ncomp"], data["const"], data["tail"],
                       data["wedge"] if "wedge" in data else None)


@dataclass
class OperatorSpec:
    lambda0: float
    omega: np.ndarray
    Lambda0: np.ndarray
    Lambda1: Callable[[np.ndarray], np.ndarray] | None = None  # s (N,) -> (N, m, m), vanishing at -inf
    dLambda1: Callable[[np.ndarray], np.ndarray] | None = None
    resonance_tol: float = 1e-8

    def __post_init__(self):
        self.omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        self.Lambda0 = np.atleast_2d(np.asarray(self.Lambda0, dtype=float)).reshape(
            len(np.atleast_2d(self.Lambda0)), -1) if np.size(self.Lambda0) else np.zeros((0, 0))
        if self.lambda0 <= 0:
            raise HomologicalError(f"lambda0 must be positive, got {self.lambda0}")
        L0 = self.Lambda0
        if L0.shape[0] != L0.shape[1]:
            raise HomologicalError(f"Lambda0 must be square, got {L0.shape}")
        if np.any(L0 - np.diag(np.diag(L0)) != 0):
            raise HomologicalError("Lambda0 must be diagonal (non-diagonal Lambda0 rejected)")

    @property
    def m(self) -> int:
        return self.Lambda0.shape[0]

    @property
    def lambdas(self) -> np.ndarray:
        return np.diag(self.Lambda0).copy()

    def Lambda1_at(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.Lambda1 is None or self.m == 0:
            return np.zeros((s.size, self.m, self.m))
        return np.asarray(self.Lambda1(s), dtype=float).reshape(s.size, self.m, self.m)

    def Lambda_at(self, s) -> np.ndarray:
        return self.Lambda0[None] + self.Lambda1_at(s)

    def resonance_margin(self) -> tuple[float, tuple]:
        """min over k in Z_+^m of |lambda0 - sum k_j lambda_j| and the minimising k."""
        lam = self.lambdas
        if lam.size == 0:
            return float(self.lambda0), ()
        cap = self.lambda0 + float(np.max(lam))
        best, wit = float(self.lambda0), (0,) * lam.size

        def walk(i, acc, prefix):
            nonlocal best, wit
            if i == lam.size:
                val = abs(self.lambda0 - acc)
                if val < best:
                    best, wit = val, tuple(prefix)
                return
            kmax = int(np.floor((cap - acc) / lam[i])) if lam[i] > 0 else 0
            for k in range(max(kmax, 0) + 1):
                walk(i + 1, acc + k * lam[i], prefix + [k])

        walk(0, 0.0, [])
        return best, wit

    def validate(self, grid=None) -> float:
        """Check the resonance condition and the spectral window; returns the resonance margin."""
        margin, wit = self.resonance_margin()
        if margin < self.resonance_tol:
            raise ResonanceError(margin, wit)
        if self.m:
            s = np.linspace(-15.0 / self.lambda0, 15.0 / self.lambda0, 61) if grid is None else grid
            ev = np.linalg.eigvals(self.Lambda_at(s))
            if np.any(ev.real <= 0) or np.any(ev.real >= self.lambda0):
                bad = ev.real[(ev.real <= 0) | (ev.real >= self.lambda0)]
                raise HomologicalError(
                    f"spectrum of Lambda(s) leaves (0, lambda0 = {self.lambda0}): Re = {bad[0]:.6g}")
        return margin


def _A_matrix(trunc: Truncation, ncomp: int, Lam: np.ndarray, variant: Variant) -> np.ndarray:
    """Matrix of <z, Lambda D_z> (+ transpose term) on the (component, monomial) space.

    ``Lam`` has shape (N, m, m); returns (N, Q, Q) with Q = ncomp * n_taylor.
    """
    nt, m = len(trunc.taylor), trunc.m
    Q = ncomp * nt
    A = np.zeros((Lam.shape[0], Q, Q))
    for a, alpha in enumerate(trunc.taylor):
        for i in range(m):
            for j in range(m):
                if alpha[j] == 0:
                    continue
                beta = list(alpha)
                beta[j] -= 1
                beta[i] += 1
                b = trunc.taylor_index[tuple(beta)]
                for c in range(ncomp):
                    A[:, c * nt + b, c * nt + a] += Lam[:, i, j] * alpha[j]
    if variant in ("minus", "plus"):
        if ncomp != m:
            raise HomologicalError(f"variant {variant!r} needs {m} components, got {ncomp}")
        sign = -1.0 if variant == "minus" else 1.0
        for a in range(nt):
            for c in range(ncomp):
                for c2 in range(ncomp):
                    # minus: (Lambda^T u)_{c2} = sum_c Lambda[c, c2] u_c ; plus: (Lambda u)_{c2} = Lambda[c2, c] u_c
                    coef = Lam[:, c, c2] if variant == "minus" else Lam[:, c2, c]
                    A[:, c2 * nt + a, c * nt + a] += sign * coef
    elif variant != "none":
        raise HomologicalError(f"unknown operator variant {variant!r}")
    return A


def _blocks(pattern: np.ndarray) -> list[np.ndarray]:
    """Connected components of the sparsity graph of a square boolean matrix."""
    Q = pattern.shape[0]
    sym = pattern | pattern.T
    seen = np.zeros(Q, bool)
    out = []
    for q in range(Q):
        if seen[q]:
            continue
        stack, comp = [q], []
        seen[q] = True
        while stack:
            p = stack.pop()
            comp.append(p)
            for r in np.flatnonzero(sym[p] & ~seen):
                seen[r] = True
                stack.append(r)
        out.append(np.array(sorted(comp)))
    return out


@dataclass
class SolveResult:
    u: CylinderFunction
    constant: np.ndarray | None
    residual: float
    min_divisor: float
    variant: str = "none"
    divisor_witness: tuple = ()

    def to_dict(self) -> dict:
        c = None if self.constant is None else [[float(v.real), float(v.imag)] for v in self.constant]
        return {"variant": self.variant, "residual": self.residual, "min_divisor": self.min_divisor,
                "divisor_witness": list(self.divisor_witness), "constant": c}


class _OperatorData:
    """A(s) on nodes / fine nodes and its s -> -inf limit for one (spec, trunc, ncomp, variant)."""

    def __init__(self, spec: OperatorSpec, trunc: Truncation, ncomp: int, variant: Variant):
        if spec.m != trunc.m:
            raise HomologicalError(f"operator has m={spec.m}, truncation m={trunc.m}")
        if spec.omega.size != trunc.n:
            raise HomologicalError(f"omega has {spec.omega.size} entries, truncation n={trunc.n}")
        self.spec, self.trunc, self.ncomp, self.variant = spec, trunc, ncomp, variant
        self.A0 = _A_matrix(trunc, ncomp, spec.Lambda0[None], variant)[0]
        if np.any(self.A0 - np.diag(np.diag(self.A0)) != 0):
            raise HomologicalError("constant part of the operator is not diagonal")
        self.a0 = np.diag(self.A0).copy()
        self.A_nodes = _A_matrix(trunc, ncomp, spec.Lambda_at(trunc.nodes), variant)
        self.A1_nodes = self.A_nodes - self.A0
        self.s_dependent = bool(np.any(self.A1_nodes != 0))
        pattern = np.any(self.A_nodes != 0, axis=0)
        np.fill_diagonal(pattern, True)
        self.blocks = _blocks(pattern)

    def A_at(self, s) -> np.ndarray:
        return _A_matrix(self.trunc, self.ncomp, self.spec.Lambda_at(s), self.variant)

    def A1_over_chi_limit(self) -> np.ndarray:
        return (self.A_at([S_FAR])[0] - self.A0) / chi(S_FAR)


def apply_operator(u: CylinderFunction, spec: OperatorSpec, variant: Variant = "none",
                   s=None, opdata: _OperatorData | None = None) -> np.ndarray:
    """(L u) coefficients at the points s: shape (ncomp, n_taylor, n_modes, len(s))."""
    tr = u.trunc
    s = tr.fine_nodes() if s is None else np.atleast_1d(np.asarray(s, dtype=float))
    op = opdata or _OperatorData(spec, tr, u.ncomp, variant)
    nt = len(tr.taylor)
    tail = tr.interpolate(u.tail, s)
    dtail = tr.interpolate(u.tail, s, derivative=True)
    total = u.const[..., None] + tail
    out = spec.lambda0 * dtail
    if u.wedge is not None:
        wv = u.wedge[..., None] / chi(s)
        total = total + wv
        out = out + spec.lambda0 * np.tanh(s) * wv  # lambda0 d/ds (1/chi) = lambda0 tanh(s) / chi
    nu = tr.modes @ spec.omega
    out = out + 1j * nu[None, None, :, None] * total
    A = op.A_at(s)  # (S, Q, Q)
    flat = total.reshape(u.ncomp * nt, -1, s.size)
    Au = np.einsum("spq,qks->pks", A, flat).reshape(total.shape)
    return out + Au


def _relative(err: np.ndarray, ref: np.ndarray) -> float:
    scale = float(np.max(np.abs(ref), initial=0.0))
    e = float(np.max(np.abs(err), initial=0.0))
    return e / scale if scale > 0 else e


def _solve_tails(rhs: np.ndarray, nu: np.ndarray, op: _OperatorData) -> np.ndarray:
    """Collocation solve of lambda0 u' + (i nu + A(s)) u = rhs with u ~ e^s at the left end.

    The first collocation row is replaced by the e^s boundary condition
    (lambda0 + i nu + A(-T)) u(-T) = rhs(-T).  ``rhs`` has shape (Q, n_modes, N_s).
    """
    tr, lam0 = op.trunc, op.spec.lambda0
    Q, nk, N = rhs.shape
    out = np.zeros_like(rhs)
    active = np.any(rhs != 0, axis=-1)  # (Q, nk)
    if not active.any():
        return out
    if not op.s_dependent:
        # constant coefficients: lambda0 D~ + sigma I = Z (lambda0 T + sigma I) Z^*
        T, Z = tr._bc_schur
        ZH = Z.conj().T
        Tl = lam0 * T
        eye = np.eye(N)
        for q in range(Q):
            for kk in np.flatnonzero(active[q]):
                sigma = 1j * nu[kk] + op.a0[q]
                out[q, kk] = Z @ solve_triangular(Tl + sigma * eye, ZH @ rhs[q, kk])
        return out
    D = tr.diff
    for blk in op.blocks:
        b = blk.size
        Ablk = op.A_nodes[:, blk][:, :, blk]  # (N, b, b)
        base = lam0 * np.kron(D, np.eye(b)).astype(complex)
        for i in range(N):
            base[i * b:(i + 1) * b, i * b:(i + 1) * b] += Ablk[i]
        bc0 = np.eye(b) * lam0 + Ablk[0]
        for kk in np.flatnonzero(active[blk].any(axis=0)):
            M = base + 1j * nu[kk] * np.eye(N * b)
            M[:b, :] = 0.0
            M[:b, :b] = bc0 + 1j * nu[kk] * np.eye(b)
            r = rhs[blk, kk, :].T.reshape(-1)  # node-major
            out[blk, kk, :] = np.linalg.solve(M, r).reshape(N, b).T
    return out


def _solve_regular(v: CylinderFunction, op: _OperatorData, div_tol: float, mean_tol: float
                   ) -> tuple[CylinderFunction, float, tuple]:
    """Solve L u = v for v without wedge part (const by division, tail by collocation)."""
    tr = op.trunc
    nt, nk = len(tr.taylor), tr.modes.shape[0]
    Q = v.ncomp * nt
    nu = tr.modes @ op.spec.omega
    vc = v.const.reshape(Q, nk)
    div = 1j * nu[None, :] + op.a0[:, None]  # (Q, nk)
    scale = max(1.0, v.norm_max())
    small = np.abs(div) < div_tol
    uc = np.zeros_like(vc)
    uc[~small] = vc[~small] / div[~small]
    for q, kk in zip(*np.nonzero(small)):
        if abs(vc[q, kk]) > mean_tol * scale:
            comp, a = divmod(int(q), nt)
            if op.variant == "none" and tr.taylor[a] == (0,) * tr.m and kk == tr.zero_mode:
                raise MeanObstruction(vc[q, kk], f" (component {comp})")
            raise SmallDivisor(div[q, kk], tr.modes[kk], tr.taylor[a], comp)
    # normalisation: kernel components (zero divisor) are set to 0
    absdiv = np.where(small, np.inf, np.abs(div))
    i = np.unravel_index(int(np.argmin(absdiv)), absdiv.shape)
    min_div = float(absdiv[i])
    witness = (tuple(int(x) for x in tr.modes[i[1]]), tr.taylor[i[0] % nt], int(i[0] // nt))
    rhs = v.tail.reshape(Q, nk, tr.N_s).copy()
    if op.s_dependent:
        rhs -= np.einsum("spq,qk->pks", op.A1_nodes, uc)
    ut = _solve_tails(rhs, nu, op)
    u = CylinderFunction(tr, v.ncomp, uc.reshape(v.const.shape), ut.reshape(v.tail.shape))
    return u, min_div, witness


def solve_extended(v: CylinderFunction, spec: OperatorSpec, variant: Variant = "none",
                   extract_mean: bool = False, div_tol: float = 1e-14, mean_tol: float = 1e-12,
                   certify: bool = True) -> SolveResult:
    """Solve L u = v - c on the truncation.

    ``c`` is a constant per component (k = 0, z^0, s-constant) and is nonzero only if
    ``extract_mean`` is set or v has a wedge part (in which case it is forced, as the mean
    of the regular remainder).  Without it a nonzero mean in a kernel direction is rejected.
    """
    spec.validate()
    tr = v.trunc
    op = _OperatorData(spec, tr, v.ncomp, variant)
    nt = len(tr.taylor)
    a_zero, k_zero = tr.taylor_index[(0,) * tr.m], tr.zero_mode
    work = CylinderFunction(tr, v.ncomp, v.const.copy(), v.tail.copy())
    u_w = None
    if v.has_wedge:
        if variant != "none":
            raise HomologicalError("wedge right-hand sides are supported for the scalar operator only")
        nu = tr.modes @ spec.omega
        Q = v.ncomp * nt
        div_w = 1j * nu[None, :] + (op.a0 - spec.lambda0)[:, None]
        vw = v.wedge.reshape(Q, -1)
        bad = (np.abs(div_w) < max(spec.resonance_tol, div_tol)) & (vw != 0)
        if bad.any():
            q, kk = np.argwhere(bad)[0]
            raise ResonanceError(float(abs(div_w[q, kk])), tr.taylor[q % nt])
        uw = np.where(vw != 0, vw / np.where(vw != 0, div_w, 1.0), 0.0)
        u_w = uw.reshape(v.wedge.shape)
        # regular remainder: v_1 + lambda0 w u_w - (A(s) - A0) u_w / chi
        lim = op.A1_over_chi_limit()
        extra_const = -np.einsum("pq,qk->pk", lim, uw)
        s = tr.nodes
        ratio = op.A1_nodes / chi(s)[:, None, None] - lim[None]
        extra_tail = (spec.lambda0 * chi_w(s))[None, None, :] * uw[..., None] \
            - np.einsum("spq,qk->pks", ratio, uw)
        work.const += extra_const.reshape(v.const.shape)
        work.tail += extra_tail.reshape(v.tail.shape)
    c = None
    if extract_mean or u_w is not None:
        c = work.const[:, a_zero, k_zero].copy()
        work.const[:, a_zero, k_zero] = 0.0
    u, min_div, witness = _solve_regular(work, op, div_tol, mean_tol)
    u.wedge = u_w
    res = float("nan")
    if certify:
        s_f = tr.fine_nodes()
        lhs = apply_operator(u, spec, variant, s_f, op)
        target = v.coefficients_at(s_f)
        if c is not None:
            target[:, a_zero, k_zero, :] -= c[:, None]
        res = _relative(lhs - target, target)
    return SolveResult(u, c, res, min_div, variant, witness)


def solve_cylinder(v: CylinderFunction, spec: OperatorSpec, **kw) -> SolveResult:
    """D_{lambda0, omega} u = v - c for z-free v (c returned only for wedge input)."""
    tr = v.trunc
    a0 = tr.taylor_index[(0,) * tr.m]
    mask = np.ones(len(tr.taylor), bool)
    mask[a0] = False
    if np.any(v.const[:, mask] != 0) or np.any(v.tail[:, mask] != 0) or (
            v.wedge is not None and np.any(v.wedge[:, mask] != 0)):
        raise HomologicalError("solve_cylinder expects a z-free right-hand side")
    return solve_extended(v, spec, "none", **kw)


def solve_torus_mode(v, omega: Sequence[float], shift: float = 0.0, div_tol: float = 1e-14,
                     mean_tol: float = 1e-14):
    """(D_omega - shift) u = v on T^n by Fourier division; u_0 := 0 when shift = 0."""
    from .melnikov import FourierSeries

    w = np.atleast_1d(np.asarray(omega, dtype=float))
    out, errs = {}, {}
    for k, c in v.coeffs.items():
        d = -shift + 1j * float(np.asarray(k) @ w)
        if abs(d) < div_tol:
            if abs(c) > mean_tol:
                if shift == 0 and not any(k):
                    raise MeanObstruction(c)
                raise SmallDivisor(d, k, (), 0)
            out[k] = 0.0 + 0.0j
            continue
        out[k] = complex(c / d)
    return FourierSeries(v.n, v.K, out, real=v.real and np.isreal(shift))


def lattice_min_divisor(trunc: Truncation, spec: OperatorSpec, ncomp: int = 1,
                        variant: Variant = "none") -> float:
    """Brute-force min |i k.omega + a| over the truncation, kernel (zero) entries excluded."""
    A0 = _A_matrix(trunc, ncomp, spec.Lambda0[None], variant)[0]
    best = np.inf
    for k in trunc.modes:
        nu = float(k @ spec.omega)
        for a in np.diag(A0):
            d = abs(1j * nu + a)
            if d >= 1e-14:
                best = min(best, d)
    return float(best)


def truncation_factor(trunc: Truncation) -> float:
    """Lattice/truncation factor in the norm-ratio bound ||u||_1 <= factor / min_div * ||v||_max."""
    return trunc.modes.shape[0] * len(trunc.taylor) * (1.0 + 4.0 * trunc.T_num)


# --------------------------------------------------------------------------- full step

@dataclass
class HomologicalSolution:
    S0hat: CylinderFunction
    beta_hat: CylinderFunction
    b_hat: CylinderFunction
    flat_hat: CylinderFunction | None
    xi_hat: np.ndarray
    c_hat: complex
    lambda0_hat: complex
    Lambda0_hat: np.ndarray
    residuals: dict[str, float]
    conditioning: float
    min_divisors: dict[str, float] = field(default_factory=dict)

    @property
    def bhat(self) -> tuple:
        return self.beta_hat, self.b_hat, self.flat_hat

    def to_dict(self) -> dict:
        cplx = lambda z: [float(np.real(z)), float(np.imag(z))]  # noqa: E731
        return {
            "xi_hat": [cplx(v) for v in self.xi_hat],
            "c_hat": cplx(self.c_hat),
            "lambda0_hat": cplx(self.lambda0_hat),
            "Lambda0_hat": [[cplx(v) for v in row] for row in self.Lambda0_hat],
            "residuals": dict(self.residuals),
            "min_divisors": dict(self.min_divisors),
            "conditioning": self.conditioning,
        }


def default_quadratic_part(n: int, m: int) -> np.ndarray:
    """D^2_pp H at p = 0 for the 'flat' case: identity on the action block, zero elsewhere."""
    Q = np.zeros((n + 1 + m, n + 1 + m))
    Q[:n, :n] = np.eye(n)
    return Q


def _times_s_function(u: CylinderFunction, g_nodes: np.ndarray, g_over_chi_limit: float,
                      spec: OperatorSpec) -> CylinderFunction:
    """u(phi, s, z) * g(s) for g in the vanishing class; wedge parts become bounded."""
    tr = u.trunc
    out = CylinderFunction.zeros(tr, u.ncomp)
    out.tail = (u.const[..., None] + u.tail) * g_nodes
    if u.wedge is not None:
        out.const = u.wedge * g_over_chi_limit
        out.tail += u.wedge[..., None] * (g_nodes / chi(tr.nodes) - g_over_chi_limit)
    return out


def _times_z(u: CylinderFunction, i: int) -> CylinderFunction:
    """Multiply by z_i, dropping monomials beyond the truncation degree."""
    tr = u.trunc
    out = CylinderFunction.zeros(tr, u.ncomp, wedge=u.wedge is not None)
    for a, alpha in enumerate(tr.taylor):
        beta = list(alpha)
        beta[i] += 1
        b = tr.taylor_index.get(tuple(beta))
        if b is None:
            continue
        out.const[:, b] += u.const[:, a]
        out.tail[:, b] += u.tail[:, a]
        if u.wedge is not None:
            out.wedge[:, b] += u.wedge[:, a]
    return out


def homological_step(spec: OperatorSpec, f: CylinderFunction, g: CylinderFunction | None = None,
                     Q: np.ndarray | None = None, tol: float = 1e-10) -> HomologicalSolution:
    """One linearised conjugacy step.

    Unknowns: S0 (scalar), b = (beta, b, flat) with n + 1 + m components, and the constants
    xi (n), c, lambda0_hat, Lambda0_hat (m x m), from

        L S0        = -f - <omega, xi> + c
        L b         = g + Q (dS0 + xi) + B b - lambda0_hat e_b - Lambda0_hat^T z

    where L = D_{lambda0, omega} + <z, Lambda D_z>, Q = D^2_pp H at p = 0 with p = (iota, e, zbar)
    and B b contributes Lambda^T flat + b D_s Lambda^T z to the flat rows only.
    """
    tr = f.trunc
    n, m = tr.n, tr.m
    if f.ncomp != 1 or f.has_wedge:
        raise StageError("input", HomologicalError("f must be scalar and of the bounded class"))
    g = CylinderFunction.zeros(tr, n + 1 + m) if g is None else g
    if g.ncomp != n + 1 + m:
        raise StageError("input", HomologicalError(f"g must have {n + 1 + m} components"))
    if g.wedge is not None and np.any(np.delete(g.wedge, n, axis=0) != 0):
        raise StageError("input", HomologicalError("only the e-component of g may have a wedge part"))
    Q = default_quadratic_part(n, m) if Q is None else np.asarray(Q, dtype=float)
    Qii = Q[:n, :n]
    if abs(np.linalg.det(Qii)) < 1e-12:
        raise StageError("xi", HomologicalError("<D^2_{iota iota} H> is degenerate"))

    residuals, divisors = {}, {}

    def run(stage, fn):
        try:
            return fn()
        except HomologicalError as e:
            raise StageError(stage, e) from e

    # S0: the mean of the right-hand side is removed by c_hat - <omega, xi>
    f_mean = f.mean()[0]
    rhs0 = (-1.0) * f
    rhs0.const[0, tr.taylor_index[(0,) * m], tr.zero_mode] += f_mean
    r = run("S0", lambda: solve_extended(rhs0, spec, "none"))
    S0 = r.u
    residuals["S0"], divisors["S0"] = r.residual, r.min_divisor

    # w = g + Q dS0; xi from the zero-mean condition of the beta rows
    dS0 = CylinderFunction.stack([S0.d_phi(), S0.d_s()] + ([S0.d_z()] if m else []))
    w = g + dS0.mix(Q)
    xi = -np.linalg.solve(Qii, w.mean()[:n])
    xi_pad = np.zeros(n + 1 + m, complex)
    xi_pad[:n] = xi
    Qxi = Q @ xi_pad
    a0, k0 = tr.taylor_index[(0,) * m], tr.zero_mode
    w.const[:, a0, k0] += Qxi
    c_hat = f_mean + spec.omega @ xi

    r = run("beta", lambda: solve_extended(w.component(slice(0, n)), spec, "none"))
    beta = r.u
    residuals["beta"], divisors["beta"] = r.residual, r.min_divisor

    r = run("b", lambda: solve_extended(w.component(n), spec, "none", extract_mean=True))
    b = r.u
    lambda0_hat = complex(r.constant[0])
    residuals["b"], divisors["b"] = r.residual, r.min_divisor

    flat = None
    Lambda0_hat = np.zeros((m, m), complex)
    if m:
        v_flat = w.component(slice(n + 1, n + 1 + m))
        # B-term b * D_s Lambda^T(s) z: component c gets sum_i dLambda1[i, c](s) z_i b
        s = tr.nodes
        if spec.dLambda1 is not None:
            dL = np.asarray(spec.dLambda1(s), dtype=float).reshape(s.size, m, m)
        else:
            dL = np.einsum("ij,jab->iab", tr.diff, spec.Lambda1_at(s))
        # B^1 functions are power series in e^s at -inf, so D_s Lambda1 / chi and Lambda1 / chi share the limit
        lim = spec.Lambda1_at([S_FAR])[0] / chi(S_FAR)
        for c in range(m):
            for i in range(m):
                if not np.any(dL[:, i, c]) and lim[i, c] == 0:
                    continue
                term = _times_z(_times_s_function(b, dL[:, i, c], lim[i, c], spec), i)
                v_flat.const[c] += term.const[0]
                v_flat.tail[c] += term.tail[0]
        # Lambda0_hat^T z absorbs the k = 0, degree-1, s-constant part
        for c in range(m):
            for i in range(m):
                e_i = tuple(1 if j == i else 0 for j in range(m))
                ai = tr.taylor_index.get(e_i)
                if ai is None:
                    continue
                Lambda0_hat[i, c] = v_flat.const[c, ai, k0]
                v_flat.const[c, ai, k0] = 0.0
        r = run("flat", lambda: solve_extended(v_flat, spec, "minus"))
        flat = r.u
        residuals["flat"], divisors["flat"] = r.residual, r.min_divisor

    M = spec.Lambda0 + Lambda0_hat
    if m:
        _, V = np.linalg.eig(M)
        conditioning = float(np.linalg.cond(V))
    else:
        conditioning = 1.0
    bad = {k: v for k, v in residuals.items() if not v < tol}
    if bad:
        raise StageError(next(iter(bad)), HomologicalError(f"residual {bad} above tolerance {tol}"))
    return HomologicalSolution(S0, beta, b, flat, xi, complex(c_hat), lambda0_hat, Lambda0_hat,
                               residuals, conditioning, divisors)
