"""Toroidal-pendulum model Hamiltonian and its arithmetic conditions.

The phase point is split into rotator variables (iota, phi), the pendulum
pair (x, y) and the transverse pairs (z, zbar).  The potential

    U(x_0, ..., x_m) = sum_i l_i * (prod_{j >= i} cos x_j - 1)

is evaluated on the full angle vector (x_0, ..., x_m) = (x, z).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi


class ModelError(ValueError):
    """Invalid model parameters or arguments."""


@dataclass(frozen=True)
class PerturbationSpec:
    """Trigonometric polynomial V(phi, x_0..x_m) = sum a * exp(i(k.phi + j.X)).

    ``k`` has shape (N, n), ``j`` has shape (N, 1+m), ``amp`` is complex (N,).
    The reality constraint a_{-k,-j} = conj(a_{k,j}) is checked on construction.
    """

    k: np.ndarray
    j: np.ndarray
    amp: np.ndarray

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.k, dtype=int))
        j = np.atleast_2d(np.asarray(self.j, dtype=int))
        amp = np.atleast_1d(np.asarray(self.amp, dtype=complex))
        if amp.size == 0:
            k = k.reshape(0, k.shape[-1] if k.ndim == 2 else 0)
            j = j.reshape(0, j.shape[-1] if j.ndim == 2 else 0)
        if not (k.shape[0] == j.shape[0] == amp.shape[0]):
            raise ModelError("perturbation term arrays have mismatched lengths")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "amp", amp)
        self._check_reality()

    def _check_reality(self, tol: float = 1e-12):
        table = self.as_dict()
        for (kk, jj), a in table.items():
            partner = table.get((tuple(-x for x in kk), tuple(-x for x in jj)), 0.0)
            if abs(partner - np.conj(a)) > tol * max(1.0, abs(a)):
                raise ModelError(
                    f"reality constraint violated for k={kk}, j={jj}: "
                    f"a={a}, conj partner={partner}"
                )

    @classmethod
    def zero(cls, n: int, m: int) -> "PerturbationSpec":
        return cls(np.zeros((0, n), int), np.zeros((0, 1 + m), int), np.zeros(0, complex))

    @classmethod
    def from_real_terms(cls, terms: Iterable[tuple], n: int, m: int) -> "PerturbationSpec":
        """Build from real terms ``(c, s, k, j)`` meaning c*cos(th) + s*sin(th), th = k.phi + j.X."""
        table: dict[tuple, complex] = {}
        for c, s, k, j in terms:
            k = tuple(int(v) for v in k)
            j = tuple(int(v) for v in j)
            if len(k) != n or len(j) != 1 + m:
                raise ModelError(f"term dimensions ({len(k)}, {len(j)}) != ({n}, {1 + m})")
            a = 0.5 * (c - 1j * s)
            key, mkey = (k, j), (tuple(-v for v in k), tuple(-v for v in j))
            if key == mkey:
                # constant term: sin(0) = 0, cos(0) = 1
                table[key] = table.get(key, 0.0) + c
            else:
                table[key] = table.get(key, 0.0) + a
                table[mkey] = table.get(mkey, 0.0) + np.conj(a)
        return cls._from_table(table, n, m)

    @classmethod
    def _from_table(cls, table: dict, n: int, m: int) -> "PerturbationSpec":
        items = [(kk, jj, a) for (kk, jj), a in sorted(table.items()) if a != 0]
        if not items:
            return cls.zero(n, m)
        k = np.array([it[0] for it in items], dtype=int).reshape(-1, n)
        j = np.array([it[1] for it in items], dtype=int).reshape(-1, 1 + m)
        amp = np.array([it[2] for it in items], dtype=complex)
        return cls(k, j, amp)

    @classmethod
    def pendulum_coupling(cls, n: int = 1, m: int = 1, harmonics: Sequence[int] = (1,),
                          x_harmonic: int = 1) -> "PerturbationSpec":
        """sum_h (1 - cos(q x_0)) cos(h phi_1), q = ``x_harmonic``; vanishes to 2nd order at x_0 = 0."""
        terms = []
        for h in harmonics:
            k = [0] * n
            k[0] = h
            zero_j = [0] * (1 + m)
            jp = list(zero_j)
            jp[0] = x_harmonic
            jm = list(zero_j)
            jm[0] = -x_harmonic
            terms.append((1.0, 0.0, k, zero_j))
            terms.append((-0.5, 0.0, k, jp))
            terms.append((-0.5, 0.0, k, jm))
        return cls.from_real_terms(terms, n, m)

    @property
    def n(self) -> int:
        return self.k.shape[1]

    @property
    def m(self) -> int:
        return self.j.shape[1] - 1

    def __len__(self) -> int:
        return self.amp.shape[0]

    def as_dict(self) -> dict[tuple, complex]:
        out: dict[tuple, complex] = {}
        for kk, jj, a in zip(self.k, self.j, self.amp):
            key = (tuple(int(v) for v in kk), tuple(int(v) for v in jj))
            out[key] = out.get(key, 0.0) + complex(a)
        return out

    def phases(self, phi: np.ndarray, angles: np.ndarray) -> np.ndarray:
        """Phase k.phi + j.X for batched inputs; returns shape (..., N)."""
        return np.asarray(phi) @ self.k.T + np.asarray(angles) @ self.j.T

    def evaluate(self, phi, angles) -> np.ndarray:
        if len(self) == 0:
            return np.zeros(np.broadcast_shapes(np.shape(phi)[:-1], np.shape(angles)[:-1]))
        e = np.exp(1j * self.phases(phi, angles))
        return np.real(e @ self.amp)

    def gradient(self, phi, angles) -> tuple[np.ndarray, np.ndarray]:
        """(dV/dphi, dV/dX) with trailing dimensions n and 1+m."""
        shape = np.broadcast_shapes(np.shape(phi)[:-1], np.shape(angles)[:-1])
        if len(self) == 0:
            return np.zeros(shape + (self.n,)), np.zeros(shape + (1 + self.m,))
        w = 1j * np.exp(1j * self.phases(phi, angles)) * self.amp
        return np.real(w @ self.k), np.real(w @ self.j)

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.amp)))

    def sup_norm(self, resolution: int | None = None) -> float:
        """Sup over real arguments, by grid search refined with local optimisation."""
        if len(self) == 0:
            return 0.0
        from scipy.optimize import minimize

        dim = self.n + 1 + self.m
        freqs = np.hstack([self.k, self.j])
        fmax = max(int(np.max(np.abs(freqs))), 1)
        if resolution is None:
            resolution = max(8, min(8 * fmax, int(round(2.0e5 ** (1.0 / dim)))))
        axis = np.linspace(0.0, TWO_PI, resolution, endpoint=False)
        grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        vals = np.abs(self.evaluate(grid[:, : self.n], grid[:, self.n:]))
        best = float(vals.max())
        for idx in np.argsort(vals)[-4:]:
            def neg(p):
                return -abs(float(self.evaluate(p[None, : self.n], p[None, self.n:])[0]))
            res = minimize(neg, grid[idx], method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
            best = max(best, -float(res.fun))
        return best

    def restrict_z0(self) -> dict[tuple, dict[int, complex]]:
        """V_0(phi, x_0) = V(phi, x_0, 0, ..., 0) grouped as {k: {j_0: amplitude}}."""
        out: dict[tuple, dict[int, complex]] = {}
        for (kk, jj), a in self.as_dict().items():
            row = out.setdefault(kk, {})
            row[jj[0]] = row.get(jj[0], 0.0) + a
        return out

    def vanishes_on_torus(self, order: int = 2, tol: float = 1e-13) -> bool:
        """True if V = O_order(|x|+|z|) at (x, z) = 0 for every phi.

        Checked on the coefficients: for each k, sum_j a_{k,j} prod_i (j_i)^{p_i} = 0
        for every multi-index p with |p| < order.
        """
        table: dict[tuple, list] = {}
        for kk, jj, a in zip(self.k, self.j, self.amp):
            table.setdefault(tuple(kk), []).append((jj, a))
        dim = 1 + self.m
        for entries in table.values():
            for deg in range(order):
                for p in itertools.combinations_with_replacement(range(dim), deg):
                    acc = 0.0
                    for jj, a in entries:
                        acc += a * np.prod([jj[i] for i in p])
                    if abs(acc) > tol:
                        return False
        return True


@dataclass(frozen=True)
class ModelParams:
    arms: tuple[float, ...]
    omega: tuple[float, ...]
    mu: float = 0.0
    perturbation: PerturbationSpec | None = None

    def __post_init__(self):
        arms = tuple(float(a) for a in np.atleast_1d(self.arms))
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        object.__setattr__(self, "arms", arms)
        object.__setattr__(self, "omega", omega)
        if not arms:
            raise ModelError("arms must be non-empty")
        if any(a <= 0 for a in arms):
            raise ModelError(f"arms must be positive, got {arms}")
        if any(b <= a for a, b in zip(arms, arms[1:])):
            raise ModelError(f"arms must be strictly increasing, got {arms}")
        if not omega:
            raise ModelError("omega must have at least one component (n >= 1)")
        if len(omega) == 1 and omega[0] == 0.0:
            raise ModelError("omega must be nonzero for n = 1")
        if self.mu < 0:
            raise ModelError(f"mu must be non-negative, got {self.mu}")
        if self.perturbation is None:
            object.__setattr__(self, "perturbation", PerturbationSpec.zero(len(omega), len(arms) - 1))
        pert = self.perturbation
        if pert.n != len(omega) or pert.m != len(arms) - 1:
            raise ModelError(
                f"perturbation dimensions (n={pert.n}, m={pert.m}) do not match "
                f"model (n={len(omega)}, m={len(arms) - 1})"
            )

    @property
    def n(self) -> int:
        return len(self.omega)

    @property
    def m(self) -> int:
        return len(self.arms) - 1

    @property
    def dim(self) -> int:
        """Configuration-space dimension n + 1 + m."""
        return self.n + 1 + self.m

    @property
    def lambdas(self) -> np.ndarray:
        return characteristic_exponents(self.arms)

    def with_mu(self, mu: float) -> "ModelParams":
        return ModelParams(self.arms, self.omega, mu, self.perturbation)


@dataclass
class PhaseState:
    """Full phase point.  Arrays may carry leading batch dimensions."""

    iota: np.ndarray
    phi: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    zbar: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.iota = np.asarray(self.iota, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        self.zbar = np.asarray(self.zbar, dtype=float)

    @classmethod
    def origin(cls, n: int, m: int) -> "PhaseState":
        return cls(np.zeros(n), np.zeros(n), 0.0, 0.0, np.zeros(m), np.zeros(m))

    def reduced(self) -> "PhaseState":
        """phi mod 2pi, x mod 4pi (the double cover carrying both separatrix branches)."""
        return PhaseState(self.iota.copy(), np.mod(self.phi, TWO_PI), np.mod(self.x, FOUR_PI),
                          self.y.copy(), self.z.copy(), self.zbar.copy())

    def to_vector(self) -> np.ndarray:
        """Canonical layout q = (phi, x, z), p = (iota, y, zbar) stacked as [q, p]."""
        return np.concatenate([np.atleast_1d(self.phi), np.atleast_1d(self.x),
                               np.atleast_1d(self.z), np.atleast_1d(self.iota),
                               np.atleast_1d(self.y), np.atleast_1d(self.zbar)], axis=-1)

    @classmethod
    def from_vector(cls, v: np.ndarray, n: int, m: int) -> "PhaseState":
        v = np.asarray(v, dtype=float)
        d = n + 1 + m
        q, p = v[..., :d], v[..., d:]
        return cls(p[..., :n], q[..., :n], q[..., n], p[..., n], q[..., n + 1:], p[..., n + 1:])


def _angles(state: PhaseState) -> np.ndarray:
    x = np.asarray(state.x)[..., None]
    return np.concatenate([x, np.broadcast_to(state.z, x.shape[:-1] + (state.z.shape[-1],))], axis=-1)


def potential(arms: Sequence[float], angles: np.ndarray) -> np.ndarray:
    """U_{1+m} at angles (..., 1+m)."""
    angles = np.asarray(angles, dtype=float)
    c = np.cos(angles)
    # tail products prod_{j >= i} cos x_j
    tail = np.flip(np.cumprod(np.flip(c, axis=-1), axis=-1), axis=-1)
    return np.sum(np.asarray(arms) * (tail - 1.0), axis=-1)


def potential_gradient(arms: Sequence[float], angles: np.ndarray) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    arms = np.asarray(arms, dtype=float)
    dim = angles.shape[-1]
    c, s = np.cos(angles), np.sin(angles)
    grad = np.zeros_like(angles)
    for jdx in range(dim):
        for i in range(jdx + 1):
            prod = -s[..., jdx]
            for q in range(i, dim):
                if q != jdx:
                    prod = prod * c[..., q]
            grad[..., jdx] += arms[i] * prod
    return grad


def kinetic(arms: Sequence[float], momenta: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.asarray(momenta) ** 2 / np.asarray(arms) ** 2, axis=-1)


def evaluate_hamiltonian(params: ModelParams, state: PhaseState) -> np.ndarray | float:
    iota = np.asarray(state.iota)
    omega = np.asarray(params.omega)
    angles = _angles(state)
    momenta = np.concatenate([np.asarray(state.y)[..., None],
                              np.broadcast_to(state.zbar, angles.shape[:-1] + (params.m,))], axis=-1)
    h = iota @ omega + 0.5 * np.sum(iota ** 2, axis=-1)
    h = h + kinetic(params.arms, momenta) + potential(params.arms, angles)
    if params.mu != 0.0:
        h = h + params.mu * params.perturbation.evaluate(state.phi, angles)
    return h if np.ndim(h) else float(h)


def hamiltonian_vector_field(params: ModelParams, state: PhaseState) -> PhaseState:
    """Canonical equations; returns time derivatives in PhaseState layout (not reduced)."""
    arms = np.asarray(params.arms)
    angles = _angles(state)
    grad_u = potential_gradient(arms, angles)
    if params.mu != 0.0:
        dv_phi, dv_x = params.perturbation.gradient(state.phi, angles)
    else:
        dv_phi = np.zeros(np.shape(state.phi))
        dv_x = np.zeros(angles.shape)
    force = -(grad_u + params.mu * dv_x)
    return PhaseState(
        iota=-params.mu * dv_phi,
        phi=np.asarray(params.omega) + state.iota,
        x=np.asarray(state.y) / arms[0] ** 2,
        y=force[..., 0],
        z=np.asarray(state.zbar) / arms[1:] ** 2,
        zbar=force[..., 1:],
    )


def characteristic_exponents(arms: Sequence[float]) -> np.ndarray:
    arms = np.asarray(arms, dtype=float)
    return np.sqrt(np.cumsum(arms)) / arms


def linearization_matrix(arms: Sequence[float], h: float = 1e-5) -> np.ndarray:
    """Jacobian of the natural system at the origin in variables (X, Y), X = (x, z), Y = (y, zbar).

    The potential Hessian is taken by central differences of the analytic gradient,
    so the eigenvalues give an independent route to the characteristic exponents.
    """
    arms = np.asarray(arms, dtype=float)
    d = arms.size
    hess = np.zeros((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        hess[:, i] = (potential_gradient(arms, e) - potential_gradient(arms, -e)) / (2 * h)
    jac = np.zeros((2 * d, 2 * d))
    jac[:d, d:] = np.diag(1.0 / arms ** 2)
    jac[d:, :d] = -hess
    return jac


@dataclass(frozen=True)
class SpectralReport:
    lambdas: tuple[float, ...]
    dominance_ok: bool
    nonres_margin: float
    nonres_ok: bool
    witness_k: tuple[int, ...]
    threshold: float

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "dominance_ok": self.dominance_ok,
            "nonres_margin": self.nonres_margin,
            "nonres_ok": self.nonres_ok,
            "witness_k": list(self.witness_k),
            "threshold": self.threshold,
        }


def check_nonresonance(lambdas: Sequence[float], threshold: float | None = None) -> SpectralReport:
    """inf over k in Z_+^m of |lambda_0 - sum k_j lambda_j| by finite enumeration.

    Outside {k : sum k_j lambda_j <= lambda_0 + max lambda_j} the expression only grows,
    so the enumeration is exact.  Default threshold is min_j lambda_j / 10.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.size == 0:
        raise ModelError("lambdas must be non-empty")
    if np.any(lam <= 0):
        raise ModelError(f"characteristic exponents must be positive, got {lam}")
    lam0, rest = lam[0], lam[1:]
    if threshold is None:
        threshold = (rest.min() if rest.size else lam0) / 10.0
    if rest.size == 0:
        return SpectralReport(tuple(lam), True, float(lam0), bool(lam0 >= threshold), (), float(threshold))

    bound = lam0 + rest.max()
    best, witness = np.inf, None
    # depth-first enumeration of the simplex-like region
    def walk(idx: int, acc: float, prefix: list[int]):
        nonlocal best, witness
        if idx == rest.size:
            val = abs(lam0 - acc)
            if val < best:
                best, witness = val, tuple(prefix)
            return
        kmax = int(np.floor((bound - acc) / rest[idx] + 1e-12))
        for kj in range(kmax + 1):
            walk(idx + 1, acc + kj * rest[idx], prefix + [kj])

    walk(0, 0.0, [])
    dominance = bool(lam0 > rest.max())
    return SpectralReport(tuple(float(v) for v in lam), dominance, float(best),
                          bool(best >= threshold), witness, float(threshold))


@dataclass(frozen=True)
class DiophantineEstimate:
    theta: float
    witness_k: tuple[int, ...]
    tau: float
    K: int

    def to_dict(self) -> dict:
        return {"theta": self.theta, "witness_k": list(self.witness_k), "tau": self.tau, "K": self.K}


def lattice_box(n: int, K: int) -> np.ndarray:
    """All k in Z^n with |k|_inf <= K, as an (N, n) array in lexicographic order."""
    axis = np.arange(-K, K + 1)
    return np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)


def check_diophantine(omega: Sequence[float], tau: float, K: int) -> DiophantineEstimate:
    """min over 0 < |k|_inf <= K of |<k, omega>| |k|_inf^tau, with the attaining k."""
    omega = np.asarray(omega, dtype=float)
    if omega.size == 0 or np.all(omega == 0):
        raise ModelError("omega must be nonzero")
    if K < 1:
        raise ModelError("K must be >= 1")
    if tau < omega.size - 1:
        raise ModelError(f"tau must be >= n - 1 = {omega.size - 1}")
    ks = lattice_box(omega.size, K)
    norms = np.abs(ks).max(axis=1)
    ks, norms = ks[norms > 0], norms[norms > 0]
    # k and -k give the same value; keep the half-lattice with leading nonzero entry > 0
    lead = ks[np.arange(ks.shape[0]), np.argmax(ks != 0, axis=1)]
    ks, norms = ks[lead > 0], norms[lead > 0]
    vals = np.abs(ks @ omega) * norms.astype(float) ** tau
    # ties broken towards the shortest lattice vector
    i = int(np.lexsort((norms, vals))[0])
    return DiophantineEstimate(float(vals[i]), tuple(int(v) for v in ks[i]), float(tau), int(K))
