import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepsplit.model import (ModelError, ModelParams, PerturbationSpec, PhaseState, characteristic_exponents,
                            check_diophantine, check_nonresonance, evaluate_hamiltonian,
                            hamiltonian_vector_field, lattice_box, linearization_matrix, potential)


def test_energy_origin_is_zero():
    p = ModelParams((1.0, 2.0), (2.0,))
    assert evaluate_hamiltonian(p, PhaseState.origin(1, 1)) == 0.0


@pytest.mark.parametrize("x", np.linspace(0.1, 6.2, 13))
def test_energy_on_separatrix_level(x):
    p = ModelParams((1.0, 2.0), (2.0,))
    st_ = PhaseState([0.0], [0.3], x, 2 * np.sin(x / 2), [0.0], [0.0])
    assert abs(evaluate_hamiltonian(p, st_)) < 1e-14


def test_potential_hand_value():
    # 1*(cos pi cos 0 - 1) + 2*(cos 0 - 1)
    assert potential((1.0, 2.0), np.array([np.pi, 0.0])) == pytest.approx(-2.0, abs=1e-15)


def test_field_at_origin():
    p = ModelParams((1.0, 2.0), (2.0,))
    f = hamiltonian_vector_field(p, PhaseState.origin(1, 1))
    assert np.allclose(f.phi, [2.0])
    for comp in (f.iota, f.x, f.y, f.z, f.zbar):
        assert np.all(np.asarray(comp) == 0)


def _fd_gradient(p, state, h=1e-6):
    v = state.to_vector()
    g = np.zeros_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        g[i] = (evaluate_hamiltonian(p, PhaseState.from_vector(v + e, p.n, p.m))
                - evaluate_hamiltonian(p, PhaseState.from_vector(v - e, p.n, p.m))) / (2 * h)
    return g


def _random_params(rng, n, m):
    arms = tuple(np.cumsum(rng.uniform(0.5, 1.5, 1 + m)))
    terms = []
    for _ in range(3):
        terms.append((rng.normal(), rng.normal(), rng.integers(-2, 3, n), rng.integers(-2, 3, 1 + m)))
    V = PerturbationSpec.from_real_terms(terms, n, m)
    return ModelParams(arms, tuple(rng.uniform(0.5, 2, n)), 0.1, V)


@pytest.mark.parametrize("seed", range(5))
def test_field_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, m = 1 + seed % 2, seed % 3
    p = _random_params(rng, n, m)
    v = rng.normal(size=2 * p.dim)
    st_ = PhaseState.from_vector(v, n, m)
    g = _fd_gradient(p, st_)
    f = hamiltonian_vector_field(p, st_).to_vector()
    d = p.dim
    # qdot = dH/dp, pdot = -dH/dq
    expect = np.concatenate([g[d:], -g[:d]])
    assert np.allclose(f, expect, rtol=1e-8, atol=1e-8 * np.max(np.abs(expect)))


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_energy_conserved_by_field(seed):
    rng = np.random.default_rng(seed)
    p = _random_params(rng, 1 + seed % 2, seed % 3)
    st_ = PhaseState.from_vector(rng.normal(size=2 * p.dim), p.n, p.m)
    g = _fd_gradient(p, st_, h=1e-5)
    f = hamiltonian_vector_field(p, st_).to_vector()
    # <grad H, X_H> vanishes identically; the FD gradient limits the check
    assert abs(g @ f) < 1e-7 * (1 + np.sum(g ** 2))
    d = p.dim
    exact = np.concatenate([-f[d:], f[:d]])  # exact gradient recovered from the field
    assert abs(exact @ f) < 1e-12 * (1 + exact @ exact)


def test_on_separatrix_field():
    p = ModelParams((1.0, 2.0), (2.0,))
    for x in np.linspace(0.2, 6.0, 7):
        f = hamiltonian_vector_field(p, PhaseState([0.0], [0.0], x, 2 * np.sin(x / 2), [0.0], [0.0]))
        assert f.x == pytest.approx(2 * np.sin(x / 2), abs=1e-15)
        assert np.all(f.z == 0) and np.all(f.zbar == 0)


def test_exponents_examples():
    assert characteristic_exponents([1.0]) == pytest.approx([1.0])
    lam = characteristic_exponents([1.0, 2.0])
    assert lam == pytest.approx([1.0, np.sqrt(3) / 2], abs=1e-15)
    assert lam[0] > lam[1]


@pytest.mark.parametrize("arms", [(1.0,), (1.0, 2.0), (1.0, 2.0, 4.0), (0.5, 1.5, 2.0, 3.0)])
def test_exponents_match_linearization(arms):
    ev = np.linalg.eigvals(linearization_matrix(arms))
    lam = characteristic_exponents(arms)
    assert np.allclose(np.sort(ev.real), np.sort(np.concatenate([lam, -lam])), atol=1e-10)
    assert np.max(np.abs(ev.imag)) < 1e-10


def test_nonresonance_examples():
    r = check_nonresonance([1.0, np.sqrt(3) / 2])
    assert r.nonres_margin == pytest.approx(1 - np.sqrt(3) / 2, abs=1e-15)
    assert r.witness_k == (1,) and r.nonres_ok
    assert r.threshold == pytest.approx(np.sqrt(3) / 20)
    r0 = check_nonresonance([1.3])
    assert r0.nonres_margin == 1.3 and r0.nonres_ok
    r2 = check_nonresonance([1.0, 0.5])
    assert r2.nonres_margin == 0.0 and r2.witness_k == (2,) and not r2.nonres_ok
    with pytest.raises(ModelError):
        check_nonresonance([])


@given(st.lists(st.floats(0.05, 2.0), min_size=2, max_size=3))
@settings(max_examples=40, deadline=None)
def test_nonresonance_matches_brute_force(lams):
    lam0, rest = 2.0, np.array(lams)
    r = check_nonresonance([lam0, *rest])
    grids = np.stack(np.meshgrid(*([np.arange(0, 60)] * rest.size), indexing="ij"), -1).reshape(-1, rest.size)
    brute = np.min(np.abs(lam0 - grids @ rest))
    assert r.nonres_margin == pytest.approx(brute, abs=1e-12)


def test_diophantine_examples():
    e = check_diophantine([1.0], 0.0, 50)
    assert e.theta == pytest.approx(1.0)
    g = (1 + np.sqrt(5)) / 2
    e2 = check_diophantine([1.0, g], 1.0, 100)
    assert e2.theta > 0
    ks = lattice_box(2, 100)
    ks = ks[np.abs(ks).max(axis=1) > 0]
    brute = np.min(np.abs(ks @ np.array([1.0, g])) * np.abs(ks).max(axis=1))
    assert e2.theta == pytest.approx(brute, rel=1e-12)
    e3 = check_diophantine([1.0, 2.0], 1.0, 10)
    assert e3.theta == 0.0 and e3.witness_k == (2, -1)
    with pytest.raises(ModelError):
        check_diophantine([0.0], 1.0, 10)


def test_params_validation():
    with pytest.raises(ModelError):
        ModelParams((2.0, 1.0), (1.0,))
    with pytest.raises(ModelError):
        ModelParams((1.0,), (0.0,))
    with pytest.raises(ModelError):
        ModelParams((1.0,), (1.0,), mu=-1.0)


def test_reality_constraint_rejected():
    with pytest.raises(ModelError):
        PerturbationSpec(np.array([[1]]), np.array([[0, 0]]), np.array([1.0]))


@given(st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_hamiltonian_real_for_real_spec(seed):
    rng = np.random.default_rng(seed)
    p = _random_params(rng, 2, 1)
    st_ = PhaseState.from_vector(rng.normal(size=2 * p.dim), p.n, p.m)
    h = evaluate_hamiltonian(p, st_)
    assert isinstance(h, float) and np.isfinite(h)
    z = np.exp(1j * p.perturbation.phases(st_.phi, np.r_[st_.x, st_.z])) @ p.perturbation.amp
    assert abs(z.imag) < 1e-12


def test_potential_unique_max_at_origin():
    ax = np.linspace(-np.pi, np.pi, 121)
    X, Z = np.meshgrid(ax, ax, indexing="ij")
    U = potential((1.0, 2.0), np.stack([X, Z], -1))
    assert U.max() == 0.0
    assert np.count_nonzero(U > -1e-12) == 1


def test_pendulum_coupling_vanishes_to_second_order():
    V = PerturbationSpec.pendulum_coupling(1, 1)
    assert V.vanishes_on_torus(order=2)
    W = PerturbationSpec.from_real_terms([(1.0, 0.0, [1], [1, 0])], 1, 1)
    assert not W.vanishes_on_torus(order=1)
    assert V.sup_norm() == pytest.approx(2.0, abs=1e-9)


def test_phase_state_reduction():
    s = PhaseState([0.0], [7.0], 13.0, 0.0).reduced()
    assert s.phi[0] == pytest.approx(7.0 - 2 * np.pi)
    assert s.x == pytest.approx(13.0 - 4 * np.pi)
