import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from sepsplit.homological import (CylinderFunction, HomologicalError, MeanObstruction, OperatorSpec,
                                  ResonanceError, StageError, Truncation, homological_step,
                                  lattice_min_divisor, solve_cylinder, solve_extended, solve_torus_mode,
                                  truncation_factor)
from sepsplit.melnikov import FourierSeries
from sepsplit.separatrix import chi

S_CHECK = np.linspace(-6.0, 3.0, 7)


def _tr(m=0, K=4, D=2, N_s=128):
    return Truncation(1, m, K, D, 15.0, N_s)


def test_torus_mode_examples():
    sin = FourierSeries(1, 1, {(1,): -0.5j, (-1,): 0.5j})
    u = solve_torus_mode(sin, [1.0])
    # d/dphi u = sin(phi)  =>  u = -cos(phi)
    assert u.coeffs[(1,)] == pytest.approx(-0.5) and u.coeffs[(-1,)] == pytest.approx(-0.5)
    cos = FourierSeries(1, 1, {(1,): 0.5, (-1,): 0.5})
    u = solve_torus_mode(cos, [1.0], shift=1.0)
    phi = np.linspace(0, 6, 13)[:, None]
    assert np.allclose(u.evaluate(phi), (np.sin(phi) - np.cos(phi)).ravel() / 2, atol=1e-14)


def test_torus_mode_mean_obstruction():
    with pytest.raises(MeanObstruction):
        solve_torus_mode(FourierSeries(1, 1, {(0,): 1.0}), [1.0])


def test_exponential_profile_closed_form():
    tr = _tr()
    lam0, om = 1.0, 2.0
    v = CylinderFunction.zeros(tr).add_real(1.0, 0.0, [1], kind="tail", profile=np.exp)
    r = solve_cylinder(v, OperatorSpec(lam0, [om], np.zeros((0, 0))))
    assert r.residual < 1e-9
    # collocation error is relative to the global scale (the profile reaches e^T_num)
    atol = 1e-14 * r.u.norm_max()
    for s in S_CHECK:
        phi = np.array([0.3, 1.9])
        exact = np.real(np.exp(s + 1j * phi) / (lam0 + 1j * om))
        assert np.allclose(r.u.evaluate(phi, s)[:, 0], exact, rtol=1e-9, atol=atol)


def test_wedge_input_closed_form():
    # v = cos(phi) / chi(s) = cos(phi) (e^s + e^-s) / 4
    tr = _tr()
    lam0, om = 1.0, 2.0
    v = CylinderFunction.zeros(tr).add_real(1.0, 0.0, [1], kind="wedge")
    r = solve_cylinder(v, OperatorSpec(lam0, [om], np.zeros((0, 0))))
    assert r.u.has_wedge and r.residual < 1e-9
    atol = 1e-14 * r.u.norm_max()
    for s in S_CHECK:
        phi = np.array([0.0, 1.1])
        exact = np.real(np.exp(1j * phi) * (np.exp(-s) / (4 * (1j * om - lam0))
                                             + np.exp(s) / (4 * (1j * om + lam0))))
        assert np.allclose(r.u.evaluate(phi, s)[:, 0], exact, rtol=1e-9, atol=atol)


def test_monomial_closed_form():
    tr = _tr(m=1)
    om, lam1 = 2.0, 0.4
    v = CylinderFunction.zeros(tr).add_real(1.0, 0.0, [1], alpha=(1,))
    r = solve_extended(v, OperatorSpec(1.0, [om], np.diag([lam1])))
    z, phi = 0.7, np.array([0.2, 2.5])
    exact = np.real(z * np.exp(1j * phi) / (1j * om + lam1))
    assert np.allclose(r.u.evaluate(phi, -1.0, [z])[:, 0], exact, atol=1e-14)


def test_s_dependent_coefficient_against_ode():
    tr = _tr(m=1)
    om, lam1, eps = 2.0, 0.4, 0.1
    spec = OperatorSpec(1.0, [om], np.diag([lam1]), Lambda1=lambda s: eps * chi(s)[:, None, None])
    v = CylinderFunction.zeros(tr).add(1.0, (1,), (1,))
    r = solve_extended(v, spec)
    assert r.residual < 1e-9

    # lambda0 g' + (i om + lam1 + eps chi) g = 1, bounded at -inf
    def rhs(s, g):
        return 1.0 - (1j * om + lam1 + eps * chi(s)) * g

    s0 = -30.0
    sol = solve_ivp(rhs, (s0, 3.0), [1 / (1j * om + lam1 + eps * chi(s0))], rtol=1e-12, atol=1e-14,
                    dense_output=True)
    a1 = tr.taylor_index[(1,)]
    got = r.u.coefficients_at(S_CHECK)[0, a1, tr.mode_index((1,))]
    assert np.allclose(got, sol.sol(S_CHECK)[0], atol=1e-9)


def test_resonant_and_nondiagonal_rejected():
    with pytest.raises(ResonanceError):
        OperatorSpec(1.0, [2.0], np.diag([1.0])).validate()
    with pytest.raises(ResonanceError):
        OperatorSpec(1.0, [2.0], np.diag([0.5])).validate()  # lambda0 = 2 lambda1
    with pytest.raises(HomologicalError, match="diagonal"):
        OperatorSpec(1.0, [2.0], np.array([[0.3, 0.1], [0.0, 0.4]]))


def test_mean_obstruction_cylinder():
    tr = _tr()
    v = CylinderFunction.zeros(tr).add(1.0)
    with pytest.raises(MeanObstruction):
        solve_cylinder(v, OperatorSpec(1.0, [2.0], np.zeros((0, 0))))


def test_homological_step_cos():
    tr = _tr(m=1)
    om = 2.0
    spec = OperatorSpec(1.0, [om], np.diag([0.4]))
    f = CylinderFunction.zeros(tr).add_real(1.0, 0.0, [1])
    sol = homological_step(spec, f)
    a0 = tr.taylor_index[(0,)]
    # L S0 = -cos(phi) => S0 = -sin(phi) / omega
    assert sol.S0hat.const[0, a0, tr.mode_index((1,))] == pytest.approx(1j / (2 * om), abs=1e-14)
    assert np.allclose(sol.S0hat.tail, 0)
    assert abs(sol.c_hat) < 1e-14 and np.allclose(sol.xi_hat, 0)
    # beta = d_phi S0 integrated once more: -sin(phi) / omega^2
    assert sol.beta_hat.const[0, a0, tr.mode_index((1,))] == pytest.approx(1j / (2 * om ** 2), abs=1e-14)
    assert max(sol.residuals.values()) < 1e-10


def test_homological_step_zero_input():
    tr = _tr(m=1)
    sol = homological_step(OperatorSpec(1.0, [2.0], np.diag([0.4])), CylinderFunction.zeros(tr))
    for part in (sol.S0hat, sol.beta_hat, sol.b_hat, sol.flat_hat):
        assert part.norm_max() == 0
    assert sol.c_hat == 0 and sol.lambda0_hat == 0 and np.all(sol.Lambda0_hat == 0)


def test_homological_step_chi_profile():
    tr = Truncation(1, 1, 4, 2, 15.0, 128)
    spec = OperatorSpec(1.0, [2.0], np.diag([0.4]))
    f = CylinderFunction.zeros(tr).add_real(1.0, 0.0, [1], kind="tail", profile=chi)
    sol = homological_step(spec, f)
    assert sol.residuals["S0"] < 1e-9 and sol.residuals["beta"] < 1e-9


def test_stage_error_on_bad_input():
    tr = _tr()
    f = CylinderFunction.zeros(tr, ncomp=2)
    with pytest.raises(StageError, match="input"):
        homological_step(OperatorSpec(1.0, [2.0], np.zeros((0, 0))), f)


def _random_v(tr, coeffs):
    v = CylinderFunction.zeros(tr, ncomp=1)
    for k, (c, s, t) in zip(range(-2, 3), coeffs):
        if k:
            v.add(c + 1j * s, (k,))
        v.add(t, (k,), kind="tail", profile=lambda x: chi(x) ** 2)
    return v


coef = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))


@given(st.lists(coef, min_size=5, max_size=5), st.lists(coef, min_size=5, max_size=5),
       st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=20, deadline=None)
def test_linearity(c1, c2, a, b):
    tr = _tr(K=2)
    spec = OperatorSpec(1.0, [2.0], np.zeros((0, 0)))
    v1, v2 = _random_v(tr, c1), _random_v(tr, c2)
    u1 = solve_extended(v1, spec).u
    u2 = solve_extended(v2, spec).u
    u = solve_extended(a * v1 + b * v2, spec).u
    diff = u - (a * u1 + b * u2)
    assert diff.norm_max() <= 1e-12 * max(1.0, u.norm_max())


@given(st.lists(coef, min_size=5, max_size=5))
@settings(max_examples=20, deadline=None)
def test_norm_ratio_bound(c):
    tr = _tr(K=2)
    spec = OperatorSpec(1.0, [2.0], np.zeros((0, 0)))
    v = _random_v(tr, c)
    r = solve_extended(v, spec)
    if v.norm_max() > 0:
        assert r.u.norm_l1() <= truncation_factor(tr) / r.min_divisor * v.norm_max()


def test_lattice_min_divisor_bruteforce():
    K, D, om, lam1 = 3, 3, 0.7, 0.45
    tr = Truncation(1, 1, K, D, 15.0, 32)
    spec = OperatorSpec(1.0, [om], np.diag([lam1]))
    best = min(abs(1j * k * om + j * lam1) for k in range(-K, K + 1) for j in range(D + 1)
               if abs(1j * k * om + j * lam1) > 0)
    assert lattice_min_divisor(tr, spec) == pytest.approx(best, rel=1e-14)


def test_save_load_roundtrip(tmp_path):
    tr = _tr(m=1)
    u = CylinderFunction.zeros(tr).add_real(1.0, 0.5, [2], alpha=(1,)).add(0.3, (1,), kind="wedge")
    u.add(1.0, (0,), kind="tail", profile=chi)
    u.save(tmp_path / "u")
    w = CylinderFunction.load(tmp_path / "u")
    assert np.array_equal(w.const, u.const) and np.array_equal(w.tail, u.tail)
    assert np.array_equal(w.wedge, u.wedge) and w.trunc == tr
