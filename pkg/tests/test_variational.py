import numpy as np
import pytest

from sepsplit.separatrix import s_of_x, separatrix_orbit, separatrix_velocity
from sepsplit.variational import (GridTooCoarse, TransverseDirection, TransverseDirectionField, default_grid,
                                  read_field_csv, riccati_direction, riccati_limit_check, tilde_lambda_residual,
                                  transverse_fields, transversality_angle, transversality_angles,
                                  unstable_solution_slope, variational_flow, wronskian_pairing, write_field_csv)

L = 2.0


@pytest.fixture(scope="module")
def field_l2():
    return riccati_direction(L)


def test_flow_direction_solution():
    t = np.linspace(-8, 8, 41)
    st = variational_flow(L, -8.0, 8.0, [separatrix_velocity(-8.0), 0.0, 0.0, 0.0], t_eval=t)
    assert np.max(np.abs(st.xhat - separatrix_velocity(t))) < 1e-9
    assert np.max(np.abs(st.yhat)) < 1e-12


def test_flow_closed_form_sech():
    # xhat = 2 sech t solves xhat' = Dpsi(x0) xhat: the flow direction at lambda0 = 1
    t = np.linspace(-5, 5, 11)
    st = variational_flow(L, -5.0, 5.0, [2 / np.cosh(-5.0), 0, 0, 0], t_eval=t)
    assert np.max(np.abs(st.xhat - 2 / np.cosh(t))) < 1e-9


def test_flow_zero_init():
    st = variational_flow(L, -3.0, 3.0, [0, 0, 0, 0], t_eval=[0.0, 3.0])
    assert np.all(st.zhat == 0) and np.all(st.xhat == 0)


def test_flow_unstable_growth_rate():
    # limit matrix [[0, 1/l^2], [l + 1, 0]] has eigenvalue sqrt(l + 1)/l on (1, l sqrt(l+1))
    lam = np.sqrt(L + 1) / L
    p = L * np.sqrt(L + 1)
    st = variational_flow(L, -12.0, -8.0, [0, 0, 1.0, p], t_eval=[-12.0, -8.0])
    assert st.zhat[-1] / st.zhat[0] == pytest.approx(np.exp(4 * lam), rel=1e-6)


def test_riccati_limit_values(field_l2):
    d = field_l2.direction
    assert d.limit_slope == pytest.approx(2 * np.sqrt(3), abs=1e-15)
    assert riccati_limit_check(d) == pytest.approx(2 * np.sqrt(3), abs=1e-8)
    assert field_l2.lambda_u_at(1e-9) == pytest.approx(2 * np.sqrt(3), abs=1e-8)
    assert d.limit_slope / L ** 2 == pytest.approx(np.sqrt(3) / 2)


def test_riccati_interval(field_l2):
    lo, hi = field_l2.direction.slope_interval
    assert (lo, hi) == pytest.approx((2.0, 2 * np.sqrt(3)))
    assert np.all(field_l2.lambda_u >= lo) and np.all(field_l2.lambda_u <= hi)
    Lu = field_l2.Lambda_u
    assert np.all(Lu > 0) and np.all(Lu <= np.sqrt(3) / 2 + 1e-15)


def test_tilde_lambda_residual(field_l2):
    assert tilde_lambda_residual(field_l2, L) < 1e-8


def test_tilde_lambda_reintegration_oracle(field_l2):
    tighter = riccati_direction(L, rtol=5e-13, atol=5e-15)
    assert np.max(np.abs(tighter.lambda_u - field_l2.lambda_u)) < 1e-9


def test_constant_field_negative_control(field_l2):
    const = np.full_like(field_l2.grid, L * np.sqrt(L + 1))
    res = tilde_lambda_residual(field_l2, L, lambda_u=const)
    # lambda~ = 1 - cos x, maximal at x = pi
    assert res == pytest.approx(np.max(1 - np.cos(field_l2.grid)), abs=1e-12)
    assert res > 1.99


def test_empty_field_is_vacuous():
    assert tilde_lambda_residual(None) == 0.0
    assert transverse_fields((1.0,)) == []


def test_coarse_grid_rejected():
    fld = riccati_direction(L, grid=default_grid(0.05, 60))
    with pytest.raises(GridTooCoarse):
        tilde_lambda_residual(fld, L)


def test_stable_symmetry_and_direct_backward(field_l2):
    back = riccati_direction(L, branch="stable")
    assert np.max(np.abs(back.lambda_s - field_l2.lambda_s)) < 1e-9
    x = field_l2.grid
    assert np.allclose(field_l2.lambda_s, -field_l2.lambda_u_at(2 * np.pi - x), atol=1e-12)


def test_transversality(field_l2):
    ang, xm = transversality_angle(field_l2)
    lu_pi = float(field_l2.lambda_u_at(np.pi))
    assert float(field_l2.lambda_s_at(np.pi)) == pytest.approx(-lu_pi, abs=1e-12)
    assert ang == pytest.approx(2 * np.arctan(lu_pi), abs=1e-5)
    assert abs(xm - np.pi) < 0.01
    assert ang > 0.5
    assert np.all(transversality_angles(field_l2) > 0)


def test_transversality_degenerate_control(field_l2):
    deg = TransverseDirectionField(field_l2.grid, field_l2.lambda_u, field_l2.lambda_u.copy(),
                                   field_l2.direction, field_l2.T_asym)
    assert transversality_angle(deg)[0] == 0.0


def test_variational_slope_matches_field(field_l2):
    t = np.linspace(-6, 6, 25)
    slope = unstable_solution_slope(L, -20.0, 6.0, t)
    x, _ = separatrix_orbit(t)
    assert np.max(np.abs(slope - field_l2.lambda_u_at(x))) < 1e-7


def test_wronskian_bounded_away(field_l2):
    w = wronskian_pairing(field_l2)
    assert np.min(w) > 0.3
    assert np.allclose(w, np.abs(np.sin(transversality_angles(field_l2))), atol=1e-12)


@pytest.mark.parametrize("arms", [(1.0, 2.0, 3.0), (1.0, 1.5, 4.0)])
def test_per_direction_fields(arms):
    for fld in transverse_fields(arms, grid=default_grid(0.05, 2000)):
        lo, hi = fld.direction.slope_interval
        assert np.all((fld.lambda_u >= lo - 1e-12) & (fld.lambda_u <= hi + 1e-12))
        assert tilde_lambda_residual(fld) < 1e-7


def test_transverse_coefficient_on_orbit():
    d = TransverseDirection(L, L, 1.0)
    t = np.linspace(-4, 4, 9)
    x, _ = separatrix_orbit(t)
    assert np.allclose(d.coefficient(t), L + 1 - 2 / np.cosh(t) ** 2, atol=1e-14)
    assert np.allclose(d.coefficient(t), d.coefficient_x(x), atol=1e-14)


def test_field_csv_roundtrip(tmp_path, field_l2):
    write_field_csv(tmp_path / "f.csv", field_l2)
    back = read_field_csv(tmp_path / "f.csv", field_l2.direction)
    assert np.array_equal(back.lambda_u, field_l2.lambda_u)
    assert np.array_equal(back.grid, field_l2.grid)
    assert np.allclose(back.t, s_of_x(back.grid))
