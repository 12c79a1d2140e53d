import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepsplit.separatrix import (AnalyticityParams, ChartError, chart_jacobian_det, chart_of_s, chart_table, chi,
                                 domain_membership, dpsi, psi, s_of_x, s_of_x_quadrature, separatrix_orbit,
                                 separatrix_velocity, write_chart_csv)


def test_psi_values():
    assert psi(0.0) == 0.0
    assert psi(np.pi) == pytest.approx(2.0)
    assert psi(3 * np.pi) == pytest.approx(-2.0)


def test_psi_antiperiodic():
    x = np.random.default_rng(0).uniform(-20, 20, 10_000)
    assert np.max(np.abs(psi(x + 2 * np.pi) + psi(x))) < 1e-13


def test_orbit_values():
    x, y = separatrix_orbit(0.0)
    assert x == pytest.approx(np.pi) and y == pytest.approx(2.0)
    x, y = separatrix_orbit(-60.0)
    assert abs(x) < 1e-25 and abs(y) < 1e-25


@pytest.mark.parametrize("lam", [1.0, 0.7])
def test_orbit_residual(lam):
    t = np.linspace(-10, 10, 2001)
    x, _ = separatrix_orbit(t, lam)
    # ODE x' = lam psi(x) against a centred numeric derivative and the closed-form velocity
    h = 1e-5
    xd = (separatrix_orbit(t + h, lam)[0] - separatrix_orbit(t - h, lam)[0]) / (2 * h)
    assert np.max(np.abs(xd - lam * psi(x))) < 1e-8
    assert np.max(np.abs(separatrix_velocity(t, lam) - lam * psi(x))) < 1e-12


def test_chart_examples():
    # fl(pi) is below pi by ~1.2e-16, so the exact s(fl(pi)) is ~ -6e-17
    assert abs(s_of_x(np.pi)) < 2e-16
    cp = chart_of_s(0.0)
    assert cp.x == pytest.approx(np.pi) and cp.chi == pytest.approx(2.0)
    assert s_of_x_quadrature(2.0) == pytest.approx(float(s_of_x(2.0)), abs=1e-12)
    with pytest.raises(ChartError):
        s_of_x(0.0)
    with pytest.raises(ChartError):
        s_of_x(2 * np.pi)


def test_chart_roundtrip_and_bounds():
    x = np.linspace(0.01, 2 * np.pi - 0.01, 1000)
    assert np.max(np.abs(chart_of_s(s_of_x(x)).x - x)) < 1e-12
    # s -> x -> s has condition number ~ e^|s| / 4 for s > 0 (x crowds 2 pi)
    s = np.linspace(-15, 8, 1000)
    assert np.max(np.abs(s_of_x(chart_of_s(s).x) - s)) < 1e-12
    s = np.linspace(-15, 15, 1000)
    c = chi(s)
    assert np.all(2 * np.exp(-np.abs(s)) <= c) and np.all(c <= 4 * np.exp(-np.abs(s)))


def test_chart_straightens_flow():
    t = np.linspace(-6, 6, 801)
    x, _ = separatrix_orbit(t, 1.3)
    ds = np.gradient(s_of_x(x), t)
    assert np.max(np.abs(ds[1:-1] - 1.3)) < 1e-10


def test_chi_blows_up_near_pole():
    v = np.pi / 2 - np.logspace(-1, -6, 6)
    mags = np.abs(chi(1j * v))
    assert np.all(np.diff(mags) > 0) and mags[-1] > 1e5


@given(st.floats(0.2, 6.0), st.floats(-1.5, 1.5))
@settings(max_examples=30, deadline=None)
def test_chart_is_canonical(x, y):
    assert chart_jacobian_det(x, y) == pytest.approx(1.0, abs=1e-6)


def test_dpsi():
    x = np.linspace(0, 6, 7)
    assert np.allclose(dpsi(x), np.cos(x / 2))


def test_domain_examples():
    p = AnalyticityParams(rho=0.4 * np.pi, T=5.0, T0=12.0)
    assert domain_membership(0j, p, "finite")
    assert not domain_membership(complex(p.T + 1, 0), p, "finite")
    s = complex(p.T - 2 * p.T0 - 1, 0.49 * np.pi)
    assert domain_membership(s, p, "semi")
    assert not domain_membership(complex(0, 0.49 * np.pi), p, "semi") or 0.49 * np.pi <= p.rho


def test_analyticity_validation():
    with pytest.raises(ChartError):
        AnalyticityParams(rho=1.6)
    with pytest.raises(ChartError):
        AnalyticityParams(T=20.0, T0=12.0)
    with pytest.raises(ChartError):
        AnalyticityParams(delta=0.05, T=10.0, delta_log_constant=1.0)
    AnalyticityParams(delta=0.5, T=1.5, delta_log_constant=1.0)


def test_chart_csv(tmp_path):
    tab = chart_table(np.linspace(-2, 2, 5))
    write_chart_csv(tmp_path / "c.csv", tab)
    back = np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back, tab)
