import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from basinforge.analysis.elliptic import (
    complete_K, cubic_orbit_amplitude, cubic_orbit_state, jacobi_elliptic,
)
from basinforge.analysis.floquet import find_periodic_orbit, floquet_mu, monodromy
from basinforge.analysis.spinorbit import (
    SatelliteData, gamma_in_inverse_years, load_satellites, spin_orbit_params,
)
from basinforge.analysis.thresholds import (
    analytic_threshold_spin_orbit, cubic_threshold_bisection, cubic_threshold_reference,
    phase_condition, spin_orbit_threshold_bisection, theta0_from_C, write_threshold_csv,
)
from basinforge.classify import winding_count
from basinforge.errors import NoSubharmonic, NotFound, NotTabulated, SchemaError
from basinforge.integrate import IntegratorConfig, integrate_to
from basinforge.models import (
    Constant, CubicParams, LinearRamp, PhaseState, SpinOrbitParams, damping_integral,
)

RK = IntegratorConfig(method="rk", tol=1e-12)
ROOT_HALF = 1 / math.sqrt(2)


# ---------------------------------------------------------------------------
# elliptic functions


def K_quadrature(k):
    val, _ = quad(lambda th: 1 / math.sqrt(1 - (k * math.sin(th)) ** 2), 0, math.pi / 2,
                  epsabs=1e-13, epsrel=1e-13)
    return val


@pytest.mark.parametrize("k", [0.0, 0.3, ROOT_HALF, 0.9, 0.999])
def test_K_matches_quadrature(k):
    assert complete_K(k) == pytest.approx(K_quadrature(k), rel=1e-12)


def test_K_at_root_half():
    assert complete_K(ROOT_HALF) == pytest.approx(1.854074677, abs=1e-9)


def test_elliptic_rejects_bad_modulus():
    with pytest.raises(ValueError):
        complete_K(1.0)
    with pytest.raises(ValueError):
        jacobi_elliptic(0.3, -0.1)


def test_elliptic_at_zero():
    assert jacobi_elliptic(0.0, 0.6) == (1.0, 0.0, 1.0)


@given(st.floats(-50, 50), st.floats(0.0, 0.999))
def test_elliptic_identities(u, k):
    cn, sn, dn = jacobi_elliptic(u, k)
    assert abs(sn * sn + cn * cn - 1) <= 1e-12
    assert abs(dn * dn + k * k * sn * sn - 1) <= 1e-12


@given(st.floats(-10, 10), st.floats(0.0, 0.99))
def test_elliptic_periodicity(u, k):
    K = complete_K(k)
    assert jacobi_elliptic(u + 4 * K, k)[0] == pytest.approx(jacobi_elliptic(u, k)[0], abs=1e-10)


@settings(max_examples=30)
@given(st.floats(0.0, 1.5), st.floats(0.0, 0.95))
def test_sn_inverts_incomplete_integral(phi, k):
    # independent oracle: u = F(phi, k) implies sn(u) = sin(phi), cn(u) = cos(phi)
    u, _ = quad(lambda th: 1 / math.sqrt(1 - (k * math.sin(th)) ** 2), 0, phi, epsabs=1e-14)
    cn, sn, dn = jacobi_elliptic(u, k)
    assert sn == pytest.approx(math.sin(phi), abs=1e-11)
    assert cn == pytest.approx(math.cos(phi), abs=1e-11)
    assert dn == pytest.approx(math.sqrt(1 - (k * math.sin(phi)) ** 2), abs=1e-11)


@pytest.mark.parametrize("p,q", [(1, 2), (1, 4), (1, 1)])
def test_free_orbit_closes_with_modulus_convention(p, q):
    # x = alpha cn(alpha t), k = 1/sqrt 2, 2 pi alpha = 4 omega K: period 2 pi q / p
    alpha = cubic_orbit_amplitude(p / q)
    free = CubicParams(0.0, Constant(1e-300))
    start = PhaseState(alpha, 0.0)
    end = integrate_to(free, start, 2 * math.pi * q, RK)
    assert (end.q, end.v) == pytest.approx((alpha, 0.0), abs=1e-9)
    assert winding_count(free, start, q, RK) == p
    # the other reading (modulus 1/2) does not close
    wrong = 4 * (p / q) * complete_K(0.5) / (2 * math.pi)
    end = integrate_to(free, PhaseState(wrong, 0.0), 2 * math.pi * q, RK)
    assert abs(end.q - wrong) > 1e-3 or abs(end.v) > 1e-3


def test_free_orbit_state_solves_ode():
    alpha = cubic_orbit_amplitude(0.5)
    x0, v0 = cubic_orbit_state(alpha, 0.3)
    end = integrate_to(CubicParams(0.0, Constant(1e-300)), PhaseState(x0, v0, 0.3), 2.3, RK)
    x1, v1 = cubic_orbit_state(alpha, 2.3)
    assert (end.q, end.v) == pytest.approx((x1, v1), abs=1e-10)


# ---------------------------------------------------------------------------
# analytic thresholds

SM_ROW = {(1, 2): 2.045e-1, (3, 2): 1.308, (2, 1): 3.251e-1, (5, 2): 9.163e-2,
          (3, 1): 2.976e-2, (7, 2): 8.739e-3}


@pytest.mark.parametrize("pq", SM_ROW)
def test_mercury_threshold_row(pq):
    c0 = analytic_threshold_spin_orbit(0.2056, *pq).C0
    assert float(f"{c0:.4g}") == SM_ROW[pq]


def test_moon_threshold_spot_values():
    assert analytic_threshold_spin_orbit(0.0549, 3, 2).C0 == pytest.approx(0.3818, rel=2e-4)
    # the 2:1 value computes to 2.5445e-2, which a 4-digit rounding makes 2.544e-2
    assert analytic_threshold_spin_orbit(0.0549, 2, 1).C0 == pytest.approx(2.5445e-2, rel=1e-4)


def test_threshold_at_zero_eccentricity():
    for p, q in [(1, 2), (3, 2), (2, 1), (5, 2), (-1, 2)]:
        assert analytic_threshold_spin_orbit(0.0, p, q).C0 == 0.0
    assert analytic_threshold_spin_orbit(0.0, 1, 1).C0 == math.inf
    assert analytic_threshold_spin_orbit(0.2, 1, 1).C0 == math.inf


def test_threshold_off_harmonics_is_zero():
    assert analytic_threshold_spin_orbit(0.2, 4, 3).C0 == 0.0
    assert analytic_threshold_spin_orbit(0.2, 9, 2).C0 == 0.0  # k = 9 beyond the series


def test_theta0_at_zero_C():
    st_, un = theta0_from_C(0.2056, 3, 2, 0.0)
    assert {round(st_, 12), round(un, 12)} == {0.0, round(math.pi / 2, 12)}


def test_theta0_merges_at_fold():
    c0 = analytic_threshold_spin_orbit(0.2056, 3, 2).C0
    a, b = theta0_from_C(0.2056, 3, 2, c0 * (1 - 1e-10))
    assert abs(a - b) < 1e-4
    assert (2 * a) % (math.pi / 2) == pytest.approx(math.pi / 2, abs=1e-4) or \
        (2 * a) % (math.pi / 2) == pytest.approx(0.0, abs=1e-4)
    with pytest.raises(NoSubharmonic):
        theta0_from_C(0.2056, 3, 2, c0)
    with pytest.raises(NoSubharmonic):
        theta0_from_C(0.2056, 4, 3, 0.1)


def test_theta0_mercury_half_threshold_by_quadrature():
    c = 0.654
    for th in theta0_from_C(0.2056, 3, 2, c):
        assert abs(math.sin(2 * th)) == pytest.approx(
            c * 0.5 / (2 * abs(SpinOrbitParams(0.2056, 0.0, Constant(1)).coeffs[3])), rel=1e-12)
        assert abs(phase_condition(0.2056, 3, 2, c, th)) < 1e-10


def test_theta0_quadrature_root_matches():
    # independent root of the averaged phase condition
    e, c = 0.2056, 0.654
    stable, unstable = theta0_from_C(e, 3, 2, c)
    grid = np.linspace(0, math.pi, 13)
    roots = []
    for a, b in zip(grid[:-1], grid[1:]):
        fa, fb = phase_condition(e, 3, 2, c, a), phase_condition(e, 3, 2, c, b)
        if fa * fb < 0:
            roots.append(brentq(lambda t: phase_condition(e, 3, 2, c, t), a, b, xtol=1e-13))
    assert sorted(roots) == pytest.approx(sorted([stable, unstable]), abs=1e-9)


def test_cubic_reference_table():
    assert cubic_threshold_reference(1, 2).C0 == 0.178442
    assert cubic_threshold_reference(1, 2).n_order == 1
    assert cubic_threshold_reference(1, 1).C0 == 0.146322
    assert cubic_threshold_reference(1, 1).n_order == 2
    assert cubic_threshold_reference(1, 10).C0 == 0.000078
    with pytest.raises(NotTabulated):
        cubic_threshold_reference(3, 4)


def test_threshold_csv(tmp_path):
    rows = [analytic_threshold_spin_orbit(0.2056, 3, 2), analytic_threshold_spin_orbit(0.2, 1, 1)]
    write_threshold_csv(rows, tmp_path / "t.csv", eps=1e-3)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "p,q,omega,C0,n_order,method,gamma_thr"
    assert lines[1].startswith("3,2,1.5,1.308,1,analytic,")
    assert lines[2].split(",")[3] == "inf"


# ---------------------------------------------------------------------------
# periodic orbits and thresholds by bisection


def test_spin_orbit_three_halves_orbit_from_first_order_seed():
    params = SpinOrbitParams(0.2056, 1e-3, Constant(5e-4))
    orbit = find_periodic_orbit(params, 3, 2)
    end = integrate_to(params, orbit, orbit.t + 4 * math.pi, RK)
    assert end.q - orbit.q == pytest.approx(3 * 2 * math.pi, abs=1e-9)
    assert end.v == pytest.approx(orbit.v, abs=1e-10)
    assert orbit.v == pytest.approx(1.5, abs=0.01)


def test_orbit_above_threshold_is_not_found():
    with pytest.raises(NotFound):
        find_periodic_orbit(CubicParams(0.1, Constant(0.025)), 1, 2)
    with pytest.raises(NotFound):
        find_periodic_orbit(SpinOrbitParams(0.2056, 1e-3, Constant(1.4e-3)), 3, 2)


def test_cubic_threshold_small_eps():
    est = cubic_threshold_bisection(0.01, 1, 2)
    lo, hi = est.bracket
    assert hi - lo <= 1e-3 * lo
    assert est.gamma_thr == pytest.approx(0.178442 * 0.01, rel=0.05)


def test_cubic_threshold_paper_eps():
    est = cubic_threshold_bisection(0.1, 1, 2)
    assert est.gamma_thr == pytest.approx(0.0178, rel=0.15)


@pytest.mark.parametrize("e", [0.1, 0.2056])
@pytest.mark.parametrize("pq", [(1, 2), (3, 2), (2, 1), (5, 2)])
def test_spin_orbit_threshold_tends_to_first_order(e, pq):
    c0 = analytic_threshold_spin_orbit(e, *pq).C0
    for eps, tol in ((1e-2, 0.10), (1e-3, 0.03)):
        est = spin_orbit_threshold_bisection(e, eps, *pq)
        assert est.gamma_thr / (c0 * eps) == pytest.approx(1.0, abs=tol)


# ---------------------------------------------------------------------------
# monodromy


@pytest.mark.parametrize("g", [0.002, 0.009])
def test_monodromy_determinant_and_stability(g):
    params = CubicParams(0.1, Constant(g))
    orbit = find_periodic_orbit(params, 1, 2)
    m = monodromy(params, orbit, 2)
    assert m.det_rel_error < 1e-6
    assert m.det_expected == pytest.approx(math.exp(-g * 4 * math.pi))
    assert m.stable
    assert all(abs(lam) < 1 for lam in m.eigenvalues)


def test_monodromy_determinant_with_ramp_window():
    params = CubicParams(0.1, LinearRamp(0.01, 0.2))  # knee at t = 20
    state = PhaseState(0.4, -0.2, 15.0)
    m = monodromy(params, state, 2)
    expected = math.exp(-damping_integral(params.schedule, 15.0, 15.0 + 4 * math.pi))
    assert m.det_expected == pytest.approx(expected)
    assert m.det_rel_error < 1e-6


def test_exponent_proportional_to_gamma():
    gs = np.array([0.002, 0.004, 0.006, 0.008, 0.01])
    lyap = []
    orbit = None
    for g in gs:
        params = CubicParams(0.1, Constant(g))
        orbit = find_periodic_orbit(params, 1, 2, orbit)
        lyap.append(max(monodromy(params, orbit, 2).lyapunov))
    lyap = np.array(lyap)
    slope = np.dot(gs, lyap) / np.dot(gs, gs)
    resid = lyap - slope * gs
    r2 = 1 - np.sum(resid**2) / np.sum((lyap - lyap.mean()) ** 2)
    assert r2 >= 0.99
    # complex multiplier pair: |lambda|**2 = det forces exponent = -gamma / 2
    assert slope == pytest.approx(-0.5, rel=1e-6)


def test_mu_by_quadrature():
    from scipy.special import ellipj

    mu = floquet_mu()
    K = complete_K(ROOT_HALF)
    u = np.linspace(0, 4 * K, 400001)
    sn, cn, _, _ = ellipj(u, 0.5)
    assert mu == pytest.approx(np.trapezoid(sn**2 * cn**2, u) / (4 * K), rel=1e-8)
    assert mu == pytest.approx(floquet_mu(0.25), rel=1e-10)
    assert 3 * mu == pytest.approx(0.3708, abs=1e-4)


# ---------------------------------------------------------------------------
# physical parameters


def test_satellite_table_loads():
    rows = load_satellites()
    assert [r.satellite for r in rows] == ["Moon", "Mercury", "Ganymede", "Io", "Enceladus", "Dione"]
    with pytest.raises(ValueError):
        SatelliteData("x", "y", "z", 0.1, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0)


def test_satellite_schema_error(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("system,primary,satellite,e,omega_T,M,M0,R,rho,k2,xi,Q\nA,B,C,0,1,1,1,1,1,1,1,1\n")
    with pytest.raises(SchemaError, match="h2"):
        load_satellites(p)


def test_jupiter_satellites_match_three_digits():
    rows = {r.satellite: r for r in load_satellites()}
    eps, g = spin_orbit_params(rows["Ganymede"])
    assert (float(f"{eps:.3g}"), float(f"{g:.3g}")) == (4.29e-4, 1.91e-5)
    eps, g = spin_orbit_params(rows["Io"])
    assert float(f"{g:.3g}") == 1.71e-4
    assert eps == pytest.approx(3.85e-3, rel=3e-3)


def test_parameter_formulas():
    d = SatelliteData("t", "p", "s", 0.0, 1.0, M=2.0, M0=16.0, R=1.0, rho=2.0, k2=0.1, xi=0.3,
                      Q=10.0, h2=1.0)
    eps, g = spin_orbit_params(d)
    assert g == pytest.approx(0.1 * (1 / 8) * 8)
    assert eps == pytest.approx(1.5 * 1.5 * 1.0)
    assert g / eps == pytest.approx(0.1 / 2.25)


def test_inverse_years():
    assert gamma_in_inverse_years(3.75e-8, 2 * math.pi / 2.66e-6) == pytest.approx(3.15e-6, rel=2e-3)
    assert gamma_in_inverse_years(3.24e-8, 2 * math.pi / 8.27e-7) == pytest.approx(8.46e-7, rel=2e-3)
    assert gamma_in_inverse_years(0.0, 1e6) == 0.0
    with pytest.raises(ValueError):
        gamma_in_inverse_years(1.0, 0.0)
