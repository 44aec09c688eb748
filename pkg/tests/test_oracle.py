import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbarlab.dbar_op import assemble, count_below, singular_values
from dbarlab.obstacle import solve_psor
from dbarlab.oracle import (
    OracleError, contact_intervals, coverage_bound, lift_to_grid, mode_operator,
    oracle_for_weight, oracle_obstacle_1d, oracle_spectrum, real_derivative,
    reflection_asymmetry, required_k_max, resample, siny_solution, siny_tangent_parameter, siny_v_plus,
    solve_obstacle_1d, write_obstacle_1d_csv, y_profile,
)
from dbarlab.torus_grid import TWO_PI


def test_flat_profile_reproduces_2d_modes():
    # phi' = 0: mode k gives (h/2) sqrt(k^2 + l^2) over l
    ny, h = 16, 0.1
    phi = np.zeros(ny)
    k_max = 3
    s = oracle_spectrum(phi, h, k_max, saturation=False).array
    l = np.fft.fftfreq(ny, 1 / ny)
    ref = np.sort(np.concatenate([(h / 2) * np.hypot(k, l) for k in range(-k_max, k_max + 1)]))
    assert np.allclose(s, ref, atol=1e-13)


def test_k_max_too_small():
    y = np.arange(32) * TWO_PI / 32
    need = required_k_max(real_derivative(np.sin(y)), 0.1)
    with pytest.raises(OracleError, match=f"need k_max >= {need}"):
        oracle_spectrum(np.sin(y), 0.1, k_max=5)


@given(k=st.integers(-40, 40), h=st.floats(0.05, 0.5), a=st.floats(0.1, 2.0))
def test_mode_lower_bound(k, h, a):
    y = np.arange(32) * TWO_PI / 32
    dphi = real_derivative(a * np.sin(y) + 0.3 * a * np.cos(2 * y))
    smin = mode_operator(dphi, h, k).svals()[0]
    assert smin >= 0.5 * (abs(h * k) - np.abs(dphi).max()) - 1e-12


def test_saturation_holds(siny32):
    s = oracle_for_weight(siny32, 0.1)
    dphi = real_derivative(y_profile(siny32))
    assert s.flags == ()
    assert s.valid_below == pytest.approx(coverage_bound(dphi, 0.1, required_k_max(dphi, 0.1)))


def test_oracle_matches_2d_full_spectrum(siny32):
    for h in (0.3, 0.15):
        full = singular_values(assemble(siny32, h)).array
        orc = oracle_for_weight(siny32, h)
        below = full[full < orc.valid_below]
        got = orc.array[: below.size]
        assert np.allclose(got, below, rtol=1e-8, atol=1e-12 * full[-1])


def test_oracle_counts_tau_05_and_25(siny64):
    # oracle alone: cheap at 64 points
    assert count_below(oracle_for_weight(siny64, 0.12), math.exp(-2.5 / 0.12)) == 1
    assert count_below(oracle_for_weight(siny64, 0.1), math.exp(-5.0)) >= 2


def test_y_profile_requires_y_only(bump32):
    with pytest.raises(OracleError, match="depends on x"):
        y_profile(bump32)


def test_resample_exact_for_trig():
    y1 = np.arange(16) * TWO_PI / 16
    y2 = np.arange(64) * TWO_PI / 64
    f = np.sin(y1) + 0.2 * np.cos(3 * y1)
    assert np.allclose(resample(f, 64), np.sin(y2) + 0.2 * np.cos(3 * y2), atol=1e-13)


# -- 1-D obstacle -------------------------------------------------------------

def test_critical_case_constant():
    sol = oracle_obstacle_1d(np.sin, 2.0)
    assert np.abs(sol.psi + 1.0).max() <= 1e-12


def test_siny_affine_bands_and_closed_form():
    sol = oracle_obstacle_1d(np.sin, 0.5, n_fine=4096)
    d2 = np.roll(sol.psi, 1) - 2 * sol.psi + np.roll(sol.psi, -1)
    band = (sol.psi > sol.phi - 0.5 + 1e-9) & (sol.psi < sol.phi - 1e-9)
    assert np.abs(d2[band]).max() <= 1e-8
    assert np.abs(sol.psi - siny_solution(sol.y, 0.5)).max() <= 1e-7


def test_contact_symmetry():
    sol = oracle_obstacle_1d(np.sin, 0.5, n_fine=4096)
    m_plus, m_minus = sol.masks()
    assert reflection_asymmetry(m_plus, 1.5 * np.pi) == 0
    assert reflection_asymmetry(m_minus, 0.5 * np.pi) == 0
    s = siny_tangent_parameter(0.5)
    (a, b), = contact_intervals(m_plus, sol.y)
    assert a == pytest.approx(np.pi + s, abs=2 * TWO_PI / 4096)
    assert b == pytest.approx(TWO_PI - s, abs=2 * TWO_PI / 4096)


def test_tau_range_and_resolution_checks():
    with pytest.raises(OracleError):
        oracle_obstacle_1d(np.sin, 2.5)
    with pytest.raises(OracleError, match="n_fine"):
        oracle_obstacle_1d(np.sin, 0.5, n_fine=512)


def test_nonconvergence():
    with pytest.raises(OracleError, match="failed"):
        oracle_obstacle_1d(np.sin, 0.5, max_iter=2)


def test_matched_resolution_agrees_with_2d(siny64):
    sol2 = solve_psor(siny64, 0.5)
    sol1 = solve_obstacle_1d(y_profile(siny64), 0.5)
    assert np.abs(sol2.psi.values - lift_to_grid(sol1, siny64.grid)).max() <= 1e-4


def test_fine_oracle_within_discretization_of_2d(siny64):
    sol2 = solve_psor(siny64, 0.5)
    fine = oracle_obstacle_1d(y_profile(siny64), 0.5)
    assert np.abs(sol2.psi.values - lift_to_grid(fine, siny64.grid)).max() <= 0.25 * siny64.grid.dy**2


def test_closed_form_helpers():
    s = siny_tangent_parameter(0.5)
    assert 2 * (math.sin(s) - s * math.cos(s)) == pytest.approx(0.5, abs=1e-14)
    assert siny_v_plus(0.5) == pytest.approx(7.4538, abs=1e-4)
    assert siny_tangent_parameter(2.0) == pytest.approx(math.pi / 2)
    # continuity of the closed form at the tangent points
    y = np.array([s - 1e-12, s + 1e-12, math.pi + s - 1e-12, math.pi + s + 1e-12])
    v = siny_solution(y, 0.5)
    assert abs(v[0] - v[1]) < 1e-9 and abs(v[2] - v[3]) < 1e-9


@given(tau=st.floats(0.01, 2.0))
def test_closed_form_in_box(tau):
    y = np.linspace(0, TWO_PI, 257)
    v = siny_solution(y, tau)
    assert np.all(v <= np.sin(y) + 1e-12) and np.all(v >= np.sin(y) - tau - 1e-12)


def test_intervals_wrap_seam():
    mask = np.zeros(8, dtype=bool)
    mask[[7, 0, 1]] = True
    y = np.arange(8.0)
    assert contact_intervals(mask, y) == [(7.0, 1.0)]


def test_csv_output(tmp_path):
    sol = oracle_obstacle_1d(np.sin, 1.0, n_fine=1024)
    write_obstacle_1d_csv(tmp_path / "p.csv", sol)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "y,psi,phi" and len(lines) == 1025
