from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraqed.field import (C_LIGHT, FieldStateGrid, GridResolutionError, ModeSpec, NormalizationError,
                           QuadratureGrid, amplitude_from_photons, apply_ladder, beta_from_volume,
                           coherent_state, coherent_wavefunction, default_half_width, evolve_vacuum,
                           expectation, grid_for_mode, load_field_state, save_field_state, vacuum_state)


def literal_coherent(mode, t, q):
    """The coherent state exactly as the closed form is usually written (small N only)."""
    n0, w, th = mode.n_photons, mode.omega, mode.theta
    c = math.pi ** -0.25 * cmath.exp(-n0 / 2 - 1j * w * t / 2 - n0 * cmath.exp(-2j * (w * t - th)) / 2)
    return c * np.exp(-q * q / 2 + q * cmath.exp(-1j * w * t + 1j * th) * math.sqrt(2 * n0))


def test_mode_validation():
    with pytest.raises(ValueError):
        ModeSpec(omega=0.0)
    with pytest.raises(ValueError):
        ModeSpec(omega=1.0, n_photons=-1.0)
    with pytest.raises(ValueError):
        ModeSpec(omega=1.0, beta=-0.1)
    m = ModeSpec(0.057, 0.0, 5e4, 1e-3)
    assert m.amplitude == pytest.approx(1e-3 * math.sqrt(1e5), rel=1e-15)


def test_beta_and_amplitude_helpers():
    assert beta_from_volume(1.0, 2 * math.pi * C_LIGHT ** 2) == pytest.approx(1.0, rel=1e-14)
    assert amplitude_from_photons(1e-3, 5e4) == pytest.approx(0.31623, abs=1e-5)
    # beta / A0 = 1/sqrt(2N) ~ 1e-7 for N = 5e13
    assert 1.0 / math.sqrt(2 * 5e13) == pytest.approx(1e-7, rel=1e-12)
    with pytest.raises(ValueError):
        beta_from_volume(1.0, 0.0)


def test_grid_rules():
    assert default_half_width() == 10.0
    assert default_half_width(9.0) == 18.0
    m = ModeSpec(0.057, 0.0, 8.0)
    g = grid_for_mode(m)
    assert g.center == pytest.approx(4.0)
    assert g.q_min == pytest.approx(-6.0) and g.q_max == pytest.approx(14.0)
    with pytest.raises(ValueError):
        QuadratureGrid(0.0, 1.0, 8)


def test_vacuum_value_at_origin():
    m = ModeSpec(1.0)
    assert abs(coherent_wavefunction(m, 0.0, 0.0)) == pytest.approx(math.pi ** -0.25, rel=1e-15)
    assert math.pi ** -0.25 == pytest.approx(0.7511, abs=1e-4)


@pytest.mark.parametrize("n0", [0.0, 0.5, 2.0, 6.0])
@pytest.mark.parametrize("t", [0.0, 0.7, 3.3])
def test_stable_form_matches_literal_form(n0, t):
    m = ModeSpec(1.3, 0.4, n0)
    q = np.linspace(-8, 12, 101)
    np.testing.assert_allclose(coherent_wavefunction(m, t, q), literal_coherent(m, t, q), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(n0=st.floats(0, 200), theta=st.floats(-3.2, 3.2), t=st.floats(0, 200))
def test_coherent_state_is_normalized(n0, theta, t):
    m = ModeSpec(0.057, theta, n0)
    g = grid_for_mode(m, t)
    G = coherent_state([m], t, [g])
    assert G.norm() == pytest.approx(1.0, abs=1e-10)


def test_mean_q_of_four_photon_state():
    m = ModeSpec(0.3, 0.0, 4.0)
    G = coherent_state([m], 0.0)
    assert expectation(G, "q").real == pytest.approx(math.sqrt(8.0), abs=1e-12)
    assert expectation(G, "q").real == pytest.approx(2.8284, abs=1e-4)


def test_expectation_examples():
    m = ModeSpec(0.3, 0.0, 2.0, beta=0.1)
    G = coherent_state([m], 0.0)
    assert abs(expectation(G, "d/dq")) < 1e-12
    t = (math.pi / 2) / m.omega
    Gt = coherent_state([m], t, [grid_for_mode(m, t)])
    assert abs(expectation(Gt, "A_hat", 0, t)) < 1e-12
    vac = vacuum_state(m)
    assert abs(expectation(vac, "q")) < 1e-14


def test_expectation_rejects_unnormalized():
    G = coherent_state([ModeSpec(1.0, 0.0, 1.0)])
    with pytest.raises(NormalizationError):
        expectation(G.with_amplitudes(2 * G.amplitudes), "q")


def test_ladder_on_vacuum_and_coherent():
    m = ModeSpec(1.0, 0.7, 0.0)
    vac = coherent_state([m])
    assert np.max(np.abs(apply_ladder(vac, 0, "annihilation").amplitudes)) < 1e-8
    m = ModeSpec(1.0, 0.7, 5.0)
    G = coherent_state([m])
    aG = apply_ladder(G, 0, "annihilation").amplitudes
    mask = np.abs(G.amplitudes) > 1e-8
    ratio = aG[mask] / G.amplitudes[mask]
    np.testing.assert_allclose(ratio, cmath.exp(0.7j) * math.sqrt(5.0), atol=1e-6)
    n_mean = np.vdot(G.amplitudes, apply_ladder(G, 0, "number").amplitudes) * G.volume_element
    assert n_mean.real == pytest.approx(5.5, abs=1e-10)


def test_ladder_algebra_on_generic_state():
    m = ModeSpec(1.0)
    g = QuadratureGrid.centered(1.0, 10.0, 256)
    q = g.points
    amps = np.exp(-0.4 * (q - 1.3) ** 2 + 0.6j * q - 0.05j * q ** 2) * (1 + 0.2 * q)
    G = FieldStateGrid((m,), (g,), amps).normalized()
    a = apply_ladder(G, 0, "annihilation").amplitudes
    ada = np.vdot(a, a) * G.volume_element
    n = np.vdot(G.amplitudes, apply_ladder(G, 0, "number").amplitudes) * G.volume_element
    assert ada.real + 0.5 == pytest.approx(n.real, abs=1e-10)


def test_ladder_resolution_guard():
    m = ModeSpec(1.0)
    g = QuadratureGrid.centered(0.0, 10.0, 32)
    q = g.points
    G = FieldStateGrid((m,), (g,), np.exp(-q ** 2 / 2 + 4j * q)).normalized()
    with pytest.raises(GridResolutionError):
        apply_ladder(G, 0, "annihilation")


def test_evolve_vacuum_full_period():
    m = ModeSpec(0.057, 0.3, 10.0)
    G = coherent_state([m], 0.0, [QuadratureGrid.centered(0.0, 16.0, 256)])
    out = evolve_vacuum(G, m.period)
    ov = G.inner(out)
    assert abs(ov) > 1 - 1e-6
    assert cmath.phase(ov) == pytest.approx(cmath.phase(cmath.exp(-0.5j * m.omega * m.period)), abs=1e-8)
    assert out.norm() == pytest.approx(1.0, abs=1e-10)


def test_evolve_vacuum_half_period_flips_q():
    m = ModeSpec(0.057, 0.0, 4.0)
    g = QuadratureGrid.centered(0.0, 12.0, 256)
    G = coherent_state([m], 0.0, [g])
    out = evolve_vacuum(G, m.period / 2)
    assert expectation(out, "q").real == pytest.approx(-math.sqrt(8.0), abs=1e-10)


def test_evolve_vacuum_matches_closed_form_pointwise():
    m = ModeSpec(0.9, 0.2, 3.0)
    g = QuadratureGrid.centered(0.0, 12.0, 256)
    G = coherent_state([m], 0.0, [g])
    t = 2.345
    out = evolve_vacuum(G, t)
    np.testing.assert_allclose(out.amplitudes, coherent_wavefunction(m, t, g.points), atol=1e-6)


def test_vacuum_stays_vacuum():
    m = ModeSpec(0.5)
    vac = vacuum_state(m)
    out = evolve_vacuum(vac, 1.7)
    np.testing.assert_allclose(out.amplitudes, vac.amplitudes * cmath.exp(-0.5j * 0.5 * 1.7), atol=1e-12)


def test_evolve_vacuum_rejects_bad_dt():
    with pytest.raises(ValueError):
        evolve_vacuum(vacuum_state(ModeSpec(1.0)), 0.0)


def test_binary_round_trip(tmp_path):
    modes = [ModeSpec(0.057, 0.1, 3.0, 0.2), ModeSpec(0.07, 0.0, 1.0, 0.1, 0.3)]
    grids = [QuadratureGrid.centered(0, 8, 32), QuadratureGrid.centered(1, 8, 16)]
    G = coherent_state(modes, 0.4, grids)
    path = tmp_path / "g.bin"
    save_field_state(G, path)
    back = load_field_state(path)
    assert back.modes == G.modes and back.grids == G.grids and back.picture == G.picture
    np.testing.assert_array_equal(back.amplitudes, G.amplitudes)
    assert path.read_bytes()[:8] == b"FSGRID01"


def test_uncertainty_floor_of_coherent_state():
    m = ModeSpec(0.3, 0.5, 7.0)
    G = coherent_state([m], 1.0, [grid_for_mode(m, 1.0)])
    q = expectation(G, "q").real
    p = expectation(G, "p").real
    q2 = np.vdot(G.amplitudes, G.mesh(0) ** 2 * G.amplitudes).real * G.volume_element
    p2 = np.sum(np.abs(G.derivative(0)) ** 2) * G.volume_element
    assert (q2 - q * q) * (p2 - p * p) >= 0.25 - 1e-6
