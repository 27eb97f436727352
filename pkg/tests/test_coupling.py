from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraqed.coupling import (ParametricField, beta_scale_single, beta_scaling_estimate,
                              classical_vector_potential, interaction_picture_map,
                              local_substitution, vector_potential)
from paraqed.field import (ModeSpec, QuadratureGrid, coherent_state, coherent_wavefunction,
                           expectation)


def test_vector_potential_direct_substitution():
    m = ModeSpec(0.057, 0.0, 1.0, 0.01)
    assert vector_potential(ParametricField([m], [100.0]), 0.0) == pytest.approx(1.0, abs=1e-15)


def test_sine_term_vanishes_at_coherent_center():
    m = ModeSpec(0.057, 0.3, 50.0, 0.01)
    pf = ParametricField([m], [m.q_center], include_sine_term=True)
    a = vector_potential(pf, 7.3)
    assert abs(a.imag) < 1e-15
    off = vector_potential(ParametricField([m], [m.q_center + 1.0], True), 7.3)
    assert abs(off.imag) > 1e-4


def test_strong_field_form_is_real():
    m = ModeSpec(0.057, 0.3, 50.0, 0.01)
    a = vector_potential(ParametricField([m], [[1.0], [2.0]]), 3.0)
    assert np.isrealobj(a) and a.shape == (2,)


def test_period_average_vanishes():
    m = ModeSpec(0.057, 0.4, 10.0, 0.2)
    t = np.linspace(0, m.period, 4001)[:-1]
    pf = ParametricField([m], [3.0])
    vals = np.array([vector_potential(pf, ti) for ti in t])
    assert abs(vals.mean()) < 1e-12


def test_two_modes_sum_and_per_mode():
    ms = [ModeSpec(0.057, 0.0, 1.0, 0.01), ModeSpec(0.08, 0.5, 1.0, 0.02)]
    pf = ParametricField(ms, [3.0, 4.0])
    per = vector_potential(pf, 2.0, per_mode=True)
    assert per.sum() == pytest.approx(vector_potential(pf, 2.0), abs=1e-16)


def test_coherent_center_matches_classical_potential():
    ms = [ModeSpec(0.057, 0.2, 30.0, 0.01), ModeSpec(0.08, -0.5, 12.0, 0.02)]
    pf = ParametricField(ms, [m.q_center for m in ms])
    for t in (0.0, 11.0, 40.0):
        assert vector_potential(pf, t) == pytest.approx(classical_vector_potential(ms, t), abs=1e-14)


def test_classical_potential_matches_field_average():
    m = ModeSpec(0.3, 0.4, 6.0, 0.05)
    for t in (0.0, 1.1, 4.0):
        from paraqed.field import grid_for_mode

        G = coherent_state([m], t, [grid_for_mode(m, t)])
        assert expectation(G, "A_hat", 0, t).real == pytest.approx(
            float(classical_vector_potential([m], t)), abs=1e-10)


def test_local_substitution_examples():
    assert local_substitution(ModeSpec(1.0, 0.0, 8.0), 4.0) == 0.0
    assert local_substitution(ModeSpec(1.0, 0.0, 0.0), 1.0) == -1.0


def test_local_substitution_matches_finite_difference():
    m = ModeSpec(1.0, 0.0, 3.0)
    q = np.linspace(-4, 8, 2001)
    log_g0 = -0.5 * (q - m.q_center) ** 2
    fd = np.gradient(log_g0, q, edge_order=2)
    np.testing.assert_allclose(fd, local_substitution(m, q), atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(n=st.floats(0, 1e6), q=st.floats(-1e3, 1e3))
def test_local_substitution_is_linear(n, q):
    m = ModeSpec(1.0, 0.0, n)
    assert local_substitution(m, q + 1.0) - local_substitution(m, q) == pytest.approx(-1.0, abs=1e-9)
    assert local_substitution(m, math.sqrt(2 * n)) == pytest.approx(0.0, abs=1e-12)


def _fid(a, b):
    return abs(a.inner(b)) / math.sqrt(a.norm() * b.norm())


def test_interaction_map_identity_at_zero():
    m = ModeSpec(0.5, 0.0, 3.0)
    g = QuadratureGrid.centered(m.q_center, 12.0, 256)
    G = coherent_state([m], 0.0, [g])
    out = interaction_picture_map(G, 0.0)
    np.testing.assert_allclose(out.amplitudes, G.amplitudes, atol=1e-10)
    assert out.picture == "interaction"


def test_interaction_map_freezes_coherent_state():
    m = ModeSpec(0.5, 0.7, 3.0)
    g = QuadratureGrid.centered(0.0, 14.0, 256)
    t = 2.9
    G = coherent_state([m], t, [g])
    GI = interaction_picture_map(G, t)
    target = np.exp(-0.5 * (g.points - m.q_center) ** 2)
    overlap = abs(np.vdot(target, GI.amplitudes)) * g.spacing
    overlap /= math.sqrt(np.sum(target ** 2) * g.spacing * GI.norm())
    assert overlap > 1 - 1e-10
    back = interaction_picture_map(GI, t, "to_schroedinger")
    assert _fid(back, G) > 1 - 1e-10
    np.testing.assert_allclose(back.amplitudes, coherent_wavefunction(m, t, g.points), atol=1e-8)


def test_interaction_map_composes_additively():
    from paraqed.field import rotate_modes

    m = ModeSpec(0.5, 0.0, 2.0)
    g = QuadratureGrid.centered(0.0, 12.0, 256)
    G = coherent_state([m], 0.0, [g])
    two = rotate_modes(rotate_modes(G, [0.3]), [0.4])
    one = rotate_modes(G, [0.7])
    np.testing.assert_allclose(two.amplitudes, one.amplitudes, atol=1e-10)


def test_interaction_map_rejects_unknown_direction():
    G = coherent_state([ModeSpec(1.0)])
    with pytest.raises(ValueError):
        interaction_picture_map(G, 0.0, "sideways")


def test_beta_scaling_examples():
    assert beta_scaling_estimate(1, 1, 1e6).value == pytest.approx(1e-3, rel=1e-14)
    assert beta_scaling_estimate(1e4, 1, 1e6).value == pytest.approx(0.1, rel=1e-14)
    lim = beta_scaling_estimate(1, 1, math.inf)
    assert lim.value == 0.0 and lim.classical_limit
    assert beta_scale_single(4.0, 1e4).value == pytest.approx(0.02)
    with pytest.raises(ValueError):
        beta_scaling_estimate(0, 1, 1)
