from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraqed.analysis import (field_report, fidelity, mode_entanglement, photon_statistics,
                              quadrature_stats, reduced_purity, report_text, squeezing_detect)
from paraqed.backaction import GaussianFieldState
from paraqed.field import ModeSpec, QuadratureGrid, coherent_state, vacuum_state


def gauss(a, b=0.0, d=None):
    return GaussianFieldState(np.atleast_1d(a), np.atleast_1d(b), d, 0.0).normalized()


def on_grid(G, centers, half=12.0, n=256):
    modes = [ModeSpec(1.0)] * G.n_modes
    grids = [QuadratureGrid.centered(c, half, n) for c in np.atleast_1d(centers)]
    return G.to_grid(modes, grids).normalized()


def test_coherent_quadratures():
    m = ModeSpec(0.3, 0.0, 4.0)
    r = quadrature_stats(coherent_state([m], 0.0))
    assert r.var_q == pytest.approx(0.5, abs=1e-12)
    assert r.var_p == pytest.approx(0.5, abs=1e-12)
    assert r.uncertainty_product == pytest.approx(0.25, abs=1e-12)
    assert r.mean_q == pytest.approx(math.sqrt(8), abs=1e-12)
    g = quadrature_stats(GaussianFieldState.coherent([m]))
    assert g.mean_q == pytest.approx(math.sqrt(8), abs=1e-12) and g.var_q == pytest.approx(0.5)


def test_squeezed_real_gaussian():
    r = quadrature_stats(gauss(-1.0))
    assert r.var_q == pytest.approx(0.25, abs=1e-14)
    assert r.var_p == pytest.approx(1.0, abs=1e-14)
    rg = quadrature_stats(on_grid(gauss(-1.0), 0.0))
    assert rg.var_q == pytest.approx(0.25, abs=1e-10) and rg.var_p == pytest.approx(1.0, abs=1e-10)


def test_rejects_unnormalized():
    with pytest.raises(ValueError):
        quadrature_stats(GaussianFieldState([-0.5], [0.0], None, 3.0))


@settings(max_examples=30, deadline=None)
@given(ar=st.floats(-2.0, -0.2), ai=st.floats(-1.0, 1.0), br=st.floats(-3, 3), bi=st.floats(-3, 3))
def test_grid_and_gaussian_diagnostics_agree(ar, ai, br, bi):
    G = gauss(complex(ar, ai), complex(br, bi))
    mq = G.moments()["mean_q"][0]
    Gg = on_grid(G, mq, 14.0, 256)
    a, b = quadrature_stats(G), quadrature_stats(Gg)
    for k in ("mean_q", "mean_p", "var_q", "var_p", "cov_qp"):
        assert getattr(a, k) == pytest.approx(getattr(b, k), abs=1e-6)
    assert b.uncertainty_product >= 0.25 - 1e-6
    assert fidelity(Gg, G.to_grid([ModeSpec(1.0)], Gg.grids)) == pytest.approx(1.0, abs=1e-8)
    sa, sb = photon_statistics(G), photon_statistics(Gg)
    assert sa["N_raw"] == pytest.approx(sb["N_raw"], abs=1e-6)
    assert sa["var_N"] == pytest.approx(sb["var_N"], abs=1e-6)
    flag = squeezing_detect(G).flags[0]
    assert flag == (b.var_q < 0.5 - 1e-8) or abs(b.var_q - 0.5) < 1e-6


def test_squeezing_examples():
    coh = squeezing_detect(gauss(-0.5))
    assert not coh.flags[0] and coh.factors[0] == pytest.approx(1.0, abs=1e-14)
    sq = squeezing_detect(gauss(-0.8))
    assert sq.flags[0] and sq.factors[0] == pytest.approx(0.625, abs=1e-14)
    assert sq.principal_flags[0] and sq.raw_a[0] == pytest.approx(-0.8)


def test_principal_axes_of_two_mode_form():
    d = np.array([[0, 0.2], [0.2, 0]])
    rep = squeezing_detect(gauss([-0.5, -0.5], [0, 0], d))
    np.testing.assert_allclose(sorted(rep.principal_a), [-0.7, -0.3], atol=1e-14)
    assert sum(rep.principal_flags) == 1


def test_photon_statistics_examples():
    m = ModeSpec(1.0, 0.3, 10.0)
    G = coherent_state([m], 0.0, [QuadratureGrid.centered(m.q_center, 12.0, 256)])
    s = photon_statistics(G)
    assert s["mean_N"] == pytest.approx(10.0, abs=1e-8)
    assert abs(s["mandel_Q"]) < 1e-4
    assert s["N_raw"] == pytest.approx(10.5, abs=1e-8)
    sg = photon_statistics(GaussianFieldState.coherent([m]))
    assert sg["mean_N"] == pytest.approx(10.0, abs=1e-12) and abs(sg["mandel_Q"]) < 1e-12
    assert photon_statistics(vacuum_state(m))["mean_N"] == pytest.approx(0.0, abs=1e-12)
    amp_sq = gauss(-0.8, 2 * 0.8 * math.sqrt(20.0))
    assert photon_statistics(amp_sq)["mandel_Q"] < 0
    assert photon_statistics(on_grid(amp_sq, math.sqrt(20.0), 12.0, 256))["mandel_Q"] < 0


def test_mode_entanglement_examples():
    prod = GaussianFieldState.coherent([ModeSpec(1.0, 0, 2.0), ModeSpec(1.0, 0, 3.0)])
    e = mode_entanglement(prod)
    assert e["offdiag_d"] == 0.0 and e["reduced_purity"] == pytest.approx(1.0, abs=1e-8)
    grid = on_grid(prod, [2.0, math.sqrt(6.0)], 10.0, 64)
    eg = mode_entanglement(grid)
    assert eg["reduced_purity"] == pytest.approx(1.0, abs=1e-8) and eg["offdiag_d"] < 1e-8
    d = np.array([[0, 0.15 + 0.05j], [0.15 + 0.05j, 0]])
    ent = gauss([-0.5, -0.5], [0, 0], d)
    e2 = mode_entanglement(ent)
    assert e2["offdiag_d"] == pytest.approx(abs(d[0, 1]), abs=1e-15)
    assert e2["reduced_purity"] < 1
    g2 = mode_entanglement(on_grid(ent, [0.0, 0.0], 10.0, 64))
    assert g2["reduced_purity"] == pytest.approx(e2["reduced_purity"], abs=1e-8)
    assert g2["offdiag_d"] == pytest.approx(e2["offdiag_d"], abs=1e-8)
    with pytest.raises(ValueError):
        mode_entanglement(gauss(-0.5))


@settings(max_examples=20, deadline=None)
@given(d=st.floats(-0.2, 0.2), di=st.floats(-0.2, 0.2))
def test_purity_bounds(d, di):
    dd = complex(d, di)
    G = gauss([-0.5, -0.6], [0, 0], [[0, dd], [dd, 0]])
    p = reduced_purity(G)
    assert 0 < p <= 1 + 1e-8
    if abs(dd) < 1e-12:
        assert p == pytest.approx(1.0, abs=1e-12)


def test_fidelity_examples():
    m = ModeSpec(1.0)
    a = GaussianFieldState.coherent([m])
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-14)
    shifted = GaussianFieldState.coherent([ModeSpec(1.0, 0.0, 50.0)])
    # q-displacement 10 is |alpha - beta|^2 = 50
    far = GaussianFieldState([-0.5], [10.0], None, -25.0 - 0.25 * math.log(math.pi))
    assert fidelity(a, far) == pytest.approx(math.exp(-25.0), rel=1e-10)
    assert fidelity(a, shifted) == pytest.approx(math.exp(-25.0), rel=1e-10)
    with pytest.raises(TypeError):
        fidelity(a, coherent_state([m]))


def test_field_report_text():
    G = gauss([-0.6, -0.5], [1.0, 2.0], [[0, 0.05], [0.05, 0]])
    rep = field_report(G, 1.5)
    text = report_text(rep)
    assert "t=1.5" in text.replace(" ", "")
    assert "entanglement" in text and "squeezing" in text
