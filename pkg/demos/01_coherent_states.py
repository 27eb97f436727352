"""
Coherent states on a quadrature grid
====================================

A field mode is a wavefunction over its quadrature ``q``.  This demo builds
coherent states, checks their averages and lets one evolve freely for a full
period.
"""

from __future__ import annotations

import math

import numpy as np

from paraqed import ModeSpec, coherent_state, evolve_vacuum, expectation
from paraqed.field import QuadratureGrid, grid_for_mode

# A mode at a Ti:sapphire-like frequency (atomic units) with 4 photons.
mode = ModeSpec(omega=0.057, theta=0.0, n_photons=4.0, beta=0.01)
print(f"period T = {mode.period:.2f} a.u., classical amplitude A0 = {mode.amplitude:.4f}")

# The mean quadrature follows sqrt(2N) cos(omega t - theta).
for frac in (0.0, 0.25, 0.5):
    t = frac * mode.period
    G = coherent_state([mode], t, [grid_for_mode(mode, t)])
    q = expectation(G, "q").real
    n = expectation(G, "N").real
    print(f"t = {frac:.2f} T: <q> = {q:+.6f}, <N> = {n:.6f}")

# Free evolution over one period returns the state up to the zero-point phase.
w = mode.q_center + 10.0
G0 = coherent_state([mode], 0.0, [QuadratureGrid.centered(0.0, w, 256)])
G1 = evolve_vacuum(G0, mode.period)
overlap = G0.inner(G1)
print(f"|<G(0)|G(T)>| = {abs(overlap):.12f}")
print(f"phase = {np.angle(overlap):+.6f}, expected {np.angle(np.exp(-1j * math.pi)):+.6f}")
