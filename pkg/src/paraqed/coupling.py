"""Parametric coupling between the electron and the field quadratures.

In the interaction picture the dipole vector potential of mode ``j`` is the
rotating quadrature ``beta_j (q_j cos(psi_j) - i d/dq_j sin(psi_j))`` with
``psi_j = omega_j t - theta_j - kappa_j.r``.  The electron sees the *local*
version of it: ``q_j`` is a parameter and ``d/dq_j`` is replaced by the
log-derivative of the initial coherent state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .field import FieldStateGrid, ModeSpec, mode_phase, rotate_modes


@dataclass(frozen=True)
class ParametricField:
    """Modes plus one quadrature sample per mode.

    ``q_values`` has shape ``(n_modes,)`` or ``(n_samples, n_modes)``.
    """

    modes: tuple
    q_values: np.ndarray
    include_sine_term: bool = False

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        q = np.atleast_1d(np.asarray(self.q_values, dtype=float))
        if q.shape[-1] != len(self.modes):
            raise ValueError("q_values must end in an axis of length n_modes")
        object.__setattr__(self, "q_values", q)

    @property
    def betas(self) -> np.ndarray:
        return np.array([m.beta for m in self.modes])


def local_substitution(mode: ModeSpec, q):
    """Log-derivative ``G0^-1 dG0/dq = -(q - sqrt(2N))`` of the initial state."""
    return -(np.asarray(q, dtype=float) - mode.q_center)


def vector_potential(pf: ParametricField, t, per_mode: bool = False):
    """Parametric vector potential at time ``t``.

    Strong-field form ``sum_j beta_j q_j cos(psi_j)``; with ``include_sine_term``
    the local substitution adds ``-i beta_j g_j(q_j) sin(psi_j)`` and the result
    is complex.  Returns the sum over modes (shape of ``q_values`` minus the
    mode axis) or, with ``per_mode``, the individual contributions.
    """
    q = pf.q_values
    psi = np.array([float(mode_phase(m, t)) for m in pf.modes])
    terms = pf.betas * q * np.cos(psi)
    if pf.include_sine_term:
        g = np.stack([local_substitution(m, q[..., j]) for j, m in enumerate(pf.modes)], axis=-1)
        terms = terms - 1j * pf.betas * g * np.sin(psi)
    return terms if per_mode else terms.sum(axis=-1)


def interaction_picture_map(state: FieldStateGrid, t: float,
                            direction: str = "to_interaction") -> FieldStateGrid:
    """Move a field state between the Schroedinger and interaction pictures.

    ``G_I = prod_j exp(+i psi_j(t) N_j) G_S`` and its inverse, applied on the
    grid through the discretized oscillator propagator.  The grid must hold the
    state on both sides of the map.
    """
    psi = [float(mode_phase(m, t)) + m.kappa_dot_r for m in state.modes]
    if direction == "to_interaction":
        angles = [-p for p in psi]
        picture = "interaction"
    elif direction == "to_schroedinger":
        angles = psi
        picture = "schroedinger"
    else:
        raise ValueError(f"unknown direction {direction!r}")
    out = rotate_modes(state, angles)
    return FieldStateGrid(out.modes, out.grids, out.amplitudes, picture, out.derivative_method)


class BetaScale(NamedTuple):
    value: float
    classical_limit: bool


def beta_scaling_estimate(n_electrons: float, electron_energy: float,
                          field_energy: float) -> BetaScale:
    """Coupling scale ``sqrt(N_e W_e / W_field)`` of an N-electron problem.

    An infinite field energy gives 0 and sets the classical-field flag.
    """
    if n_electrons <= 0 or electron_energy <= 0 or field_energy <= 0:
        raise ValueError("all inputs must be positive")
    if math.isinf(field_energy):
        return BetaScale(0.0, True)
    value = math.sqrt(n_electrons * electron_energy / field_energy)
    return BetaScale(value, value == 0.0)


def beta_scale_single(interaction_energy: float, field_energy: float) -> BetaScale:
    """Single-electron variant ``sqrt(<W_int>/<H_field>)``."""
    return beta_scaling_estimate(1.0, interaction_energy, field_energy)


def classical_vector_potential(modes: Sequence[ModeSpec], t):
    """``sum_j A0_j cos(psi_j(t))``, the value of the parametric potential at the coherent centre."""
    t = np.asarray(t, dtype=float)
    return sum(m.amplitude * np.cos(mode_phase(m, t)) for m in modes)
