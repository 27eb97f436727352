"""Brute-force joint electron-field solver used as the reference.

The interaction-picture Hamiltonian is ``(p - sum_j A_j/c)^2/2 + U(x)`` with
the rotating quadrature ``A_j = beta_j (q_j cos psi_j + p_j sin psi_j)``.
Writing ``q_j = q0_j + d_j`` about the coherent centre ``q0_j = sqrt(2N_j)``,

    A_j = A0_j cos psi_j + R_j beta_j d_j R_j^+,   R_j = exp(i psi_j N_j(d)),

so in the frame ``Phi = prod_j R_j^+ Psi`` the Hamiltonian becomes
``sum_j omega_j N_j(d) + (p - A_cl(t)/c - sum_j beta_j d_j / c)^2/2 + U``.
The coupling is diagonal in ``d`` there: each step is a Strang splitting of
an exact oscillator rotation and a per-``d`` electron step in momentum space.
The state stays centred at ``d = 0``, so the quadrature grid only needs to
cover the quantum width, not the classical orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .electron import AliasingError, ElectronEnsemble, PotentialSpec, SpatialGrid
from .field import (C_LIGHT, FieldStateGrid, ModeSpec, QuadratureGrid, apply_along,
                    derivative_matrices, mode_phase, oscillator_rotation)


class MaskedRegionError(ValueError):
    """No quadrature point carries enough marginal density to factorize."""


@dataclass(frozen=True)
class JointWavefunction:
    """``Psi(x, q_1[, q_2])`` in the interaction picture, electron axis first."""

    modes: tuple
    spatial: SpatialGrid
    grids: tuple
    amplitudes: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "grids", tuple(self.grids))
        if not 1 <= len(self.modes) <= 2 or len(self.grids) != len(self.modes):
            raise ValueError("one or two modes with one grid each")
        amps = np.asarray(self.amplitudes, dtype=complex)
        shape = (self.spatial.n_points,) + tuple(g.n_points for g in self.grids)
        if amps.shape != shape:
            raise ValueError(f"amplitude shape {amps.shape} does not match {shape}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def field_volume(self) -> float:
        return float(np.prod([g.spacing for g in self.grids]))

    def norm(self) -> float:
        dv = self.spatial.spacing * self.field_volume
        return math.sqrt(float(np.sum(np.abs(self.amplitudes) ** 2)) * dv)

    def with_amplitudes(self, amplitudes, t: float | None = None) -> "JointWavefunction":
        return replace(self, amplitudes=np.asarray(amplitudes, dtype=complex),
                       t=self.t if t is None else t)


def product_state(F0: np.ndarray, spatial: SpatialGrid, G0: FieldStateGrid,
                  t: float = 0.0) -> JointWavefunction:
    """``Psi_0 = F_0(x) G_0(q)``."""
    F0 = np.asarray(F0, dtype=complex)
    amps = F0.reshape((-1,) + (1,) * G0.n_modes) * G0.amplitudes[None]
    return JointWavefunction(G0.modes, spatial, G0.grids, amps, t)


class JointPropagator:
    """Second-order propagator of the joint wavefunction on fixed grids.

    Internally the tensor is held with the electron axis last so that the
    momentum-space transform runs over contiguous memory.
    """

    def __init__(self, modes: Sequence[ModeSpec], spatial: SpatialGrid,
                 grids: Sequence[QuadratureGrid], potential: PotentialSpec, dt: float,
                 derivative: str = "spectral"):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.modes = tuple(modes)
        self.spatial = spatial
        self.grids = tuple(grids)
        self.potential = potential
        self.dt = float(dt)
        self.derivative = derivative
        n_m = len(self.modes)
        # beta_j d_j / c per mode, and their sum on the quadrature tensor
        self._d_shift = [m.beta * (g.points - m.q_center) / C_LIGHT for m, g in zip(self.modes, self.grids)]
        shift = np.zeros(tuple(g.n_points for g in self.grids))
        for j, sj in enumerate(self._d_shift):
            shape = [1] * n_m
            shape[j] = sj.size
            shift = shift + sj.reshape(shape)
        self._quantum_shift = shift
        p = spatial.p
        self._kin0 = np.exp(-0.5j * self.dt * (p - shift[..., None]) ** 2)
        self._step_rot = [self._rotation(j, m.omega * self.dt) for j, m in enumerate(self.modes)]
        self._half_rot = [self._rotation(j, 0.5 * m.omega * self.dt) for j, m in enumerate(self.modes)]
        self._half_u = None
        if not potential.is_free and potential.u_table is None:
            self._half_u = np.exp(-0.5j * self.dt * potential.values(spatial.x, 0.0))

    def _rotation(self, j: int, angle: float, state: np.ndarray | None = None) -> np.ndarray:
        m = self.modes[j]
        axis_state = None if state is None else np.moveaxis(state, j, 0)
        return oscillator_rotation(self.grids[j], angle, m.q_center, self.derivative, axis_state)

    @staticmethod
    def _rotate(amps: np.ndarray, mats) -> np.ndarray:
        for j, u in enumerate(mats):
            if j == 0:
                amps = (u @ amps.reshape(u.shape[0], -1)).reshape(amps.shape)
            else:
                amps = np.matmul(u, amps)
        return amps

    def _frame(self, amps: np.ndarray, t: float, inverse: bool = False) -> np.ndarray:
        sign = -1.0 if inverse else 1.0
        mats = [self._rotation(j, sign * float(mode_phase(m, t)), amps)
                for j, m in enumerate(self.modes)]
        return self._rotate(amps, mats)

    def _classical_shift(self, t: float) -> float:
        return sum(m.amplitude * math.cos(float(mode_phase(m, t))) for m in self.modes) / C_LIGHT

    def _electron_step(self, amps: np.ndarray, t: float) -> np.ndarray:
        dt = self.dt
        t_mid = t + 0.5 * dt
        half_u = self._half_u
        if half_u is None and not self.potential.is_free:
            half_u = np.exp(-0.5j * dt * self.potential.values(self.spatial.x, t_mid))
        if half_u is not None:
            amps = amps * half_u
        # (p - a - s)^2 = (p - s)^2 - 2a p + 2a s + a^2 with a the classical shift
        a = self._classical_shift(t_mid)
        f_p = np.fft.fft(amps, axis=-1)
        f_p *= self._kin0
        f_p *= np.exp(1j * dt * a * self.spatial.p)
        q_phase = np.exp(-1j * dt * a * self._d_shift[0] - 0.5j * dt * a * a)
        if len(self._d_shift) == 2:
            q_phase = np.multiply.outer(q_phase, np.exp(-1j * dt * a * self._d_shift[1]))
        f_p *= q_phase[..., None]
        amps = np.fft.ifft(f_p, axis=-1)
        if half_u is not None:
            amps = amps * half_u
        return amps

    def check_resolution(self, psi: JointWavefunction) -> None:
        """Aliasing guard on the electron momentum grid."""
        dens = np.sum(np.abs(np.fft.fft(psi.amplitudes, axis=0)) ** 2,
                      axis=tuple(range(1, psi.amplitudes.ndim)))
        support = dens > 1e-12 * dens.max()
        reach = np.max(np.abs(self.spatial.p[support]))
        a_max = sum(m.amplitude for m in self.modes) / C_LIGHT
        q_max = float(np.max(np.abs(self._quantum_shift)))
        if reach + a_max + q_max > self.spatial.nyquist:
            raise AliasingError(f"momentum reach {reach + a_max + q_max:.3g} exceeds Nyquist "
                                f"{self.spatial.nyquist:.3g}")

    def propagate(self, psi: JointWavefunction, t_end: float) -> JointWavefunction:
        """Advance ``psi`` from ``psi.t`` to ``t_end`` in whole steps of ``dt``."""
        n_float = (t_end - psi.t) / self.dt
        n = int(round(n_float))
        if n < 0 or abs(n - n_float) > 1e-9 * max(1.0, n_float):
            raise ValueError("t_end - t must be a non-negative multiple of dt")
        if n == 0:
            return psi
        self.check_resolution(psi)
        phi = np.ascontiguousarray(np.moveaxis(psi.amplitudes, 0, -1))
        phi = self._frame(phi, psi.t)
        t = psi.t
        phi = self._rotate(phi, self._half_rot)
        for k in range(n):
            phi = self._electron_step(phi, t)
            t = psi.t + (k + 1) * self.dt
            phi = self._rotate(phi, self._step_rot if k < n - 1 else self._half_rot)
        phi = self._frame(phi, t, inverse=True)
        return psi.with_amplitudes(np.moveaxis(phi, -1, 0), t)


def joint_propagate(psi: JointWavefunction, modes: Sequence[ModeSpec], potential: PotentialSpec,
                    t: float, dt: float) -> JointWavefunction:
    """One step of the full coupled evolution from ``t`` to ``t + dt``."""
    prop = JointPropagator(modes, psi.spatial, psi.grids, potential, dt)
    return prop.propagate(replace(psi, t=t), t + dt)


@dataclass(frozen=True)
class Factorization:
    """``Psi = F(x; q) G(q)`` with ``int |F|^2 dx = 1`` on unmasked points."""

    G: FieldStateGrid
    F: ElectronEnsemble
    mask: np.ndarray

    @property
    def n_masked(self) -> int:
        return int(np.count_nonzero(~self.mask))


def marginal_density(psi: JointWavefunction) -> np.ndarray:
    return np.sum(np.abs(psi.amplitudes) ** 2, axis=0) * psi.spatial.spacing


def exact_factorize(psi: JointWavefunction, mask_tol: float = 1e-12,
                    potential: PotentialSpec | None = None) -> Factorization:
    """Exact factorization with the phase gauge ``Im <F|dF/dq_j> = 0``.

    ``|G| = sqrt(int |Psi|^2 dx)`` and the phase gradient of ``G`` is the
    density-weighted phase gradient of ``Psi``; it is integrated along
    ``q_1`` on the row through the density maximum and then along ``q_2``.
    Points whose marginal density is below ``mask_tol`` times its maximum are
    masked: there ``F`` is set to zero and ``G`` to the bare amplitude.
    """
    amps = psi.amplitudes
    dx = psi.spatial.spacing
    rho = marginal_density(psi)
    mask = rho > mask_tol * rho.max()
    if not np.any(mask):
        raise MaskedRegionError("marginal density vanishes everywhere")
    safe = np.where(mask, rho, 1.0)
    grads = []
    for j, g in enumerate(psi.grids):
        d1, _ = derivative_matrices(g)
        dpsi = apply_along(d1, amps, j + 1)
        grads.append(np.where(mask, np.imag(np.sum(np.conj(amps) * dpsi, axis=0)) * dx / safe, 0.0))
    ref = np.unravel_index(np.argmax(rho), rho.shape)
    if psi.n_modes == 1:
        s = cumulative_trapezoid(grads[0], psi.grids[0].points, initial=0.0)
        s = s - s[ref]
    else:
        q1, q2 = psi.grids[0].points, psi.grids[1].points
        s1 = cumulative_trapezoid(grads[0][:, ref[1]], q1, initial=0.0)
        s2 = cumulative_trapezoid(grads[1], q2, axis=1, initial=0.0)
        s = s1[:, None] + s2 - s2[:, ref[1]][:, None]
        s = s - s[ref]
    g_amp = np.sqrt(rho) * np.exp(1j * s)
    G = FieldStateGrid(psi.modes, psi.grids, g_amp, "interaction")
    f = np.where(mask[None], amps / np.where(mask, g_amp, 1.0)[None], 0.0)
    q_pts = np.stack([m.ravel() for m in np.meshgrid(*[g.points for g in psi.grids], indexing="ij")], axis=1)
    ens = ElectronEnsemble(potential or PotentialSpec("free"), psi.spatial, q_pts,
                           f.reshape(psi.spatial.n_points, -1).T, psi.t)
    return Factorization(G, ens, mask)


def reduced_field_purity(psi: JointWavefunction) -> float:
    """``Tr rho_field^2`` of the full field state (equals the electron purity)."""
    flat = psi.amplitudes.reshape(psi.spatial.n_points, -1)
    m = flat @ flat.conj().T * psi.field_volume
    return float(np.sum(np.abs(m) ** 2) * psi.spatial.spacing ** 2)


def reduced_mode_density(psi: JointWavefunction, mode_index: int = 0) -> np.ndarray:
    """Single-mode reduced density matrix ``rho(q, q')`` (trace over everything else)."""
    moved = np.moveaxis(psi.amplitudes, mode_index + 1, 0)
    flat = moved.reshape(moved.shape[0], -1)
    other = psi.spatial.spacing * psi.field_volume / psi.grids[mode_index].spacing
    return flat @ flat.conj().T * other


def reduced_mode_purity(psi: JointWavefunction, mode_index: int = 0) -> float:
    rho = reduced_mode_density(psi, mode_index)
    h = psi.grids[mode_index].spacing
    return float(np.sum(np.abs(rho) ** 2) * h * h)


def field_overlap_with_density(psi: JointWavefunction, G: FieldStateGrid) -> float:
    """``<G| rho_field |G>`` without forming ``rho_field``."""
    _check_grids(psi, G)
    proj = np.tensordot(psi.amplitudes, np.conj(G.amplitudes), axes=psi.n_modes) * psi.field_volume
    return float(np.sum(np.abs(proj) ** 2) * psi.spatial.spacing)


def _check_grids(psi: JointWavefunction, G: FieldStateGrid) -> None:
    if psi.grids != G.grids:
        raise ValueError("oracle and approximate field states live on different grids")


@dataclass(frozen=True)
class ComparisonReport:
    """Distances between the reference and the parametric field states.

    ``reduced_infidelity`` is ``1 - sqrt(<G_ap|rho|G_ap>)``, the root fidelity of
    the approximate pure state against the reference reduced density.
    ``field_infidelity`` is ``1 - |<G_or|G_ap>|`` with ``G_or`` the exact
    factorization.  ``hs_distance_sq`` is the squared Hilbert-Schmidt distance
    between ``rho`` and ``|G_ap><G_ap|`` (the square avoids the loss of
    precision a square root of a small difference would bring).  ``electron_infidelity`` integrates
    ``1 - |<F_or|F_ap>|`` over ``|G_or|^2``.
    """

    reduced_infidelity: float
    field_infidelity: float
    hs_distance_sq: float
    electron_infidelity: float
    oracle_purity: float
    masked_points: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare_to_parametric(oracle: JointWavefunction, approx_G: FieldStateGrid,
                          approx_ens: ElectronEnsemble | None = None,
                          mask_tol: float = 1e-12) -> ComparisonReport:
    _check_grids(oracle, approx_G)
    G_ap = approx_G.normalized()
    n2 = oracle.norm() ** 2
    overlap_rho = field_overlap_with_density(oracle, G_ap) / n2
    purity = reduced_field_purity(oracle) / (n2 * n2)
    hs = max(purity - 2.0 * overlap_rho + 1.0, 0.0)
    fac = exact_factorize(oracle, mask_tol)
    field_inf = 1.0 - abs(fac.G.inner(G_ap)) / fac.G.norm()
    electron_inf = math.nan
    if approx_ens is not None:
        if not np.allclose(approx_ens.q_samples, fac.F.q_samples, rtol=0, atol=1e-12):
            raise ValueError("ensemble samples do not match the oracle grid")
        dx = oracle.spatial.spacing
        ov = np.abs(np.sum(np.conj(fac.F.wavefunctions) * approx_ens.wavefunctions, axis=1)) * dx
        w = (np.abs(fac.G.amplitudes) ** 2).ravel() * oracle.field_volume
        m = fac.mask.ravel()
        electron_inf = float(np.sum(w[m] * (1.0 - ov[m])) / np.sum(w[m]))
    return ComparisonReport(1.0 - math.sqrt(overlap_rho), float(field_inf), hs, electron_inf,
                            purity, fac.n_masked)


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("need at least two positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
