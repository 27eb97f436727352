"""Electron dynamics under the parametric vector potential.

The electron is one-dimensional along the shared linear polarization axis and
is propagated in the velocity gauge, ``H = (p - A/c)^2/2 + U(x, t)``, for every
quadrature sample independently.  Wavefunctions of an ensemble are stored as
a ``(n_samples, n_x)`` array so that the whole ensemble steps with one FFT.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .coupling import ParametricField, vector_potential
from .field import C_LIGHT, ModeSpec, mode_phase


class AliasingError(ValueError):
    """The momentum shift ``A/c`` pushes the packet past the grid's Nyquist limit."""


class SampleError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"q-sample {index}: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic grid of ``n_points`` (a power of two) on ``[x_min, x_max)``."""

    x_min: float
    x_max: float
    n_points: int = 512

    def __post_init__(self):
        n = int(self.n_points)
        if n < 2 or n & (n - 1):
            raise ValueError("n_points must be a power of two")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.n_points)

    @property
    def p(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    @property
    def nyquist(self) -> float:
        return math.pi / self.spacing


@dataclass(frozen=True)
class PotentialSpec:
    """Binding potential.

    ``free``: ``U = 0``.  ``quadratic``: ``U = u(t) x^2`` with ``u`` constant or
    tabulated as ``(times, values)`` and linearly interpolated.  ``softcore``:
    ``U = -depth / sqrt(x^2 + smoothing)``.
    """

    kind: str = "free"
    u: float | None = None
    u_table: tuple | None = None
    depth: float = 1.0
    smoothing: float = 2.0

    def __post_init__(self):
        if self.kind not in ("free", "quadratic", "softcore"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "quadratic":
            if (self.u is None) == (self.u_table is None):
                raise ValueError("quadratic potential needs exactly one of u, u_table")
            if self.u is not None and not math.isfinite(self.u):
                raise ValueError("u must be finite")
            if self.u_table is not None:
                ts, us = (np.asarray(a, dtype=float) for a in self.u_table)
                if ts.shape != us.shape or ts.ndim != 1 or ts.size < 2:
                    raise ValueError("u_table needs two equal-length 1D sequences")
                if not np.all(np.isfinite(us)) or np.any(np.diff(ts) <= 0):
                    raise ValueError("u_table must be finite with increasing times")
                object.__setattr__(self, "u_table", (tuple(ts), tuple(us)))
        if self.kind == "softcore" and not self.smoothing > 0:
            raise ValueError("softcore smoothing must be positive")

    @property
    def is_free(self) -> bool:
        return self.kind == "free"

    def stiffness(self, t: float) -> float:
        if self.u is not None:
            return float(self.u)
        ts, us = self.u_table
        return float(np.interp(t, ts, us))

    def values(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.kind == "free":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return self.stiffness(t) * x * x
        return -self.depth / np.sqrt(x * x + self.smoothing)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "u": self.u, "u_table": self.u_table,
                "depth": self.depth, "smoothing": self.smoothing}

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        table = d.get("u_table")
        return cls(d["kind"], d.get("u"), None if table is None else tuple(map(tuple, table)),
                   d.get("depth", 1.0), d.get("smoothing", 2.0))


def gaussian_packet(grid: SpatialGrid, center: float = 0.0, width: float = 1.0,
                    momentum: float = 0.0) -> np.ndarray:
    """Normalized ``exp(-(x-x0)^2/(2 width^2) + i p0 x)`` on the grid."""
    x = grid.x
    f = np.exp(-0.5 * ((x - center) / width) ** 2 + 1j * momentum * x)
    return f / math.sqrt(np.sum(np.abs(f) ** 2) * grid.spacing)


def harmonic_ground_state(grid: SpatialGrid, u: float) -> np.ndarray:
    """Ground state of ``p^2/2 + u x^2`` (frequency ``sqrt(2u)``)."""
    return gaussian_packet(grid, 0.0, (2.0 * u) ** -0.25, 0.0)


def _check_aliasing(f_p: np.ndarray, shift, grid: SpatialGrid, rel_tol: float = 1e-12) -> None:
    """Momentum support shifted by ``A/c`` must stay inside the grid."""
    dens = np.abs(f_p) ** 2
    support = dens > rel_tol * dens.max(axis=-1, keepdims=True)
    reach = np.where(support, np.abs(grid.p), 0.0).max(axis=-1) + np.abs(shift)
    if np.any(reach > grid.nyquist):
        raise AliasingError(
            f"shifted momentum support {float(np.max(reach)):.3g} exceeds Nyquist {grid.nyquist:.3g}")


def split_step(F: np.ndarray, A_of_t, potential: PotentialSpec, t: float, dt: float,
               grid: SpatialGrid, check_aliasing: bool = False) -> np.ndarray:
    """One Strang step of ``i dF/dt = [(p - A/c)^2/2 + U] F``.

    ``F`` has shape ``(..., n_x)``; ``A_of_t`` is a callable returning the
    vector potential (scalar or one value per leading index) or such a value
    already taken at the midpoint ``t + dt/2``.
    """
    a_mid = A_of_t(t + 0.5 * dt) if callable(A_of_t) else A_of_t
    a_mid = np.asarray(a_mid)
    shift = a_mid[..., None] / C_LIGHT if a_mid.ndim else a_mid / C_LIGHT
    f = F
    if not potential.is_free:
        half_u = np.exp(-0.5j * dt * potential.values(grid.x, t + 0.5 * dt))
        f = f * half_u
    f_p = np.fft.fft(f, axis=-1)
    if check_aliasing:
        _check_aliasing(f_p, a_mid / C_LIGHT, grid)
    kin = (grid.p - shift) ** 2
    f = np.fft.ifft(f_p * np.exp(-0.5j * dt * kin), axis=-1)
    if not potential.is_free:
        f = f * half_u
    return f


def _int_cos(freq, phase0, t):
    """``integral_0^t cos(freq tau + phase0) d tau``."""
    if abs(freq) < 1e-14:
        return t * np.cos(phase0)
    return (np.sin(freq * t + phase0) - np.sin(phase0)) / freq


def volkov_integrals(modes: Sequence[ModeSpec], q, t: float, t0: float = 0.0):
    """Closed-form ``(int A dtau, int A^2 dtau)`` from ``t0`` to ``t`` of the
    strong-field parametric potential ``sum_j beta_j q_j cos(psi_j)``.
    """
    q = np.asarray(q, dtype=float)
    amps = [m.beta * q[..., j] for j, m in enumerate(modes)]
    phase0 = [-m.theta - m.kappa_dot_r for m in modes]
    span = t - t0
    i1 = 0.0
    i2 = 0.0
    for j, mj in enumerate(modes):
        ph_j = phase0[j] + mj.omega * t0
        i1 = i1 + amps[j] * _int_cos(mj.omega, ph_j, span)
        for k, mk in enumerate(modes):
            ph_k = phase0[k] + mk.omega * t0
            both = 0.5 * (_int_cos(mj.omega - mk.omega, ph_j - ph_k, span)
                          + _int_cos(mj.omega + mk.omega, ph_j + ph_k, span))
            i2 = i2 + amps[j] * amps[k] * both
    return i1, i2


def volkov_evolve(F0: np.ndarray, int_A, int_A2, t: float, grid: SpatialGrid,
                  potential: PotentialSpec | None = None) -> np.ndarray:
    """Closed-form free-electron evolution in a given vector potential.

    ``F(p, t) = exp[-i(p^2 t/2 - p int A / c + int A^2 / (2c^2))] F0(p)``.  The
    last term is a sample-dependent global phase and is kept.
    """
    if potential is not None and not potential.is_free:
        raise ValueError("the closed-form evolution only holds for a free electron")
    i1 = np.asarray(int_A)
    i2 = np.asarray(int_A2)
    if i1.ndim:
        i1 = i1[..., None]
    if i2.ndim:
        i2 = i2[..., None]
    p = grid.p
    phase = 0.5 * p * p * t - p * i1 / C_LIGHT + i2 / (2.0 * C_LIGHT**2)
    return np.fft.ifft(np.fft.fft(F0, axis=-1) * np.exp(-1j * phase), axis=-1)


def electron_expectations(F: np.ndarray, grid: SpatialGrid, potential: PotentialSpec,
                          t: float) -> dict:
    """Per-sample ``<p>, <p^2>, <x>, <x^2>, <U>`` and norms (canonical momentum)."""
    dx = grid.spacing
    dens = np.abs(F) ** 2
    norm = dens.sum(axis=-1) * dx
    f_p = np.fft.fft(F, axis=-1)
    dens_p = np.abs(f_p) ** 2
    # rows zeroed by masking have no momentum density; report zeros for them
    dens_p_sum = np.where(norm > 0, dens_p.sum(axis=-1), 1.0)
    p = grid.p
    x = grid.x
    return {
        "norm": norm,
        "p": (dens_p * p).sum(axis=-1) / dens_p_sum * norm,
        "p2": (dens_p * p * p).sum(axis=-1) / dens_p_sum * norm,
        "x": (dens * x).sum(axis=-1) * dx,
        "x2": (dens * x * x).sum(axis=-1) * dx,
        "U": (dens * potential.values(x, t)).sum(axis=-1) * dx,
    }


@dataclass(frozen=True)
class ElectronEnsemble:
    """Electron wavefunctions ``F(x; q)``, one row per quadrature sample."""

    potential: PotentialSpec
    spatial: SpatialGrid
    q_samples: np.ndarray
    wavefunctions: np.ndarray
    t: float = 0.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        q = np.asarray(self.q_samples, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        object.__setattr__(self, "q_samples", q)
        wf = np.asarray(self.wavefunctions, dtype=complex)
        if wf.shape != (q.shape[0], self.spatial.n_points):
            raise ValueError(f"wavefunctions shape {wf.shape} does not match "
                             f"({q.shape[0]}, {self.spatial.n_points})")
        object.__setattr__(self, "wavefunctions", wf)

    @classmethod
    def from_initial(cls, F0: np.ndarray, q_samples, potential: PotentialSpec,
                     spatial: SpatialGrid, t: float = 0.0) -> "ElectronEnsemble":
        q = np.asarray(q_samples, dtype=float)
        n = q.shape[0]
        return cls(potential, spatial, q, np.broadcast_to(F0, (n, spatial.n_points)).copy(), t)

    @property
    def n_samples(self) -> int:
        return self.q_samples.shape[0]

    @property
    def expectations(self) -> dict:
        if "exp" not in self._cache:
            self._cache["exp"] = electron_expectations(self.wavefunctions, self.spatial,
                                                       self.potential, self.t)
        return self._cache["exp"]

    def norms(self) -> np.ndarray:
        return self.expectations["norm"]

    def evolved(self, wavefunctions: np.ndarray, t: float) -> "ElectronEnsemble":
        return replace(self, wavefunctions=wavefunctions, t=t, _cache={})

    def to_bytes(self) -> bytes:
        """Checkpoint: magic, JSON header length, JSON header, re/im float64 payload."""
        header = json.dumps({
            "potential": self.potential.to_dict(),
            "spatial": [self.spatial.x_min, self.spatial.x_max, self.spatial.n_points],
            "q_samples": self.q_samples.tolist(),
            "t": self.t,
        }, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(b"ENSMBL01")
        buf.write(np.asarray([len(header)], dtype="<u8").tobytes())
        buf.write(header)
        payload = np.empty(self.wavefunctions.shape + (2,), dtype="<f8")
        payload[..., 0] = self.wavefunctions.real
        payload[..., 1] = self.wavefunctions.imag
        buf.write(payload.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ElectronEnsemble":
        if data[:8] != b"ENSMBL01":
            raise ValueError("not an ensemble checkpoint")
        n = int(np.frombuffer(data, dtype="<u8", count=1, offset=8)[0])
        header = json.loads(data[16:16 + n])
        spatial = SpatialGrid(*header["spatial"])
        q = np.asarray(header["q_samples"], dtype=float)
        raw = np.frombuffer(data, dtype="<f8", offset=16 + n).reshape(q.shape[0], -1, 2)
        return cls(PotentialSpec.from_dict(header["potential"]), spatial, q,
                   raw[..., 0] + 1j * raw[..., 1], header["t"])


def sample_vector_potential(ens: ElectronEnsemble, modes: Sequence[ModeSpec], t: float,
                            include_sine_term: bool = False):
    pf = ParametricField(modes, ens.q_samples, include_sine_term)
    return vector_potential(pf, t)


def ensemble_propagate(ens: ElectronEnsemble, modes: Sequence[ModeSpec], dt: float,
                       n_steps: int = 1, include_sine_term: bool = False,
                       method: str = "split", check_aliasing: bool = True) -> ElectronEnsemble:
    """Advance every q-sample by ``n_steps`` steps of ``dt`` from ``ens.t``.

    ``method="split"`` uses Strang steps with the midpoint vector potential;
    ``method="volkov"`` applies the closed form (free electron only, strong-field
    potential only).  With the sine term the potential is complex and the
    evolution is not unitary.
    """
    modes = tuple(modes)
    t0 = ens.t
    t1 = t0 + n_steps * dt
    if method == "volkov":
        if include_sine_term:
            raise ValueError("the closed form is implemented for the strong-field potential only")
        i1, i2 = volkov_integrals(modes, ens.q_samples, t1, t0)
        wf = volkov_evolve(ens.wavefunctions, i1, i2, t1 - t0, ens.spatial, ens.potential)
        return ens.evolved(wf, t1)
    if method != "split":
        raise ValueError(f"unknown method {method!r}")
    wf = ens.wavefunctions
    q = ens.q_samples
    grid = ens.spatial
    # per-mode unique sample values: the kinetic phase factorizes over modes
    uniq = [np.unique(q[:, j], return_inverse=True) for j in range(len(modes))]
    free_kin = np.exp(-0.5j * dt * grid.p ** 2)
    for k in range(n_steps):
        t = t0 + k * dt
        t_mid = t + 0.5 * dt
        phase = np.broadcast_to(free_kin, wf.shape)
        a_total = np.zeros(q.shape[0], dtype=complex if include_sine_term else float)
        for j, (vals, inv) in enumerate(uniq):
            qj = np.broadcast_to(q[0], (vals.size, len(modes))).copy()
            qj[:, j] = vals
            term = vector_potential(ParametricField(modes, qj, include_sine_term), t_mid, per_mode=True)[:, j]
            phase = phase * np.exp((1j * dt / C_LIGHT) * np.outer(term, grid.p))[inv]
            a_total = a_total + term[inv]
        phase = phase * np.exp(-0.5j * dt * (a_total / C_LIGHT) ** 2)[:, None]
        if not ens.potential.is_free:
            half_u = np.exp(-0.5j * dt * ens.potential.values(grid.x, t_mid))
            wf = wf * half_u
        f_p = np.fft.fft(wf, axis=-1)
        if check_aliasing and k == 0:
            try:
                _check_aliasing(f_p, a_total / C_LIGHT, grid)
            except AliasingError as exc:
                raise SampleError(int(np.argmax(np.abs(a_total))), exc) from exc
        wf = np.fft.ifft(f_p * phase, axis=-1)
        if not ens.potential.is_free:
            wf = wf * half_u
    return ens.evolved(wf, t1)


def static_gauge_residual(ens_prev: ElectronEnsemble, ens_next: ElectronEnsemble,
                          dt: float) -> np.ndarray:
    """Finite-difference estimate of ``<F|dF/dt>`` per sample.

    The bra is the midpoint ``(F_prev + F_next)/2``, which makes the real part
    equal to half the norm change per unit time: zero for a norm-preserving
    step, whatever ``dt`` is.  The imaginary part carries the energy phase.
    """
    f0 = ens_prev.wavefunctions
    f1 = ens_next.wavefunctions
    dx = ens_prev.spatial.spacing
    mid = 0.5 * (f0 + f1)
    return np.sum(np.conj(mid) * (f1 - f0), axis=-1) * dx / dt
