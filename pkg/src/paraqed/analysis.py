"""Quantum-optics diagnostics for field states on grids or in Gaussian form.

Every diagnostic accepts either representation.  Grid values come from
quadrature sums with spectral derivatives.  Gaussian values come from closed
forms in the coefficients.  On a Gaussian state the two routes must agree,
which the tests use as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .backaction import GaussianFieldState
from .field import FieldStateGrid, _require_normalized, apply_ladder, check_derivative_accuracy
from .io import key_value_lines

SQUEEZE_TOL = 1e-8


@dataclass(frozen=True)
class QuadratureReport:
    mean_q: float
    mean_p: float
    var_q: float
    var_p: float
    cov_qp: float

    @property
    def uncertainty_product(self) -> float:
        return self.var_q * self.var_p

    def to_dict(self) -> dict:
        out = asdict(self)
        out["uncertainty_product"] = self.uncertainty_product
        return out


def _grid_quadratures(G: FieldStateGrid, mode: int) -> QuadratureReport:
    _require_normalized(G)
    psi = G.amplitudes
    dv = G.volume_element
    q = G.mesh(mode)
    dens = np.abs(psi) ** 2
    dpsi = G.derivative(mode, 1)
    mean_q = float(np.sum(q * dens) * dv)
    var_q = float(np.sum((q - mean_q) ** 2 * dens) * dv)
    mean_p = float(np.real(-1j * np.vdot(psi, dpsi)) * dv)
    var_p = float(np.sum(np.abs(dpsi) ** 2) * dv) - mean_p ** 2
    # symmetrized <{q, p}>/2 = Re <psi| q p |psi>
    qp = float(np.real(np.vdot(q * psi, -1j * dpsi)) * dv)
    return QuadratureReport(mean_q, mean_p, var_q, var_p, qp - mean_q * mean_p)


def quadrature_stats(G, mode: int = 0) -> QuadratureReport:
    """Means and variances of ``q`` and ``p = -i d/dq`` for one mode."""
    if isinstance(G, GaussianFieldState):
        if not 0 <= mode < G.n_modes:
            raise IndexError(mode)
        if abs(G.log_norm()) > 2e-6:
            raise ValueError("Gaussian state is not normalized")
        mo = G.moments()
        return QuadratureReport(float(mo["mean_q"][mode]), float(mo["mean_p"][mode]),
                                float(mo["cov_q"][mode, mode]), float(mo["cov_p"][mode, mode]),
                                float(mo["cov_qp"][mode, mode]))
    return _grid_quadratures(G, mode)


@dataclass(frozen=True)
class SqueezingReport:
    """Per-mode and principal-axis squeezing data.

    ``flags[j]`` is set when the variance of quadrature ``q_j`` is below the
    coherent value 1/2; ``factors[j]`` is that variance divided by 1/2.
    ``principal_a`` are the eigenvalues of ``Re K`` (equal to ``Re a`` for a
    single mode) with ``principal_flags`` set where ``principal_a < -1/2``.
    """

    flags: tuple
    factors: tuple
    raw_a: tuple
    principal_a: tuple
    principal_flags: tuple

    def to_dict(self) -> dict:
        return {f"mode{j}": {"squeezed": self.flags[j], "factor": self.factors[j],
                             "re_a": self.raw_a[j], "principal_a": self.principal_a[j],
                             "principal_squeezed": self.principal_flags[j]}
                for j in range(len(self.flags))}


def squeezing_detect(G: GaussianFieldState, tol: float = SQUEEZE_TOL) -> SqueezingReport:
    cov_q = G.moments()["cov_q"]
    var = np.diag(cov_q)
    factors = tuple(float(v / 0.5) for v in var)
    flags = tuple(bool(v < 0.5 - tol) for v in var)
    principal = np.linalg.eigvalsh(G.K.real)
    # principal variance -1/(4 lambda) < 1/2 - tol
    pflags = tuple(bool(-0.25 / lam < 0.5 - tol) for lam in principal)
    return SqueezingReport(flags, factors, tuple(float(a) for a in G.a.real),
                           tuple(float(x) for x in principal), pflags)


def _gaussian_photon_stats(G: GaussianFieldState, mode: int) -> tuple[float, float]:
    """Raw ``<N>`` and ``Var N`` of one mode from its reduced covariance."""
    mo = G.moments()
    mu = np.array([mo["mean_q"][mode], mo["mean_p"][mode]])
    sigma = np.array([[mo["cov_q"][mode, mode], mo["cov_qp"][mode, mode]],
                      [mo["cov_qp"][mode, mode], mo["cov_p"][mode, mode]]])
    mean = 0.5 * (np.trace(sigma) + mu @ mu)
    var = 0.5 * np.trace(sigma @ sigma) + mu @ sigma @ mu - 0.25
    return float(mean), float(var)


def photon_statistics(G, mode: int = 0, accuracy_tol: float = 1e-10) -> dict:
    """Photon mean (zero-point excluded), variance and Mandel Q of one mode.

    ``N_raw`` includes the zero-point ``1/2``.
    """
    if isinstance(G, GaussianFieldState):
        raw, var = _gaussian_photon_stats(G, mode)
    else:
        _require_normalized(G)
        check_derivative_accuracy(G, mode, accuracy_tol)
        n_psi = apply_ladder(G, mode, "number", None).amplitudes
        dv = G.volume_element
        raw = float(np.real(np.vdot(G.amplitudes, n_psi)) * dv)
        var = float(np.sum(np.abs(n_psi) ** 2) * dv) - raw ** 2
    mean = raw - 0.5
    q = (var - mean) / mean if mean > 0 else math.nan
    return {"mean_N": mean, "var_N": var, "mandel_Q": q, "N_raw": raw}


def _grid_log_hessian_cross(G: FieldStateGrid) -> complex:
    """``d1 d2 log G`` at the density maximum."""
    psi = G.amplitudes
    i, j = np.unravel_index(np.argmax(np.abs(psi)), psi.shape)
    d1 = G.derivative(0, 1)
    d2 = G.derivative(1, 1)
    d12 = G.with_amplitudes(d1).derivative(1, 1)
    g = psi[i, j]
    return complex(d12[i, j] / g - d1[i, j] * d2[i, j] / (g * g))


def reduced_purity(G, mode: int = 0) -> float:
    """``Tr rho_mode^2`` after tracing out the other mode."""
    if isinstance(G, GaussianFieldState):
        mo = G.moments()
        det = (mo["cov_q"][mode, mode] * mo["cov_p"][mode, mode] - mo["cov_qp"][mode, mode] ** 2)
        return float(0.5 / math.sqrt(det))
    moved = np.moveaxis(G.amplitudes, mode, 0)
    flat = moved.reshape(moved.shape[0], -1)
    h = G.grids[mode].spacing
    other = G.volume_element / h
    rho = flat @ flat.conj().T * other
    return float(np.sum(np.abs(rho) ** 2) * h * h)


def mode_entanglement(G) -> dict:
    """``|d_12|`` (or the grid log-Hessian cross term / 2) and mode-1 reduced purity."""
    n = G.n_modes
    if n != 2:
        raise ValueError(f"mode entanglement needs exactly two modes, got {n}")
    if isinstance(G, GaussianFieldState):
        d = abs(G.d[0, 1])
    else:
        _require_normalized(G)
        d = abs(_grid_log_hessian_cross(G)) / 2.0
    return {"offdiag_d": float(d), "reduced_purity": reduced_purity(G, 0)}


def _gaussian_log_overlap(g1: GaussianFieldState, g2: GaussianFieldState) -> complex:
    a = -(np.conj(g1.K) + g2.K)
    b = np.conj(g1.b) + g2.b
    n = g1.n_modes
    _, logdet = np.linalg.slogdet(a)
    return (0.5 * n * math.log(math.pi) - 0.5 * logdet + 0.25 * b @ np.linalg.solve(a, b)
            + np.conj(g1.logC) + g2.logC)


def fidelity(G1, G2) -> float:
    """``|<G1|G2>|`` of the normalized states (closed form for Gaussians)."""
    if isinstance(G1, GaussianFieldState) and isinstance(G2, GaussianFieldState):
        if G1.n_modes != G2.n_modes:
            raise ValueError("mode counts differ")
        log_ov = _gaussian_log_overlap(G1, G2).real - 0.5 * (G1.log_norm() + G2.log_norm())
        return float(min(math.exp(log_ov), 1.0))
    if isinstance(G1, FieldStateGrid) and isinstance(G2, FieldStateGrid):
        return float(min(abs(G1.inner(G2)) / (G1.norm() * G2.norm()), 1.0))
    raise TypeError("fidelity needs two grid states or two Gaussian states")


def field_report(G, t: float | None = None) -> dict:
    """All per-mode diagnostics of one state as a nested dict."""
    out = {} if t is None else {"t": float(t)}
    for j in range(G.n_modes):
        rec = quadrature_stats(G, j).to_dict()
        rec.update(photon_statistics(G, j))
        out[f"mode{j}"] = rec
    if isinstance(G, GaussianFieldState):
        out["squeezing"] = squeezing_detect(G).to_dict()
    if G.n_modes == 2:
        out["entanglement"] = mode_entanglement(G)
    return out


def report_text(report: dict) -> str:
    return "\n".join(key_value_lines(report)) + "\n"
