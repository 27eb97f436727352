"""Field evolution under the electron-averaged Hamiltonian.

The averaged Hamiltonian acting on the field wavefunction is written as

    H_B = V(q) + 1/2 sum_k {W_k(q), p_k} + 1/2 sum_jk M_jk p_j p_k,

with ``p_k = -i d/dq_k``.  Expanding ``<F| (p - A/c)^2/2 + U |F>`` with the
rotating quadrature operator ``A_k = beta_k (q_k C_k + p_k S_k)``
(``C_k, S_k = cos, sin psi_k``) and writing ``X = sum_k beta_k C_k q_k``:

    V   = <p^2>/2 + <U> - <p> X / c + X^2 / (2 c^2)
    W_k = beta_k S_k (X / c^2 - <p> / c)
    M   = (beta S)(beta S)^T / c^2

where ``<.>`` are the per-sample electron expectations (functions of ``q``).
All three pieces are real, so the operator is Hermitian by construction.

Two propagators are provided: Crank-Nicolson on quadrature grids (any
``V``, ``W`` tabulated on the grid points) and the Gaussian ansatz
``G = exp(q^T K q + b^T q + log C)`` for exactly quadratic ``H_B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .field import (C_LIGHT, FieldStateGrid, ModeSpec, QuadratureGrid, apply_along,
                    derivative_matrices, mode_phase)


class NonQuadraticError(ValueError):
    """The averaged Hamiltonian is not a quadratic polynomial in (q, p)."""


class SolverError(RuntimeError):
    """Linear solver failed to converge."""


class ZerosGuardError(RuntimeError):
    """The field state developed a (near) node inside its initially populated region."""


@dataclass(frozen=True)
class QuadraticModel:
    """``V`` and ``W`` as polynomials in ``dq = q - center``.

    ``V = v0 + v.dq + dq^T Vqq dq / 2`` and ``W_k = w0_k + sum_j w1[k, j] dq_j``.
    """

    center: np.ndarray
    v0: float
    v: np.ndarray
    vqq: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    residual: float

    def absolute(self):
        """Coefficients in absolute ``q``: ``(h0, f, Q, g, R)``.

        ``V = h0 + f.q + q^T Q q / 2`` and ``W_k = g_k + sum_j R[j, k] q_j``.
        """
        c = self.center
        q_mat = self.vqq
        f = self.v - q_mat @ c
        h0 = self.v0 - self.v @ c + 0.5 * c @ q_mat @ c
        g = self.w0 - self.w1 @ c
        r = self.w1.T.copy()
        return h0, f, q_mat, g, r


@dataclass(frozen=True)
class BackactionCoefficients:
    """Averaged-Hamiltonian coefficients at one time.

    ``V`` (``c0``) has one value per q-sample, ``W`` (``c1``, first-derivative
    coefficients) one row per sample, ``M`` (``c2``) is constant.
    """

    modes: tuple
    q_samples: np.ndarray
    V: np.ndarray
    W: np.ndarray
    M: np.ndarray
    t: float = 0.0
    model: QuadraticModel | None = field(default=None, compare=False)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def scaled(self, factor: float) -> "BackactionCoefficients":
        model = None
        if self.model is not None:
            m = self.model
            model = replace(m, v0=factor * m.v0, v=factor * m.v, vqq=factor * m.vqq,
                            w0=factor * m.w0, w1=factor * m.w1)
        return replace(self, V=factor * self.V, W=factor * self.W, M=factor * self.M, model=model)

    def fit_quadratic(self, rel_tol: float = 1e-8) -> "BackactionCoefficients":
        """Least-squares quadratic ``V`` and linear ``W`` in ``q``.

        Raises :class:`NonQuadraticError` when the fit residual exceeds
        ``rel_tol`` relative to the largest coefficient magnitude.
        """
        q = self.q_samples
        n_s, n_m = q.shape
        center = q.mean(axis=0)
        dq = q - center
        pairs = list(combinations_with_replacement(range(n_m), 2))
        cols = [np.ones(n_s)] + [dq[:, j] for j in range(n_m)] + [dq[:, i] * dq[:, j] for i, j in pairs]
        design = np.stack(cols, axis=1)
        lin = design[:, : 1 + n_m]
        if n_s < design.shape[1]:
            raise NonQuadraticError(f"{n_s} samples cannot determine a quadratic in {n_m} modes")
        coef_v, *_ = np.linalg.lstsq(design, self.V, rcond=None)
        coef_w, *_ = np.linalg.lstsq(lin, self.W, rcond=None)
        res_v = np.max(np.abs(design @ coef_v - self.V))
        res_w = np.max(np.abs(lin @ coef_w - self.W)) if self.W.size else 0.0
        scale_v = max(np.max(np.abs(self.V)), 1e-300)
        scale_w = max(np.max(np.abs(self.W)), 1e-300)
        residual = max(res_v / scale_v, res_w / scale_w if np.any(self.W) else 0.0)
        if residual > rel_tol:
            raise NonQuadraticError(f"quadratic fit residual {residual:.2e} exceeds {rel_tol:.1e}")
        vqq = np.zeros((n_m, n_m))
        for c, (i, j) in zip(coef_v[1 + n_m:], pairs):
            if i == j:
                vqq[i, i] = 2.0 * c
            else:
                vqq[i, j] = vqq[j, i] = c
        model = QuadraticModel(center, float(coef_v[0]), coef_v[1:1 + n_m], vqq,
                               coef_w[0].copy(), coef_w[1:].T.copy(), float(residual))
        return replace(self, model=model)

    def on_grids(self, grids: Sequence[QuadratureGrid]):
        """``V`` and ``W_k`` evaluated on the tensor grid.

        Tabulated values are used when the samples are exactly the grid points
        (C order); otherwise the fitted quadratic model is evaluated.
        """
        shape = tuple(g.n_points for g in grids)
        pts = grid_sample_points(grids)
        if pts.shape == self.q_samples.shape and np.allclose(pts, self.q_samples, rtol=0, atol=1e-12):
            return self.V.reshape(shape), [self.W[:, k].reshape(shape) for k in range(self.n_modes)]
        if self.model is None:
            raise ValueError("samples do not match the grid; fit a quadratic model first")
        m = self.model
        dq = pts - m.center
        v = m.v0 + dq @ m.v + 0.5 * np.einsum("si,ij,sj->s", dq, m.vqq, dq)
        w = m.w0 + dq @ m.w1.T
        return v.reshape(shape), [w[:, k].reshape(shape) for k in range(self.n_modes)]


def grid_sample_points(grids: Sequence[QuadratureGrid]) -> np.ndarray:
    """All tensor-grid points as ``(prod n, n_modes)`` in C order."""
    mesh = np.meshgrid(*[g.points for g in grids], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def backaction_from_expectations(modes: Sequence[ModeSpec], q_samples, p_mean, p2_mean,
                                 u_mean, t: float) -> BackactionCoefficients:
    modes = tuple(modes)
    q = np.asarray(q_samples, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    if q.shape[1] != len(modes):
        raise ValueError(f"q-samples have {q.shape[1]} modes, expected {len(modes)}")
    p_mean = np.asarray(p_mean, dtype=float)
    p2_mean = np.asarray(p2_mean, dtype=float)
    u_mean = np.asarray(u_mean, dtype=float)
    if not (p_mean.shape == p2_mean.shape == u_mean.shape == (q.shape[0],)):
        raise ValueError("expectation tables must have one entry per q-sample")
    beta = np.array([m.beta for m in modes])
    psi = np.array([float(mode_phase(m, t)) for m in modes])
    bc = beta * np.cos(psi)
    bs = beta * np.sin(psi)
    x = q @ bc
    c = C_LIGHT
    v = 0.5 * p2_mean + u_mean - p_mean * x / c + x * x / (2.0 * c * c)
    w = np.outer(x / (c * c) - p_mean / c, bs)
    m = np.outer(bs, bs) / (c * c)
    return BackactionCoefficients(modes, q, v, w, m, t)


def build_backaction(ens, modes: Sequence[ModeSpec], t: float | None = None) -> BackactionCoefficients:
    """Averaged Hamiltonian from an electron ensemble's expectation tables."""
    exp = ens.expectations
    for key in ("p", "p2", "U"):
        if key not in exp:
            raise ValueError(f"missing expectation table {key!r}")
    return backaction_from_expectations(modes, ens.q_samples, exp["p"], exp["p2"], exp["U"],
                                        ens.t if t is None else t)


class GridHamiltonian:
    """Discretized averaged Hamiltonian on a field grid."""

    def __init__(self, coeffs: BackactionCoefficients, grids: Sequence[QuadratureGrid],
                 derivative: str = "spectral"):
        if len(grids) != coeffs.n_modes:
            raise ValueError("inconsistent mode count")
        self.grids = tuple(grids)
        self.shape = tuple(g.n_points for g in grids)
        self.V, self.W = coeffs.on_grids(grids)
        self.M = coeffs.M
        mats = [derivative_matrices(g, derivative) for g in grids]
        self.d1 = [m[0] for m in mats]
        self.d2 = [m[1] for m in mats]

    def _p(self, psi, k):
        return -1j * apply_along(self.d1[k], psi, k)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = self.V * psi
        for k in range(len(self.grids)):
            if np.any(self.W[k]):
                out = out + 0.5 * (self.W[k] * self._p(psi, k) + self._p(self.W[k] * psi, k))
        for j in range(len(self.grids)):
            for k in range(len(self.grids)):
                mjk = self.M[j, k]
                if mjk == 0.0:
                    continue
                if j == k:
                    out = out - 0.5 * mjk * apply_along(self.d2[j], psi, j)
                else:
                    out = out + 0.5 * mjk * self._p(self._p(psi, k), j)
        return out

    def dense(self) -> np.ndarray:
        """Full matrix; only for single-mode grids."""
        if len(self.grids) != 1:
            raise ValueError("dense form is only built for one mode")
        p = -1j * self.d1[0]
        w = self.W[0]
        return (np.diag(self.V).astype(complex)
                + 0.5 * (w[:, None] * p + p * w[None, :])
                - 0.5 * self.M[0, 0] * self.d2[0])

    def hermiticity_error(self, rng: np.random.Generator | None = None) -> float:
        if len(self.grids) == 1:
            h = self.dense()
            return float(np.max(np.abs(h - h.conj().T)))
        rng = np.random.default_rng(0) if rng is None else rng
        u = rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)
        v = rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)
        lhs = np.vdot(u, self.apply(v))
        rhs = np.conj(np.vdot(v, self.apply(u)))
        scale = np.linalg.norm(u) * np.linalg.norm(v)
        return float(abs(lhs - rhs) / scale)


def propagate_field_grid(G: FieldStateGrid, coeffs: BackactionCoefficients, dt: float,
                         tol: float = 1e-13) -> FieldStateGrid:
    """One Crank-Nicolson step ``(1 + i dt H/2) G' = (1 - i dt H/2) G``.

    The density-weighted mean of ``V`` is taken out of ``H`` and applied as an
    exact phase, which keeps the Cayley phase error tied to the energy spread
    of the state rather than its absolute energy.

    ``coeffs`` should be taken at the midpoint of the step.  One mode uses a
    dense solve, more modes use GMRES with a matrix-free operator.
    """
    if G.n_modes > 2:
        raise ValueError("the grid path handles at most two modes")
    ham = GridHamiltonian(coeffs, G.grids, G.derivative_method)
    psi = G.amplitudes
    # energy reference: removed before the solve, restored as an exact phase
    dens = np.abs(psi) ** 2
    e_ref = float(np.sum(dens * ham.V) / np.sum(dens))
    ham.V = ham.V - e_ref
    phase = np.exp(-1j * e_ref * dt)
    rhs = psi - 0.5j * dt * ham.apply(psi)
    if G.n_modes == 1:
        a = np.eye(psi.size) + 0.5j * dt * ham.dense()
        return G.with_amplitudes(phase * np.linalg.solve(a, rhs))
    shape = psi.shape
    op = LinearOperator((psi.size, psi.size), dtype=complex,
                        matvec=lambda v: (v.reshape(shape) + 0.5j * dt * ham.apply(v.reshape(shape))).ravel())
    x0 = (psi - 1j * dt * ham.apply(psi)).ravel()
    sol, info = gmres(op, rhs.ravel(), x0=x0, rtol=tol, atol=0.0, restart=40, maxiter=200)
    if info != 0:
        raise SolverError(f"GMRES did not converge (info={info})")
    return G.with_amplitudes(phase * sol.reshape(shape))


@dataclass(frozen=True)
class GaussianFieldState:
    """Multimode Gaussian ``exp[sum a_j q_j^2 + sum b_j q_j + sum_{i!=j} d_ij q_i q_j + log C]``."""

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    logC: complex

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=complex))
        b = np.atleast_1d(np.asarray(self.b, dtype=complex))
        n = a.size
        d = np.zeros((n, n), dtype=complex) if self.d is None else np.asarray(self.d, dtype=complex)
        if b.shape != (n,) or d.shape != (n, n):
            raise ValueError("inconsistent Gaussian coefficient shapes")
        if not np.allclose(d, d.T, rtol=0, atol=1e-15 * max(1.0, np.max(np.abs(d)))):
            raise ValueError("d must be symmetric")
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "logC", complex(self.logC))

    @property
    def n_modes(self) -> int:
        return self.a.size

    @property
    def K(self) -> np.ndarray:
        """Quadratic-form matrix: exponent is ``q^T K q + b^T q + log C``."""
        return np.diag(self.a) + self.d

    @classmethod
    def from_quadratic_form(cls, K, b, logC) -> "GaussianFieldState":
        K = np.asarray(K, dtype=complex)
        K = 0.5 * (K + K.T)
        return cls(np.diag(K).copy(), b, K - np.diag(np.diag(K)), logC)

    @classmethod
    def coherent(cls, modes: Sequence[ModeSpec]) -> "GaussianFieldState":
        """Phase-free (interaction-picture) product coherent state."""
        centers = np.array([m.q_center for m in modes])
        n = len(modes)
        log_c = -0.5 * float(centers @ centers) - 0.25 * n * math.log(math.pi)
        return cls(np.full(n, -0.5), centers, None, log_c)

    def is_normalizable(self) -> bool:
        return bool(np.all(np.linalg.eigvalsh(self.K.real) < 0))

    def log_norm(self) -> float:
        """``log <G|G>``."""
        a_mat = -2.0 * self.K.real
        br = 2.0 * self.b.real
        sign, logdet = np.linalg.slogdet(a_mat)
        if sign <= 0:
            return math.inf
        n = self.n_modes
        return float(2.0 * self.logC.real + 0.5 * n * math.log(math.pi) - 0.5 * logdet
                     + 0.25 * br @ np.linalg.solve(a_mat, br))

    def normalized(self) -> "GaussianFieldState":
        return replace(self, logC=self.logC - 0.5 * self.log_norm())

    def moments(self) -> dict:
        """Closed-form first and second moments of ``q`` and ``p = -i d/dq``."""
        kr = self.K.real
        ki = self.K.imag
        cov_q = -np.linalg.inv(4.0 * kr)
        mean_q = cov_q @ (2.0 * self.b.real)
        mean_p = (2.0 * self.K @ mean_q + self.b).imag
        cov_p = 0.25 * np.linalg.inv(cov_q) + 4.0 * ki @ cov_q @ ki
        cov_qp = 2.0 * cov_q @ ki
        return {"mean_q": mean_q, "mean_p": mean_p, "cov_q": cov_q, "cov_p": cov_p, "cov_qp": cov_qp}

    def log_amplitude(self, points: np.ndarray, center: np.ndarray | None = None) -> np.ndarray:
        """Exponent at ``points`` (shape ``(..., n)``), expanded about ``center``."""
        pts = np.asarray(points, dtype=float)
        c = pts.reshape(-1, self.n_modes).mean(axis=0) if center is None else np.asarray(center)
        dq = pts - c
        K = self.K
        lin = self.b + 2.0 * K @ c
        const = c @ K @ c + self.b @ c + self.logC
        return np.einsum("...i,ij,...j->...", dq, K, dq) + dq @ lin + const

    def to_grid(self, modes: Sequence[ModeSpec], grids: Sequence[QuadratureGrid],
                derivative: str = "spectral") -> FieldStateGrid:
        pts = grid_sample_points(grids)
        center = np.array([g.center for g in grids])
        amps = np.exp(self.log_amplitude(pts, center)).reshape(tuple(g.n_points for g in grids))
        return FieldStateGrid(modes, grids, amps, "interaction", derivative)

    def to_text(self) -> str:
        def fmt(z):
            return f"{z.real:.17g},{z.imag:.17g}"

        lines = [f"n_modes={self.n_modes}"]
        lines += [f"a.{j}={fmt(v)}" for j, v in enumerate(self.a)]
        lines += [f"b.{j}={fmt(v)}" for j, v in enumerate(self.b)]
        for i in range(self.n_modes):
            for j in range(i + 1, self.n_modes):
                lines.append(f"d.{i}.{j}={fmt(self.d[i, j])}")
        lines.append(f"logC={fmt(self.logC)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GaussianFieldState":
        vals = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                vals[k.strip()] = v.strip()
        n = int(vals["n_modes"])

        def cplx(s):
            re, im = s.split(",")
            return complex(float(re), float(im))

        a = [cplx(vals[f"a.{j}"]) for j in range(n)]
        b = [cplx(vals[f"b.{j}"]) for j in range(n)]
        d = np.zeros((n, n), dtype=complex)
        for i in range(n):
            for j in range(i + 1, n):
                d[i, j] = d[j, i] = cplx(vals[f"d.{i}.{j}"])
        return cls(a, b, d, cplx(vals["logC"]))


def _gaussian_rhs(K, b, coeffs):
    h0, f, Q, g, R, P = coeffs
    dK = -1j * (0.5 * Q - 1j * (R @ K + K @ R.T) - 2.0 * K @ P @ K)
    db = -1j * (-1j * R @ b - 2.0 * K @ P @ b + f - 2j * K @ g)
    dlogc = -1j * (-0.5j * np.trace(R) - np.trace(P @ K) - 0.5 * b @ P @ b - 1j * g @ b + h0)
    return dK, db, dlogc


def _rk4(K, b, logc, coeffs, h, n):
    for _ in range(n):
        k1 = _gaussian_rhs(K, b, coeffs)
        k2 = _gaussian_rhs(K + 0.5 * h * k1[0], b + 0.5 * h * k1[1], coeffs)
        k3 = _gaussian_rhs(K + 0.5 * h * k2[0], b + 0.5 * h * k2[1], coeffs)
        k4 = _gaussian_rhs(K + h * k3[0], b + h * k3[1], coeffs)
        K = K + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        b = b + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        logc = logc + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return K, b, logc


def gaussian_generator(coeffs: BackactionCoefficients, rel_tol: float = 1e-8):
    """``(h0, f, Q, g, R, P)`` of an exactly quadratic averaged Hamiltonian."""
    if coeffs.model is None:
        coeffs = coeffs.fit_quadratic(rel_tol)
    h0, f, Q, g, R = coeffs.model.absolute()
    return h0, f, Q, g, R, coeffs.M


def propagate_gaussian(G: GaussianFieldState, coeffs: BackactionCoefficients, dt: float,
                       tol: float = 1e-12, max_doublings: int = 12) -> GaussianFieldState:
    """Advance the Gaussian coefficients over ``dt`` with ``H_B`` frozen.

    Matching powers of ``q`` in ``i dG/dt = H_B G`` gives a Riccati equation for
    ``K``, a linear one for ``b`` and a quadrature for ``log C``.  These are
    integrated with classical RK4; the number of sub-steps is doubled until
    one and two sub-step sequences agree to ``tol``.
    """
    if coeffs.n_modes != G.n_modes:
        raise ValueError("inconsistent mode count")
    gen = gaussian_generator(coeffs)
    K0, b0, c0 = G.K, G.b, G.logC
    n = 1
    coarse = _rk4(K0, b0, c0, gen, dt / n, n)
    for _ in range(max_doublings):
        fine = _rk4(K0, b0, c0, gen, dt / (2 * n), 2 * n)
        err = max(np.max(np.abs(fine[0] - coarse[0])),
                  np.max(np.abs(fine[1] - coarse[1])) / max(1.0, np.max(np.abs(b0))))
        if err <= tol:
            return GaussianFieldState.from_quadratic_form(fine[0], fine[1], fine[2])
        coarse = fine
        n *= 2
    raise SolverError(f"Gaussian step did not reach tolerance {tol:g} (error {err:.2e})")


def zeros_guard(G: FieldStateGrid, reference: FieldStateGrid | None = None,
                threshold: float = 1e-9, region_tol: float = 1e-6) -> float:
    """Ratio ``min|G| / max|G|`` over the region where ``|G0| > region_tol max|G0|``.

    ``reference`` defaults to the phase-free coherent state of ``G``'s modes.
    Raises :class:`ZerosGuardError` when the ratio falls below ``threshold``.
    """
    if reference is None:
        from .field import coherent_state

        reference = coherent_state(G.modes, grids=G.grids, picture="interaction")
    ref = np.abs(reference.amplitudes)
    region = ref > region_tol * ref.max()
    mag = np.abs(G.amplitudes)
    ratio = float(mag[region].min() / mag.max())
    if ratio < threshold:
        raise ZerosGuardError(f"field state has a near-node: guard ratio {ratio:.2e} < {threshold:.1e}")
    return ratio
