"""Run orchestration: parametric and joint pipelines, comparison, sweeps, plot data.

A run directory contains

* ``config.ini``: the validated scenario, re-serialized;
* ``records.tsv``: one row per output time (header line, tab separated);
* ``checkpoints/``: field states at every output time, final ensemble and joint state;
* ``summary.txt``: ``key=value`` lines.

Outputs contain no timestamps or host data, so a fixed config reproduces
byte-identical files on the same platform.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import fidelity, mode_entanglement, photon_statistics, quadrature_stats, squeezing_detect
from .backaction import (GaussianFieldState, GridHamiltonian, backaction_from_expectations,
                         grid_sample_points, propagate_field_grid, propagate_gaussian, zeros_guard)
from .config import ScenarioConfig, config_to_text
from .electron import (ElectronEnsemble, PotentialSpec, SpatialGrid, ensemble_propagate,
                       gaussian_packet, harmonic_ground_state, split_step, static_gauge_residual)
from .field import FieldStateGrid, coherent_state, grid_for_mode, mode_phase, save_field_state
from .io import atomic_write_bytes, atomic_write_text, key_value_lines
from .joint import (JointPropagator, compare_to_parametric, fit_loglog_slope, product_state,
                    reduced_field_purity, reduced_mode_purity)

WORKERS_ENV = "PARAQED_THREADS"
NORM_FLAG_TOL = 1e-8
PLOT_QUANTITIES = {"var_q": "var_q", "N": "mean_N", "d12": "offdiag_d"}


@dataclass(frozen=True)
class RunSetup:
    modes: tuple
    grids: tuple
    spatial: SpatialGrid
    potential: PotentialSpec
    F0: np.ndarray
    G0: FieldStateGrid
    dt: float
    n_steps: int
    record_every: int


def build_setup(cfg: ScenarioConfig) -> RunSetup:
    """Grids, initial states and the step policy.

    ``dt`` is shrunk so that the output cadence (a fraction of the slowest
    period) is a whole number of steps; the run length is rounded to whole
    steps.
    """
    modes = cfg.mode_specs
    grids = tuple(grid_for_mode(m, n_points=cfg.n_q) for m in modes)
    spatial = SpatialGrid(cfg.x_min, cfg.x_max, cfg.n_x)
    pot = cfg.potential
    if cfg.electron_state == "ground":
        if pot.kind != "quadratic" or pot.u is None:
            raise ValueError("electron.state = ground needs a constant quadratic potential")
        F0 = harmonic_ground_state(spatial, pot.u)
    else:
        F0 = gaussian_packet(spatial, cfg.electron_center, cfg.electron_width, cfg.electron_momentum)
    G0 = coherent_state(modes, grids=grids, picture="interaction", derivative=cfg.derivative)
    cadence_time = cfg.cadence * cfg.slowest_period
    every = max(1, math.ceil(cadence_time / cfg.resolved_dt - 1e-9))
    dt = cadence_time / every
    n_steps = int(round(cfg.duration / dt))
    return RunSetup(modes, grids, spatial, pot, F0, G0, dt, n_steps, every)


class _Recorder:
    def __init__(self):
        self.rows: list[dict] = []

    def add(self, row: dict) -> None:
        self.rows.append(row)

    def tsv(self) -> str:
        if not self.rows:
            return ""
        keys = list(self.rows[0])
        lines = ["\t".join(keys)]
        for row in self.rows:
            lines.append("\t".join(_cell(row.get(k, math.nan)) for k in keys))
        return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return f"{float(v):.17g}"


def _flatten(prefix: str, rec: dict, out: dict) -> None:
    for k, v in rec.items():
        if isinstance(v, dict):
            _flatten(f"{prefix}{k}.", v, out)
        else:
            out[f"{prefix}{k}"] = v


def _field_row(G, prefix: str, out: dict) -> None:
    for j in range(G.n_modes):
        q = quadrature_stats(G, j).to_dict()
        q.update(photon_statistics(G, j))
        _flatten(f"{prefix}mode{j}.", q, out)
    if isinstance(G, GaussianFieldState):
        sq = squeezing_detect(G)
        for j in range(G.n_modes):
            out[f"{prefix}mode{j}.re_a"] = sq.raw_a[j]
            out[f"{prefix}mode{j}.squeezed"] = sq.flags[j]
    if G.n_modes == 2:
        _flatten(prefix, mode_entanglement(G), out)


class _Run:
    """State of one (non-sweep) run."""

    def __init__(self, cfg: ScenarioConfig, outdir: Path):
        self.cfg = cfg
        self.out = outdir
        self.s = build_setup(cfg)
        self.do_par = cfg.solver in ("parametric", "both")
        self.do_joint = cfg.solver in ("joint", "both")
        self.do_grid = self.do_par and cfg.field_path in ("grid", "both")
        self.do_gauss = self.do_par and cfg.field_path in ("gaussian", "both")
        self.rec = _Recorder()
        self.summary: dict = {}
        s = self.s
        self.pts = grid_sample_points(s.grids)
        if self.do_par:
            self.ens = ElectronEnsemble.from_initial(s.F0, self.pts, s.potential, s.spatial)
            self.ref = s.F0.copy()
        self.G = s.G0 if self.do_grid else None
        self.Gg = GaussianFieldState.coherent(s.modes) if self.do_gauss else None
        if self.do_joint:
            self.jprop = JointPropagator(s.modes, s.spatial, s.grids, s.potential, s.dt, cfg.derivative)
            self.psi = product_state(s.F0, s.spatial, s.G0)
        self.max = {"static_residual_re": 0.0, "hermiticity": 0.0, "field_norm_drift": 0.0,
                    "electron_norm_drift": 0.0, "joint_norm_drift": 0.0}
        self.min_guard = math.inf
        self.last_residual = np.zeros(1, dtype=complex)
        self.last_coeffs = None

    def _par_step(self, k: int) -> None:
        s, dt = self.s, self.s.dt
        t = k * dt
        e0 = self.ens.expectations
        ens1 = ensemble_propagate(self.ens, s.modes, dt, include_sine_term=not self.cfg.strong_field,
                                  check_aliasing=(k == 0))
        e1 = ens1.expectations
        mid = {key: 0.5 * (e0[key] + e1[key]) for key in ("p", "p2", "U")}
        coeffs = backaction_from_expectations(s.modes, self.pts, mid["p"], mid["p2"], mid["U"], t + 0.5 * dt)
        if self.do_grid:
            self.G = propagate_field_grid(self.G, coeffs, dt)
        if self.do_gauss:
            self.Gg = propagate_gaussian(self.Gg, coeffs, dt)
        self.last_residual = static_gauge_residual(self.ens, ens1, dt)
        self.max["static_residual_re"] = max(self.max["static_residual_re"],
                                             float(np.max(np.abs(self.last_residual.real))))
        self.last_coeffs = coeffs
        a_cl = sum(m.amplitude * math.cos(float(mode_phase(m, t + 0.5 * dt))) for m in s.modes)
        self.ref = split_step(self.ref, a_cl, s.potential, t, dt, s.spatial)
        self.ens = ens1

    def _record(self, idx: int, t: float) -> None:
        row: dict = {"t": t}
        flagged = False
        ck = self.out / "checkpoints"
        if self.do_par:
            norms = self.ens.norms()
            drift = float(np.max(np.abs(norms - 1.0)))
            self.max["electron_norm_drift"] = max(self.max["electron_norm_drift"], drift)
            row["electron_norm_drift"] = drift
            row["static_residual_re"] = float(np.max(np.abs(self.last_residual.real)))
            row["static_residual_im"] = float(np.max(np.abs(self.last_residual.imag)))
            ov = np.abs(self.ens.wavefunctions @ np.conj(self.ref)) * self.s.spatial.spacing
            row["electron_classical_fidelity_min"] = float(ov.min())
            if self.last_coeffs is not None and self.do_grid:
                herm = GridHamiltonian(self.last_coeffs, self.s.grids, self.cfg.derivative).hermiticity_error()
                self.max["hermiticity"] = max(self.max["hermiticity"], herm)
                row["hermiticity"] = herm
            flagged |= drift > NORM_FLAG_TOL
        if self.do_grid:
            G = self.G
            n = G.norm()
            self.max["field_norm_drift"] = max(self.max["field_norm_drift"], abs(n - 1.0))
            row["grid.norm"] = n
            flagged |= abs(n - 1.0) > NORM_FLAG_TOL
            ratio = zeros_guard(G, self.s.G0, self.cfg.zeros_threshold)
            self.min_guard = min(self.min_guard, ratio)
            row["grid.guard_ratio"] = ratio
            row["grid.fidelity_G0"] = fidelity(G, self.s.G0)
            _field_row(G, "grid.", row)
            save_field_state(G, ck / f"field_{idx:04d}.bin")
        if self.do_gauss:
            Gg = self.Gg
            row["gauss.log_norm"] = Gg.log_norm()
            row["gauss.fidelity_G0"] = fidelity(Gg, GaussianFieldState.coherent(self.s.modes))
            _field_row(Gg, "gauss.", row)
            atomic_write_text(ck / f"gaussian_{idx:04d}.txt", Gg.to_text())
            if self.do_grid:
                row["grid_gauss_fidelity"] = fidelity(self.G, Gg.to_grid(self.s.modes, self.s.grids))
        if self.do_joint:
            psi = self.psi
            drift = abs(psi.norm() - 1.0)
            self.max["joint_norm_drift"] = max(self.max["joint_norm_drift"], drift)
            row["joint.norm_drift"] = drift
            row["joint.purity"] = reduced_field_purity(psi)
            if psi.n_modes == 2:
                row["joint.mode0_purity"] = reduced_mode_purity(psi, 0)
            flagged |= drift > NORM_FLAG_TOL
        if self.do_par and self.do_joint:
            G_ap = self.G if self.do_grid else self.Gg.to_grid(self.s.modes, self.s.grids)
            rep = compare_to_parametric(self.psi, G_ap, self.ens)
            _flatten("compare.", rep.to_dict(), row)
        row["flagged"] = flagged
        self.rec.add(row)

    def execute(self) -> dict:
        s = self.s
        self.out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(self.out / "config.ini", config_to_text(self.cfg))
        idx = 0
        self._record(idx, 0.0)
        k = 0
        while k < s.n_steps:
            n = min(s.record_every, s.n_steps - k)
            if self.do_par:
                for j in range(n):
                    self._par_step(k + j)
            k += n
            t = k * s.dt
            if self.do_joint:
                self.psi = self.jprop.propagate(self.psi, t)
            idx += 1
            self._record(idx, t)
        atomic_write_text(self.out / "records.tsv", self.rec.tsv())
        ck = self.out / "checkpoints"
        if self.do_par:
            atomic_write_bytes(ck / "ensemble.bin", self.ens.to_bytes())
        if self.do_joint:
            atomic_write_bytes(ck / "joint.bin", _joint_bytes(self.psi))
        self.summary = self._summary()
        atomic_write_text(self.out / "summary.txt", "\n".join(key_value_lines(self.summary)) + "\n")
        return self.summary

    def _summary(self) -> dict:
        s = self.s
        last = self.rec.rows[-1]
        out: dict = {"scenario": self.cfg.name, "solver": self.cfg.solver,
                     "field_path": self.cfg.field_path, "n_modes": len(s.modes),
                     "dt": s.dt, "n_steps": s.n_steps, "t_end": s.n_steps * s.dt,
                     "n_records": len(self.rec.rows)}
        out.update({f"max_{k}": v for k, v in self.max.items()})
        if self.do_grid:
            out["min_guard_ratio"] = self.min_guard
        keys = list(last)
        for k in keys:
            if k.startswith(("grid.fidelity_G0", "gauss.fidelity_G0", "grid_gauss_fidelity",
                             "electron_classical_fidelity_min", "compare.", "joint.purity",
                             "joint.mode0_purity")):
                out[f"final.{k}"] = last[k]
            elif k.endswith(("offdiag_d", "reduced_purity", ".var_q")):
                out[f"final.{k}"] = last[k]
        for k in keys:
            if k.endswith(".var_q"):
                out[f"min.{k}"] = min(r[k] for r in self.rec.rows)
            if k.endswith("uncertainty_product"):
                out[f"min.{k}"] = min(r[k] for r in self.rec.rows)
            if k.endswith("reduced_purity") or k.endswith("mode0_purity") or k == "joint.purity":
                out[f"min.{k}"] = min(r[k] for r in self.rec.rows)
            if k.endswith("offdiag_d"):
                out[f"max.{k}"] = max(r[k] for r in self.rec.rows)
            if k.endswith(".squeezed"):
                out[f"any.{k}"] = any(bool(r[k]) for r in self.rec.rows)
        out["flagged_records"] = sum(bool(r["flagged"]) for r in self.rec.rows)
        return out


def _joint_bytes(psi) -> bytes:
    arr = np.empty(psi.amplitudes.shape + (2,), dtype="<f8")
    arr[..., 0] = psi.amplitudes.real
    arr[..., 1] = psi.amplitudes.imag
    head = np.asarray([psi.t] + list(psi.amplitudes.shape), dtype="<f8")
    return b"JOINTW01" + np.asarray([head.size], dtype="<u8").tobytes() + head.tobytes() + arr.tobytes()


def _run_point(args) -> dict:
    cfg, outdir = args
    return _Run(cfg, Path(outdir)).execute()


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run(cfg: ScenarioConfig, outdir=None) -> dict:
    """Execute a scenario (or sweep) and return its summary dict."""
    out = Path(outdir or cfg.output or f"runs/{cfg.name}")
    if not cfg.is_sweep:
        return _Run(cfg, out).execute()
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.ini", config_to_text(cfg))
    jobs = [(cfg.sweep_point(b), str(out / f"point_{i:02d}")) for i, b in enumerate(cfg.sweep_betas)]
    n = min(_workers(), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(n) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    metrics = ("reduced_infidelity", "field_infidelity", "hs_distance_sq", "electron_infidelity")
    rows = ["beta\t" + "\t".join(metrics)]
    summary: dict = {"scenario": cfg.name, "sweep_points": len(jobs), "amplitude": cfg.sweep_amplitude}
    table = {m: [] for m in metrics}
    for b, res in zip(cfg.sweep_betas, results):
        vals = [res.get(f"final.compare.{m}", math.nan) for m in metrics]
        rows.append("\t".join(_cell(v) for v in [b] + vals))
        for m, v in zip(metrics, vals):
            table[m].append(v)
    atomic_write_text(out / "sweep.tsv", "\n".join(rows) + "\n")
    betas = np.asarray(cfg.sweep_betas)
    for m in metrics:
        y = np.asarray(table[m], dtype=float)
        ok = (betas > 0) & np.isfinite(y) & (y > 0)
        if np.count_nonzero(ok) >= 2:
            summary[f"slope.{m}"] = fit_loglog_slope(betas[ok], y[ok])
    for i, res in enumerate(results):
        for k, v in res.items():
            if k.startswith("final.compare."):
                summary[f"point_{i:02d}.{k[6:]}"] = v
    atomic_write_text(out / "summary.txt", "\n".join(key_value_lines(summary)) + "\n")
    return summary


def read_tsv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().lstrip("#").split()
    data = np.loadtxt(path, skiprows=1, ndmin=2)
    return header, data


def emit_plot_data(run_dir, quantity: str) -> Path:
    """Write ``plot_<quantity>.tsv`` for ``var_q``, ``N``, ``d12`` or ``infidelity``."""
    run_dir = Path(run_dir)
    if quantity == "infidelity":
        src = run_dir / "sweep.tsv"
        if not src.exists():
            raise FileNotFoundError(f"{src} not found; infidelity(beta) needs a sweep run")
        header, data = read_tsv(src)
        cols = list(range(len(header)))
    elif quantity in PLOT_QUANTITIES:
        src = run_dir / "records.tsv"
        if not src.exists():
            raise FileNotFoundError(f"{src} not found")
        header, data = read_tsv(src)
        suffix = PLOT_QUANTITIES[quantity]
        cols = [0] + [i for i, h in enumerate(header) if h.endswith(suffix)]
        if len(cols) == 1:
            raise ValueError(f"run has no {quantity} column")
    else:
        raise ValueError(f"unknown quantity {quantity!r}; choose from "
                         f"{', '.join(list(PLOT_QUANTITIES) + ['infidelity'])}")
    lines = ["# " + "\t".join(header[i] for i in cols)]
    for row in data:
        lines.append("\t".join(_cell(row[i]) for i in cols))
    path = run_dir / f"plot_{quantity}.tsv"
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path
