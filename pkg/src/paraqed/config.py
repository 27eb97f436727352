"""Scenario configuration in INI form.

Example::

    [scenario]
    name = free_single_mode

    [mode.0]
    omega = 0.057
    n_photons = 500000
    beta = 0.01

    [potential]
    kind = free

    [electron]
    width = 0.5

    [grids]
    x_min = -64
    x_max = 64
    n_x = 512
    n_q = 128

    [time]
    cycles = 2.25
    dt = 0.05

    [solver]
    solver = both
    field_path = grid

Each mode takes ``beta`` or ``volume`` (not both).  A ``[sweep]`` section
with ``betas`` and ``amplitude`` turns the scenario into a beta sweep at
fixed classical amplitude ``A0 = beta sqrt(2N)``.  Omitting ``dt`` (or
writing ``dt = auto``) selects ``min(T_mode/400, T_nyquist/10)``.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace

from .electron import PotentialSpec
from .field import ModeSpec, beta_from_volume

STRONG_FIELD_MIN_PHOTONS = 100.0
SOLVERS = ("parametric", "joint", "both")
FIELD_PATHS = ("grid", "gaussian", "both")


class ConfigError(ValueError):
    """Validation failure; ``errors`` lists every violated rule as ``(field, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


@dataclass(frozen=True)
class ModeConfig:
    omega: float
    theta: float = 0.0
    n_photons: float = 0.0
    beta: float | None = None
    volume: float | None = None
    kappa_dot_r: float = 0.0

    @property
    def coupling(self) -> float:
        if self.beta is not None:
            return self.beta
        return beta_from_volume(self.omega, self.volume)

    def to_mode(self) -> ModeSpec:
        return ModeSpec(self.omega, self.theta, self.n_photons, self.coupling, self.kappa_dot_r)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    modes: tuple
    potential: PotentialSpec = field(default_factory=lambda: PotentialSpec("free"))
    electron_center: float = 0.0
    electron_width: float = 1.0
    electron_momentum: float = 0.0
    electron_state: str = "gaussian"
    x_min: float = -64.0
    x_max: float = 64.0
    n_x: int = 512
    n_q: int = 128
    derivative: str = "spectral"
    t_end: float | None = None
    cycles: float | None = None
    dt: float | None = None
    solver: str = "parametric"
    field_path: str = "grid"
    strong_field: bool = True
    sweep_betas: tuple = ()
    sweep_amplitude: float | None = None
    cadence: float = 0.125
    output: str = ""
    zeros_threshold: float = 1e-9

    @property
    def mode_specs(self) -> tuple:
        return tuple(m.to_mode() for m in self.modes)

    @property
    def slowest_period(self) -> float:
        return 2.0 * math.pi / min(m.omega for m in self.modes)

    @property
    def duration(self) -> float:
        if self.t_end is not None:
            return self.t_end
        return self.cycles * self.slowest_period

    @property
    def resolved_dt(self) -> float:
        """Explicit ``dt``, or ``min(T_mode/400, T_nyquist/10)`` when unset.

        ``T_nyquist`` is the period of the fastest free-electron phase on the
        spatial grid, ``2 pi / (p_max^2 / 2)`` with ``p_max = pi / dx``.
        """
        if self.dt is not None:
            return self.dt
        dx = (self.x_max - self.x_min) / self.n_x
        p_max = math.pi / dx
        t_nyq = 2.0 * math.pi / (0.5 * p_max * p_max)
        t_mode = 2.0 * math.pi / max(m.omega for m in self.modes)
        return min(t_mode / 400.0, t_nyq / 10.0)

    @property
    def is_sweep(self) -> bool:
        return len(self.sweep_betas) > 0

    def sweep_point(self, beta: float) -> "ScenarioConfig":
        """Single-run config for one sweep value, photon numbers set by the fixed amplitude."""
        n = 0.0 if beta == 0 else self.sweep_amplitude ** 2 / (2.0 * beta * beta)
        modes = tuple(replace(m, beta=beta, volume=None, n_photons=n) for m in self.modes)
        return replace(self, modes=modes, sweep_betas=(), sweep_amplitude=None)


def _num(section, key, errors, default=None, cast=float):
    if key not in section:
        return default
    raw = section[key]
    try:
        return cast(raw)
    except ValueError:
        errors.append((f"{section.name}.{key}", f"cannot parse {raw!r}"))
        return default


def _bool(section, key, errors, default):
    if key not in section:
        return default
    try:
        return section.getboolean(key)
    except ValueError:
        errors.append((f"{section.name}.{key}", f"not a boolean: {section[key]!r}"))
        return default


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("file", str(exc).splitlines()[0])]) from exc
    errors: list = []
    mode_sections = sorted((s for s in cp.sections() if s.startswith("mode.")),
                           key=lambda s: int(s.split(".")[1]) if s.split(".")[1].isdigit() else -1)
    modes = []
    for name in mode_sections:
        sec = cp[name]
        if not name.split(".")[1].isdigit():
            errors.append((name, "mode sections are named mode.<index>"))
            continue
        for key in sec:
            if key not in ("omega", "theta", "n_photons", "beta", "volume", "kappa_dot_r"):
                errors.append((f"{name}.{key}", "unknown key"))
        omega = _num(sec, "omega", errors)
        beta = _num(sec, "beta", errors)
        volume = _num(sec, "volume", errors)
        n_ph = _num(sec, "n_photons", errors, 0.0)
        if omega is None:
            errors.append((f"{name}.omega", "required"))
        elif not omega > 0:
            errors.append((f"{name}.omega", f"must be positive, got {omega}"))
        if (beta is None) == (volume is None) and not ("sweep" in cp and beta is None):
            errors.append((name, "give exactly one of beta or volume"))
        if beta is not None and beta < 0:
            errors.append((f"{name}.beta", f"must be non-negative, got {beta}"))
        if volume is not None and not volume > 0:
            errors.append((f"{name}.volume", f"must be positive, got {volume}"))
        if n_ph is not None and n_ph < 0:
            errors.append((f"{name}.n_photons", f"must be non-negative, got {n_ph}"))
        modes.append(ModeConfig(omega if omega is not None else 1.0, _num(sec, "theta", errors, 0.0),
                                n_ph if n_ph is not None else 0.0, beta, volume,
                                _num(sec, "kappa_dot_r", errors, 0.0)))
    if not modes:
        errors.append(("mode.0", "at least one mode section is required"))
    elif len(modes) > 2:
        errors.append(("modes", f"at most two modes are supported, got {len(modes)}"))

    kw: dict = {}
    name = cp.get("scenario", "name", fallback="scenario")

    if "potential" in cp:
        sec = cp["potential"]
        kind = sec.get("kind", "free")
        table = None
        if "u_table" in sec:
            try:
                table = tuple(tuple(float(v) for v in pair.split(":")) for pair in sec["u_table"].split())
                table = (tuple(p[0] for p in table), tuple(p[1] for p in table))
            except (ValueError, IndexError):
                errors.append(("potential.u_table", "expected 't:u t:u ...'"))
                table = None
        try:
            kw["potential"] = PotentialSpec(kind, _num(sec, "u", errors), table,
                                            _num(sec, "depth", errors, 1.0),
                                            _num(sec, "smoothing", errors, 2.0))
        except ValueError as exc:
            errors.append(("potential", str(exc)))

    if "electron" in cp:
        sec = cp["electron"]
        kw["electron_center"] = _num(sec, "center", errors, 0.0)
        kw["electron_width"] = _num(sec, "width", errors, 1.0)
        kw["electron_momentum"] = _num(sec, "momentum", errors, 0.0)
        kw["electron_state"] = sec.get("state", "gaussian")
        if kw["electron_width"] is not None and not kw["electron_width"] > 0:
            errors.append(("electron.width", "must be positive"))
        if kw["electron_state"] not in ("gaussian", "ground"):
            errors.append(("electron.state", "must be gaussian or ground"))

    if "grids" in cp:
        sec = cp["grids"]
        kw["x_min"] = _num(sec, "x_min", errors, -64.0)
        kw["x_max"] = _num(sec, "x_max", errors, 64.0)
        kw["n_x"] = _num(sec, "n_x", errors, 512, int)
        kw["n_q"] = _num(sec, "n_q", errors, 128, int)
        kw["derivative"] = sec.get("derivative", "spectral")
        if kw["x_min"] is not None and kw["x_max"] is not None and not kw["x_max"] > kw["x_min"]:
            errors.append(("grids.x_max", "must exceed x_min"))
        n_x = kw["n_x"]
        if n_x is not None and (n_x < 16 or n_x & (n_x - 1)):
            errors.append(("grids.n_x", f"must be a power of two >= 16, got {n_x}"))
        if kw["n_q"] is not None and kw["n_q"] < 16:
            errors.append(("grids.n_q", f"must be at least 16, got {kw['n_q']}"))
        if len(modes) == 2 and kw["n_q"] is not None and kw["n_q"] > 256:
            errors.append(("grids.n_q", "two-mode grids are capped at 256 points per mode"))
        if kw["derivative"] not in ("spectral", "fd4"):
            errors.append(("grids.derivative", "must be spectral or fd4"))

    sec = cp["time"] if "time" in cp else None
    if sec is None:
        errors.append(("time", "section required"))
    else:
        kw["t_end"] = _num(sec, "t_end", errors)
        kw["cycles"] = _num(sec, "cycles", errors)
        kw["dt"] = None if sec.get("dt", "auto").strip() == "auto" else _num(sec, "dt", errors)
        if (kw["t_end"] is None) == (kw["cycles"] is None):
            errors.append(("time", "give exactly one of t_end or cycles"))
        for key in ("t_end", "cycles"):
            if kw[key] is not None and kw[key] < 0:
                errors.append((f"time.{key}", "must be non-negative"))
        if kw["dt"] is not None and not kw["dt"] > 0:
            errors.append(("time.dt", f"must be positive, got {kw['dt']}"))

    if "solver" in cp:
        sec = cp["solver"]
        kw["solver"] = sec.get("solver", "parametric")
        kw["field_path"] = sec.get("field_path", "grid")
        kw["strong_field"] = _bool(sec, "strong_field", errors, True)
        if kw["solver"] not in SOLVERS:
            errors.append(("solver.solver", f"must be one of {', '.join(SOLVERS)}"))
        if kw["field_path"] not in FIELD_PATHS:
            errors.append(("solver.field_path", f"must be one of {', '.join(FIELD_PATHS)}"))
        if not kw["strong_field"] and kw["field_path"] != "grid":
            errors.append(("solver.strong_field", "the sine term is only supported on the grid path"))
        if not kw["strong_field"] and kw["solver"] != "parametric":
            errors.append(("solver.strong_field", "the sine term breaks unitarity; parametric solver only"))

    if "sweep" in cp:
        sec = cp["sweep"]
        betas = sec.get("betas", "")
        try:
            kw["sweep_betas"] = tuple(float(b) for b in betas.split())
        except ValueError:
            errors.append(("sweep.betas", f"cannot parse {betas!r}"))
        kw["sweep_amplitude"] = _num(sec, "amplitude", errors)
        if not kw.get("sweep_betas"):
            errors.append(("sweep.betas", "at least one value required"))
        elif any(b < 0 for b in kw["sweep_betas"]):
            errors.append(("sweep.betas", "must be non-negative"))
        if kw["sweep_amplitude"] is None or not kw["sweep_amplitude"] > 0:
            errors.append(("sweep.amplitude", "positive amplitude required"))

    if "output" in cp:
        sec = cp["output"]
        kw["cadence"] = _num(sec, "cadence", errors, 0.125)
        kw["output"] = sec.get("directory", "")
        if kw["cadence"] is not None and not kw["cadence"] > 0:
            errors.append(("output.cadence", "must be positive"))

    if "guards" in cp:
        kw["zeros_threshold"] = _num(cp["guards"], "zeros_threshold", errors, 1e-9)

    if kw.get("strong_field", True):
        amp = kw.get("sweep_amplitude")
        for j, m in enumerate(modes):
            n_list = [m.n_photons]
            if kw.get("sweep_betas") and amp:
                n_list = [amp ** 2 / (2 * b * b) for b in kw["sweep_betas"] if b > 0]
            coupled = (m.beta or 0.0) > 0 or m.volume is not None or bool(kw.get("sweep_betas"))
            if coupled and any(n < STRONG_FIELD_MIN_PHOTONS for n in n_list):
                errors.append((f"mode.{j}.n_photons",
                               f"strong-field simplification needs n_photons >= {STRONG_FIELD_MIN_PHOTONS:g}"))

    if errors:
        raise ConfigError(errors)
    kw = {k: v for k, v in kw.items() if v is not None or k in ("t_end", "cycles", "sweep_amplitude")}
    return ScenarioConfig(name, tuple(modes), **kw)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def config_to_text(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {"name": cfg.name}
    for j, m in enumerate(cfg.modes):
        sec = {"omega": _fmt(m.omega), "theta": _fmt(m.theta), "n_photons": _fmt(m.n_photons),
               "kappa_dot_r": _fmt(m.kappa_dot_r)}
        if m.beta is not None:
            sec["beta"] = _fmt(m.beta)
        if m.volume is not None:
            sec["volume"] = _fmt(m.volume)
        cp[f"mode.{j}"] = sec
    pot = cfg.potential
    psec = {"kind": pot.kind, "depth": _fmt(pot.depth), "smoothing": _fmt(pot.smoothing)}
    if pot.u is not None:
        psec["u"] = _fmt(pot.u)
    if pot.u_table is not None:
        psec["u_table"] = " ".join(f"{_fmt(t)}:{_fmt(u)}" for t, u in zip(*pot.u_table))
    cp["potential"] = psec
    cp["electron"] = {"center": _fmt(cfg.electron_center), "width": _fmt(cfg.electron_width),
                      "momentum": _fmt(cfg.electron_momentum), "state": cfg.electron_state}
    cp["grids"] = {"x_min": _fmt(cfg.x_min), "x_max": _fmt(cfg.x_max), "n_x": str(cfg.n_x),
                   "n_q": str(cfg.n_q), "derivative": cfg.derivative}
    tsec = {"dt": "auto" if cfg.dt is None else _fmt(cfg.dt)}
    if cfg.t_end is not None:
        tsec["t_end"] = _fmt(cfg.t_end)
    if cfg.cycles is not None:
        tsec["cycles"] = _fmt(cfg.cycles)
    cp["time"] = tsec
    cp["solver"] = {"solver": cfg.solver, "field_path": cfg.field_path,
                    "strong_field": "true" if cfg.strong_field else "false"}
    if cfg.sweep_betas:
        cp["sweep"] = {"betas": " ".join(_fmt(b) for b in cfg.sweep_betas),
                       "amplitude": _fmt(cfg.sweep_amplitude)}
    cp["output"] = {"cadence": _fmt(cfg.cadence), "directory": cfg.output}
    cp["guards"] = {"zeros_threshold": _fmt(cfg.zeros_threshold)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
