from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraqed.cli import main
from paraqed.config import ConfigError, ModeConfig, ScenarioConfig, config_to_text, parse_config
from paraqed.electron import PotentialSpec
from paraqed.pipeline import build_setup, emit_plot_data, read_tsv, run

TINY = """
[scenario]
name = tiny

[mode.0]
omega = 0.057
n_photons = 400
beta = 0.05

[electron]
width = 1.0
momentum = 0.2

[grids]
x_min = -16
x_max = 16
n_x = 128
n_q = 64

[time]
cycles = 0.25
dt = 0.2

[solver]
solver = {solver}
field_path = {path}

[output]
cadence = 0.0625
"""


def tiny(solver="parametric", path="both", extra=""):
    return TINY.format(solver=solver, path=path) + extra


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_tiny():
    cfg = parse_config(tiny())
    assert cfg.name == "tiny" and len(cfg.modes) == 1
    assert cfg.mode_specs[0].beta == 0.05
    assert cfg.duration == pytest.approx(0.25 * 2 * math.pi / 0.057)


def test_validation_lists_every_error():
    bad = """
[mode.0]
omega = -1
beta = 0.1
volume = 3

[grids]
n_x = 100

[time]
dt = 0.1
"""
    with pytest.raises(ConfigError) as info:
        parse_config(bad)
    keys = [k for k, _ in info.value.errors]
    assert "mode.0.omega" in keys
    assert "mode.0" in keys
    assert "grids.n_x" in keys
    assert "time" in keys


def test_strong_field_rule():
    text = tiny().replace("n_photons = 400", "n_photons = 50")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.errors[0][0] == "mode.0.n_photons"
    ok = text.replace("field_path = both", "field_path = grid\nstrong_field = false")
    assert not parse_config(ok).strong_field


def test_volume_derives_beta():
    text = tiny().replace("beta = 0.05", "volume = 1e9")
    m = parse_config(text).mode_specs[0]
    assert m.beta == pytest.approx(137.035999 * math.sqrt(2 * math.pi / (0.057 * 1e9)))


def test_dt_auto_policy():
    cfg = parse_config(tiny().replace("dt = 0.2", "dt = auto"))
    assert cfg.dt is None
    dx = 32 / 128
    t_nyq = 2 * math.pi / (0.5 * (math.pi / dx) ** 2)
    assert cfg.resolved_dt == pytest.approx(min(2 * math.pi / 0.057 / 400, t_nyq / 10))
    assert parse_config(config_to_text(cfg)) == cfg
    assert build_setup(cfg).dt <= cfg.resolved_dt


def test_sweep_point_keeps_amplitude():
    cfg = parse_config(tiny() + "\n[sweep]\nbetas = 0.01 0.001\namplitude = 10\n")
    pt = cfg.sweep_point(0.01)
    assert pt.mode_specs[0].amplitude == pytest.approx(10.0)
    assert not pt.is_sweep


modes_st = st.builds(ModeConfig, omega=st.floats(0.01, 1.0), theta=st.floats(-3, 3),
                     n_photons=st.floats(100, 1e8), beta=st.floats(0, 1),
                     kappa_dot_r=st.floats(-1, 1))


@settings(max_examples=40, deadline=None)
@given(modes=st.lists(modes_st, min_size=1, max_size=2), width=st.floats(0.1, 10),
       dt=st.one_of(st.none(), st.floats(1e-3, 1.0)), cycles=st.floats(0, 5),
       u=st.one_of(st.none(), st.floats(1e-4, 1.0)))
def test_config_round_trip(modes, width, dt, cycles, u):
    pot = PotentialSpec("quadratic", u=u) if u is not None else PotentialSpec()
    cfg = ScenarioConfig("rt", tuple(modes), pot, electron_width=width, dt=dt, cycles=cycles,
                         n_q=64, solver="both", field_path="both")
    assert parse_config(config_to_text(cfg)) == cfg


def test_round_trip_u_table():
    cfg = ScenarioConfig("rt", (ModeConfig(0.057, beta=0.0),),
                         PotentialSpec("quadratic", u_table=((0.0, 10.0), (0.1, 0.2))), t_end=3.0)
    assert parse_config(config_to_text(cfg)) == cfg


def test_run_outputs_and_determinism(tmp_path):
    cfg = parse_config(tiny("both", "both"))
    s1 = run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert {"records.tsv", "summary.txt", "checkpoints/ensemble.bin", "checkpoints/joint.bin"} <= {
        str(f) for f in files}
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    assert s1["final.grid_gauss_fidelity"] == pytest.approx(1.0, abs=1e-8)
    assert "final.compare.reduced_infidelity" in s1
    header, data = read_tsv(tmp_path / "a" / "records.tsv")
    assert header[0] == "t" and np.all(np.diff(data[:, 0]) > 0)


def test_worker_count_does_not_change_output(tmp_path, monkeypatch):
    cfg = parse_config(tiny("parametric", "both"))
    monkeypatch.setenv("PARAQED_THREADS", "1")
    run(cfg, tmp_path / "one")
    monkeypatch.setenv("PARAQED_THREADS", "3")
    run(cfg, tmp_path / "three")
    for p in (tmp_path / "one").rglob("*"):
        if p.is_file():
            rel = p.relative_to(tmp_path / "one")
            assert p.read_bytes() == (tmp_path / "three" / rel).read_bytes(), rel


def test_emit_plots(tmp_path):
    cfg = parse_config(tiny("parametric", "grid").replace("beta = 0.05", "beta = 0.0"))
    run(cfg, tmp_path)
    path = emit_plot_data(tmp_path, "var_q")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# t")
    vals = np.loadtxt(path, ndmin=2)
    np.testing.assert_allclose(vals[:, 1], 0.5, atol=1e-10)
    assert emit_plot_data(tmp_path, "N").exists()
    with pytest.raises(ValueError):
        emit_plot_data(tmp_path, "d12")
    with pytest.raises(ValueError):
        emit_plot_data(tmp_path, "entropy")
    with pytest.raises(FileNotFoundError):
        emit_plot_data(tmp_path, "infidelity")


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, tiny()))]) == 0
    assert "ok: tiny" in capsys.readouterr().out
    bad = write(tmp_path, tiny().replace("omega = 0.057", "omega = -0.057"), "bad.ini")
    assert main(["validate", str(bad)]) == 2
    assert "mode.0.omega" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.ini")]) == 2


def test_cli_run_analyze_and_plots(tmp_path, capsys):
    cfg = write(tmp_path, tiny("parametric", "both"))
    out = tmp_path / "run"
    assert main(["run", str(cfg), "--out", str(out), "--field-path", "grid"]) == 0
    assert "scenario" in capsys.readouterr().out
    ckpts = sorted(out.glob("checkpoints/field_*.bin"))
    assert ckpts
    assert main(["analyze", str(ckpts[-1]), "--t", "1.0"]) == 0
    text = capsys.readouterr().out
    assert "mode0.var_q" in text.replace(" ", "")
    gauss = sorted(out.glob("checkpoints/gaussian_*.txt"))
    assert not gauss
    assert main(["emit-plots", str(out), "var_q", "N"]) == 0
    assert main(["emit-plots", str(out), "bogus"]) == 2


def test_cli_compare(tmp_path, capsys):
    cfg = write(tmp_path, tiny("parametric", "grid"))
    assert main(["compare", str(cfg), "--out", str(tmp_path / "c")]) == 0
    assert "compare.reduced_infidelity" in capsys.readouterr().out


def test_cli_guard_trip_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, tiny("parametric", "grid", "\n[guards]\nzeros_threshold = 0.5\n"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "g")]) == 3
    assert "ZerosGuardError" in capsys.readouterr().err


def test_cli_solver_failure_exit_code(tmp_path, capsys):
    text = tiny("parametric", "gaussian") + "\n[potential]\nkind = softcore\n"
    cfg = write(tmp_path, text)
    assert main(["run", str(cfg), "--out", str(tmp_path / "s")]) == 4
    assert "NonQuadraticError" in capsys.readouterr().err


def test_cli_analyze_gaussian_record(tmp_path, capsys):
    from paraqed.backaction import GaussianFieldState
    from paraqed.field import ModeSpec

    G = GaussianFieldState.coherent([ModeSpec(0.057, 0.0, 4.0), ModeSpec(0.07, 0.0, 1.0)])
    path = tmp_path / "g.txt"
    path.write_text(G.to_text())
    assert main(["analyze", str(path)]) == 0
    text = capsys.readouterr().out.replace(" ", "")
    assert "mode0.mean_q=2.828427" in text
    assert "entanglement.reduced_purity=1" in text
