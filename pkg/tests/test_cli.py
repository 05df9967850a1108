from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from overdamp.cli import (
    EXIT_AUDIT,
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    audit_snapshot,
    main,
    parse_config,
    read_snapshot,
    write_snapshot,
)
from overdamp.grid import SpatialGrid, VelocityGrid
from overdamp.kinetic import ScalingParams

GOLDEN = Path(__file__).parent / "golden"
MINIMAL = (GOLDEN / "pair_minimal.toml").read_text()


def write_config(tmp_path: Path, text: str, name: str = "cfg.toml") -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# -- parsing -------------------------------------------------------------------------


def test_minimal_config_fills_documented_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.as_dict() == json.loads((GOLDEN / "pair_defaults.json").read_text())
    plan = cfg.plan()
    assert plan.eps_values == (0.4,)
    assert plan.policy.n_v == 32


def test_epsilon_out_of_range_is_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL.replace("epsilon = 0.4", "epsilon = 1.5"))
    assert err.value.errors == ["line 5: epsilon must lie in (0,1)"]


def test_all_errors_reported_with_line_numbers():
    text = "\n".join([
        'mode = "pair"',            # 1
        "colour = 3",                # 2 unknown top-level key
        "[scaling]",                 # 3
        "epsilon = 0.0",             # 4 out of range
        "delta = two",               # 5 not a number
        "[grid]",                    # 6
        "n_v = 4",                   # 7 too small
        'transport = "spectral"',    # 8 bad choice
        "[nonsense]",                # 9 unknown section
        "x = 1",                     # 10 ignored under the unknown section
    ])
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    errors = err.value.errors
    assert [e.split(":")[0] for e in errors] == [
        "line 2", "line 4", "line 5", "line 7", "line 8", "line 9", "end of file",
    ]
    assert "unknown key colour" in errors[0]
    assert "missing required key run.T" in errors[-1]


def test_duplicate_key_is_rejected():
    text = MINIMAL + "\n[scaling]\nepsilon = 0.3\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.errors == ["line 16: duplicate key scaling.epsilon (first set on line 5)"]


@given(st.permutations(["epsilon = 0.3", "delta = 2.5", "confined = true"]), st.integers(0, 2))
def test_duplicate_detection_is_deterministic(lines, dup):
    body = ['mode = "pair"', "[run]", "T = 0.1", "[scaling]", *lines, lines[dup]]
    text = "\n".join(body)
    messages = []
    for _ in range(2):
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        messages.append(err.value.errors)
    assert messages[0] == messages[1]
    key = lines[dup].split(" = ")[0]
    first = 5 + dup
    assert messages[0] == [f"line {len(body)}: duplicate key scaling.{key} (first set on line {first})"]


def test_comments_and_quoted_hashes():
    cfg = parse_config(MINIMAL.replace("samples = 2", 'samples = 2\noutput = "dir#1" # note'))
    assert cfg.output == "dir#1"


def test_missing_mode_and_epsilon():
    with pytest.raises(ConfigError) as err:
        parse_config("[run]\nT = 1.0\n")
    assert err.value.errors == [
        "end of file: missing required key mode",
        "end of file: missing required key scaling.epsilon",
    ]


def test_sweep_needs_no_single_epsilon():
    cfg = parse_config('mode = "sweep"\n[run]\nT = 0.5\n[sweep]\nepsilons = [0.4, 0.2, 0.1]\n')
    assert cfg.plan().eps_values == (0.4, 0.2, 0.1)
    with pytest.raises(ConfigError, match="strictly decreasing"):
        parse_config('mode = "sweep"\n[run]\nT = 0.5\n[sweep]\nepsilons = [0.1, 0.2, 0.4]\n')


def test_rescaled_mode_requires_confinement():
    text = MINIMAL.replace('mode = "pair"', 'mode = "rescaled"').replace("epsilon = 0.4", "epsilon = 0.4\nconfined = false")
    with pytest.raises(ConfigError, match="rescaled mode needs confined = true"):
        parse_config(text)


# -- commands --------------------------------------------------------------------------


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


def test_pair_run_outputs_and_determinism(tmp_path, capsys):
    cfg = write_config(tmp_path, MINIMAL)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run_cli("run", "--config", cfg, "--out-dir", out) == EXIT_OK
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == ["config.toml", "fluid_final.txt", "kinetic_final.txt", "pair.csv", "summary.json"]
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    csv = (outs[0] / "pair.csv").read_text().splitlines()
    assert csv[0] + "\n" == (GOLDEN / "pair_header.csv").read_text()
    assert len(csv) == 1 + 3
    assert (outs[0] / "config.toml").read_text() == MINIMAL
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["schema"] == "overdamp-summary/1"
    assert summary["passed"] is True


def test_csv_floats_round_trip(tmp_path):
    cfg = write_config(tmp_path, MINIMAL)
    assert run_cli("run", "--config", cfg, "--out-dir", tmp_path / "o") == EXIT_OK
    rows = (tmp_path / "o" / "pair.csv").read_text().splitlines()[1:]
    mass = float(rows[-1].split(",")[1])
    assert abs(mass - 1.0) < 1e-8
    assert all(len(r.split(",")) == 25 for r in rows)


def test_snapshot_cadence_all(tmp_path):
    cfg = write_config(tmp_path, MINIMAL.replace("samples = 2", 'samples = 2\nsnapshots = "all"'))
    assert run_cli("run", "--config", cfg, "--out-dir", tmp_path / "o") == EXIT_OK
    kinetic = sorted(p.name for p in (tmp_path / "o").glob("kinetic_t*.txt"))
    assert kinetic == ["kinetic_t0.025.txt", "kinetic_t0.05.txt", "kinetic_t0.txt"]


def test_audit_command_on_snapshots(tmp_path, capsys):
    cfg = write_config(tmp_path, MINIMAL)
    out = tmp_path / "o"
    assert run_cli("run", "--config", cfg, "--out-dir", out) == EXIT_OK
    capsys.readouterr()
    assert run_cli("audit", "--snapshot", out / "kinetic_final.txt") == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "kinetic" and report["passed"] is True
    assert abs(report["mass"] - 1.0) < 1e-8
    assert run_cli("audit", "--snapshot", out / "fluid_final.txt") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["kind"] == "fluid"


def test_audit_rejects_foreign_file(tmp_path):
    bad = tmp_path / "x.txt"
    bad.write_text("1 2 3\n")
    assert run_cli("audit", "--snapshot", bad) == EXIT_CONFIG
    assert run_cli("audit", "--snapshot", tmp_path / "missing.txt") == EXIT_CONFIG


def test_snapshot_round_trip(tmp_path):
    sx, vg = SpatialGrid(-2.0, 2.0, 8), VelocityGrid(3.0, 8)
    p = ScalingParams(0.3, 1.5, False)
    f = np.random.default_rng(1).random((8, 8)) / 3.0
    write_snapshot(tmp_path / "k.txt", f, sx, 0.125, p, vg)
    snap = read_snapshot(tmp_path / "k.txt")
    assert snap.kind == "kinetic" and snap.t == 0.125 and snap.params == p
    assert np.array_equal(snap.values, f)
    write_snapshot(tmp_path / "r.txt", f[:, 0], sx, 0.0, p)
    fluid = read_snapshot(tmp_path / "r.txt")
    assert fluid.velocity is None and np.array_equal(fluid.values, f[:, 0])
    report, ok = audit_snapshot(fluid)
    assert ok and report["kind"] == "fluid"


def test_negative_snapshot_fails_audit(tmp_path, capsys):
    sx = SpatialGrid(-2.0, 2.0, 8)
    rho = np.full(8, 0.25)
    rho[3] = -0.1
    write_snapshot(tmp_path / "r.txt", rho, sx, 0.0, ScalingParams(0.3))
    assert run_cli("audit", "--snapshot", tmp_path / "r.txt") == EXIT_AUDIT


def test_config_errors_exit_before_running(tmp_path, capsys):
    cfg = write_config(tmp_path, MINIMAL.replace("epsilon = 0.4", "epsilon = 1.5"))
    assert run_cli("run", "--config", cfg, "--out-dir", tmp_path / "o") == EXIT_CONFIG
    assert "epsilon must lie in (0,1)" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert run_cli("run", "--config", tmp_path / "nope.toml") == EXIT_CONFIG


def test_unwritable_output_is_rejected_before_simulation(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write_config(tmp_path, MINIMAL.replace("T = 0.05", "T = 50.0"))
    assert run_cli("run", "--config", cfg, "--out-dir", blocker / "sub") == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_audit_failure_exit_code(tmp_path):
    text = MINIMAL.replace("n_v = 32", "n_v = 16").replace("T = 0.05", "T = 0.5").replace("n_x = 32", "n_x = 128")
    cfg = write_config(tmp_path, text)
    assert run_cli("run", "--config", cfg, "--out-dir", tmp_path / "o") == EXIT_AUDIT
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["passed"] is False and summary["runs"][0]["failures"]


def test_numerical_abort_exit_code(tmp_path):
    text = MINIMAL.replace("n_v = 32", "n_v = 32\nhalf_width = 2.0").replace("T = 0.05", "T = 0.5")
    cfg = write_config(tmp_path, text)
    assert run_cli("run", "--config", cfg, "--out-dir", tmp_path / "o") == EXIT_NUMERICAL
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["runs"][0]["status"] == "aborted"
    assert "boundary mass" in summary["runs"][0]["error"]


@pytest.mark.parametrize("mode, columns", [("fluid", "t,mass,free_energy"), ("rescaled", "t,t_bar,mass_n"), ("kinetic", "t,mass,momentum,F_eps")])
def test_other_modes(tmp_path, mode, columns):
    text = MINIMAL.replace('mode = "pair"', f'mode = "{mode}"')
    cfg = write_config(tmp_path, text)
    assert run_cli("run", "--config", cfg, "--out-dir", tmp_path / "o") == EXIT_OK
    header = (tmp_path / "o" / f"{mode}.csv").read_text().splitlines()[0]
    assert header.startswith(columns)


def test_sweep_command_writes_fits(tmp_path):
    text = "\n".join([
        'mode = "sweep"',
        "[run]", "T = 0.05", "samples = 2", 'snapshots = "none"',
        "[grid]", "n_x = 32", "n_v = 48",
        "[sweep]", "epsilons = [0.4, 0.3, 0.2]",
    ]) + "\n"
    cfg = write_config(tmp_path, text)
    code = run_cli("sweep", "--config", cfg, "--out-dir", tmp_path / "o")
    assert code in (EXIT_OK, EXIT_AUDIT)
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    names = {f["name"] for f in summary["fits"]}
    assert {"p_rel", "elec_diff", "vel_gap_integral", "L1_sq", "hminus1_sq"} <= names
    assert sorted(p.name for p in (tmp_path / "o").glob("run_*.csv")) == [
        "run_eps0.2.csv", "run_eps0.3.csv", "run_eps0.4.csv",
    ]
    assert code == (EXIT_OK if summary["passed"] else EXIT_AUDIT)


def test_sweep_subcommand_overrides_mode(tmp_path):
    text = MINIMAL + "\n[sweep]\nepsilons = [0.4, 0.3, 0.2]\n"
    cfg = write_config(tmp_path, text)
    code = run_cli("sweep", "--config", cfg, "--out-dir", tmp_path / "o")
    assert code in (EXIT_OK, EXIT_AUDIT)
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["mode"] == "sweep"
