"""Command-line front end: ``overdamp run | sweep | audit``.

Configuration is a flat TOML-like file::

    mode = "pair"            # kinetic | fluid | rescaled | pair | sweep

    [scaling]
    epsilon = 0.2
    delta = 2.0
    confined = true

    [run]
    T = 0.5

Every problem found while reading it is reported at once, each with its line
number.  Outputs are written atomically (temp file then rename) and carry no
timestamps, so equal configs give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .functionals import (
    CSV_COLUMNS,
    dissipation,
    entropy_gap_initial,
    free_energy_kinetic,
    minimization_audit,
)
from .grid import PhaseGrid, SpatialGrid, VelocityGrid, quad_x, quad_xv
from .harness import (
    DEFAULT_EPS,
    PRIMARY_QUANTITIES,
    ExperimentPlan,
    GridPolicy,
    InitialRecipe,
    PairRun,
    SeriesRun,
    SweepResult,
    chemical_potential_variation,
    run_fluid,
    run_pair,
    run_rescaled,
    run_sweep,
)
from .fluid import free_energy, lp_norm_monitor
from .kinetic import ScalingParams, moments

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "write_snapshot",
    "read_snapshot",
    "audit_snapshot",
    "emit_outputs",
    "main",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NUMERICAL",
    "EXIT_AUDIT",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_AUDIT = 4

SUMMARY_SCHEMA = "overdamp-summary/1"
SNAPSHOT_MAGIC = "overdamp-snapshot/1"
MODES = ("kinetic", "fluid", "rescaled", "pair", "sweep")
KINETIC_COLUMNS = (
    "t", "mass", "momentum", "F_eps", "D_eps", "K_int", "E_int", "min_excess",
    "kinetic_energy", "entropy_residual", "refined_residual", "boundary_mass", "f_min",
)


class ConfigError(ValueError):
    def __init__(self, errors: Sequence[str]) -> None:
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# -- configuration ----------------------------------------------------------

_MISSING = object()


@dataclass(frozen=True)
class _Key:
    kind: str  # float | int | bool | str | floats
    default: Any = _MISSING
    check: Any = None  # callable(value) -> error message or None
    choices: tuple = ()


def _between(lo: float, hi: float, name: str, closed_hi: bool = False):
    def check(x):
        ok = lo < x <= hi if closed_hi else lo < x < hi
        if not ok:
            return f"{name} must lie in ({lo:g},{hi:g}{']' if closed_hi else ')'}"
        return None

    return check


def _at_least(lo: float, name: str, strict: bool = False):
    def check(x):
        if (x <= lo) if strict else (x < lo):
            return f"{name} must be {'>' if strict else '>='} {lo:g}"
        return None

    return check


def _eps_list(xs):
    if len(xs) < 3:
        return "sweep.epsilons needs at least 3 values"
    if any(not 0.0 < e < 1.0 for e in xs):
        return "epsilon must lie in (0,1)"
    if any(b >= a for a, b in zip(xs, xs[1:])):
        return "sweep.epsilons must be strictly decreasing"
    return None


SCHEMA: dict[str, dict[str, _Key]] = {
    "": {"mode": _Key("str", choices=MODES)},
    "scaling": {
        "epsilon": _Key("float", check=_between(0.0, 1.0, "epsilon")),
        "delta": _Key("float", 2.0, _at_least(0.0, "delta", strict=True)),
        "confined": _Key("bool", True),
    },
    "grid": {
        "n_x": _Key("int", 128, _at_least(8, "n_x")),
        "n_v": _Key("int", 128, _at_least(8, "n_v")),
        "half_width": _Key("float", 8.0, _at_least(0.0, "half_width", strict=True)),
        "c_v": _Key("float", 7.0, _at_least(4.0, "c_v")),
        "dt_safety": _Key("float", 0.5, _between(0.0, 1.0, "dt_safety", closed_hi=True)),
        "transport": _Key("str", "vanleer", choices=("upwind", "minmod", "vanleer")),
        "fluid_scheme": _Key("str", "sg", choices=("sg", "upwind")),
    },
    "run": {
        "T": _Key("float", check=_at_least(0.0, "T", strict=True)),
        "samples": _Key("int", 10, _at_least(1, "samples")),
        "output": _Key("str", "overdamp-out"),
        "snapshots": _Key("str", "final", choices=("none", "final", "all")),
    },
    "initial": {
        "kind": _Key("str", "gaussian", choices=("gaussian", "bimodal")),
        "centre": _Key("float", 0.5),
        "width": _Key("float", 1.0, _at_least(0.0, "width", strict=True)),
    },
    "sweep": {"epsilons": _Key("floats", list(DEFAULT_EPS), _eps_list)},
}


@dataclass(frozen=True)
class RunConfig:
    mode: str
    epsilon: float | None
    delta: float
    confined: bool
    policy: GridPolicy
    T: float
    samples: int
    output: str
    snapshots: str
    recipe: InitialRecipe
    epsilons: tuple[float, ...] = DEFAULT_EPS
    source: str = field(default="", repr=False, compare=False)

    def plan(self) -> ExperimentPlan:
        eps = self.epsilons if self.mode == "sweep" else (self.epsilon,)
        return ExperimentPlan(
            eps_values=eps, delta=self.delta, confined=self.confined, T=self.T,
            policy=self.policy, recipe=self.recipe, n_samples=self.samples,
        )

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d["epsilons"] = list(self.epsilons)
        return d


def _parse_value(raw: str, kind: str):
    raw = raw.strip()
    if kind == "bool":
        if raw in ("true", "false"):
            return raw == "true"
        raise ValueError("expected true or false")
    if kind == "str":
        if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
            return raw[1:-1]
        raise ValueError("expected a quoted string")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ValueError("expected an integer") from None
    if kind == "float":
        try:
            x = float(raw)
        except ValueError:
            raise ValueError("expected a number") from None
        if not math.isfinite(x):
            raise ValueError("expected a finite number")
        return x
    if not (raw.startswith("[") and raw.endswith("]")):
        raise ValueError("expected a list like [0.4, 0.2]")
    body = raw[1:-1].strip()
    return [_parse_value(p, "float") for p in body.split(",")] if body else []


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if ch in "\"'" and quote in (None, ch):
            quote = None if quote else ch
        elif ch == "#" and quote is None:
            return line[:i]
    return line


def parse_config(text: str, mode_override: str | None = None) -> RunConfig:
    """Parse and validate; raise :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    values: dict[tuple[str, str], Any] = {}
    seen: dict[tuple[str, str], int] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = _strip_comment(line).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {lineno}: malformed section header")
                continue
            section = line[1:-1].strip()
            if section not in SCHEMA or not section:
                errors.append(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        name = f"{section}.{key}" if section else key
        if section not in SCHEMA:
            continue  # already reported the section
        rule = SCHEMA[section].get(key)
        if rule is None:
            errors.append(f"line {lineno}: unknown key {name}")
            continue
        if (section, key) in seen:
            errors.append(f"line {lineno}: duplicate key {name} (first set on line {seen[section, key]})")
            continue
        seen[section, key] = lineno
        try:
            value = _parse_value(raw, rule.kind)
        except ValueError as exc:
            errors.append(f"line {lineno}: {name}: {exc}")
            continue
        if rule.choices and value not in rule.choices:
            errors.append(f"line {lineno}: {name} must be one of {', '.join(rule.choices)}")
            continue
        msg = rule.check(value) if rule.check else None
        if msg:
            errors.append(f"line {lineno}: {msg}")
            continue
        values[section, key] = value

    if mode_override is not None:
        values["", "mode"] = mode_override
    mode = values.get(("", "mode"))
    required = {("", "mode"), ("run", "T")}
    if mode != "sweep":
        required.add(("scaling", "epsilon"))
    for sec, key in sorted(required):
        if (sec, key) not in seen and (sec, key) not in values:
            name = f"{sec}.{key}" if sec else key
            errors.append(f"end of file: missing required key {name}")
    if mode == "rescaled" and values.get(("scaling", "confined"), True) is False:
        errors.append(f"line {seen.get(('scaling', 'confined'), 0)}: rescaled mode needs confined = true")
    if errors:
        raise ConfigError(errors)

    def get(sec: str, key: str):
        if (sec, key) in values:
            return values[sec, key]
        d = SCHEMA[sec][key].default
        return None if d is _MISSING else d

    policy = GridPolicy(
        n_x=get("grid", "n_x"), n_v=get("grid", "n_v"), half_width=get("grid", "half_width"),
        c_v=get("grid", "c_v"), dt_safety=get("grid", "dt_safety"),
        transport=get("grid", "transport"), fluid_scheme=get("grid", "fluid_scheme"),
    )
    recipe = InitialRecipe(get("initial", "kind"), get("initial", "centre"), get("initial", "width"))
    return RunConfig(
        mode=mode, epsilon=get("scaling", "epsilon"), delta=get("scaling", "delta"),
        confined=get("scaling", "confined"), policy=policy, T=get("run", "T"),
        samples=get("run", "samples"), output=get("run", "output"),
        snapshots=get("run", "snapshots"), recipe=recipe,
        epsilons=tuple(get("sweep", "epsilons")), source=text,
    )


# -- file output ------------------------------------------------------------


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def csv_text(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = [",".join(columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def check_writable(out_dir: Path) -> None:
    """Fail before any computation if ``out_dir`` cannot take files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".probe.")
    os.close(fd)
    os.unlink(tmp)


def write_snapshot(
    path: Path, values: np.ndarray, spatial: SpatialGrid, t: float, params: ScalingParams,
    velocity: VelocityGrid | None = None,
) -> None:
    """Header of ``# key = value`` lines, then the array row-major, one ``x`` row per line."""
    kind = "kinetic" if velocity is not None else "fluid"
    head = [
        f"# {SNAPSHOT_MAGIC}",
        f"# kind = {kind}",
        f"# x_min = {_fmt(spatial.x_min)}",
        f"# x_max = {_fmt(spatial.x_max)}",
        f"# n_x = {spatial.n_x}",
    ]
    if velocity is not None:
        head += [f"# v_max = {_fmt(velocity.v_max)}", f"# n_v = {velocity.n_v}"]
    head += [
        f"# t = {_fmt(t)}",
        f"# eps = {_fmt(params.eps)}",
        f"# delta = {_fmt(params.delta)}",
        f"# confined = {str(params.confined).lower()}",
    ]
    arr = np.atleast_2d(values) if velocity is not None else np.asarray(values)[:, None]
    body = "\n".join(" ".join(_fmt(v) for v in row) for row in arr)
    _atomic_write(path, "\n".join(head) + "\n" + body + "\n")


@dataclass(frozen=True)
class Snapshot:
    kind: str
    spatial: SpatialGrid
    velocity: VelocityGrid | None
    t: float
    params: ScalingParams
    values: np.ndarray


def read_snapshot(path: Path) -> Snapshot:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != f"# {SNAPSHOT_MAGIC}":
        raise ValueError(f"{path}: not an overdamp snapshot")
    meta: dict[str, str] = {}
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        key, _, val = lines[k][1:].partition("=")
        meta[key.strip()] = val.strip()
        k += 1
    try:
        spatial = SpatialGrid(float(meta["x_min"]), float(meta["x_max"]), int(meta["n_x"]))
        velocity = None
        if meta["kind"] == "kinetic":
            velocity = VelocityGrid(float(meta["v_max"]), int(meta["n_v"]))
        params = ScalingParams(float(meta["eps"]), float(meta["delta"]), meta["confined"] == "true")
        t = float(meta["t"])
    except KeyError as exc:
        raise ValueError(f"{path}: header lacks {exc.args[0]}") from None
    values = np.loadtxt(lines[k:], dtype=float, ndmin=2)
    if velocity is None:
        values = values[:, 0]
        expected = (spatial.n_x,)
    else:
        expected = (spatial.n_x, velocity.n_v)
    if values.shape != expected:
        raise ValueError(f"{path}: payload shape {values.shape} does not match header {expected}")
    return Snapshot(meta["kind"], spatial, velocity, t, params, values)


def audit_snapshot(snap: Snapshot) -> tuple[dict, bool]:
    """Re-evaluate the single-state functionals of a stored snapshot."""
    p = snap.params
    lowest = float(snap.values.min())
    if lowest < 0.0:
        # the functionals are undefined on negative data; report only the violation
        key = "f_min" if snap.velocity is not None else "rho_min"
        return {"kind": snap.kind, "t": snap.t, key: lowest, "passed": False}, False
    if snap.velocity is not None:
        grid = PhaseGrid(snap.spatial, snap.velocity)
        f = snap.values
        mom = moments(f, grid)
        mini = minimization_audit(f, grid, p)
        gaps = entropy_gap_initial(f, grid, p)
        report = {
            "kind": "kinetic",
            "t": snap.t,
            "mass": quad_xv(f, grid),
            "momentum": quad_x(mom.m, snap.spatial),
            "F_eps": free_energy_kinetic(f, grid, p),
            "D_eps": dissipation(f, grid, p),
            "K_int": mini.K_int,
            "E_int": mini.E_int,
            "min_offset": mini.offset,
            "min_excess": mini.excess,
            "M0": gaps.M0,
            "M0_half": gaps.M0_half,
            "Mbar0": gaps.Mbar0,
            "f_min": float(f.min()),
        }
        ok = mini.passed and report["f_min"] >= 0.0
    else:
        rho = snap.values
        report = {
            "kind": "fluid",
            "t": snap.t,
            "mass": quad_x(rho, snap.spatial),
            "free_energy": free_energy(rho, snap.spatial, p),
            "chem_var": chemical_potential_variation(rho, snap.spatial, p),
            "L2": lp_norm_monitor(rho, snap.spatial, 2.0),
            "Linf": lp_norm_monitor(rho, snap.spatial, math.inf),
            "rho_min": float(rho.min()),
        }
        ok = report["rho_min"] >= 0.0
    report["passed"] = ok
    return report, ok


def _run_entry(run: PairRun) -> dict:
    last = run.records[-1] if run.records else None
    return {
        "eps": run.eps,
        "zeta": run.params.zeta,
        "status": "completed" if run.completed else "aborted",
        "error": run.error,
        "last_valid_t": run.last_valid_t,
        "steps": run.steps,
        "dt": run.dt,
        "grid": {"n_x": run.grid.spatial.n_x, "n_v": run.grid.velocity.n_v, "v_max": run.grid.velocity.v_max},
        "initial_gaps": {
            "M0": run.gaps.M0,
            "M0_half": run.gaps.M0_half,
            "Mbar0": run.gaps.Mbar0,
            "offset": run.gaps.offset,
            "gibbs_excess": run.gaps.gibbs_excess,
            "M0_nonnegative": run.gaps.M0_nonnegative,
            "M0_half_nonnegative": run.gaps.M0_half_nonnegative,
        },
        "entropy_abs_residual": run.entropy_abs_residual,
        "terminal": None if last is None else {k: getattr(last, k) for k in CSV_COLUMNS},
        "failures": run.failures,
        "flags": run.flags,
        "passed": run.passed,
    }


def _eps_tag(eps: float) -> str:
    return f"eps{eps:g}"


def emit_outputs(out_dir: Path, cfg: RunConfig, result, snapshots: dict[str, tuple] | None = None) -> dict:
    """Write CSV tables, the summary JSON, archived config and snapshots; return the summary."""
    out_dir = Path(out_dir)
    summary: dict[str, Any] = {
        "schema": SUMMARY_SCHEMA,
        "version": __version__,
        "mode": cfg.mode,
        "config": cfg.as_dict(),
    }
    if isinstance(result, SweepResult):
        for run in result.runs:
            _atomic_write(out_dir / f"run_{_eps_tag(run.eps)}.csv", csv_text(CSV_COLUMNS, [r.row() for r in run.records]))
        summary["runs"] = [_run_entry(r) for r in result.runs]
        summary["fits"] = [f.as_dict() | {"meets_threshold": f.meets(), "monotone": f.monotone()} for f in result.fits]
        summary["primary"] = list(PRIMARY_QUANTITIES)
        summary["zeta"] = result.plan.zeta
        if result.calibration is not None:
            c = result.calibration
            summary["calibration"] = {
                "eps": list(c.eps), "lhs": list(c.lhs), "rhs": list(c.rhs),
                "constant": c.constant, "ratios": list(c.ratios), "held": c.held,
            }
        summary["passed"] = result.passed
    elif isinstance(result, PairRun):
        cols = KINETIC_COLUMNS if cfg.mode == "kinetic" else CSV_COLUMNS
        rows = [tuple(getattr(r, c) for c in cols) for r in result.records]
        _atomic_write(out_dir / f"{cfg.mode}.csv", csv_text(cols, rows))
        summary["runs"] = [_run_entry(result)]
        summary["passed"] = result.passed
    else:
        assert isinstance(result, SeriesRun)
        _atomic_write(out_dir / f"{cfg.mode}.csv", csv_text(result.columns, result.rows))
        summary["runs"] = [{
            "eps": cfg.epsilon,
            "status": "completed" if result.completed else "aborted",
            "error": result.error,
            "terminal": dict(zip(result.columns, result.rows[-1])) if result.rows else None,
            "failures": result.failures,
            "flags": result.flags,
            "passed": result.passed,
        }]
        summary["passed"] = result.passed
    for name, args in sorted((snapshots or {}).items()):
        write_snapshot(out_dir / name, *args)
    _atomic_write(out_dir / "config.toml", cfg.source)
    _atomic_write(out_dir / "summary.json", json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")
    return summary


# -- commands ---------------------------------------------------------------


def _load(path: str, mode_override: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from None
    return parse_config(text, mode_override)


def _execute(cfg: RunConfig, out_dir: Path) -> int:
    try:
        plan = cfg.plan()
        check_writable(out_dir)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    snaps: dict[str, tuple] = {}
    keep_all = cfg.snapshots == "all"

    if cfg.mode == "sweep":
        result = run_sweep(plan, progress=lambda r: print(
            f"eps={r.eps:g}: {'ok' if r.passed else 'FAILED'} ({r.steps} steps)", file=sys.stderr))
        if cfg.snapshots != "none":
            for r in result.runs:
                if r.f is not None:
                    tag = _eps_tag(r.eps)
                    t = r.last_valid_t
                    snaps[f"kinetic_{tag}_final.txt"] = (r.f, r.grid.spatial, t, r.params, r.grid.velocity)
                    snaps[f"fluid_{tag}_final.txt"] = (r.rho_bar, r.grid.spatial, t, r.params)
        completed = all(r.completed for r in result.runs)
    elif cfg.mode in ("pair", "kinetic"):
        eps = plan.eps_values[0]
        params = plan.params(eps)

        def on_sample(rec, f, rho_bar, grid):
            if keep_all:
                snaps[f"kinetic_t{rec.t:.6g}.txt"] = (f, grid.spatial, rec.t, params, grid.velocity)
                if cfg.mode == "pair":
                    snaps[f"fluid_t{rec.t:.6g}.txt"] = (rho_bar, grid.spatial, rec.t, params)

        result = run_pair(plan, eps, on_sample=on_sample)
        if cfg.snapshots != "none" and result.f is not None:
            t = result.last_valid_t
            snaps["kinetic_final.txt"] = (result.f, result.grid.spatial, t, params, result.grid.velocity)
            if cfg.mode == "pair":
                snaps["fluid_final.txt"] = (result.rho_bar, result.grid.spatial, t, params)
        completed = result.completed
    else:
        eps = plan.eps_values[0]
        params = plan.params(eps)

        def on_row(row, rho):
            if keep_all:
                snaps[f"fluid_t{row[0]:.6g}.txt"] = (rho, plan.policy.spatial(), row[0], params)

        runner = run_fluid if cfg.mode == "fluid" else run_rescaled
        result = runner(plan, eps, on_sample=on_row)
        if cfg.snapshots != "none" and result.state is not None:
            t = float(result.rows[-1][0]) if result.rows else 0.0
            snaps["fluid_final.txt"] = (result.state, result.grid, t, params)
        completed = result.completed

    summary = emit_outputs(out_dir, cfg, result, snaps)
    if not completed:
        print("run aborted by a numerical error; see summary.json", file=sys.stderr)
        return EXIT_NUMERICAL
    if not summary["passed"]:
        print("audits failed; see summary.json", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def _cmd_run(args: argparse.Namespace, mode_override: str | None = None) -> int:
    try:
        cfg = _load(args.config, mode_override)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out_dir) if args.out_dir else Path(cfg.output)
    return _execute(cfg, out_dir)


def _cmd_audit(args: argparse.Namespace) -> int:
    try:
        snap = read_snapshot(Path(args.snapshot))
    except (OSError, ValueError) as exc:
        print(f"snapshot error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report, ok = audit_snapshot(snap)
    print(json.dumps(_json_safe(report), indent=2, sort_keys=True))
    return EXIT_OK if ok else EXIT_AUDIT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overdamp",
        description="Kinetic/fluid simulations in the high-friction regime, with entropy audits.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the mode named in the config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-dir", default=None)
    p_sweep = sub.add_parser("sweep", help="epsilon sweep with rate fits")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out-dir", default=None)
    p_audit = sub.add_parser("audit", help="re-evaluate functionals on a stored snapshot")
    p_audit.add_argument("--snapshot", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep":
        return _cmd_run(args, mode_override="sweep")
    return _cmd_audit(args)


if __name__ == "__main__":
    sys.exit(main())
