"""Command-line driver: simulations, spectral certification and convergence studies.

Usage examples::

    chsolve --preset cosine --eps 0.05 --tau 3.125e-5 --levels 6 --final-time 0.04
    chsolve --mode certify-spectrum --spectral-levels 1,2,3
    chsolve --config run.cfg --output-dir out

A config file holds flat ``key = value`` lines (``#`` starts a comment);
keys are the long flag names with either dashes or underscores.  Flags given
on the command line win over file values.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .convergence import convergence_study
from .fem import P2Space, integrate_energy
from .mesh import build_hierarchy
from .presets import get_preset
from .scheme import Discretization, RunAborted, SchemeParams, StepRecord, run
from .spectral import certify_bounds, write_report_csv

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "CHSOLVE_OUTPUT_DIR"
MODES = ("simulate", "certify-spectrum", "convergence-study")
INIT_MODES = ("interpolate", "ritz")
STATS_FIELDS = (
    "step", "t", "newton_its", "minres_its", "energy", "modified_energy", "mass", "wall_s",
    "minres_max",
)


class ConfigError(ValueError):
    pass


class UnknownKey(ConfigError):
    pass


class BadValue(ConfigError):
    pass


class MissingRequired(ConfigError):
    pass


def _fmt(x) -> str:
    return f"{x:.17g}"


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


@dataclass
class RunConfig:
    preset: Optional[str] = None
    mode: str = "simulate"
    levels: int = 4
    eps: float = 0.05
    tau: float = 0.002 / 64
    final_time: float = 0.04
    n_steps: Optional[int] = None
    output_dir: str = "output"
    init: str = "interpolate"
    newton_linf_tol: float = 1e-15
    newton_residual_tol: float = 1e-7
    minres_tol: float = 1e-7
    minres_maxit: int = 1000
    max_newton: int = 20
    cycles: int = 2
    snapshot_steps: Optional[list] = None
    snapshot_format: list = field(default_factory=lambda: ["vtk", "csv"])
    spectral_levels: list = field(default_factory=lambda: [1, 2, 3])
    tau_grid: list = field(default_factory=lambda: [1.0, 0.1, 0.01, 0.001])
    eps_grid: list = field(default_factory=lambda: [1.0, 0.1, 0.01, 0.001])
    study_levels: list = field(default_factory=lambda: [4, 5, 6])
    reference_level: int = 7
    tau_per_h: float = 0.07

    def scheme_params(self) -> SchemeParams:
        return SchemeParams(
            eps=self.eps,
            tau=self.tau,
            final_time=self.final_time,
            newton_linf_tol=self.newton_linf_tol,
            newton_residual_tol=self.newton_residual_tol,
            minres_tol=self.minres_tol,
            minres_maxit=self.minres_maxit,
            max_newton=self.max_newton,
            cycles_per_application=self.cycles,
        )

    @property
    def steps(self) -> int:
        return self.n_steps if self.n_steps is not None else self.scheme_params().n_steps


# key -> converter; keys are RunConfig field names
_CONVERTERS = {
    "preset": str,
    "mode": str,
    "levels": int,
    "eps": float,
    "tau": float,
    "final_time": float,
    "n_steps": int,
    "output_dir": str,
    "init": str,
    "newton_linf_tol": float,
    "newton_residual_tol": float,
    "minres_tol": float,
    "minres_maxit": int,
    "max_newton": int,
    "cycles": int,
    "snapshot_steps": _int_list,
    "snapshot_format": lambda s: [t.strip().lower() for t in s.split(",") if t.strip()],
    "spectral_levels": _int_list,
    "tau_grid": _float_list,
    "eps_grid": _float_list,
    "study_levels": _int_list,
    "reference_level": int,
    "tau_per_h": float,
}
assert set(_CONVERTERS) == {f.name for f in fields(RunConfig)}


def _convert(key, raw):
    try:
        return _CONVERTERS[key](raw)
    except (TypeError, ValueError):
        raise BadValue(f"bad value for {key}: {raw!r}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines into a dict of converted values."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise BadValue(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _CONVERTERS:
                raise UnknownKey(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _convert(key, raw)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "unrecognized arguments" in message:
            raise UnknownKey(message)
        raise BadValue(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chsolve", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--preset", help="cosine | oval | cross | constant:<value>")
    p.add_argument("--mode", help="|".join(MODES))
    p.add_argument("--levels", help="finest mesh level (h = 1/2^levels)")
    p.add_argument("--eps")
    p.add_argument("--tau")
    p.add_argument("--final-time")
    p.add_argument("--n-steps", help="override the step count implied by final time")
    p.add_argument("--output-dir", help=f"default: ${OUTPUT_DIR_ENV} or ./output")
    p.add_argument("--init", help="|".join(INIT_MODES))
    p.add_argument("--newton-linf-tol")
    p.add_argument("--newton-residual-tol")
    p.add_argument("--minres-tol")
    p.add_argument("--minres-maxit")
    p.add_argument("--max-newton")
    p.add_argument("--cycles", help="V-cycles per preconditioner block application")
    p.add_argument("--snapshot-steps", help="comma separated step indices")
    p.add_argument("--snapshot-format", help="vtk,csv")
    p.add_argument("--spectral-levels")
    p.add_argument("--tau-grid")
    p.add_argument("--eps-grid")
    p.add_argument("--study-levels")
    p.add_argument("--reference-level")
    p.add_argument("--tau-per-h")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.mode not in MODES:
        raise BadValue(f"bad value for mode: {cfg.mode!r}")
    if cfg.init not in INIT_MODES:
        raise BadValue(f"bad value for init: {cfg.init!r}")
    for name in ("eps", "tau"):
        v = getattr(cfg, name)
        if not (0.0 < v <= 1.0):
            raise BadValue(f"bad value for {name}: {v!r} (must lie in (0, 1])")
    if cfg.mode != "certify-spectrum":
        if cfg.preset is None:
            raise MissingRequired("missing required setting: preset")
        try:
            get_preset(cfg.preset, cfg.eps)
        except ValueError:
            raise BadValue(f"bad value for preset: {cfg.preset!r}") from None
    if cfg.levels < 0 or cfg.reference_level < 1:
        raise BadValue("mesh levels must be non-negative")
    if cfg.n_steps is not None and cfg.n_steps < 1:
        raise BadValue(f"bad value for n_steps: {cfg.n_steps!r}")
    bad = set(cfg.snapshot_format) - {"vtk", "csv"}
    if bad:
        raise BadValue(f"bad value for snapshot_format: {sorted(bad)!r}")
    if cfg.mode == "simulate" and cfg.n_steps is None:
        try:
            cfg.scheme_params().n_steps
        except ValueError as exc:
            raise BadValue(str(exc)) from None
    else:
        try:
            cfg.scheme_params()
        except ValueError as exc:
            raise BadValue(str(exc)) from None
    return cfg


def parse_config(args=None, environ=None) -> RunConfig:
    """Build a :class:`RunConfig` from flags, an optional config file and the environment.

    Precedence for every key: command-line flag, then config file, then
    default.  The output directory additionally falls back to
    ``$CHSOLVE_OUTPUT_DIR`` before the built-in default.
    """
    environ = os.environ if environ is None else environ
    ns = build_parser().parse_args(args)
    values = {}
    if ns.config:
        values.update(read_config_file(ns.config))
    for key in _CONVERTERS:
        raw = getattr(ns, key, None)
        if raw is not None:
            values[key] = _convert(key, raw)
    if "output_dir" not in values and environ.get(OUTPUT_DIR_ENV):
        values["output_dir"] = environ[OUTPUT_DIR_ENV]
    return validate(RunConfig(**values))


# ---------------------------------------------------------------------------
# output


def export_field(space: P2Space, phi, path):
    """Write ``phi`` as legacy VTK (``.vtk``) or as ``x,y,value`` CSV (``.csv``).

    In VTK each quadratic triangle becomes four linear triangles on its six
    nodes.
    """
    path = Path(path)
    phi = np.asarray(phi, dtype=float)
    nodes = space.nodes
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("x", "y", "value"))
            for (x, y), v in zip(nodes, phi):
                w.writerow((_fmt(x), _fmt(y), _fmt(v)))
        return path
    cd = space.cell_dofs
    # local nodes 3, 4, 5 sit on edges (0,1), (1,2), (2,0)
    sub = np.concatenate(
        [cd[:, [0, 3, 5]], cd[:, [3, 1, 4]], cd[:, [5, 4, 2]], cd[:, [3, 4, 5]]]
    )
    lines = [
        "# vtk DataFile Version 3.0",
        "phase field",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(nodes)} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in nodes]
    lines.append(f"CELLS {len(sub)} {4 * len(sub)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in sub]
    lines.append(f"CELL_TYPES {len(sub)}")
    lines += ["5"] * len(sub)
    lines += [f"POINT_DATA {len(nodes)}", "SCALARS phi double 1", "LOOKUP_TABLE default"]
    lines += [_fmt(v) for v in phi]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_field_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2]


def stats_row(rec: StepRecord):
    mx = max(rec.minres_iterations) if rec.minres_iterations else 0
    return (
        rec.step_index,
        _fmt(rec.time),
        rec.newton_iterations,
        rec.minres_total,
        _fmt(rec.energy),
        _fmt(rec.modified_energy),
        _fmt(rec.mass),
        _fmt(rec.wall_seconds),
        mx,
    )


def initial_record(space, phi0, eps) -> StepRecord:
    e = integrate_energy(space, phi0, eps)
    return StepRecord(0, 0.0, 0, [], e, e, float(space.mean_vector @ phi0),
                      float(np.abs(phi0).max()), 0.0)


def write_stats(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_FIELDS)
        w.writerows(stats_row(r) for r in records)


def read_stats(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows) -> dict:
    """Summary statistics from stats rows (dicts as read back from stats.csv)."""
    steps = [r for r in rows if int(r["step"]) > 0]
    solves = sum(int(r["newton_its"]) for r in steps)
    total = sum(int(r["minres_its"]) for r in steps)
    return {
        "steps": len(steps),
        "newton_solves": solves,
        "avg_minres_its": total / solves if solves else 0.0,
        "max_minres_its": max((int(r["minres_max"]) for r in steps), default=0),
        "avg_wall_s": float(np.mean([float(r["wall_s"]) for r in steps])) if steps else 0.0,
        "max_newton_its": max((int(r["newton_its"]) for r in steps), default=0),
    }


def write_summary(summary: dict, path, extra=None):
    lines = [f"{k} = {_fmt(v) if isinstance(v, float) else v}" for k, v in summary.items()]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# modes


def _simulate(cfg: RunConfig, out: Path) -> int:
    params = cfg.scheme_params()
    ic = get_preset(cfg.preset, cfg.eps)
    hierarchy = build_hierarchy(cfg.levels + 1)
    steps = cfg.steps
    snaps = set(cfg.snapshot_steps) if cfg.snapshot_steps is not None else {0, steps}
    records = []
    space_box = {}

    def snapshot(space, phi, step):
        for ext in cfg.snapshot_format:
            export_field(space, phi, out / f"field_{step}.{ext}")

    def callback(state, rec):
        space = space_box["space"]
        if rec is None:
            records.append(initial_record(space, state.phi_curr, cfg.eps))
        else:
            records.append(rec)
            log.info("step %d t=%.6g newton %d minres %s", rec.step_index, rec.time,
                     rec.newton_iterations, rec.minres_iterations)
        if state.step_index in snaps:
            snapshot(space, state.phi_curr, state.step_index)

    disc = Discretization(hierarchy, params)
    space_box["space"] = disc.space
    status = 0
    try:
        run(params, ic, hierarchy, mode=cfg.init, n_steps=steps, callback=callback, disc=disc)
    except RunAborted as exc:
        log.error("run aborted: %s", exc)
        status = 1
    write_stats(records, out / "stats.csv")
    extra = {"status": "complete" if status == 0 else "aborted"}
    write_summary(summarize(read_stats(out / "stats.csv")), out / "summary.txt", extra)
    return status


def _certify(cfg: RunConfig, out: Path) -> int:
    reports = []
    for lev in cfg.spectral_levels:
        reports += certify_bounds(lev, cfg.tau_grid, cfg.eps_grid)
    write_report_csv(reports, out / "spectral_report.csv")
    ok = all(r.passed for r in reports)
    summary = {
        "reports": len(reports),
        "violations": sum(not r.passed for r in reports),
        "max_dense_mismatch": max(r.dense_mismatch for r in reports),
        "practical_upper_constant": max(r.practical_upper for r in reports),
        "practical_lower_constant": min(r.practical_lower for r in reports),
    }
    write_summary(summary, out / "summary.txt")
    return 0 if ok else 1


def _study(cfg: RunConfig, out: Path) -> int:
    params = cfg.scheme_params()
    res = convergence_study(
        get_preset(cfg.preset, cfg.eps),
        cfg.eps,
        levels=cfg.study_levels,
        reference_level=cfg.reference_level,
        tau_per_h=cfg.tau_per_h,
        final_time=cfg.final_time,
        mode=cfg.init,
        newton_linf_tol=params.newton_linf_tol,
        newton_residual_tol=params.newton_residual_tol,
        minres_tol=params.minres_tol,
        minres_maxit=params.minres_maxit,
        max_newton=params.max_newton,
        cycles_per_application=params.cycles_per_application,
    )
    orders = [math.nan] + res.orders
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("level", "h", "tau", "h1_error", "l2_error", "order"))
        for row in zip(res.levels, res.h, res.tau, res.errors, res.l2_errors, orders):
            w.writerow((row[0],) + tuple(_fmt(v) for v in row[1:]))
    write_summary(
        {"reference_level": res.reference_level, "min_order": min(res.orders)},
        out / "summary.txt",
    )
    return 0


def run_experiment(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = {"simulate": _simulate, "certify-spectrum": _certify,
               "convergence-study": _study}[cfg.mode]
    return handler(cfg, out)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(
        level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"chsolve: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"chsolve: cannot read config: {exc}", file=sys.stderr)
        return 2
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
