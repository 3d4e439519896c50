"""Command-line entry point.

Configuration comes from built-in defaults, then an optional JSON document
(``--config``), then command-line flags; later sources win.  Every stochastic
command needs a seed.  Each run writes its CSV results and a ``manifest.json``
(config echo, build description, wall time, seed, sha256 of every output).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analyze import InsufficientSeries, fit_exponent
from .envmodel import EnvironmentModel, ModelError, preset, validate_hypothesis_A2, validate_hypothesis_A3
from .renewal import exact_series, mc_series
from .simulate import estimate_tail
from .walk import check_harmonic_identity, estimate_U, ladder_probability

COMMANDS = (
    "simulate-tail",
    "renewal-exact",
    "renewal-mc",
    "walk-ladder",
    "u-function",
    "fit-exponent",
    "validate",
    "crosscheck",
)
STOCHASTIC = {"simulate-tail", "renewal-mc", "walk-ladder", "u-function", "crosscheck"}
DEFAULT_TOLERANCES = {"recursion_rel": 1e-10, "mc_z": 2.5758293035489004, "exponent": 0.1}


class ConfigError(ValueError):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


@dataclass
class ExperimentConfig:
    command: str
    model: str | dict = "example2"
    n_max: int = 10
    n_grid: list | None = None
    replicas: int = 100_000
    master_seed: int | None = None
    workers: int = 1
    output_path: str = "out"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    reflected: bool = False
    x_grid: list | None = None
    n_truncation: int = 10_000
    input_path: str | None = None
    value_column: str | None = None
    stderr_column: str | None = None
    fit_range: list | None = None
    initial: int | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}", command=self.command)
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.command in STOCHASTIC and self.master_seed is None:
            raise ConfigError(f"{self.command} needs --seed; there is no default seed")
        if self.master_seed is not None and not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.command == "fit-exponent" and not self.input_path:
            raise ConfigError("fit-exponent needs --input")
        if self.initial is not None and self.initial < 1:
            raise ConfigError("initial size must be >= 1")

    def resolve_model(self) -> EnvironmentModel:
        if isinstance(self.model, dict):
            try:
                return EnvironmentModel.from_dict(self.model)
            except (KeyError, TypeError, ModelError) as exc:
                raise ConfigError(f"invalid model document: {exc}") from exc
        try:
            return preset(self.model)
        except KeyError:
            raise ConfigError(f"unknown preset {self.model!r}", preset=self.model) from None


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else format(v, ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _git_describe() -> str:
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(out: Path, config: ExperimentConfig, files: list[Path], wall: float, status: int) -> Path:
    doc = {
        "package": "lifeperiod",
        "version": __version__,
        "build": _git_describe(),
        "config": asdict(config),
        "seed": config.master_seed,
        "wall_time_seconds": wall,
        "exit_status": status,
        "files": [{"path": f.name, "sha256": _sha256(f)} for f in files],
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, default=str) + "\n")
    return path


def _write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return str(o)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _n_grid(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.n_grid:
        return np.asarray(sorted(set(int(n) for n in cfg.n_grid)), dtype=np.int64)
    return np.arange(0, cfg.n_max + 1)


def _cmd_simulate_tail(cfg, model, out):
    tail = estimate_tail(model, _n_grid(cfg), cfg.replicas, cfg.master_seed, cfg.workers, cfg.initial)
    files = [write_csv(out / "tail.csv", ["n", "survival", "stderr", "replicas", "saturated_fraction"], tail.rows())]
    return 0, files, {"warnings": list(tail.warnings), "fixed_initial_size": cfg.initial}


def _renewal_files(series, out):
    return [write_csv(out / "renewal.csv", series.columns(), series.rows())]


def _cmd_renewal_exact(cfg, model, out):
    series = exact_series(model, cfg.n_max)
    return 0, _renewal_files(series, out), {}


def _cmd_renewal_mc(cfg, model, out):
    series = mc_series(model, cfg.n_max, cfg.replicas, cfg.master_seed, cfg.workers)
    return 0, _renewal_files(series, out), {"isotonic_distance": series.isotonic_distance}


def _cmd_walk_ladder(cfg, model, out):
    est = ladder_probability(model, _n_grid(cfg), cfg.replicas, cfg.master_seed, cfg.reflected, cfg.workers)
    return 0, [write_csv(out / "ladder.csv", ["n", "estimate", "stderr", "replicas"], est.rows())], {}


def _cmd_u_function(cfg, model, out):
    if cfg.x_grid:
        x = np.asarray(cfg.x_grid, dtype=float)
    else:
        lat = model.lattice()
        step = lat[0] if lat is not None else 1.0
        x = step * np.arange(6)
    u = estimate_U(model, x, cfg.n_truncation, cfg.replicas, cfg.master_seed, cfg.workers)
    checks = check_harmonic_identity(model, u, x[x + 1e-12 < x.max()], seed=cfg.master_seed)
    files = [
        write_csv(out / "u.csv", ["x", "U", "stderr"], u.rows()),
        write_csv(
            out / "harmonic.csv",
            ["x", "lhs", "U", "discrepancy", "stderr", "passed"],
            ((c.x, c.lhs, c.u, c.discrepancy, c.stderr, c.passed) for c in checks),
        ),
    ]
    ok = all(c.passed for c in checks)
    return (0 if ok else 1), files, {"truncation_flagged": u.truncation_flagged, "active_at_truncation": u.active_at_truncation}


def _read_series(path, value_col, stderr_col):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path} has no rows")
    cols = rows[0].keys()
    value_col = value_col or next((c for c in ("survival", "estimate", "d", "value") if c in cols), None)
    if value_col is None or value_col not in cols:
        raise ConfigError(f"no value column in {path}; pass --value-column")
    if stderr_col is None:
        stderr_col = next((c for c in ("stderr", "d_stderr") if c in cols), None)
    n = np.array([float(r["n"]) for r in rows])
    v = np.array([float(r[value_col]) for r in rows])
    se = np.array([float(r[stderr_col]) for r in rows]) if stderr_col else None
    return n, v, se


def _cmd_fit_exponent(cfg, model, out):
    n, v, se = _read_series(cfg.input_path, cfg.value_column, cfg.stderr_column)
    rng_ = tuple(cfg.fit_range) if cfg.fit_range else None
    try:
        fit = fit_exponent(n, v, se, rng_)
    except InsufficientSeries as exc:
        raise ConfigError(str(exc)) from exc
    doc = {
        "n_range": fit.n_range,
        "slope": fit.slope,
        "slope_stderr": fit.slope_stderr,
        "intercept": fit.intercept,
        "drift_flag": fit.drift_flag,
        "drift_pvalue": fit.drift_pvalue,
        "excluded": fit.excluded,
        "points": fit.points,
    }
    sel = (n >= fit.n_range[0]) & (n <= fit.n_range[1]) & (v > 0)
    files = [
        _write_json(out / "fit.json", doc),
        write_csv(
            out / "local_slopes.csv",
            ["n_lo", "n_hi", "slope", "stderr"],
            ((w.n_lo, w.n_hi, w.slope, w.stderr) for w in fit.local_slopes),
        ),
        write_csv(
            out / "plot.csv",
            ["x", "y", "yerr"],
            zip(n[sel].tolist(), v[sel].tolist(), (se[sel] if se is not None else np.zeros(sel.sum())).tolist()),
        ),
    ]
    return 0, files, doc


def _cmd_validate(cfg, model, out):
    a2 = validate_hypothesis_A2(model)
    a3 = validate_hypothesis_A3(model)
    doc = {
        "model": model.name,
        "hypothesis": model.hypothesis.to_dict(),
        "A2": asdict(a2),
        "A3": asdict(a3),
    }
    files = [_write_json(out / "validation.json", doc)]
    return (0 if a2.passed and a3.passed else 1), files, {"A2": a2.passed, "A3": a3.passed}


def _cmd_crosscheck(cfg, model, out):
    tol = cfg.tolerances
    series = exact_series(model, cfg.n_max)
    n = np.arange(1, cfg.n_max + 1)
    tail = estimate_tail(model, n, cfg.replicas, cfg.master_seed, cfg.workers)
    r_enum, r_rec = series.r_enumeration, series.r
    rel = np.abs(r_rec - r_enum) / np.abs(r_enum)
    z = np.abs(tail.survival - r_enum) / np.sqrt(r_enum * (1 - r_enum) / cfg.replicas)
    rec_ok = rel <= tol["recursion_rel"]
    mc_ok = z <= tol["mc_z"]
    rows = zip(n, r_enum, r_rec, tail.survival, tail.stderr, rel, z, rec_ok & mc_ok)
    files = [
        write_csv(
            out / "crosscheck.csv",
            ["n", "R_enumeration", "R_recursion", "R_monte_carlo", "mc_stderr", "recursion_rel_diff", "mc_z", "passed"],
            rows,
        )
    ]
    ok = bool(np.all(rec_ok) and np.all(mc_ok))
    return (0 if ok else 1), files, {"recursion_ok": bool(rec_ok.all()), "monte_carlo_ok": bool(mc_ok.all())}


HANDLERS = {
    "simulate-tail": _cmd_simulate_tail,
    "renewal-exact": _cmd_renewal_exact,
    "renewal-mc": _cmd_renewal_mc,
    "walk-ladder": _cmd_walk_ladder,
    "u-function": _cmd_u_function,
    "fit-exponent": _cmd_fit_exponent,
    "validate": _cmd_validate,
    "crosscheck": _cmd_crosscheck,
}


def run(config: ExperimentConfig) -> tuple[int, dict]:
    """Execute ``config``; returns (exit status, summary).  Raises ConfigError on bad input."""
    config.validate()
    model = config.resolve_model()
    out = Path(config.output_path)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        status, files, summary = HANDLERS[config.command](config, model, out)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    write_manifest(out, config, files, time.perf_counter() - t0, status)
    return status, summary


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifeperiod", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config document")
        s.add_argument("--preset", help="environment preset name")
        s.add_argument("--model", help="environment model JSON file")
        s.add_argument("--seed", type=int)
        s.add_argument("--replicas", type=int)
        s.add_argument("--n-max", type=int)
        s.add_argument("--n-grid", type=int, nargs="+")
        s.add_argument("--workers", type=int)
        s.add_argument("--out")
        if name == "walk-ladder":
            s.add_argument("--reflected", action="store_true", default=None)
        if name == "u-function":
            s.add_argument("--x-grid", type=float, nargs="+")
            s.add_argument("--n-truncation", type=int)
        if name == "fit-exponent":
            s.add_argument("--input")
            s.add_argument("--value-column")
            s.add_argument("--stderr-column")
            s.add_argument("--range", type=int, nargs=2, dest="fit_range")
        if name == "simulate-tail":
            s.add_argument("--initial", type=int, help="fixed W_0 instead of drawing it from G_0 conditioned positive")
    return p


FLAG_FIELDS = {
    "seed": "master_seed",
    "replicas": "replicas",
    "n_max": "n_max",
    "n_grid": "n_grid",
    "workers": "workers",
    "out": "output_path",
    "reflected": "reflected",
    "x_grid": "x_grid",
    "n_truncation": "n_truncation",
    "input": "input_path",
    "value_column": "value_column",
    "stderr_column": "stderr_column",
    "fit_range": "fit_range",
    "initial": "initial",
}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    fields: dict = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        fields.update(doc)
        if "tolerances" in doc:
            fields["tolerances"] = {**DEFAULT_TOLERANCES, **doc["tolerances"]}
    fields["command"] = args.command
    for flag, name in FLAG_FIELDS.items():
        val = getattr(args, flag, None)
        if val is not None:
            fields[name] = val
    if args.preset:
        fields["model"] = args.preset
    if args.model:
        try:
            fields["model"] = json.loads(Path(args.model).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model file: {exc}") from exc
    try:
        return ExperimentConfig(**fields)
    except TypeError as exc:
        raise ConfigError(f"invalid config field: {exc}") from exc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = config_from_args(args)
        status, summary = run(config)
    except ConfigError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), **exc.details}
        print(json.dumps(err), file=sys.stderr)
        return 2
    print(json.dumps({"command": config.command, "status": status, **summary}, default=_json_default))
    return status


if __name__ == "__main__":
    sys.exit(main())
