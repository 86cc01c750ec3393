"""Command-line front end: run experiments, serialize and analyze trajectories.

Subcommands::

    rabitrack run      simulate a measurement sequence and write its files
    rabitrack analyze  windowed tracking/fit report for a trajectory file
    rabitrack tune     pick (tau, measurement model) for a Rabi-period band
    rabitrack selftest closed-form and recursion-vs-quadrature checks

Configuration is a flat JSON object whose keys match RunConfig fields;
command-line flags override file values and the effective configuration is
echoed into the metadata file, which is itself a valid configuration, so a
run can be reproduced bit-identically from its own metadata.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, analysis, estimator, trajectory
from .exceptions import (
    ConfigError,
    InsufficientData,
    InvalidBounds,
    OracleMismatch,
    PrecisionExhausted,
    RabitrackError,
)
from .qcore import Outcome, kraus_of
from .trajectory import RunConfig, TrajectoryPoint

CSV_HEADER = "step,t_over_TR,outcome,c1sq_measured,c1sq_free,estimate"

#: Environment variable overriding the default recursion precision.
PRECISION_ENV_VAR = "RABITRACK_PRECISION_BITS"

_CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)} | {"cycles"}
_METADATA_ONLY_KEYS = {"tool_version", "rng", "format", "out"}


def default_precision_bits(n_max: int) -> int:
    """Precision that keeps ~128 bits of headroom over the cancellation.

    The weighted coefficient sums lose roughly one significand bit per
    measurement for weak diagonal records.
    """
    return max(estimator.DEFAULT_PRECISION_BITS, math.ceil(1.25 * n_max) + 128)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Flat JSON file plus overrides -> validated RunConfig."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}")
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    raw = {k: v for k, v in raw.items() if k not in _METADATA_ONLY_KEYS}
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    cycles = raw.pop("cycles", None)
    if raw.get("precision_bits") == "auto":
        raw.pop("precision_bits")
    if "phi_range" in raw and raw["phi_range"] is not None:
        raw["phi_range"] = tuple(raw["phi_range"])
    if raw.get("oracle_check_every", 1) is None:
        raw.pop("oracle_check_every")
    try:
        if cycles is not None:
            if "n_max" in raw:
                raise ConfigError("give either cycles or n_max, not both")
            config = RunConfig.with_cycles(float(cycles), **raw)
        else:
            config = RunConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc))
    if "precision_bits" not in raw:
        env = os.environ.get(PRECISION_ENV_VAR)
        bits = int(env) if env else default_precision_bits(config.n_max)
        config = dataclasses.replace(config, precision_bits=bits)
    config.validate()
    return config


def emit(points: list[TrajectoryPoint], fmt: str, path: str | Path) -> None:
    """Serialize a trajectory as CSV or JSON lines (atomic write)."""
    if fmt == "csv":
        lines = [CSV_HEADER]
        for p in points:
            lines.append(
                f"{p.step},{p.time:.16e},{1 if p.outcome is Outcome.PLUS else 0},"
                f"{p.c1sq_measured:.16e},{p.c1sq_free:.16e},{p.estimate:.16e}"
            )
        _atomic_write(Path(path), "\n".join(lines) + "\n")
    elif fmt == "jsonl":
        lines = [
            json.dumps(
                {
                    "step": p.step,
                    "t_over_TR": p.time,
                    "outcome": 1 if p.outcome is Outcome.PLUS else 0,
                    "c1sq_measured": p.c1sq_measured,
                    "c1sq_free": p.c1sq_free,
                    "estimate": p.estimate,
                }
            )
            for p in points
        ]
        _atomic_write(Path(path), "\n".join(lines) + "\n")
    else:
        raise ConfigError(f"unknown format {fmt!r}; use csv or jsonl")


def parse_trajectory(path: str | Path) -> list[TrajectoryPoint]:
    """Read back a file produced by :func:`emit` (format auto-detected)."""
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise OSError(f"cannot read trajectory {path}: {exc.strerror or exc}") from exc
    if not lines:
        raise ConfigError(f"{path}: empty trajectory file")
    points = []
    if lines[0].lstrip().startswith("{"):
        for ln in lines:
            row = json.loads(ln)
            points.append(
                TrajectoryPoint(
                    step=int(row["step"]),
                    time=float(row["t_over_TR"]),
                    outcome=Outcome.PLUS if row["outcome"] else Outcome.MINUS,
                    c1sq_measured=float(row["c1sq_measured"]),
                    c1sq_free=float(row["c1sq_free"]),
                    estimate=float(row["estimate"]),
                )
            )
    else:
        if lines[0] != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected CSV header {lines[0]!r}")
        for ln in lines[1:]:
            step, t, outcome, meas, free, est = ln.split(",")
            points.append(
                TrajectoryPoint(
                    step=int(step),
                    time=float(t),
                    outcome=Outcome.PLUS if int(outcome) else Outcome.MINUS,
                    c1sq_measured=float(meas),
                    c1sq_free=float(free),
                    estimate=float(est),
                )
            )
    return points


def _fit_dict(fit: analysis.FitResult) -> dict:
    return {
        "amplitude": fit.amplitude,
        "phase": fit.phase,
        "period": fit.period,
        "rms_residual": fit.rms_residual,
    }


def summarize(points: list[TrajectoryPoint], window_cycles: int = 5) -> dict:
    summary: dict = {"n_steps": len(points), "window_cycles": window_cycles}
    try:
        windows = analysis.analyze(points, window_cycles)
    except InsufficientData as exc:
        summary["windows"] = []
        summary["analysis_skipped"] = str(exc)
        return summary
    summary["windows"] = [
        {
            "t_start": w.t_start,
            "t_end": w.t_end,
            "n_points": w.n_points,
            "rms_tracking": w.rms_tracking,
            "fit_measured": _fit_dict(w.fit_measured),
            "fit_free": _fit_dict(w.fit_free),
            "dphase": w.dphase,
        }
        for w in windows
    ]
    return summary


def run_experiment(
    config: RunConfig, out: str | Path, fmt: str = "csv", window_cycles: int = 5
) -> dict:
    """Simulate, then write trajectory, metadata and analysis summary files.

    Returns the paths written.  The metadata file echoes the effective
    configuration and doubles as a config file for exact reproduction.
    """
    points = trajectory.run_simulation(config)
    out = Path(out)
    emit(points, fmt, out)
    meta = dataclasses.asdict(config)
    meta.update(
        {
            "tool_version": __version__,
            "rng": "numpy PCG64",
            "format": fmt,
            "out": str(out),
        }
    )
    meta_path = out.with_suffix(out.suffix + ".meta.json")
    _atomic_write(meta_path, json.dumps(meta, indent=2) + "\n")
    summary = summarize(points, window_cycles)
    if config.oracle_check_every is not None:
        summary["oracle_checks_passed"] = config.n_max // config.oracle_check_every
    summary_path = out.with_suffix(out.suffix + ".summary.json")
    _atomic_write(summary_path, json.dumps(summary, indent=2) + "\n")
    return {"trajectory": str(out), "metadata": str(meta_path), "summary": str(summary_path)}


def _selftest() -> bool:
    ok = True

    def check(name: str, passed: bool, detail: str = "") -> None:
        nonlocal ok
        ok = ok and passed
        print(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))

    table = estimator.CoefficientTable(256)
    check("prior estimate is 1/2 before any measurement",
          estimator.estimate_from_table(table) == 0.5)

    model = trajectory.RunConfig(pbar=0.5, dp=0.1).model()
    table = estimator.table_update(table, kraus_of(model, Outcome.PLUS))
    g1 = estimator.estimate_from_table(table)
    check("single + outcome gives p1/(p0+p1)", abs(g1 - 0.55) < 1e-12, f"g={g1!r}")

    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(10):
        n = int(rng.integers(2, 13))
        ops = [
            estimator.random_kraus_operator(rng, diagonal=bool(rng.integers(0, 2)))
            for _ in range(n)
        ]
        record = estimator.MeasurementRecord(ops)
        t = estimator.CoefficientTable(256)
        for o in ops:
            t = estimator.table_update(t, o)
        diff = abs(estimator.estimate_from_table(t) - estimator.estimate_oracle(record))
        worst = max(worst, diff)
    check("recursion matches quadrature on random records", worst < 1e-10, f"max diff {worst:.2e}")

    t_d = trajectory.decoherence_time(model, 1.0 / 16.0)
    check("decoherence time for the weak reference model", abs(t_d - 12.5) < 1e-12, f"T_d={t_d}")
    f = trajectory.coherence_decay_factor(model)
    t_d_exact = -(1.0 / math.log(f))
    check("exact decay factor agrees with the rate formula to 1%",
          abs(t_d_exact - 200.0) / 200.0 < 0.01, f"{t_d_exact:.2f} vs 200 tau")

    config = RunConfig(n_max=64, seed=1, oracle_check_every=16, precision_bits=320)
    points = trajectory.run_simulation(config)
    worst = max(
        abs(p.c1sq_free - (1.0 + math.cos(2.0 * math.pi * p.time)) / 2.0) for p in points
    )
    check("free reference follows the closed-form cosine", worst < 1e-9, f"max dev {worst:.2e}")
    return ok


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rabitrack",
        description="Track a qubit's Rabi oscillation through weak measurements.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a measurement sequence")
    p_run.add_argument("--config", help="flat JSON config file")
    p_run.add_argument("--pbar", type=float)
    p_run.add_argument("--dp", type=float)
    p_run.add_argument("--tau-over-tr", type=float, dest="tau_over_tr")
    p_run.add_argument("--cycles", type=float, help="duration in Rabi periods")
    p_run.add_argument("--n-max", type=int, dest="n_max")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument(
        "--precision-bits",
        dest="precision_bits",
        help="recursion significand bits, or 'auto' (default)",
    )
    p_run.add_argument("--initial-state", dest="initial_state", choices=["excited", "ground"])
    p_run.add_argument("--oracle-check-every", type=int, dest="oracle_check_every")
    p_run.add_argument("--out", default="trajectory.csv")
    p_run.add_argument("--format", choices=["csv", "jsonl"], default=None)

    p_an = sub.add_parser("analyze", help="windowed report for a trajectory file")
    p_an.add_argument("--in", dest="infile", required=True)
    p_an.add_argument("--window-cycles", type=int, default=5)

    p_tune = sub.add_parser("tune", help="choose tau and measurement strength")
    p_tune.add_argument("--tr-lower", type=float, required=True)
    p_tune.add_argument("--tr-upper", type=float, required=True)
    p_tune.add_argument("--samples-per-period", type=int, default=16)
    p_tune.add_argument("--weakness", type=float, default=10.0)

    sub.add_parser("selftest", help="run built-in consistency checks")
    return parser


def _cmd_run(args) -> int:
    overrides = {
        k: getattr(args, k)
        for k in (
            "pbar", "dp", "tau_over_tr", "cycles", "n_max", "seed",
            "precision_bits", "initial_state", "oracle_check_every",
        )
    }
    if overrides.get("precision_bits") not in (None, "auto"):
        overrides["precision_bits"] = int(overrides["precision_bits"])
    config = load_config(args.config, overrides)
    fmt = args.format or ("jsonl" if str(args.out).endswith(".jsonl") else "csv")
    paths = run_experiment(config, args.out, fmt)
    print(json.dumps({"config": dataclasses.asdict(config), "files": paths}, indent=2))
    return 0


def _cmd_analyze(args) -> int:
    points = parse_trajectory(args.infile)
    print(json.dumps(summarize(points, args.window_cycles), indent=2))
    return 0


def _cmd_tune(args) -> int:
    tau, model = trajectory.tune_parameters(
        args.tr_lower, args.tr_upper, args.samples_per_period, args.weakness
    )
    t_d = trajectory.decoherence_time(model, tau)
    print(
        json.dumps(
            {
                "tau": tau,
                "pbar": model.pbar,
                "dp": model.dp,
                "p0_plus": model.p0_plus,
                "p1_plus": model.p1_plus,
                "t_d": t_d,
                "t_d_over_tr_upper": t_d / args.tr_upper,
                "mode_at_tr_upper": trajectory.classify_mode(t_d, args.tr_upper),
            },
            indent=2,
        )
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "tune":
            return _cmd_tune(args)
        if args.command == "selftest":
            return 0 if _selftest() else 3
    except (ConfigError, InvalidBounds) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (PrecisionExhausted, OracleMismatch) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except RabitrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
