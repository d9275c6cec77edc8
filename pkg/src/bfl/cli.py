"""Command-line front end: trace, ensemble, scaling and revival runs.

Configs are flat TOML key = value files; every key can be overridden with a
--key value flag (flags win) and BFL_SEED, when set, overrides master_seed
last.  Each command writes CSV data (17 significant digits, locale
independent), a JSON summary where applicable, and a manifest that records
the fully resolved config so any output can be reproduced byte for byte.
Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import bfl
from bfl.dynamics import DegenerateSpectrumError, EigendecompositionError
from bfl.experiments import (
    EnsembleRunConfig,
    EnsembleRunError,
    FreezeNotEndedError,
    TimeGrid,
    detect_plateau,
    detect_revival_period,
    fit_scaling,
    realize_member,
    run_ensemble,
)

SEED_ENV_VAR = "BFL_SEED"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    pass


# key -> (parser, help); "lambda" maps onto the `lam` config field
_KEYS = {
    "n": (int, "particle count"),
    "k": (int, "interaction rank"),
    "beta": (int, "symmetry class: 1 (real) or 2 (complex)"),
    "lambda": (float, "perturbation strength"),
    "realizations": (int, "ensemble size"),
    "master_seed": (int, "root seed for all derived streams"),
    "diagonal_policy": (str, "fixed | resampled k-body diagonal"),
    "state_policy": (str, "per-realization | shared initial state"),
    "t_max": (float, "grid end in Heisenberg-time units"),
    "points_per_unit": (int, "grid points per Heisenberg time"),
    "coupling_convention": (str, "standard | uniform sampling convention"),
    "width_mode": (str, "as-defined | sqrt width normalization"),
    "v0": (float, "base coupling scale"),
    "dominant_c": (int, "|r-s| class to boost (revival runs)"),
    "boost": (float, "multiplier for the dominated entries"),
    "threads": (int, "worker threads (results are independent of this)"),
    "realization_index": (int, "ensemble member used by `trace`"),
}

_DEFAULTS = {
    "realizations": 1000,
    "master_seed": 0,
    "diagonal_policy": "fixed",
    "state_policy": "per-realization",
    "t_max": 6.0,
    "points_per_unit": 2048,
    "coupling_convention": "standard",
    "width_mode": "sqrt",
    "v0": 1.0,
    "boost": 100.0,
    "threads": 1,
    "realization_index": 0,
}


def _load_config_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            data = json.loads(path.read_text())
            if isinstance(data, dict) and "config" in data and "outputs" in data:
                # a manifest: reuse its config snapshot, dropping bookkeeping keys
                data = {k: v for k, v in data["config"].items() if k in _KEYS}
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a flat key = value table")
    return data


def _coerce(key: str, value) -> object:
    caster, _ = _KEYS[key]
    try:
        if caster is int:
            out = int(value)
            if isinstance(value, str) or isinstance(value, (int, np.integer)):
                return out
            if float(value) != out:
                raise ValueError(f"expected integer, got {value}")
            return out
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def resolve_config(config_path: str | None, flags: dict) -> dict:
    """Merge defaults, config file, flags and BFL_SEED into one dict."""
    merged = dict(_DEFAULTS)
    if config_path:
        file_data = _load_config_file(Path(config_path))
        for key, value in file_data.items():
            if key not in _KEYS:
                raise ConfigError(f"unknown config key: {key}")
            merged[key] = _coerce(key, value)
    for key, value in flags.items():
        if value is not None:
            merged[key] = _coerce(key, value)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        merged["master_seed"] = _coerce("master_seed", env_seed)
    for required in ("n", "k", "beta", "lambda"):
        if required not in merged:
            raise ConfigError(f"missing required config key: {required}")
    return merged


def build_run_config(settings: dict, **overrides) -> EnsembleRunConfig:
    kwargs = dict(
        n=settings["n"],
        k=settings["k"],
        beta=settings["beta"],
        lam=settings["lambda"],
        realizations=settings["realizations"],
        master_seed=settings["master_seed"],
        diagonal_policy=settings["diagonal_policy"],
        state_policy=settings["state_policy"],
        grid=TimeGrid(t_max=settings["t_max"], points_per_unit=settings["points_per_unit"]),
        coupling_convention=settings["coupling_convention"],
        width_mode=settings["width_mode"],
        v0=settings["v0"],
        dominant_c=settings.get("dominant_c"),
        boost=settings["boost"],
        threads=settings["threads"],
    )
    kwargs.update(overrides)
    try:
        return EnsembleRunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], columns: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = zip(*columns)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _output_dir(settings: dict, out: str | None, default_name: str) -> tuple[Path, Path]:
    """(csv path, directory) honoring --out; default runs/<timestamp>-<seed>/."""
    if out:
        csv_path = Path(out)
        return csv_path, csv_path.parent
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    outdir = Path("runs") / f"{stamp}-{settings['master_seed']}"
    return outdir / default_name, outdir


def _manifest(settings: dict, extra: dict, outputs: list[Path], started: float) -> dict:
    return {
        "config": {**settings, **extra},
        "version": bfl.__version__,
        "master_seed": settings["master_seed"],
        "duration_s": round(time.monotonic() - started, 3),
        "outputs": [str(p) for p in outputs],
    }


def _summarize(result) -> dict:
    """Plateau and revival summary; fields are null when not measurable."""
    summary: dict = {
        "plateau_level": None,
        "plateau_se": None,
        "plateau_window": None,
        "freeze_end": None,
        "period": None,
        "c": None,
        "confidence": None,
        "n_realizations": result.n_realizations,
        "heisenberg_time": result.heisenberg_time,
        "failed_realizations": [list(f) for f in result.failures],
    }
    try:
        stats = detect_plateau(
            result.times,
            result.mean_f,
            std_f=result.std_f,
            n_realizations=result.n_realizations,
        )
    except ValueError:
        stats = None
    if stats is not None:
        summary.update(
            plateau_level=stats.plateau_level,
            plateau_se=stats.plateau_se,
            plateau_window=list(stats.window),
            freeze_end=stats.freeze_end,
        )
    t_max = float(result.times[-1])
    window = (1.5, min(5.5, t_max))
    try:
        report = detect_revival_period(result.times, result.mean_f, window)
    except ValueError:
        report = None
    if report is not None:
        summary.update(period=report.period, c=report.c, confidence=report.confidence)
    return summary


def cmd_trace(settings: dict, out: str | None) -> int:
    started = time.monotonic()
    cfg = build_run_config(settings, realizations=1, keep_traces=False)
    index = settings["realization_index"]
    trace = realize_member(cfg, index)
    csv_path, outdir = _output_dir(settings, out, "trace.csv")
    f = trace.amplitudes
    write_csv(
        csv_path,
        ["t", "F", "one_minus_F", "re_f", "im_f"],
        [trace.times, trace.fidelities, 1.0 - trace.fidelities, f.real, f.imag],
    )
    manifest = _manifest(settings, {"command": "trace"}, [csv_path], started)
    manifest["heisenberg_time"] = trace.heisenberg_time
    manifest["mean_spacing"] = trace.mean_spacing
    _write_json(outdir / "manifest.json", manifest)
    return EXIT_OK


def _run_and_write_ensemble(settings: dict, out: str | None, command: str) -> int:
    started = time.monotonic()
    cfg = build_run_config(settings)
    result = run_ensemble(cfg)
    csv_path, outdir = _output_dir(settings, out, "ensemble.csv")
    write_csv(
        csv_path,
        ["t", "mean_F", "one_minus_mean_F", "std_F", "n_realizations"],
        [
            result.times,
            result.mean_f,
            1.0 - result.mean_f,
            result.std_f,
            np.full(result.times.size, result.n_realizations, dtype=int),
        ],
    )
    summary = _summarize(result)
    summary_path = outdir / "summary.json"
    _write_json(summary_path, summary)
    _write_json(
        outdir / "manifest.json",
        _manifest(settings, {"command": command}, [csv_path, summary_path], started),
    )
    return EXIT_OK


def cmd_ensemble(settings: dict, out: str | None) -> int:
    return _run_and_write_ensemble(settings, out, "ensemble")


def cmd_revival(settings: dict, out: str | None) -> int:
    if settings.get("dominant_c") is None:
        raise ConfigError("revival runs need dominant_c (1 <= c <= k)")
    return _run_and_write_ensemble(settings, out, "revival")


def cmd_scaling(settings: dict, out: str | None, sweep: str, values: list[float]) -> int:
    if len(values) < 3:
        raise ConfigError("scaling sweeps need at least 3 values")
    started = time.monotonic()
    csv_path, outdir = _output_dir(settings, out, "sweep.csv")

    xs, plateaus, freeze_ends, statuses = [], [], [], []
    for value in values:
        point = dict(settings)
        if sweep == "lambda":
            point["lambda"] = value
        else:
            point["n"] = int(value)
        try:
            cfg = build_run_config(point)
            result = run_ensemble(cfg)
            stats = detect_plateau(result.times, result.mean_f)
        except ConfigError as exc:
            raise  # configuration problems abort the whole sweep
        except (ValueError, RuntimeError) as exc:
            xs.append(value)
            plateaus.append(float("nan"))
            freeze_ends.append(float("nan"))
            statuses.append(f"error: {exc}")
            continue
        xs.append(value)
        plateaus.append(stats.plateau_level)
        freeze_ends.append(stats.freeze_end if stats.freeze_end is not None else float("nan"))
        statuses.append("ok")

    path_rows = csv_path
    path_rows.parent.mkdir(parents=True, exist_ok=True)
    with open(path_rows, "w", newline="\n") as fh:
        fh.write("x,plateau,t_e,status\n")
        for x, p, te, st in zip(xs, plateaus, freeze_ends, statuses):
            te_txt = "" if np.isnan(te) else _fmt(te)
            p_txt = "" if np.isnan(p) else _fmt(p)
            fh.write(f"{_fmt(x)},{p_txt},{te_txt},{st}\n")

    def fit_block(ys):
        pts = [(x, y) for x, y, st in zip(xs, ys, statuses) if st == "ok" and np.isfinite(y) and y > 0]
        if len(pts) < 3:
            return None
        try:
            fit = fit_scaling(pts)
        except ValueError as exc:  # e.g. repeated sweep values: rows stand, fit is skipped
            return {"error": str(exc)}
        return {"exponent": fit.exponent, "prefactor": fit.prefactor, "residual": fit.residual}

    summary = {
        "sweep": sweep,
        "values": list(map(float, values)),
        "plateau_fit": fit_block(plateaus),
        "freeze_end_fit": fit_block(freeze_ends),
        "statuses": statuses,
    }
    summary_path = outdir / "summary.json"
    _write_json(summary_path, summary)
    _write_json(
        outdir / "manifest.json",
        _manifest(
            settings,
            {"command": "scaling", "sweep": sweep, "values": list(map(float, values))},
            [path_rows, summary_path],
            started,
        ),
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bfl",
        description="Fidelity decay experiments for two-level bosonic random k-body ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", "-c", help="flat TOML (or manifest JSON) config file")
        p.add_argument("--out", help="CSV output path (default runs/<timestamp>-<seed>/)")
        for key, (_, help_text) in _KEYS.items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=f"key_{key}", help=help_text)

    p_trace = sub.add_parser("trace", help="single-member fidelity trace")
    add_common(p_trace)
    p_ens = sub.add_parser("ensemble", help="ensemble-averaged fidelity")
    add_common(p_ens)
    p_scal = sub.add_parser("scaling", help="sweep lambda or n, fit plateau/freeze-end power laws")
    add_common(p_scal)
    p_scal.add_argument("--sweep", choices=("lambda", "n"), required=True)
    p_scal.add_argument("--values", required=True, help="comma-separated sweep values")
    p_rev = sub.add_parser("revival", help="dominated-term ensemble run")
    add_common(p_rev)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {
        key: getattr(args, f"key_{key}") for key in _KEYS if getattr(args, f"key_{key}", None) is not None
    }
    try:
        settings = resolve_config(args.config, flags)
        if args.command == "trace":
            return cmd_trace(settings, args.out)
        if args.command == "ensemble":
            return cmd_ensemble(settings, args.out)
        if args.command == "revival":
            return cmd_revival(settings, args.out)
        if args.command == "scaling":
            try:
                values = [float(v) for v in args.values.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad sweep values: {args.values!r}") from exc
            return cmd_scaling(settings, args.out, args.sweep, values)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EigendecompositionError, EnsembleRunError, DegenerateSpectrumError, FreezeNotEndedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
