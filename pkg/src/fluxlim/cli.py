"""Command line front end.

``fluxlim run <config.json | preset> [--out DIR]``
    Run an experiment. Exit 0 on success, 2 on a validation error (nothing
    is written), 3 on a solver failure.
``fluxlim presets``
    List the built-in presets.
``fluxlim check <measure.json> [--out DIR]``
    G table, G properties and moment tests of a velocity measure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import FluxlimError, ValidationError
from .presets import PRESET_NAMES, get_preset, list_presets
from .runner import execute
from .writer import ArtifactWriter, check_writable

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3


def _resolve(target: str) -> ExperimentConfig:
    p = Path(target)
    if p.is_file():
        return load_config(p)
    if target in PRESET_NAMES:
        return ExperimentConfig.from_dict(get_preset(target))
    raise ValidationError(f"{target!r} is neither a config file nor a preset name")


def _check_config(measure_path: str) -> ExperimentConfig:
    p = Path(measure_path)
    try:
        obj = json.loads(p.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {measure_path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{measure_path} is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict({"name": f"check-{p.stem}", "mode": "check",
                                       "check": {"measure": obj}})


def run_experiment(cfg: ExperimentConfig, out: str | None = None, stream=None) -> int:
    """Run a config and write its artifacts; returns the exit status."""
    stream = stream or sys.stdout
    root = Path(out) if out is not None else Path(cfg.output.dir)
    try:
        check_writable(root)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    w = ArtifactWriter(root, cfg.output.formats)
    t0 = time.perf_counter()
    try:
        summary = execute(cfg, w)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FluxlimError, ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    w.commit()
    dt = time.perf_counter() - t0
    print(f"{cfg.name}: {cfg.mode} finished in {dt:.1f} s, {len(w.names) + 1} files in {root}", file=stream)
    for key in ("order", "monotone", "speed_change", "max_mass_drift", "min_c", "improved",
                "max_abs_diff_tanh", "phi_max_error"):
        if key in summary and summary[key] is not None:
            print(f"  {key} = {summary[key]}", file=stream)
    for r in summary.get("runs", []):
        print(f"  amplitude {r['amplitude']:g}: front speed {r['front_speed_right']}, "
              f"cap {r['speed_cap']}", file=stream)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fluxlim", description="Flux-limited transport laboratory.")
    sub = ap.add_subparsers(dest="command", metavar="{run,presets,check}")
    sub.required = True
    r = sub.add_parser("run", help="run a JSON config or a preset")
    r.add_argument("config", help="path to a config file or a preset name")
    r.add_argument("--out", help="output directory (overrides the config)")
    sub.add_parser("presets", help="list built-in presets")
    c = sub.add_parser("check", help="check G and moment conditions of a measure")
    c.add_argument("measure", help="measure JSON file")
    c.add_argument("--out", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        print(list_presets())
        return EXIT_OK
    try:
        cfg = _resolve(args.config) if args.command == "run" else _check_config(args.measure)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return run_experiment(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
