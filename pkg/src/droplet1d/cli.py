"""Command line driver: run scenarios, compare runs, inspect presets.

Exit status: 0 success, 1 solver or comparison failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import coupling, scenarios
from .physics import (
    Algorithm,
    FieldSummary,
    compute_time_step,
    mean_free_path,
    thermal_speed,
    transport_coefficients,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="droplet1d",
        description="1D droplet-in-gas simulator with continuum (I) and "
                    "kinetic (II) gas routes")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write frame CSVs")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=scenarios.PRESET_NAMES)
    src.add_argument("--config", help="INI scenario file (docs/config-format.md)")
    run_p.add_argument("--algorithm", choices=("I", "II", "both"), default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--molecules-per-cell", type=int, default=None)
    run_p.add_argument("--particles", type=int, default=None,
                       help="cell/particle count of the base discretization")

    cmp_p = sub.add_parser("compare", help="compare the frames of two run dirs")
    cmp_p.add_argument("--a", required=True)
    cmp_p.add_argument("--b", required=True)
    cmp_p.add_argument("--report", required=True)
    cmp_p.add_argument("--threshold", action="append", default=[],
                       metavar="FIELD=REL_L1",
                       help="pass/fail bound, e.g. rho=0.05 (repeatable)")

    info_p = sub.add_parser("info", help="derived quantities of a preset")
    info_p.add_argument("--preset", required=True, choices=scenarios.PRESET_NAMES)
    return parser


def _apply_overrides(config, args):
    from dataclasses import replace

    overrides = {}
    if args.algorithm is not None:
        overrides["algorithm"] = args.algorithm
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.molecules_per_cell is not None:
        overrides["molecules_per_cell"] = args.molecules_per_cell
    if args.particles is not None:
        overrides["n_cells"] = args.particles
    return replace(config, **overrides) if overrides else config


def _write_run(result: coupling.RunResult, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    for i, frame in enumerate(result.frames):
        scenarios.write_frame_csv(frame, os.path.join(directory, f"frame_{i:04d}.csv"))
    with open(os.path.join(directory, "run_metadata.json"), "w") as fh:
        json.dump(result.metadata, fh, indent=2, default=_json_default)
        fh.write("\n")
    trace = result.trace.arrays()
    header = ",".join(trace)
    rows = np.column_stack(list(trace.values()))
    np.savetxt(os.path.join(directory, "trace.csv"), rows, delimiter=",",
               header=header, comments="")


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    raise TypeError(f"not JSON serializable: {type(value)}")


def cmd_run(args) -> int:
    if args.preset:
        config = scenarios.preset(args.preset)
    else:
        config = scenarios.load_config(args.config)
    config = _apply_overrides(config, args)

    choice = config.algorithm
    todo = [Algorithm.CONTINUUM, Algorithm.KINETIC] if choice == "both" else \
        [Algorithm(choice)]
    outputs = {alg: os.path.join(args.out, f"alg{alg.value}") for alg in todo}

    if len(todo) == 2 and scenarios.worker_count() > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            futures = {alg: pool.submit(coupling.run, config, alg) for alg in todo}
            results = {alg: fut.result() for alg, fut in futures.items()}
    else:
        results = {alg: coupling.run(config, alg) for alg in todo}

    for alg, result in results.items():
        _write_run(result, outputs[alg])
        print(f"algorithm {alg.value}: {len(result.frames)} frames, "
              f"{result.metadata['steps']} steps -> {outputs[alg]}")
    return 0


def cmd_compare(args) -> int:
    frames_a = scenarios.frames_in_dir(args.a)
    frames_b = scenarios.frames_in_dir(args.b)
    thresholds = {}
    for spec in args.threshold:
        name, _, value = spec.partition("=")
        if name not in scenarios.FRAME_FIELDS or not value:
            raise ValueError(f"bad threshold spec {spec!r}")
        thresholds[name] = float(value)
    report = scenarios.compare_runs(frames_a, frames_b, thresholds or None)
    text = report.to_text()
    with open(args.report, "w") as fh:
        fh.write(text + "\n")
    print(text)
    return 0 if report.passed() else 1


def cmd_info(args) -> int:
    config = scenarios.preset(args.preset)
    species = config.species
    T0 = config.initial_gas_temperature()
    mu, kappa = transport_coefficients(T0, species)
    print(f"preset {config.name}")
    print(f"  domain [{config.a:g}, {config.b:g}] m, "
          f"liquid [{config.liquid_lo:g}, {config.liquid_hi:g}] m")
    print(f"  characteristic length {config.char_length:g} m")
    for label, kn in config.knudsen_numbers().items():
        print(f"  Kn {label} = {kn:.6g}")
    print(f"  frozen transport at T = {T0:.4g} K: "
          f"mu = {mu:.6g} Pa s, kappa = {kappa:.6g} W/(m K)")
    rho_max = max(r.rho for r in config.gas_regions)
    lam = mean_free_path(rho_max, species)
    print(f"  smallest mean free path {lam:.6g} m, "
          f"thermal speed {thermal_speed(T0, species):.6g} m/s")
    summary = FieldSummary(
        max_speed=max(max(abs(r.u) for r in config.gas_regions),
                      abs(config.liquid_u)),
        max_temperature=max(r.T for r in config.gas_regions),
        min_spacing=config.dx,
        rho_min=min(r.rho for r in config.gas_regions),
        rho_max=rho_max)
    dt_i = compute_time_step(summary, config.liquid_species, species,
                             Algorithm.CONTINUUM, config.safety,
                             mu=mu, kappa=kappa)
    dt_ii = compute_time_step(summary, config.liquid_species, species,
                              Algorithm.KINETIC, config.safety)
    print(f"  initial dt bound: algorithm I {dt_i:.6g} s (base spacing), "
          f"algorithm II {dt_ii:.6g} s (before cell refinement)")
    print(f"  t_end = {config.t_end:g} s, outputs at "
          + ", ".join(f"{t:g}" for t in config.output_times))
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "compare":
            return cmd_compare(args)
        return cmd_info(args)
    except Exception as exc:  # solver/user errors -> status 1 with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
