"""Command-line interface: run one trial, a batch, or generate data."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io, pipeline, synth


def _add_selection_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--anthro", type=Path, default=None,
                        help="anthropometric config file (default: built-in reference table)")
    parser.add_argument("--mass", type=float, required=True, help="subject total mass, kg")
    parser.add_argument("--methods", default="A,B,C",
                        help="comma-separated estimation methods (A, B, C)")
    parser.add_argument("--degrees", default="0,1,2",
                        help="comma-separated integration degrees (0, 1, 2)")
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def _config(args, jobs: int = 1) -> pipeline.RunConfig:
    return pipeline.RunConfig(
        total_mass=args.mass,
        anthro=args.anthro,
        methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        degrees=tuple(int(d) for d in args.degrees.split(",") if d.strip()),
        jobs=jobs,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumpdyn",
        description="Estimate trunk COM ratio and segment inertias from "
                    "squat-jump marker and force-plate recordings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="analyze a single trial")
    run.add_argument("--markers", type=Path, required=True, help="marker CSV (100 Hz)")
    run.add_argument("--forces", type=Path, required=True, help="force-plate CSV (1000 Hz)")
    _add_selection_args(run)

    batch = sub.add_parser("batch", help="analyze every trial pair in a directory")
    batch.add_argument("--dir", type=Path, required=True,
                       help="directory of <name>_markers.csv / <name>_forces.csv pairs")
    batch.add_argument("--jobs", type=int, default=4, help="concurrent trials (default 4)")
    _add_selection_args(batch)

    gen = sub.add_parser("synth", help="generate synthetic trials with known truth")
    gen.add_argument("--scenario", type=Path, default=None,
                     help="scenario config file (default: built-in jump)")
    gen.add_argument("--out", type=Path, required=True, help="output directory")
    gen.add_argument("--seed", type=int, default=None, help="RNG seed override")
    gen.add_argument("--count", type=int, default=1,
                     help="number of trials (seeds increment from the base seed)")
    gen.add_argument("--name", default="trial", help="file-name prefix (default 'trial')")
    return parser


def _cmd_run(args) -> int:
    report = pipeline.run_trial(args.markers, args.forces, _config(args), args.out)
    best = report["estimates"][0]
    print(f"alpha4={report['sync']['alpha4']:.4f} nu={report['sync']['nu']} "
          f"({len(report['estimates'])} estimates; first: {best['method']}{best['degree']} "
          f"epsilon={best['epsilon']:.6g})")
    print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


def _cmd_batch(args) -> int:
    summary = pipeline.run_batch(args.dir, _config(args, jobs=args.jobs), args.out)
    print(f"{summary['n_analyzed']}/{summary['n_trials']} trials analyzed, "
          f"{summary['n_failed']} failed, "
          f"{summary['gyration_filter']['retained']} retained after gyration filter")
    for failure in summary["failures"]:
        print(f"  failed {failure['trial']} at stage {failure['stage']}: {failure['error']}",
              file=sys.stderr)
    print(f"summary written to {Path(args.out) / 'summary.json'}")
    return 0 if summary["n_analyzed"] > 0 else 1


def _cmd_synth(args) -> int:
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.scenario is None:
        scenario = synth.SyntheticScenario(**overrides)
    else:
        scenario = io.read_scenario(args.scenario, **overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_anthro(out / "anthro.txt", scenario.table)
    for k in range(args.count):
        name = args.name if args.count == 1 else f"{args.name}{k:03d}"
        sc = synth.SyntheticScenario(**{**scenario.__dict__, "seed": scenario.seed + k})
        trial, truth = synth.generate(sc)
        io.emit_markers(out / f"{name}_markers.csv", trial.marker_times, trial.marker_positions)
        io.emit_forces(out / f"{name}_forces.csv", trial.force)
        io.write_json(out / f"{name}_truth.json", {
            "alpha4": truth.alpha4,
            "lag": truth.lag,
            "inertias": list(truth.inertias),
            "window": list(truth.window),
            "seed": sc.seed,
            "total_mass": sc.total_mass,
        })
    print(f"wrote {args.count} trial(s) to {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "batch":
            return _cmd_batch(args)
        return _cmd_synth(args)
    except (pipeline.StageError, pipeline.BatchInputError, io.ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
