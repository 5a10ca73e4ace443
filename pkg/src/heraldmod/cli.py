"""Command-line entry point.

Exit codes: 0 success, 2 scenario validation/parse error, 3 runtime error.
The default output directory comes from --out or the HERALDMOD_OUT
environment variable, falling back to the current directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import HeraldmodError, ScenarioError
from .runner import _write_floor_csv, floor_curve, run, run_controls
from .scenario import parse_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("HERALDMOD_OUT", "."))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="path to a .scn scenario file")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--workers", type=int, default=1, help="shard workers")
    p.add_argument("--time-scale", type=float, default=None,
                   help="multiply the simulated duration, e.g. 0.01 for a quick look")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heraldmod",
        description="Simulate heralded single-photon electro-optic modulation runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write its outputs")
    _add_common(p_run)

    p_val = sub.add_parser("validate", help="parse and validate a scenario file")
    p_val.add_argument("scenario", help="path to a .scn scenario file")

    p_ctl = sub.add_parser("controls", help="run the no-fiber and random-trigger controls")
    _add_common(p_ctl)

    p_floor = sub.add_parser("floor-curve",
                             help="multi-pair floor of g2_cond vs Stokes rate")
    _add_common(p_floor)
    p_floor.add_argument("--rates", required=True,
                         help="comma-separated Stokes rates in 1/s")
    p_floor.add_argument("--heralds", type=int, default=300_000,
                         help="target heralds per grid point")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate":
        print(f"ok: {scenario.name} (digest {scenario.digest()[:16]})")
        return EXIT_OK

    try:
        if args.command == "run":
            report = run(scenario, seed_override=args.seed,
                         time_scale=args.time_scale, workers=args.workers,
                         out_dir=_out_dir(args))
            g2 = report.to_dict()["g2_cond"]["value"]
            print(f"{report.scenario_name}: N1={report.counts['n1']} "
                  f"E_R={report.efficiency['e_r_measured']:.4g} "
                  f"g2_cond={'n/a' if g2 is None else format(g2, '.4g')}")
        elif args.command == "controls":
            report_a, report_b = run_controls(
                scenario, seed_override=args.seed, time_scale=args.time_scale,
                workers=args.workers, out_dir=_out_dir(args))
            for rep in (report_a, report_b):
                g2 = rep.to_dict()["g2_cond"]["value"]
                print(f"{rep.scenario_name}: N1={rep.counts['n1']} "
                      f"g2_cond={'n/a' if g2 is None else format(g2, '.4g')}")
        elif args.command == "floor-curve":
            try:
                rates = [float(r) for r in args.rates.split(",") if r.strip()]
            except ValueError:
                print("error: --rates must be comma-separated numbers", file=sys.stderr)
                return EXIT_VALIDATION
            if not rates:
                print("error: --rates is empty", file=sys.stderr)
                return EXIT_VALIDATION
            points = floor_curve(scenario, rates, heralds_target=args.heralds,
                                 workers=args.workers)
            out = _out_dir(args)
            out.mkdir(parents=True, exist_ok=True)
            path = out / f"{scenario.name}_floor_curve.csv"
            _write_floor_csv(points, path)
            for p in points:
                print(f"rate={p['stokes_rate_per_s']:.4g} "
                      f"floor={p['floor'].value:.4g}")
            print(f"wrote {path}")
    except HeraldmodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
