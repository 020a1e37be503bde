"""Command-line front end.

Exit status: 0 on success, 2 for an invalid experiment spec or arguments,
1 for any other failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .blocks import estimate_noise_level, local_minima, partition
from .estimators import volatility_curve
from .experiments import (
    SpecError,
    base_spot_var,
    default_spec_text,
    load_spec,
    parse_spec,
    psi_table_for,
    run_coverage,
    run_curve_demo,
    run_table1,
    run_table2,
)
from .market import (
    ObservationSeries,
    add_jumps,
    read_csv,
    simulate_path,
    path_from_spot_var,
    synthesize_observations,
    write_csv,
)
from .psi import PsiConfig, build_psi_table

log = logging.getLogger("spotvol")

SCENARIO_OF = {"table1": "table1", "table2": "table2_grid", "curve": "curve_demo",
               "coverage": "coverage"}


def _spec(args):
    spec = load_spec(args.spec) if args.spec else parse_spec(default_spec_text())
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = Path(args.out)
    if args.command in SCENARIO_OF:
        over["scenario"] = SCENARIO_OF[args.command]
    return replace(spec, **over) if over else spec


def cmd_simulate(args, spec):
    if spec.constant_var is not None:
        path = path_from_spot_var(base_spot_var(spec), spec.seed)
    else:
        path = simulate_path(spec.model, spec.n, spec.seed)
    if spec.jumps is not None:
        path = add_jumps(path, spec.jumps, spec.seed)
    obs = synthesize_observations(path, spec.noise, spec.seed)
    spec.out.mkdir(parents=True, exist_ok=True)
    write_csv(spec.out / "path.csv", path, obs)


def cmd_estimate(args, spec):
    path, y = read_csv(args.input)
    if y is None:
        raise SpecError(f"{args.input}: no complete 'y' column")
    obs = ObservationSeries.from_prices(y, spec.noise)
    nh, K = spec.nh[0], spec.K_n[0]
    part = partition(obs.n, obs.n // nh, spec.blocks)
    lm = local_minima(obs, part)
    cfg = replace(spec.estimator, K_n=K)
    correction = None
    if spec.correction != "none":
        eta = estimate_noise_level(obs, debias=True)
        log.info("estimated noise level %.1f", eta)
        pilot = volatility_curve(lm, cfg)
        table = build_psi_table(PsiConfig(
            n=obs.n, nh=nh, noise=replace(spec.noise, level_eta=eta),
            grid=spec.psi.grid(float(np.median(pilot.raw))),
            iterations_per_point=spec.psi.iterations, seed=spec.seed), threads=args.threads)
        correction = table.fitted_slope if spec.correction == "slope" else table
    curve = volatility_curve(lm, cfg, correction=correction, q=spec.q[0],
                             true_spot_var=None if path is None else path.spot_var)
    spec.out.mkdir(parents=True, exist_ok=True)
    lm.write_csv(spec.out / "minima.csv")
    curve.write_csv(spec.out / "curve.csv")


def cmd_calibrate(args, spec):
    spec.out.mkdir(parents=True, exist_ok=True)
    for nh in spec.nh:
        psi_table_for(spec, nh, args.threads).write_csv(spec.out / f"psi_nh{nh}.csv")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="experiment spec file (default: shipped default.spec)")
    common.add_argument("--seed", type=int, help="master seed (overrides the spec)")
    common.add_argument("--out", help="output directory (overrides the spec)")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spotvol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one day to path.csv")
    est = sub.add_parser("estimate", parents=[common],
                         help="block minima and volatility curve from a price CSV")
    est.add_argument("input", help="CSV with a 'y' column (e.g. path.csv)")
    sub.add_parser("calibrate-psi", parents=[common], help="Psi tables for each nh")
    sub.add_parser("table1", parents=[common], help="Psi slopes per block size")
    sub.add_parser("table2", parents=[common], help="MSD / MAB / MABC summary grid")
    sub.add_parser("curve", parents=[common], help="volatility curve with bands")
    sub.add_parser("coverage", parents=[common], help="empirical CI coverage")
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "calibrate-psi": cmd_calibrate,
    "table1": lambda a, s: run_table1(s, a.threads),
    "table2": lambda a, s: run_table2(s, a.threads),
    "curve": lambda a, s: run_curve_demo(s, a.threads),
    "coverage": lambda a, s: run_coverage(s, a.threads),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("spotvol: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        spec = _spec(args)
        COMMANDS[args.command](args, spec)
    except SpecError as exc:
        print(f"spotvol: invalid spec: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"spotvol: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
