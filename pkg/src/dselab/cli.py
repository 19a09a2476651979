"""Command-line entry point: ``dselab {estimate,bench,partition,sweep,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .bench import ExperimentConfig, emit_report, metrics_markdown, run_experiment
from .errors import DSEError
from .governor import Mode, solution_metrics
from .methods import METHODS, governor_for, run_method
from .network import (
    build_measurement_model,
    load_case,
    load_partition,
    make_area_views,
    save_partition,
    simulate_measurements,
)
from .partition import connection_matrix, cut_cost, optimize_partition, weight_matrix
from .wls import estimate, objective

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _methods(value: str) -> list[str]:
    if value == "all":
        return list(METHODS)
    out = [v.strip() for v in value.split(",") if v.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)} or all")
    return out


def _modes(value: str) -> list[str]:
    if value.lower() == "both":
        return [Mode.WOCC.value, Mode.WCC.value]
    try:
        return [Mode(value.upper()).value]
    except ValueError:
        raise argparse.ArgumentTypeError("mode must be WOCC, WCC or both") from None


def _positive(value: str) -> float:
    v = float(value)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", help="case JSON (bundled names like ieee14.json resolve)")
    common.add_argument("--partition", help="partition JSON, or 'optimize'")
    common.add_argument("--method", type=_methods, default=None, help="method, comma list, or all")
    common.add_argument("--mode", type=_modes, default=None, help="WOCC, WCC or both")
    common.add_argument("--epsilon", type=_positive, default=None)
    common.add_argument("--seed", type=int, action="append", default=None, help="repeatable")
    common.add_argument("--tdelay", type=float, default=None)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dselab", description="Distributed DC state estimation lab.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("estimate", parents=[common], help="single run; prints state and objective")

    b = sub.add_parser("bench", parents=[common], help="method x mode x seed grid with report")
    b.add_argument("--config", type=Path, help="experiment JSON; command-line flags override it")
    b.add_argument("--k", type=int, default=None)
    b.add_argument("--blim", type=int, default=None)
    b.add_argument("--noiseless", action="store_true")
    b.add_argument("--no-figures", action="store_true")

    pa = sub.add_parser("partition", parents=[common], help="optimise an area assignment")
    pa.add_argument("--k", type=int, required=True)
    pa.add_argument("--blim", type=int, required=True)
    pa.add_argument("--w", type=float, default=0.01)
    pa.add_argument("--restarts", type=int, default=20)
    pa.add_argument("--exhaustive", action="store_true")

    sw = sub.add_parser("sweep", parents=[common], help="+10%% single-measurement sensitivity sweep")
    sw.add_argument("--confidence", type=float, default=0.95)
    sw.add_argument("--factor", type=float, default=1.1)
    sw.add_argument("--noiseless", action="store_true")

    sub.add_parser("validate", parents=[common], help="schema-check case and partition files")
    return p


def _need(parser, args, *names):
    missing = [f"--{n}" for n in names if getattr(args, n) is None]
    if missing:
        parser.error(f"{args.command} requires {', '.join(missing)}")


def _setup(args):
    network = load_case(args.case)
    model = build_measurement_model(network)
    partition = load_partition(args.partition)
    partition.check(network)
    return network, model, partition, make_area_views(network, model, partition)


def cmd_estimate(args) -> int:
    network, model, partition, views = _setup(args)
    method = (args.method or ["decomposition"])[0]
    mode = (args.mode or ["WOCC"])[0]
    seed = (args.seed or [0])[0]
    z = simulate_measurements(model, seed)
    x_cent = estimate(model, z)
    trace = run_method(method, model, views, z, governor_for(method, args.epsilon or 1e-6, mode, args.tdelay or 0.5), seed=seed)
    eps1, eps2 = solution_metrics(x_cent, trace.x)
    print(f"# {method} {mode} seed={seed} iter={trace.iterations} converged={trace.converged}")
    print("bus,theta_rad,theta_centralized_rad")
    for b, xd, xc in zip(network.state_buses, trace.x, x_cent):
        print(f"{b},{xd:.10f},{xc:.10f}")
    print(f"OV={objective(model, z, trace.x):.6f} OV_centralized={objective(model, z, x_cent):.6f}")
    print(f"eps1={eps1:.3e} eps2={eps2:.3e} floats={trace.total_floats}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        trace.to_csv(args.out / f"{method}_{mode}_seed{seed}.csv")
    return EXIT_OK if trace.converged else EXIT_FAIL


def cmd_bench(args) -> int:
    cfg = json.loads(args.config.read_text()) if args.config else {}
    overrides = {
        "case": args.case,
        "partition": args.partition,
        "methods": args.method,
        "modes": args.mode,
        "epsilon": args.epsilon,
        "seeds": args.seed,
        "tdelay": args.tdelay,
        "out": str(args.out) if args.out else None,
        "k": args.k,
        "b_lim": args.blim,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.noiseless:
        cfg["noiseless"] = True
    if "case" not in cfg:
        raise _Usage("bench requires --case or a config file with 'case'")
    config = ExperimentConfig(**cfg)
    result = run_experiment(config)
    out = Path(config.out or "out")
    emit_report(result.rows, out, result=result, figures=not args.no_figures)
    print(metrics_markdown(result.rows), end="")
    print(f"report written to {out}")
    return EXIT_FAIL if result.all_failed else EXIT_OK


def cmd_partition(args) -> int:
    network = load_case(args.case)
    seed = (args.seed or [0])[0]
    res = optimize_partition(
        network, args.k, args.blim, args.w, seed=seed, restarts=args.restarts,
        method="exhaustive" if args.exhaustive else "local",
    )
    print(f"total cost {res.total_cost:.6g}")
    for k, (area, j) in enumerate(zip(res.partition.areas, res.per_area_cost), start=1):
        print(f"area {k}: J={j:.6g} buses={list(area)}")
    if args.out:
        path = args.out if args.out.suffix == ".json" else args.out / "partition.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_partition(res.partition, path, per_area_cost=[round(c, 12) for c in res.per_area_cost], total_cost=round(res.total_cost, 12))
        print(f"partition written to {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .baddata import count_detections, sensitivity_sweep
    from .plotting import plot_sweep

    network, model, partition, _ = _setup(args)
    method = (args.method or ["decomposition"])[0]
    seed = (args.seed or [0])[0]
    z = simulate_measurements(model, seed, 0 if args.noiseless else None)
    sweep = sensitivity_sweep(
        network, model, partition, method, args.confidence, z=z, seed=seed,
        factor=args.factor, epsilon=args.epsilon or 1e-6,
    )
    n = count_detections(sweep)
    print(f"detections: {n} of {model.m} perturbed measurements ({int(sweep.failed.sum())} runs failed)")
    for i, areas in sweep.detections:
        print(f"  {sweep.labels[i]}: areas {[k + 1 for k in areas]}")
    out = args.out or Path("out")
    out.mkdir(parents=True, exist_ok=True)
    sweep.to_csv(out / "sweep.csv")
    plot_sweep(sweep, out / "sweep.svg", title=f"{network.name} {method}")
    print(f"sweep written to {out}")
    return EXIT_FAIL if sweep.failed.all() else EXIT_OK


def cmd_validate(args) -> int:
    network = load_case(args.case)
    print(f"case {network.name or args.case}: {network.n_buses} buses, {len(network.branches)} branches, slack {network.slack}")
    if args.partition:
        part = load_partition(args.partition)
        part.check(network)
        model = build_measurement_model(network)
        views = make_area_views(network, model, part)
        for v in views:
            print(f"area {v.k + 1}: {len(v.buses)} buses, {len(v.measurements)} measurements, {len(v.replicated)} replicated states")
        cost = cut_cost(part, connection_matrix(network), weight_matrix(network, 0.01), network.bus_ids)
        print(f"cut cost (w=0.01): {cost.total_cost:.6g}")
    print("ok")
    return EXIT_OK


class _Usage(Exception):
    pass


COMMANDS = {
    "estimate": (cmd_estimate, ("case", "partition")),
    "bench": (cmd_bench, ()),
    "partition": (cmd_partition, ("case",)),
    "sweep": (cmd_sweep, ("case", "partition")),
    "validate": (cmd_validate, ("case",)),
}


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        fn, required = COMMANDS[args.command]
        _need(parser, args, *required)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    np.set_printoptions(precision=6)
    try:
        return fn(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"dselab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DSEError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"dselab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
