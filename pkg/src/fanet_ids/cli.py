"""Command-line front end.

    fanet-ids simulate --preset desk --topologies 1 --out traces/
    fanet-ids dataset  --traces traces/ --shots 36 20 10 --out data/
    fanet-ids train    --plan plan.yaml --datasets data/ --out results/
    fanet-ids tune     --space space.yaml --plan plan.yaml --datasets data/ --out tune/
    fanet-ids cost     50 441 10 8
    fanet-ids report   --results results/ --out report/

Errors exit nonzero and print ``error[<category>]: <message>`` on stderr.
"""
import argparse
import logging
import os
import sys

import yaml

from . import __version__
from .evaluation import REPORT_COLUMNS, aggregate_rows, comm_cost, fmt_value, read_results, summary_text, write_report
from .federated import ExperimentPlan
from .hyperband import SearchSpace, export_ledger, run_hyperband, schedule_budget, validation_objective
from .nn import build_model
from .plotting import render_all
from .pipeline import (PipelineError, GridConfig, build_dataset_files, load_dataset_file, plan_matrix,
                       simulate_grid, train_from_dir)
from .sim import ConfigError

EXIT_CODES = {"config": 2, "input": 3, "pipeline": 4, "missing-twin": 4, "numeric": 5, "io": 6, "internal": 1}


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def load_yaml(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise CliError("input", f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise CliError("config", f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError("config", f"{path}: top level must be a mapping")
    return data


def _out(args, default):
    return args.out or default


# -- subcommands ------------------------------------------------------------------

def cmd_simulate(args):
    cfg = load_yaml(args.config)
    if args.preset:
        cfg["preset"] = args.preset
    for key in ("topologies", "attacks", "ratios"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.attack_free_only:
        cfg["attacks"] = []
    cfg.setdefault("seed", args.seed)
    try:
        grid = GridConfig.from_dict(cfg)
    except ConfigError as exc:
        raise CliError("config", "invalid simulation config:\n  " + "\n  ".join(exc.violations)) from None
    except (TypeError, ValueError) as exc:
        raise CliError("config", str(exc)) from None
    ran, skipped = simulate_grid(grid, _out(args, "traces"), args.jobs)
    if ran == 0:
        print(f"up to date ({skipped} simulations)")
    else:
        print(f"ran {ran} simulations, {skipped} up to date -> {_out(args, 'traces')}")


def cmd_dataset(args):
    paths = build_dataset_files(args.traces, args.shots, _out(args, "datasets"), seed=args.seed)
    for p in paths:
        print(p)


def load_plans(path, seed):
    raw = load_yaml(path)
    matrix = raw.pop("matrix", None) or {}
    unknown = set(matrix) - {"variants", "models", "attacks", "ratios", "shots"}
    if unknown:
        raise CliError("config", f"unknown matrix keys: {sorted(unknown)}")
    raw.setdefault("seeds", [seed])
    try:
        base = ExperimentPlan.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise CliError("config", f"invalid plan: {exc}") from None
    return plan_matrix(base, matrix.get("variants"), matrix.get("models"), matrix.get("attacks"),
                       [float(r) for r in matrix["ratios"]] if "ratios" in matrix else None, matrix.get("shots"))


def _write_per_client(reports, out_dir):
    rows = [(r.plan.ids_variant, r.plan.model, r.plan.attack_kind, r.plan.attacker_ratio, r.plan.shot_size,
             r.topology_id, r.seed, c["uav_id"], c["accuracy"], c["dr"], c["fpr"])
            for r in reports if r.per_client for c in r.per_client]
    if not rows:
        return
    with open(os.path.join(out_dir, "per_client.csv"), "w") as fh:
        fh.write("ids_variant,model,attack_kind,attacker_ratio,shot_size,topology_id,seed,uav_id,accuracy,dr,fpr\n")
        for row in rows:
            fh.write(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def cmd_train(args):
    plans = load_plans(args.plan, args.seed)
    out = _out(args, "results")
    reports, timings = train_from_dir(plans, args.datasets)
    os.makedirs(out, exist_ok=True)
    write_report(reports, out, timings)
    _write_per_client(reports, out)
    print(open(os.path.join(out, "summary.txt")).read(), end="")


def cmd_tune(args):
    space = SearchSpace.from_dict(load_yaml(args.space)) if args.space else SearchSpace()
    out = _out(args, "tune")
    os.makedirs(out, exist_ok=True)
    if args.synthetic:
        target = args.synthetic

        def objective(config, resource):
            return -(config["learning_rate"] - target) ** 2
        R = args.R or 81
    else:
        if not (args.plan and args.datasets):
            raise CliError("input", "tune needs --plan and --datasets (or --synthetic)")
        plan = load_plans(args.plan, args.seed)[0]
        shot = 36 if plan.ids_variant == "FL" else plan.shot_size
        by_topo = load_dataset_file(args.datasets, plan.attack_kind, plan.attacker_ratio, shot)
        topo = sorted(by_topo)[0]
        objective = validation_objective(plan, by_topo[topo], seed=args.seed)
        R = args.R or plan.effective_rounds or plan.epochs
    result = run_hyperband(space, objective, R, args.eta, args.seed)
    export_ledger(result.ledger, os.path.join(out, "hyperband_ledger.csv"))
    best = {"best_config": result.best_config, "best_score": result.best_score, "R": R, "eta": args.eta,
            "trials": len(result.ledger), "resource_spent": result.total_resource,
            "resource_schedule": schedule_budget(R, args.eta)}
    with open(os.path.join(out, "best.yaml"), "w") as fh:
        yaml.safe_dump(best, fh, sort_keys=True)
    print(yaml.safe_dump(best, sort_keys=True), end="")


def cmd_cost(args):
    try:
        cc = comm_cost(args.N, args.W, args.E, args.S)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    print(f"CC = N x W x E x S = {args.N} x {args.W} x {args.E} x {args.S} = {cc} bytes")
    if args.baseline_rounds:
        base = comm_cost(args.N, args.W, args.baseline_rounds, args.S)
        print(f"vs E={args.baseline_rounds}: {base} bytes; ratio {cc / base:.4g} "
              f"({100 * (1 - cc / base):.2f}% less)")
    if args.model:
        w = build_model(args.model).n_params()
        print(f"{args.model.upper()} parameter count W = {w}")


def cmd_report(args):
    rows = []
    for d in args.results:
        path = os.path.join(d, "results.csv") if os.path.isdir(d) else d
        if not os.path.exists(path):
            raise CliError("input", f"no results.csv at {d}")
        rows += [r for r in read_results(path) if r["row_type"] == "run"]
    if not rows:
        raise CliError("input", "no experiment rows to report")
    out = _out(args, "report")
    os.makedirs(out, exist_ok=True)
    merged = aggregate_rows(rows)
    with open(os.path.join(out, "results.csv"), "w") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for r in merged:
            fh.write(",".join(fmt_value(r.get(c)) for c in REPORT_COLUMNS) + "\n")
    text = summary_text(merged)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    figs = render_all(merged, out)
    print(text, end="")
    print("----- figures -----")
    for f in figs:
        print(f)


# -- parser -----------------------------------------------------------------------

def _common(defaults):
    """Shared flags. The copy attached to subcommands uses SUPPRESS so a flag
    given before the subcommand is not reset by the subcommand's default."""
    c = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    c.add_argument("--seed", type=int, default=d(0), help="root seed (default 0)")
    c.add_argument("--jobs", type=int, default=d(1), help="worker processes (default 1)")
    c.add_argument("--out", default=d(None), help="output directory")
    c.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return c


def build_parser():
    top, common = _common(True), _common(False)

    p = argparse.ArgumentParser(prog="fanet-ids", description=__doc__.splitlines()[0], parents=[top])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run the simulation grid")
    s.add_argument("--config", help="YAML grid config (keys: preset, sim, topologies, attacks, ratios, seed)")
    s.add_argument("--preset", choices=["full", "desk"])
    s.add_argument("--topologies", type=int)
    s.add_argument("--attacks", nargs="*")
    s.add_argument("--ratios", nargs="*", type=float)
    s.add_argument("--attack-free-only", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("dataset", parents=[common], help="build K-shot dataset CSVs from traces")
    s.add_argument("--traces", required=True)
    s.add_argument("--shots", nargs="+", type=int, default=[36, 20, 10])
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", parents=[common], help="train and evaluate IDS plans")
    s.add_argument("--plan", required=True, help="YAML experiment plan")
    s.add_argument("--datasets", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tune", parents=[common], help="Hyperband search")
    s.add_argument("--space", help="YAML search space")
    s.add_argument("--plan")
    s.add_argument("--datasets")
    s.add_argument("-R", type=int, help="max resource per trial (rounds or epochs)")
    s.add_argument("--eta", type=int, default=3)
    s.add_argument("--synthetic", type=float, metavar="LR",
                   help="tune against -(lr - LR)^2 instead of a training run")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("cost", parents=[common], help="communication cost N x W x E x S")
    s.add_argument("N", type=int)
    s.add_argument("W", type=int)
    s.add_argument("E", type=int)
    s.add_argument("S", type=int)
    s.add_argument("--baseline-rounds", type=int, help="compare against this many rounds")
    s.add_argument("--model", choices=["dnn", "cnn"], help="also print the model's parameter count")
    s.set_defaults(func=cmd_cost)

    s = sub.add_parser("report", parents=[common], help="merge results and render figures")
    s.add_argument("--results", nargs="+", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        category, msg = exc.category, str(exc)
    except PipelineError as exc:
        category, msg = exc.category, str(exc)
    except ConfigError as exc:
        category, msg = "config", str(exc)
    except FloatingPointError as exc:
        category, msg = "numeric", str(exc)
    except OSError as exc:
        category, msg = "io", str(exc)
    else:
        return 0
    print(f"error[{category}]: {msg}", file=sys.stderr)
    return EXIT_CODES.get(category, 1)


if __name__ == "__main__":
    sys.exit(main())
