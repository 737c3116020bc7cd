"""Command line interface.

Verbs:
  validate   check a scenario file (and optionally an initial grid CSV)
  solve      build the optimal configuration for a scenario
  simulate   run one simulation and write its report
  batch      run a scenario across seeds, write per-run CSV + JSON
  compare    run all three policies across seeds and report reductions
  lut        dump the dig placement-cost lookup table as CSV
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import config as cfg
from . import report as rep
from .costs import build_cost_table, expected_cost
from .engine import run
from .model import Bgc, ValidationError, validate_initial_bgc
from .solver import build_optimal_bgc, optimal_empty_level


def _load_config(path: str) -> cfg.ScenarioConfig:
    try:
        return cfg.load(path)
    except cfg.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        raise SystemExit(2)


def _cmd_validate(args) -> int:
    conf = _load_config(args.config)
    scenario = conf.scenario()  # builds grid, catalog, kinematics
    print(f"config ok: {conf.name} policy={conf.policy} "
          f"bins={scenario.catalog.bin_count} "
          f"stacks={scenario.spec.stack_count}")
    if args.grid:
        cells = np.loadtxt(args.grid, delimiter=",", dtype=np.int64, ndmin=2)
        report = validate_initial_bgc(scenario.spec, Bgc(cells),
                                      scenario.catalog.bin_count)
        if report.ok:
            print("grid ok")
            return 0
        for v in report.violations:
            print(f"violation [{v.code}]: {v.message}")
        return 1
    return 0


def _cmd_solve(args) -> int:
    conf = _load_config(args.config)
    scenario = conf.scenario()
    spec, catalog = scenario.spec, scenario.catalog
    table = build_cost_table(spec.height)
    if args.search_empty_level:
        best, per_level = optimal_empty_level(spec, catalog, table)
        for h_e in sorted(per_level):
            marker = "  <- optimal" if h_e == best else ""
            print(f"empty level {h_e}: expected cost "
                  f"{per_level[h_e]:.4f}{marker}")
        return 0
    bgc = build_optimal_bgc(spec, catalog, spec.empty_level)
    cost = expected_cost(bgc, catalog, table)
    print(f"expected single-request cost: {cost:.4f}", file=sys.stderr)
    out = args.output or "-"
    text = "\n".join(",".join(str(int(v)) for v in row) for row in bgc.cells)
    if out == "-":
        print(text)
    else:
        with open(out, "w") as f:
            f.write(text + "\n")
        print(f"wrote {out}", file=sys.stderr)
    return 0


def _cmd_simulate(args) -> int:
    conf = _load_config(args.config)
    if args.seed is not None:
        conf = conf.with_seed(args.seed)
    log = run(conf.scenario())
    bundle = rep.summarize(conf, log)
    if args.json:
        with open(args.json, "w") as f:
            f.write(rep.bundle_to_json(bundle) + "\n")
    if args.events:
        with open(args.events, "w") as f:
            f.write(log.to_jsonl())
    print(f"{conf.name} policy={conf.policy} seed={conf.seed}: "
          f"{bundle.requests} requests, mean retrieval "
          f"{bundle.mean_retrieval:.2f}s, surface fraction "
          f"{bundle.surface_fraction:.3f}, robot working "
          f"{bundle.robot_working_s:.0f}s")
    return 0


def _parse_seeds(text: str) -> list[int]:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi)))
    return [int(s) for s in text.split(",") if s]


def _cmd_batch(args) -> int:
    conf = _load_config(args.config)
    seeds = _parse_seeds(args.seeds)
    result = rep.run_batch(conf, seeds)
    csv_text = rep.batch_to_csv(result)
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    if args.json:
        with open(args.json, "w") as f:
            json.dump({"bundles": [b.to_dict() for b in result.bundles],
                       "failures": result.failures}, f, sort_keys=True,
                      indent=2)
    for seed, err in result.failures:
        print(f"seed {seed} failed: {err}", file=sys.stderr)
    return 1 if result.failures else 0


def _cmd_compare(args) -> int:
    conf = _load_config(args.config)
    seeds = _parse_seeds(args.seeds)
    policies = ["layer_complete", "delayed", "immediate"]
    batches = {}
    for policy in policies:
        batches[policy] = (conf.with_policy(policy),
                           rep.run_batch(conf.with_policy(policy), seeds))
    failures = [(p, f) for p in policies for f in batches[p][1].failures]
    comparisons = rep.compare_policies(
        batches["layer_complete"],
        [batches["delayed"], batches["immediate"]],
        metrics=tuple(args.metrics.split(",")))
    text = rep.comparisons_to_csv(comparisons)
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    for policy, (seed, err) in failures:
        print(f"{policy} seed {seed} failed: {err}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_lut(args) -> int:
    if args.height < 1:
        print("height must be >= 1", file=sys.stderr)
        return 2
    text = build_cost_table(args.height).to_csv()
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridstore",
        description="Storage-grid policy simulator and configuration solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a scenario file")
    p.add_argument("config")
    p.add_argument("--grid", help="initial grid CSV to check (H rows, M cols)")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("solve", help="build the optimal configuration")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="write the grid CSV here ('-' = stdout)")
    p.add_argument("--search-empty-level", action="store_true",
                   help="search all feasible empty levels instead")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("simulate", help="run one simulation")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--json", help="write the report bundle here")
    p.add_argument("--events", help="write the event log (JSON lines) here")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("batch", help="run a scenario across seeds")
    p.add_argument("config")
    p.add_argument("--seeds", default="0:10",
                   help="'lo:hi' range or comma list (default 0:10)")
    p.add_argument("--csv", help="write per-run metrics CSV here")
    p.add_argument("--json", help="write full bundles JSON here")
    p.set_defaults(fn=_cmd_batch)

    p = sub.add_parser("compare", help="compare the three policies")
    p.add_argument("config")
    p.add_argument("--seeds", default="0:5")
    p.add_argument("--metrics", default="mean_retrieval,robot_working_s")
    p.add_argument("--csv", help="write the comparison CSV here")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("lut", help="dump the placement-cost lookup table")
    p.add_argument("height", type=int)
    p.add_argument("--csv", help="write the table here instead of stdout")
    p.set_defaults(fn=_cmd_lut)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, cfg.ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
