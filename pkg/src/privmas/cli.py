"""Command line interface: ``privmas {run,compare,trace-verify,list-presets}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .graph import GRAPH_PRESETS
from .harness import (COMPARE_FIELDS, OUTPUT_ENV, ExperimentConfig, compare, run_experiment,
                      shipped_configs, trace_verify)
from .schedules import PRESETS



def _load(path: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.load(path)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
    except TypeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.seeds:
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
    if args.workers:
        cfg.workers = args.workers
    summary = run_experiment(cfg)
    agg = summary.aggregate()
    print(f"{cfg.name}: {len(summary.rows)} seed(s), median final error {agg['median_final_error']:.3e}, "
          f"outputs in {cfg.resolved_output_dir()}")
    return 0


def _write_rows(rows, fields, fh) -> None:
    w = csv.DictWriter(fh, fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in fields})


def cmd_compare(args) -> int:
    if len(args.configs) < 2:
        raise ConfigurationError("compare needs at least two configs")
    configs = [_load(p) for p in args.configs]
    if args.seeds:
        for c in configs:
            c.seeds = [int(s) for s in args.seeds.split(",")]
    table, per_seed = compare(configs)
    if args.out:
        with open(args.out, "w") as fh:
            _write_rows(table, COMPARE_FIELDS, fh)
    else:
        _write_rows(table, COMPARE_FIELDS, sys.stdout)
    if args.per_seed:
        with open(args.per_seed, "w") as fh:
            _write_rows(per_seed, ["name", "protocol", "seed", "final_error", "final_gap", "eps_hat"], fh)
    return 0


def cmd_trace_verify(args) -> int:
    cfg = _load(args.config)
    if not Path(args.golden).exists():
        raise ConfigurationError(f"golden trace not found: {args.golden}")
    ok, msg = trace_verify(args.golden, cfg, args.seed)
    print(("PASS: " if ok else "FAIL: ") + msg)
    return 0 if ok else 1


def cmd_list_presets(args) -> int:
    print("graphs:    " + ", ".join(sorted(GRAPH_PRESETS)))
    print("schedules: " + ", ".join(PRESETS))
    print("configs:")
    for p in shipped_configs():
        print(f"  {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="privmas", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every seed of a config and write outputs")
    p.add_argument("config")
    p.add_argument("--seeds", help="comma-separated seeds overriding the config")
    p.add_argument("--workers", type=int, help="process pool size")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="aggregate table over configs sharing graph and objective")
    p.add_argument("configs", nargs="+")
    p.add_argument("--seeds", help="comma-separated seeds applied to every config")
    p.add_argument("--out", help="write the table CSV here instead of stdout")
    p.add_argument("--per-seed", help="also write per-seed rows (plot-ready CSV)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trace-verify", help="re-run one seed and compare with a golden trajectory")
    p.add_argument("golden")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_trace_verify)

    p = sub.add_parser("list-presets", help="list graph and schedule presets and shipped configs")
    p.set_defaults(func=cmd_list_presets)
    ap.epilog = f"The output directory can be overridden with ${OUTPUT_ENV}."
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
