"""Command-line entry point: ``fluidcf <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ScenarioConfig, load_config
from .exceptions import ConfigError, DomainError
from .harness import export, optimize_ports, run_nmse_campaign, run_se_campaign, run_sweep


def _parse_value(axis, text):
    if axis == "geometry":
        return text.upper()
    if axis in ("N", "Q"):
        return int(text)
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fluidcf", description="Fluid-antenna cell-free massive MIMO simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="scenario JSON file (defaults used when omitted)")
        sp.add_argument("--seed", type=int, help="root seed")
        sp.add_argument("--snapshots", type=int, help="number of network snapshots")
        sp.add_argument("--realizations", type=int, help="channel realizations per snapshot")
        sp.add_argument("--out", help="output file (summary only when omitted)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--workers", type=int, help="worker processes")

    nm = sub.add_parser("nmse-cdf", help="per-AP NMSE campaign")
    common(nm)
    nm.add_argument("--strategies", nargs="+", help="pilot strategies to compare on common seeds")
    common(sub.add_parser("se-cdf", help="per-user SE campaign"))
    sw = sub.add_parser("sweep", help="mean NMSE versus one parameter")
    common(sw)
    sw.add_argument("--axis", required=True, choices=("N", "Q", "eta_p", "delta", "geometry"))
    sw.add_argument("--values", required=True, nargs="+")
    sw.add_argument("--strategies", nargs="+")
    common(sub.add_parser("optimize-ports", help="run LND-PS (and AO when configured) and dump plans"))
    vc = sub.add_parser("validate-config", help="check a scenario file")
    vc.add_argument("--config", required=True)
    return p


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.snapshots is not None:
        cfg.n_snapshots = args.snapshots
    if args.realizations is not None:
        cfg.n_realizations = args.realizations
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    return cfg.validate()


def _summary(result):
    if result.kind == "nmse":
        for strat in dict.fromkeys(r["strategy"] for r in result.rows):
            m, se = result.mean_stderr("nmse", strategy=strat)
            med = result.quantile(0.5, "nmse", strategy=strat)
            print(f"{strat:12s} mean NMSE {m:.4f} +- {se:.4f}  median {med:.4f}  ({len(result.select(strategy=strat))} APs)")
    elif result.kind == "se":
        m, se = result.mean_stderr("se_bps_hz")
        print(
            f"per-user SE mean {m:.4f} +- {se:.4f}  median {result.quantile(0.5):.4f}  "
            f"95%-likely {result.quantile(0.05):.4f} bit/s/Hz"
        )
    elif result.kind == "sweep":
        for r in result.rows:
            print(f"{r['axis']}={r['value']!s:8s} {r['strategy']:12s} {r['mean_nmse']:.4f} +- {r['stderr']:.4f}")
    else:
        for r in result.rows:
            print(f"snapshot {r['snapshot']} AP {r['ap']}: NMSE {r['initial_nmse']:.4f} -> {r['final_nmse']:.4f}")
    print(f"config hash {result.config_hash[:16]}  seed {result.seed}  runtime {result.runtime_s:.1f}s")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate-config":
            cfg = load_config(args.config)
            print(f"ok: {args.config} (hash {cfg.hash()[:16]})")
            return 0
        cfg = _load(args)
        if args.command == "nmse-cdf":
            result = run_nmse_campaign(cfg, args.strategies)
        elif args.command == "se-cdf":
            result = run_se_campaign(cfg)
        elif args.command == "sweep":
            values = [_parse_value(args.axis, v) for v in args.values]
            result = run_sweep(cfg, args.axis, values, args.strategies)
        else:
            result = optimize_ports(cfg)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (DomainError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _summary(result)
    if args.out:
        try:
            export(result, args.format, args.out)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
