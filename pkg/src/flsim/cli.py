"""Command-line entry point: ``flsim {run,sweep,compare,validate}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from . import harness
from .secureshare import AuditLog

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _globals(suppress):
    # flags are accepted before or after the subcommand; the subcommand copy
    # must not clobber a value given earlier, hence SUPPRESS there
    g = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g.add_argument("--seed", type=int, default=d(None), help="override master_seed")
    g.add_argument("--out", default=d(None), help="output directory")
    g.add_argument("--format", choices=("csv", "json"), default=d("csv"))
    return g


def _parser():
    common = _globals(True)
    p = argparse.ArgumentParser(prog="flsim", description="Federated backdoor simulator with the FLGuard defense.",
                                parents=[_globals(False)])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one federation")
    r.add_argument("config")
    s = sub.add_parser("sweep", parents=[common], help="run one federation per value of a config field")
    s.add_argument("config")
    s.add_argument("--axis", required=True, help="dotted field path, e.g. adversary.pdr")
    s.add_argument("--values", required=True, help="comma-separated values (YAML scalars)")
    c = sub.add_parser("compare", parents=[common], help="run two configs and report paired deltas")
    c.add_argument("config_a")
    c.add_argument("config_b")
    v = sub.add_parser("validate", parents=[common], help="check a config and print it with defaults filled in")
    v.add_argument("config")
    return p


def _load(path, seed):
    cfg = harness.load_config(path)
    if seed is not None:
        cfg = harness.config_from_dict({**cfg.to_dict(), "master_seed": seed})
    return cfg


def _parse_values(raw):
    if not raw.strip():
        return []
    return [yaml.safe_load(tok) for tok in raw.split(",")]


def _emit(text, out_dir, name):
    if out_dir is None:
        sys.stdout.write(text)
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def cmd_run(args):
    cfg = _load(args.config, args.seed)
    audit = AuditLog()
    reports = harness.run_federation(cfg, audit=audit)
    summary = harness.summary_dict(cfg, reports)
    if args.out is None:
        if args.format == "json":
            sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        else:
            sys.stdout.write(harness.rounds_csv(reports))
        return
    _emit(harness.rounds_csv(reports), args.out, "rounds.csv")
    _emit(json.dumps(summary, indent=2, sort_keys=True) + "\n", args.out, "summary.json")
    if cfg.defense.name == "private_flguard":
        _emit(audit.to_jsonl(), args.out, "audit.jsonl")


def cmd_sweep(args):
    cfg = _load(args.config, args.seed)
    values = _parse_values(args.values)
    for v in values:
        cfg.replace(args.axis, v)  # validate every value before running any
    rows = harness.sweep(cfg, args.axis, values)
    if args.format == "json":
        _emit(json.dumps(rows, indent=2) + "\n", args.out, "sweep.json")
    else:
        _emit(harness.sweep_csv(rows), args.out, "sweep.csv")


def cmd_compare(args):
    a, b = _load(args.config_a, args.seed), _load(args.config_b, args.seed)
    ra, rb = harness.run_federation(a), harness.run_federation(b)
    fa, fb = ra[-1], rb[-1]
    paired = {}
    for m in ("ba", "ma", "s_t", "sigma"):
        x, y = getattr(fa, m), getattr(fb, m)
        paired[m] = {"a": x, "b": y, "delta": y - x}
    result = {"config_a": a.digest(), "config_b": b.digest(), "final": paired}
    if args.format == "json":
        _emit(json.dumps(result, indent=2, sort_keys=True) + "\n", args.out, "compare.json")
    else:
        lines = ["metric,a,b,delta"] + [f"{m},{v['a']!r},{v['b']!r},{v['delta']!r}" for m, v in paired.items()]
        _emit("\n".join(lines) + "\n", args.out, "compare.csv")


def cmd_validate(args):
    cfg = _load(args.config, args.seed)
    sys.stdout.write(harness.dump_config(cfg))


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare, "validate": cmd_validate}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure after validation is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
