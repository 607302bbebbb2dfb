"""Command line entry point: ``haarsh-lab run <config>`` and ``haarsh-lab modes``."""
from __future__ import annotations

import argparse
import os
import sys

from .experiments import MODES, ConfigError, emit, load_config, run


def _seed(text: str) -> int:
    return int(text, 16) if text.lower().startswith("0x") else int(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="haarsh-lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config", help="path to an INI experiment config")
    r.add_argument("--out", help="output directory (default: [experiment] output or results/<mode>-<fingerprint>)")
    r.add_argument("--workers", type=int, help="worker processes (overrides config and HAARSH_LAB_WORKERS)")
    r.add_argument("--seed", type=_seed, help="override the master seed")
    r.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    sub.add_parser("modes", help="list experiment modes and the inequality each one tests")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "modes":
        for name, anchor in MODES.items():
            print(f"{name:20s} {anchor}")
        return 0
    try:
        cfg = load_config(args.config)
        record = run(cfg, workers=args.workers, seed=args.seed)
        out = args.out or cfg.output or os.path.join("results", f"{cfg.mode}-{record.fingerprint}")
        emit(record, out, plots=not args.no_plots)
    except (ConfigError, OSError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{record.mode}  fingerprint={record.fingerprint}  rows={len(record.rows)}  "
          f"wall={record.wall_clock:.1f}s  -> {out}")
    for c in record.checks:
        tag = "PASS" if c.passed else ("FAIL" if c.gated else "info")
        print(f"  [{tag}] {c.name}: observed={c.observed:.6g} bound={c.bound:.6g}  {c.note}".rstrip())
    if not record.passed:
        print(f"{len(record.failures())} violated bound(s):", file=sys.stderr)
        for c in record.failures():
            print(f"  {c.name}: {c.anchor}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
