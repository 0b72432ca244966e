"""``pathhjb`` command line: run one experiment config, or list the built-in problems.

    pathhjb --config configs/c6_dpp.json --out runs/dpp
    pathhjb hjb-compare --config configs/c8_reduction.json
    pathhjb --list [--json]

Exit codes: 0 all checks pass, 2 config error, 3 a check failed, 4 budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from .errors import BudgetError
from .experiments import (EXIT_BUDGET, EXIT_CONFIG, KINDS, ConfigError, load_config,
                          run_to_dir, summary_text)
from .problems import catalog


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pathhjb",
                                 description="Path-dependent control experiments.")
    ap.add_argument("kind", nargs="?", choices=sorted(KINDS),
                    help="experiment kind; must match the config's kind")
    ap.add_argument("--config", help="experiment config (JSON)")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", help="output directory (default runs/<config name>)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweep cells")
    ap.add_argument("--list", action="store_true", help="list built-in problem families")
    ap.add_argument("--json", action="store_true", help="with --list: machine-readable output")
    return ap


def _print_catalog(as_json: bool):
    cat = catalog()
    if as_json:
        print(json.dumps(cat, indent=2, sort_keys=True))
        return
    for fam in cat:
        crit = ", ".join(str(c) for c in fam["criteria"])
        print(f"{fam['family']}: {fam['description']}")
        print(f"  parameters: {', '.join(sorted(fam['params']))}")
        print(f"  acceptance criteria: {crit}")


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list:
        _print_catalog(args.json)
        return 0
    if not args.config:
        ap.error("--config is required unless --list is given")
    if args.jobs < 1:
        ap.error("--jobs must be at least 1")
    try:
        cfg = load_config(args.config)
        if args.kind and args.kind != cfg["kind"]:
            raise ConfigError([f"kind: command is {args.kind!r} but the config says "
                               f"{cfg['kind']!r}"])
        out = args.out or os.path.join(
            "runs", os.path.splitext(os.path.basename(args.config))[0])
        code, outcome = run_to_dir(cfg, out, args.seed, args.jobs)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    sys.stdout.write(summary_text(cfg["kind"], outcome))
    print(f"artifacts in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
