"""Command-line entry point: ``fsosim --scenario falls --seeds 5 --out results``."""
from __future__ import annotations

import argparse
import sys
import time

from .experiment import (
    SCENARIOS,
    ParseError,
    ValidationError,
    default_plan,
    parse_config,
    rerun_manifest,
    resolve_out,
    run_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fsosim", description="Run FSO simulation sweeps.")
    ap.add_argument("--config", metavar="PATH", help="INI experiment config")
    ap.add_argument("--scenario", choices=SCENARIOS)
    ap.add_argument("--seed", type=int, help="first (or only) master seed")
    ap.add_argument("--seeds", type=int, metavar="N", help="number of consecutive seeds")
    ap.add_argument("--out", metavar="DIR", help="output directory (falls back to $FSO_SIM_OUT)")
    ap.add_argument("--ticks", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key; KEY may be section.key")
    ap.add_argument("--jobs", type=int, help="worker processes")
    ap.add_argument("--list-defaults", action="store_true",
                    help="print the fully explicit default config and exit")
    ap.add_argument("--manifest", metavar="PATH",
                    help="rerun the experiment recorded in a manifest and check the outputs")
    ap.add_argument("--dry-run", action="store_true", help="validate and describe the plan only")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def _overrides(args) -> list[str]:
    out = []
    if args.scenario:
        out.append(f"run.scenario={args.scenario}")
    if args.seed is not None or args.seeds is not None:
        base = args.seed if args.seed is not None else 0
        n = args.seeds if args.seeds is not None else 1
        if n < 1:
            raise ValidationError("--seeds", "must be >= 1")
        out.append(f"run.seeds={base}..{base + n - 1}")
    if args.ticks is not None:
        out.append(f"run.ticks={args.ticks}")
    if args.jobs is not None:
        out.append(f"run.jobs={args.jobs}")
    return out + list(args.set)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda *a: None) if args.quiet else (lambda *a: print(*a, file=sys.stderr))
    try:
        if args.manifest:
            if args.config or args.set:
                raise ValidationError("--manifest", "cannot be combined with --config or --set")
            result, mismatched = rerun_manifest(args.manifest, args.out, args.jobs)
            for f in result.failures:
                log(f"run failed: {f.label}: {f.error}")
            for name in mismatched:
                log(f"output differs from manifest: {name}")
            log(f"{len(result.summaries)} runs reproduced, {len(mismatched)} mismatched files")
            return 1 if result.failures or mismatched else 0

        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        elif args.scenario:
            text = ""
        else:
            raise ValidationError("--scenario", "give --scenario or --config")
        if args.list_defaults and not args.config and not args.set:
            print(default_plan(args.scenario).to_config_text(), end="")
            return 0
        plan = parse_config(text, _overrides(args))
        if args.list_defaults:
            print(plan.to_config_text(), end="")
            return 0
        out = resolve_out(plan, args.out)
        log(f"{plan.scenario}: {plan.run_count()} runs, seeds {plan.seeds[0]}..{plan.seeds[-1]}, "
            f"{plan.ticks} ticks -> {out}")
        if args.dry_run:
            return 0
        t0 = time.perf_counter()
        result = run_experiment(plan, out)
        for f in result.failures:
            log(f"run failed: {f.label}: {f.error}")
        log(f"wrote {len(result.files)} files and {result.manifest} in {time.perf_counter() - t0:.1f}s")
        return result.status
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
