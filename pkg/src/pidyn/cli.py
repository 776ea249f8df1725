"""Command-line simulator driver.

    pidyn run --config scenario.yaml --out results/
    pidyn run --batch configs/scenarios --out results/ --duration 5

Exit code 0 iff every invariant check of every executed scenario passed.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import ConfigError, load_scenario
from .scenarios import build_scenario, run_and_report


def _run_one(config_path: Path, outdir: Path, args) -> bool:
    cfg, base_dir = load_scenario(config_path)
    run = build_scenario(cfg, base_dir, dt=args.dt, seed=args.seed)
    result = run_and_report(run, outdir, duration=args.duration)
    status = "PASS" if result.passed else "FAIL"
    failing = [name for name, c in result.checks.items() if not c["passed"]]
    extra = f" (failed: {', '.join(failing)})" if failing else ""
    print(f"[{status}] {cfg.name}: outputs in {outdir}{extra}")
    return result.passed


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pidyn")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute scenario(s) and write reports")
    run_p.add_argument("--config", type=Path, help="scenario config file")
    run_p.add_argument("--batch", type=Path,
                       help="directory of scenario configs, executed in parallel")
    run_p.add_argument("--out", type=Path, required=True, help="output directory")
    run_p.add_argument("--duration", type=float, default=None, help="override run length [s]")
    run_p.add_argument("--dt", type=float, default=None, help="override integrator step [s]")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override config seed (reserved for stochastic segments)")
    args = parser.parse_args(argv)

    if (args.config is None) == (args.batch is None):
        run_p.error("exactly one of --config or --batch is required")

    try:
        if args.config is not None:
            ok = _run_one(args.config, args.out, args)
            return 0 if ok else 1
        configs = sorted(args.batch.glob("*.yaml")) + sorted(args.batch.glob("*.yml"))
        if not configs:
            print(f"no scenario configs found in {args.batch}", file=sys.stderr)
            return 2
        with ThreadPoolExecutor(max_workers=min(len(configs), 4)) as pool:
            futures = [
                pool.submit(_run_one, c, args.out / c.stem, args) for c in configs
            ]
            results = [f.result() for f in futures]
        return 0 if all(results) else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
