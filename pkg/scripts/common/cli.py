#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Shared plumbing of the experiment entry points: global flags, logging,
exit codes, and --sweep fan-out over worker processes.

Exit codes: 0 ok, 2 configuration error, 3 solver failure or failed check.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from scripts.common.checkpoint import load_checkpoint
from scripts.common.csvio import artifact_meta
from scripts.common.errors import ConfigError, TorusLabError
from scripts.common.initial import initial_potential
from scripts.common.runconfig import RunConfig, default_outdir, load_run_config, parse_sweep
from scripts.common.stationary import StationaryResult, solve_mean_field
from scripts.common.torus import TorusGrid, describe

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

# execute(cfg, outdir, args) -> exit code
Execute = Callable[[RunConfig, str, argparse.Namespace], int]


def add_common_args(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
    p.add_argument("--config", default=None, help="INI-style run config (sections: geometry, model, flow, ...)")
    p.add_argument("--out", default=None, help="Output dir (default: outputs/<command>_<timestamp>)")
    p.add_argument("--seed", type=int, default=None, help="Overrides initial.seed")
    p.add_argument("--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE",
                   help="Override one config key, e.g. --set geometry.nx=32 (repeatable)")
    p.add_argument("--sweep", default=None, metavar="KEY=v1,v2,...",
                   help="Run one config per value, concurrently, into <out>/<KEY>=<v>/")
    p.add_argument("--workers", type=int, default=None, help="Worker processes for --sweep")
    p.add_argument("--verbose", action="store_true", help="DEBUG logging")
    return p


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    # matplotlib is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def banner(title: str, cfg: RunConfig, outdir: str) -> None:
    print(f"== {title} ==", file=sys.stderr)
    print(f"  {describe(cfg.grid, cfg.lam)}", file=sys.stderr)
    print(f"  config_hash: {cfg.config_hash}", file=sys.stderr)
    print(f"  outdir: {outdir}", file=sys.stderr)
    for w in cfg.warnings():
        print(f"  ! warning: {w}", file=sys.stderr)


def meta_for(cfg: RunConfig, command: str) -> Dict:
    return artifact_meta(cfg.config_hash, command=command)


def wrote(n: int, path: str) -> None:
    print(f"  -> wrote {n} rows to {path}", file=sys.stderr)


def guarded(stage: str, fn: Callable[[], int]) -> int:
    try:
        return fn()
    except ConfigError as e:
        print(f"[{stage}] error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TorusLabError as e:
        print(f"[{stage}] error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER


def _sweep_worker(execute: Execute, cfg: RunConfig, outdir: str, args: argparse.Namespace, stage: str) -> int:
    setup_logging(getattr(args, "verbose", False))
    return guarded(stage, lambda: execute(cfg, outdir, args))


def run_command(command: str, execute: Execute, args: argparse.Namespace) -> int:
    """Resolve config, pick the output dir, run once or once per sweep value."""
    setup_logging(args.verbose)
    load_dotenv(override=False)

    def resolve_and_run() -> int:
        cfg = load_run_config(args.config, args.assignments, args.seed)
        outdir = args.out or default_outdir(command)
        os.makedirs(outdir, exist_ok=True)
        if not args.sweep:
            return execute(cfg, outdir, args)

        key, values = parse_sweep(args.sweep)
        configs = [(v, cfg.with_values({key: v})) for v in values]
        print(f"== sweep {key} over {len(values)} values ==", file=sys.stderr)
        codes: List[int] = []
        workers = args.workers or min(len(configs), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(v, pool.submit(_sweep_worker, execute, c, os.path.join(outdir, f"{key}={v}"), args, command))
                       for v, c in configs]
            for v, fut in futures:
                code = fut.result()
                codes.append(code)
                print(f"  [{key}={v}] exit {code}", file=sys.stderr)
        return max(codes)

    return guarded(command, resolve_and_run)


def common_parser(description: str, extra: Optional[Callable[[argparse.ArgumentParser], None]] = None,
                  argv: Optional[List[str]] = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(description=description)
    add_common_args(p)
    if extra is not None:
        extra(p)
    return p.parse_args(argv)


def stationary_from(cfg: RunConfig, checkpoint: Optional[str] = None) -> Tuple[TorusGrid, StationaryResult]:
    """
    Newton solve seeded from a checkpoint (its grid and lambda win) or from the
    configured initial data. Returns (grid, StationaryResult).
    """
    if checkpoint:
        ck = load_checkpoint(checkpoint)
        grid, lam, v0 = ck.grid, ck.lam, ck.w - ck.w.mean()
        print(f"  seed: checkpoint {checkpoint} (t={ck.t:g}, grid {grid.nx}x{grid.ny}, lambda={lam:.10g})",
              file=sys.stderr)
    else:
        grid, lam, v0 = cfg.grid, cfg.lam, initial_potential(cfg.grid, cfg.initial)
        print(f"  seed: initial preset '{cfg.initial.preset}'", file=sys.stderr)
    res = solve_mean_field(grid, v0, lam, tol=cfg.solver.tol, max_iters=cfg.solver.max_iters)
    print(f"  stationary: |R|={res.residual_l2:.3e} after {res.newton_iters} Newton steps", file=sys.stderr)
    if not res.converged:
        print(f"  ! warning: Newton stalled above solver.tol={cfg.solver.tol:.1e}", file=sys.stderr)
    return grid, res
