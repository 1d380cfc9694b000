#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
scripts/run_experiment.sh stationary --set model.lambda=1 --set continuation.lambda_end=25 \
    --set geometry.b=2 --set continuation.steps=24

Mean-field Newton solve, optional natural-parameter continuation in lambda with
Morse-index tracking, and an optional multi-start uniqueness probe.

Writes: stationary.json, stationary.ckpt, [branch.jsonl, branch/*.ckpt], [uniqueness.json]
"""

import argparse
import os
import sys

import numpy as np

from scripts.common.checkpoint import save_checkpoint
from scripts.common.cli import EXIT_OK, banner, common_parser, meta_for, run_command, stationary_from, wrote
from scripts.common.csvio import write_json, write_jsonl
from scripts.common.functionals import first_variation_E, first_variation_J, functional_report
from scripts.common.runconfig import RunConfig
from scripts.common.stationary import continue_in_lambda, probe_uniqueness, trivial_branch_critical_lambda


def execute(cfg: RunConfig, outdir: str, args: argparse.Namespace) -> int:
    banner("stationary: mean-field equation", cfg, outdir)
    meta = meta_for(cfg, "stationary")
    grid, res = stationary_from(cfg, args.checkpoint)
    lam = res.lam

    # both formulations at the returned state
    u_form = grid.norm_l2(first_variation_E(grid, res.w_star, lam))
    v_form = grid.norm_l2(first_variation_J(grid, res.v_star, lam))
    crit = trivial_branch_critical_lambda(grid)
    print(f"  residuals: u-form {u_form:.3e}, v-form {v_form:.3e}", file=sys.stderr)
    print(f"  trivial branch loses nondegeneracy at lambda = mu_1 |Omega| = {crit:.10g}", file=sys.stderr)

    payload = {
        "config": cfg.values,
        "result": res.summary(),
        "residual_u_form": u_form,
        "residual_v_form": v_form,
        "mass": grid.integral(res.u_star),
        "functionals": functional_report(grid, res.w_star, lam).as_dict(),
        "trivial_branch_critical_lambda": crit,
    }
    save_checkpoint(os.path.join(outdir, "stationary.ckpt"), grid, lam, 0.0, res.w_star, cfg.config_hash)

    lam_end = args.continue_to if args.continue_to is not None else cfg.get("continuation.lambda_end")
    if lam_end is not None:
        steps = cfg.get("continuation.steps")
        print(f"  continuation: lambda {lam:.6g} -> {lam_end:.6g} in {steps} steps", file=sys.stderr)
        branch = continue_in_lambda(grid, res, lam_end, steps, tol=cfg.solver.tol, max_iters=cfg.solver.max_iters)
        path = os.path.join(outdir, "branch.jsonl")
        write_jsonl(path, branch.rows, meta)
        wrote(len(branch.rows), path)
        for i, point in enumerate(branch.points):
            save_checkpoint(os.path.join(outdir, "branch", f"point_{i:03d}.ckpt"), grid, point.lam, float(i),
                            point.w_star, cfg.config_hash)
        for lb in branch.bifurcation_lambdas:
            print(f"  bifurcation candidate: lambda = {lb:.10g}", file=sys.stderr)
        if branch.error:
            print(f"  ! branch ended early: {branch.error}", file=sys.stderr)
        payload["continuation"] = {
            "points": len(branch.points),
            "complete": branch.complete,
            "error": branch.error,
            "bifurcation_lambdas": branch.bifurcation_lambdas,
            "constant_branch": bool(all(np.ptp(p.u_star) <= 1e-10 * np.max(p.u_star) for p in branch.points)),
        }

    if args.probe > 0:
        report = probe_uniqueness(grid, lam, starts=args.probe, amplitude=args.probe_amplitude,
                                  seed=cfg.initial.seed, tol=cfg.solver.tol, max_iters=cfg.solver.max_iters)
        print(f"  uniqueness: {report.message}", file=sys.stderr)
        write_json(os.path.join(outdir, "uniqueness.json"), report.as_dict(), meta)
        payload["uniqueness"] = report.message

    write_json(os.path.join(outdir, "stationary.json"), payload, meta)
    return EXIT_OK


def parse_args(argv=None):
    def extra(p):
        p.add_argument("--checkpoint", default=None, help="Seed Newton from a checkpoint (its grid and lambda)")
        p.add_argument("--continue-to", type=float, default=None, help="Overrides continuation.lambda_end")
        p.add_argument("--probe", type=int, default=0, help="Multi-start uniqueness probe with N random starts")
        p.add_argument("--probe-amplitude", type=float, default=0.5, help="Peak amplitude of probe starts")
    return common_parser("Stationary states of the mean-field equation", extra, argv)


def main(argv=None) -> int:
    return run_command("stationary", execute, parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
