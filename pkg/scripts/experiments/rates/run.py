#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
scripts/run_experiment.sh rates --trajectory outputs/flagship/trajectory.csv \
    --stationary outputs/flagship/stationary.ckpt

Post-processes a trajectory CSV written by `simulate`: Lojasiewicz exponent
from the gradient inequality, decay-model fits of ||w - w*|| in L2 and H1,
H(t) with its constant, and the spectral cross-check of the selected model.

Writes: rates.json, overlay.csv, [overlay_V.csv], h_series.csv, [rates.svg]
"""

import argparse
import os
import sys

from scripts.common.checkpoint import load_checkpoint
from scripts.common.cli import EXIT_OK, banner, common_parser, meta_for, run_command, wrote
from scripts.common.csvio import read_csv, write_json, write_rows
from scripts.common.errors import ConfigError, InsufficientData
from scripts.common.flow import records_from_rows
from scripts.common.functionals import energy_E
from scripts.common.linops import LinearOperatorSpec, spectrum
from scripts.common.plots import line_chart
from scripts.common.rates import classify_convergence, estimate_theta, fit_decay, h_series, overlay_rows
from scripts.common.runconfig import RunConfig
from scripts.common.stationary import solve_mean_field


def execute(cfg: RunConfig, outdir: str, args: argparse.Namespace) -> int:
    banner("rates: convergence post-processing", cfg, outdir)
    meta = meta_for(cfg, "rates")
    if not os.path.isfile(args.trajectory):
        raise ConfigError(f"trajectory CSV not found: {args.trajectory}")
    records = records_from_rows(read_csv(args.trajectory).to_dict("records"))
    print(f"  trajectory: {len(records)} records from {args.trajectory}", file=sys.stderr)
    window = (cfg.get("rates.grad_lo"), cfg.get("rates.grad_hi"))

    stationary, E_star, ck = None, None, None
    if args.stationary:
        ck = load_checkpoint(args.stationary)
        stationary = solve_mean_field(ck.grid, ck.w - ck.w.mean(), ck.lam,
                                      tol=cfg.solver.tol, max_iters=cfg.solver.max_iters)
        E_star = energy_E(ck.grid, stationary.w_star, ck.lam)
        print(f"  stationary: E*={E_star:.12g} |R|={stationary.residual_l2:.3e}", file=sys.stderr)

    theta = estimate_theta(records, E_star=E_star, grad_window=window)
    print(f"  theta={theta.theta:.4f} (r^2={theta.r_squared:.6f}, n={theta.sample_count})", file=sys.stderr)
    payload = {"config": cfg.values, "trajectory": args.trajectory, "lojasiewicz": theta.as_dict()}

    fits = {}
    for norm in ("l2", "V"):
        try:
            fits[norm] = fit_decay(records, norm=norm, grad_window=window)
        except InsufficientData as e:
            print(f"  ! decay fit in {norm}: {e}", file=sys.stderr)
            continue
        f = fits[norm]
        print(f"  decay ({norm}): {f.model}{' (tie)' if f.tie else ''} gamma={f.gamma:.6g} p={f.exponent:.6g} "
              f"r^2={f.r_squared:.6f}", file=sys.stderr)
        rows = overlay_rows(records, f, norm=norm)
        path = os.path.join(outdir, "overlay.csv" if norm == "l2" else "overlay_V.csv")
        write_rows(path, rows, meta)
        wrote(len(rows), path)
    payload["decay"] = {norm: f.as_dict() for norm, f in fits.items()}

    if stationary is not None and "l2" in fits:
        rep = spectrum(LinearOperatorSpec(kind="B", base_state=stationary.u_star, lam=stationary.lam, grid=ck.grid),
                       k=args.k)
        verdict = classify_convergence(stationary, rep, fits["l2"])
        print(f"  verdict: {verdict.verdict} ({verdict.message})", file=sys.stderr)
        payload["spectrum"] = rep.as_dict()
        payload["classification"] = verdict.as_dict()

    hs = h_series(records, E_star=E_star, theta=args.h_theta or theta_for_h(theta.theta), t_min=args.t_min)
    path = os.path.join(outdir, "h_series.csv")
    write_rows(path, hs.rows(), meta)
    wrote(len(hs.t), path)
    payload["h_series"] = hs.summary()
    print(f"  H(t): C={hs.constant_C:.4g}, int ||w_t|| = {hs.integral_wt:.4g} <= {hs.bound:.4g}: {hs.bound_holds}",
          file=sys.stderr)

    if cfg.get("output.plots") and "l2" in fits:
        ov = overlay_rows(records, fits["l2"])
        t = [r["t"] for r in ov]
        p = line_chart(os.path.join(outdir, "rates.svg"),
                       {key: (t, [r[key] for r in ov]) for key in ("observed", "exponential", "algebraic")},
                       "decay of ||w - w*||_2", "t", "distance")
        if p:
            print(f"  -> plot rates: {p}", file=sys.stderr)

    write_json(os.path.join(outdir, "rates.json"), payload, meta)
    return EXIT_OK


def theta_for_h(theta_fit: float) -> float:
    """Clamp a fitted exponent into the admissible (0, 1/2]."""
    return min(max(theta_fit, 1e-3), 0.5)


def parse_args(argv=None):
    def extra(p):
        p.add_argument("--trajectory", required=True, help="trajectory.csv from the simulate command")
        p.add_argument("--stationary", default=None, help="stationary.ckpt; enables E* and the spectral verdict")
        p.add_argument("--k", type=int, default=8, help="Eigenpairs of B for the verdict")
        p.add_argument("--h-theta", type=float, default=None, help="Exponent of H(t) (default: fitted theta)")
        p.add_argument("--t-min", type=float, default=0.0, help="Start of the H(t) window")
    return common_parser("Convergence rates and Lojasiewicz exponent of a trajectory", extra, argv)


def main(argv=None) -> int:
    return run_command("rates", execute, parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
