#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
scripts/run_experiment.sh spectrum --set initial.preset=constant --set spectrum.operator=B

Lowest eigenpairs of L, B or M at a stationary state, the nondegeneracy verdict
with its kernel witnesses (checked in both directions), and the coercivity
constant of M when the state is nondegenerate.

Writes: spectrum.json, eigenvalues.csv, eigen/field_*.ckpt
"""

import argparse
import os
import sys

from scripts.common.checkpoint import save_fields
from scripts.common.cli import EXIT_OK, banner, common_parser, meta_for, run_command, stationary_from, wrote
from scripts.common.csvio import write_csv, write_json
from scripts.common.errors import DegenerateState
from scripts.common.linops import (
    LinearOperatorSpec,
    apply,
    m_coercivity_constant,
    nondegeneracy_check,
    phi_from_witness,
    spectrum,
)
from scripts.common.runconfig import RunConfig


def execute(cfg: RunConfig, outdir: str, args: argparse.Namespace) -> int:
    banner("spectrum: linearized operators", cfg, outdir)
    meta = meta_for(cfg, "spectrum")
    grid, res = stationary_from(cfg, args.checkpoint)
    lam = res.lam
    kind = cfg.get("spectrum.operator")
    k = cfg.get("spectrum.k")

    rep = spectrum(LinearOperatorSpec.at(kind, grid, res.w_star, lam), k=min(k, grid.size - (kind == "B")))
    print(f"  {kind}: lowest eigenvalue {rep.eigenvalues[0]:.10g}, kernel_dim={rep.kernel_dim} ({rep.method})",
          file=sys.stderr)
    rows = [{"index": i, "eigenvalue": ev, "in_kernel": abs(ev) < rep.threshold}
            for i, ev in enumerate(rep.eigenvalues)]
    path = os.path.join(outdir, "eigenvalues.csv")
    write_csv(path, rows, ["index", "eigenvalue", "in_kernel"], meta)
    wrote(len(rows), path)
    save_fields(os.path.join(outdir, "eigen"), "field", grid, lam, rep.eigenfields, cfg.config_hash)

    verdict = nondegeneracy_check(grid, res.u_star, lam, k=k)
    spec_b = LinearOperatorSpec(kind="B", base_state=res.u_star, lam=lam, grid=grid)
    reverse = [grid.norm_l2(apply(spec_b, phi_from_witness(psi))) for psi in verdict.witnesses]
    print(f"  verdict: {'nondegenerate' if verdict.nondegenerate else 'degenerate'} "
          f"(kernel of B on V_0 has dim {verdict.kernel_dim})", file=sys.stderr)

    coercivity = None
    if verdict.nondegenerate:
        try:
            coercivity = m_coercivity_constant(grid, res.u_star, lam, samples=args.samples)
            print(f"  coercivity constant of M: {coercivity:.6g}", file=sys.stderr)
        except DegenerateState as e:
            print(f"  ! {e}", file=sys.stderr)

    payload = {
        "config": cfg.values,
        "stationary": res.summary(),
        "spectrum": rep.as_dict(),
        "nondegeneracy": verdict.as_dict(),
        "witness_reverse_residuals": reverse,
        "m_coercivity_constant": coercivity,
    }
    write_json(os.path.join(outdir, "spectrum.json"), payload, meta)
    return EXIT_OK


def parse_args(argv=None):
    def extra(p):
        p.add_argument("--checkpoint", default=None, help="Stationary state (or a seed for it) as a checkpoint")
        p.add_argument("--samples", type=int, default=32, help="Random samples for the coercivity estimate")
    return common_parser("Spectra of the linearized operators at a stationary state", extra, argv)


def main(argv=None) -> int:
    return run_command("spectrum", execute, parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
