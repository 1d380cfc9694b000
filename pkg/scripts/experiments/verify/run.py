#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
scripts/run_experiment.sh verify

Built-in invariant suite on small grids: conservation, dissipation,
gradient consistency, Fourier-spectrum oracles, the stationary solver, the
kernel witnesses and the chart residual. Prints one row per check and exits 3
when any check fails.

Writes: verify.csv, verify.json
"""

import argparse
import os
import sys
from dataclasses import asdict, dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from scripts.common.cli import EXIT_OK, EXIT_SOLVER, banner, common_parser, meta_for, run_command, wrote
from scripts.common.csvio import write_csv, write_json
from scripts.common.errors import TorusLabError
from scripts.common.flow import FlowConfig, dissipation_residual, run_flow
from scripts.common.functionals import EIGHT_PI, energy_E, first_variation_E
from scripts.common.initial import InitialSpec, initial_state, trivial_state
from scripts.common.linops import LinearOperatorSpec, apply, nondegeneracy_check, phi_from_witness, spectrum
from scripts.common.manifold import build_chart, chart_point, project_Q
from scripts.common.runconfig import RunConfig
from scripts.common.stationary import probe_uniqueness
from scripts.common.torus import TorusGrid

FIELDS = ["check", "value", "limit", "passed", "detail"]


@dataclass
class Check:
    check: str
    value: float
    limit: float
    passed: bool
    detail: str = ""


def observed_order(errors: Sequence[float], ratio: float) -> float:
    """Smallest log_ratio(e_i / e_{i+1}) over consecutive refinements."""
    e = np.asarray(errors, dtype=float)
    return float(np.min(np.log(e[:-1] / e[1:]) / np.log(ratio)))


# ---------- flow ----------
def check_flow(seed: int) -> List[Check]:
    grid = TorusGrid(a=1.0, b=1.0, nx=16, ny=16)
    lam = EIGHT_PI
    w0 = initial_state(grid, lam, InitialSpec(preset="constant+cos_x", amplitude=0.1, seed=seed))
    out = []

    traj = run_flow(grid, w0, lam, FlowConfig(dt_initial=1e-3, t_end=2.0, record_every=20))
    mass = traj.column("mass")
    drift = float(np.max(np.abs(mass - lam)) / lam)
    out.append(Check("mass_renormalized", drift, 1e-12, drift <= 1e-12, f"{len(mass)} records"))

    E = traj.column("energy_E")
    rise = float(np.max(np.diff(E) / np.maximum(1.0, np.abs(E[:-1]))))
    out.append(Check("energy_monotone", rise, 1e-12, rise <= 1e-12, "largest relative rise between records"))

    bc = max(r.bc_ratio for r in traj.records if r.t >= 0.01)
    out.append(Check("benilan_crandall", bc, 1.001, bc <= 1.001, "max u_t/u over e^t/(e^t-1), t >= 0.01"))

    free = run_flow(grid, w0, lam, FlowConfig(dt_initial=1e-3, t_end=1.0, record_every=50, renormalize_mass=False))
    drift = float(np.max(np.abs(free.column("mass") - lam)) / lam)
    out.append(Check("mass_free", drift, 1e-6, drift <= 1e-6, "rk4, dt=1e-3, no renormalization"))
    return out


def check_dissipation() -> Check:
    grid = TorusGrid(a=1.0, b=1.0, nx=8, ny=8)
    lam = EIGHT_PI
    w0 = initial_state(grid, lam, InitialSpec(preset="constant+cos_x", amplitude=0.5))
    dts = (1e-2, 5e-3, 2.5e-3)
    res = [dissipation_residual(grid, w0, lam, dt) for dt in dts]
    order = observed_order(res, 2.0)
    return Check("dissipation_order", order, 1.9, order >= 1.9,
                 "residuals " + ", ".join(f"{r:.2e}" for r in res))


def check_gradient(seed: int, states: int = 10) -> Check:
    grid = TorusGrid(a=1.0, b=1.0, nx=16, ny=16)
    lam = EIGHT_PI
    rng = np.random.default_rng(seed)
    hs = (1e-2, 1e-3, 1e-4)
    worst = np.inf
    for _ in range(states):
        w = np.log(lam / grid.area) + grid.random_field(rng, modes=3, amplitude=0.5)
        d = grid.random_field(rng, modes=3, zero_mean=False)
        d /= grid.norm_l2(d)
        exact = grid.inner(first_variation_E(grid, w, lam), d)
        errs = [abs((energy_E(grid, w + h * d, lam) - energy_E(grid, w - h * d, lam)) / (2.0 * h) - exact)
                for h in hs]
        worst = min(worst, observed_order(errs, 10.0))
    return Check("gradient_order", worst, 1.9, worst >= 1.9, f"central differences over {states} random states")


# ---------- spectra ----------
def check_spectrum_oracle() -> Check:
    grid = TorusGrid(a=1.0, b=1.0, nx=16, ny=16)
    lam = EIGHT_PI
    rep = spectrum(LinearOperatorSpec.at("B", grid, trivial_state(grid, lam), lam), k=4)
    expected = 4.0 * np.pi ** 2 - EIGHT_PI
    err = abs(float(rep.eigenvalues[0]) - expected)
    return Check("spectrum_trivial_B", err, 1e-6, err <= 1e-6,
                 f"lowest {rep.eigenvalues[0]:.10f} vs 4pi^2 - 8pi = {expected:.10f}")


def check_degenerate() -> List[Check]:
    grid = TorusGrid(a=1.0, b=2.0, nx=8, ny=16)
    lam = 2.0 * np.pi ** 2
    w_star = trivial_state(grid, lam)
    u_star = np.exp(w_star)
    verdict = nondegeneracy_check(grid, u_star, lam, k=8)
    out = [Check("degenerate_kernel_dim", verdict.kernel_dim, 2, verdict.kernel_dim == 2,
                 "a=1, b=2, lambda=2pi^2")]

    spec_b = LinearOperatorSpec(kind="B", base_state=u_star, lam=lam, grid=grid)
    forward = max(verdict.witness_residuals, default=np.inf)
    reverse = max((grid.norm_l2(apply(spec_b, phi_from_witness(psi))) for psi in verdict.witnesses),
                  default=np.inf)
    worst = max(forward, reverse)
    out.append(Check("kernel_witness", worst, 1e-8, worst <= 1e-8,
                     f"Ker B -> witness {forward:.1e}, witness -> Ker B {reverse:.1e}"))

    chart = build_chart(grid, w_star, lam)
    c = np.array([1e-2, 0.0])
    w = chart_point(chart, c)
    res = grid.norm_l2(chart.residual(w))
    out.append(Check("chart_residual", res, 1e-9, res <= 1e-9, "|(I-P) dE| at |c| = 1e-2"))
    idem = grid.norm_l2(project_Q(chart, w) - w)
    out.append(Check("chart_Q_idempotent", idem, 1e-8, idem <= 1e-8, "|Q(Qw) - Qw|"))
    return out


# ---------- stationary ----------
def check_stationary(seed: int) -> Check:
    grid = TorusGrid(a=1.0, b=1.0, nx=16, ny=16)
    report = probe_uniqueness(grid, EIGHT_PI, starts=10, seed=seed)
    worst = max((s.residual_l2 for s in report.solutions), default=np.inf)
    vmax = max((float(np.max(np.abs(s.v_star))) for s in report.solutions), default=np.inf)
    ok = not report.failures and report.distinct == 1 and worst <= 1e-11 and vmax <= 1e-8
    return Check("stationary_residual", worst, 1e-11, ok, f"{report.message}; max|v*| = {vmax:.1e}")


def run_checks(seed: int = 0) -> List[Check]:
    stages: List[Tuple[str, Callable[[], object]]] = [
        ("flow", lambda: check_flow(seed)),
        ("dissipation_order", check_dissipation),
        ("gradient_order", lambda: check_gradient(seed)),
        ("spectrum_trivial_B", check_spectrum_oracle),
        ("degenerate", check_degenerate),
        ("stationary_residual", lambda: check_stationary(seed)),
    ]
    checks: List[Check] = []
    for name, stage in stages:
        try:
            got = stage()
        except TorusLabError as e:
            checks.append(Check(name, np.nan, np.nan, False, f"{type(e).__name__}: {e}"))
            continue
        checks.extend(got if isinstance(got, list) else [got])
    return checks


def print_table(checks: Sequence[Check]) -> None:
    width = max(len(c.check) for c in checks)
    print(f"{'check'.ljust(width)}  {'value':>12}  {'limit':>10}  status")
    for c in checks:
        print(f"{c.check.ljust(width)}  {c.value:>12.4g}  {c.limit:>10.4g}  {'PASS' if c.passed else 'FAIL'}  {c.detail}")


def execute(cfg: RunConfig, outdir: str, args: argparse.Namespace) -> int:
    banner("verify: invariant suite", cfg, outdir)
    meta = meta_for(cfg, "verify")
    checks = run_checks(seed=cfg.initial.seed)
    print_table(checks)

    rows = [asdict(c) for c in checks]
    path = os.path.join(outdir, "verify.csv")
    write_csv(path, rows, FIELDS, meta)
    wrote(len(rows), path)
    failed = [c.check for c in checks if not c.passed]
    write_json(os.path.join(outdir, "verify.json"), {"checks": rows, "failed": failed, "passed": not failed}, meta)

    if failed:
        print(f"  ! {len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"  all {len(checks)} checks passed", file=sys.stderr)
    return EXIT_OK


def parse_args(argv=None):
    return common_parser("Built-in invariant checks", None, argv)


def main(argv=None) -> int:
    return run_command("verify", execute, parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
