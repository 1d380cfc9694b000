#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Stationary states: the mean-field equation in zero-mean form

    R(v) = -Delta v - lambda (e^v / int e^v - 1/|Omega|) = 0,    int v = 0,

solved by damped Newton. The Jacobian of R at v is exactly the operator B of
linops at u = lambda e^v / int e^v, so linear solves reuse linops.apply.

w* = v* + log(lambda / int e^{v*}) is the matching zero of dE under int e^w = lambda.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from scripts.common.errors import ConfigError, NewtonDiverged, SingularJacobian, TorusLabError
from scripts.common.functionals import first_variation_J, u_from_v, w_from_v
from scripts.common.linops import (
    DENSE_MAX,
    LinearOperatorSpec,
    apply,
    assemble,
    kernel_threshold,
    smallest_singular_value,
)
from scripts.common.torus import Field, TorusGrid, check_finite

log = logging.getLogger(__name__)

MAX_HALVINGS = 20
DIVERGENCE_FACTOR = 1e8
DISTINCT_TOL = 1e-6


@dataclass(frozen=True)
class StationaryResult:
    w_star: Field
    v_star: Field
    u_star: Field
    lam: float
    residual_l2: float
    newton_iters: int
    converged: bool

    def summary(self) -> Dict:
        return {
            "lambda": float(self.lam),
            "residual_l2": float(self.residual_l2),
            "newton_iters": int(self.newton_iters),
            "converged": bool(self.converged),
            "max_abs_v": float(np.max(np.abs(self.v_star))),
            "min_u": float(np.min(self.u_star)),
            "max_u": float(np.max(self.u_star)),
        }


def _result(grid: TorusGrid, v: Field, lam: float, residual: float, iters: int,
            converged: bool = True) -> StationaryResult:
    w = w_from_v(grid, v, lam)
    return StationaryResult(w_star=w, v_star=v, u_star=np.exp(w), lam=lam,
                            residual_l2=residual, newton_iters=iters, converged=converged)


# ---------- linear solve ----------
def _newton_direction(grid: TorusGrid, spec: LinearOperatorSpec, rhs: Field) -> Field:
    """Solve B d = rhs on V_0; MINRES first, dense solve on small grids if it stalls."""
    n = grid.size

    def matvec(x):
        f = x.reshape(grid.shape)
        # identity on constants keeps the operator nonsingular on the full space
        return (apply(spec, f) + np.mean(f)).ravel()

    def precond(r):
        f = r.reshape(grid.shape)
        return (grid.inv_laplacian_zero_mean(f) + np.mean(f)).ravel()

    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    M = LinearOperator((n, n), matvec=precond, dtype=float)
    b = rhs.ravel()
    bnorm = float(np.linalg.norm(b))
    x, info = minres(A, b, M=M, rtol=1e-13, maxiter=4 * n)
    res = float(np.linalg.norm(matvec(x) - b))
    if info == 0 and res <= 1e-8 * max(bnorm, 1e-300):
        return grid.zero_mean(x.reshape(grid.shape))

    log.debug("minres info=%d relres=%.3e; falling back to a direct solve", info, res / max(bnorm, 1e-300))
    if n > DENSE_MAX:
        raise SingularJacobian(f"MINRES did not converge (info={info}, relative residual {res / max(bnorm, 1e-300):.3e})")
    try:
        x = np.linalg.solve(assemble(spec, shift=1.0), b)
    except np.linalg.LinAlgError as e:
        raise SingularJacobian(f"dense Jacobian solve failed: {e}") from e
    return grid.zero_mean(x.reshape(grid.shape))


# ---------- Newton ----------
def solve_mean_field(grid: TorusGrid, v0: Field, lam: float, tol: float = 1e-11,
                     max_iters: int = 50) -> StationaryResult:
    if not lam > 0:
        raise ConfigError(f"lambda must be > 0 (got {lam})")
    if not tol > 0:
        raise ConfigError(f"solver.tol must be > 0 (got {tol})")
    check_finite(v0, "initial guess")

    v = grid.zero_mean(np.asarray(v0, dtype=float))
    r = first_variation_J(grid, v, lam)
    rnorm = grid.norm_l2(r)
    r0 = max(rnorm, tol)
    log.debug("newton it=0 |R|=%.3e", rnorm)

    for it in range(1, max_iters + 1):
        if rnorm <= tol:
            return _result(grid, v, lam, rnorm, it - 1)

        spec = LinearOperatorSpec(kind="B", base_state=u_from_v(grid, v, lam), lam=lam, grid=grid)
        d = _newton_direction(grid, spec, -r)

        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            v_try = grid.zero_mean(v + t * d)
            r_try = first_variation_J(grid, v_try, lam)
            n_try = grid.norm_l2(r_try)
            if np.isfinite(n_try) and n_try < rnorm:
                break
            t *= 0.5
        else:
            # no descent along the Newton direction
            smin, _ = smallest_singular_value(grid, spec.base_state, lam)
            if smin < kernel_threshold(grid, lam):
                raise SingularJacobian(
                    f"Newton stagnated at |R|={rnorm:.3e} (lambda={lam:.6g}); "
                    f"smallest Jacobian singular value {smin:.3e}"
                )
            if rnorm <= 10.0 * tol:
                # round-off floor: the iterate is returned but not certified
                log.warning("newton stalled at round-off floor |R|=%.3e above tol %.1e", rnorm, tol)
                return _result(grid, v, lam, rnorm, it - 1, converged=False)
            raise NewtonDiverged(f"line search failed after {MAX_HALVINGS} halvings at |R|={rnorm:.3e}")

        v, r, rnorm = v_try, r_try, n_try
        log.debug("newton it=%d |R|=%.3e step=%.3g", it, rnorm, t)
        if rnorm > DIVERGENCE_FACTOR * r0:
            raise NewtonDiverged(f"residual grew to {rnorm:.3e} at iteration {it}")

    if rnorm <= tol:
        return _result(grid, v, lam, rnorm, max_iters)
    raise NewtonDiverged(f"no convergence in {max_iters} iterations (|R|={rnorm:.3e}, tol {tol:.1e})")


# ---------- continuation ----------
@dataclass
class Branch:
    points: List[StationaryResult] = field(default_factory=list)
    rows: List[Dict] = field(default_factory=list)
    bifurcation_lambdas: List[float] = field(default_factory=list)
    error: Optional[str] = None

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def complete(self) -> bool:
        return self.error is None


def _branch_row(grid: TorusGrid, res: StationaryResult) -> Dict:
    smin, morse = smallest_singular_value(grid, res.u_star, res.lam)
    return {
        "lambda": float(res.lam),
        "residual": float(res.residual_l2),
        "converged": bool(res.converged),
        "min_singular_value": smin,
        "morse_index": morse,
        "flag": "near_singular" if smin < kernel_threshold(grid, res.lam) else "",
    }


def _bisect_index_change(grid: TorusGrid, left: StationaryResult, right: StationaryResult,
                         index_left: int, tol: float, max_iters: int, rel_width: float = 1e-10) -> float:
    lo, hi = left.lam, right.lam
    guess = left
    for _ in range(60):
        if hi - lo <= rel_width * max(abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        res = solve_mean_field(grid, guess.v_star, mid, tol=tol, max_iters=max_iters)
        _, morse = smallest_singular_value(grid, res.u_star, mid)
        if morse == index_left:
            lo, guess = mid, res
        else:
            hi = mid
    return 0.5 * (lo + hi)


def continue_in_lambda(grid: TorusGrid, start: StationaryResult, lambda_end: float, steps: int,
                       tol: float = 1e-11, max_iters: int = 50, refine: bool = True) -> Branch:
    """
    Natural-parameter continuation from `start` to `lambda_end` in `steps` equal steps.

    A row is flagged "near_singular" when the smallest |eigenvalue| of the Jacobian
    drops below the kernel threshold, and "index_change" when the Morse index differs
    from the previous point; index changes are bisected to a bifurcation lambda.
    Solver failures end the branch; the partial branch is returned with `error` set.
    """
    if not start.converged:
        raise ConfigError("continuation needs a converged starting point")
    if steps < 1:
        raise ConfigError(f"continuation.steps must be >= 1 (got {steps})")
    if not lambda_end > 0:
        raise ConfigError(f"continuation.lambda_end must be > 0 (got {lambda_end})")

    branch = Branch(points=[start], rows=[_branch_row(grid, start)])
    lams = np.linspace(start.lam, lambda_end, steps + 1)[1:]
    prev = start

    for lam in lams:
        try:
            res = solve_mean_field(grid, prev.v_star, float(lam), tol=tol, max_iters=max_iters)
            row = _branch_row(grid, res)
        except TorusLabError as e:
            branch.error = f"lambda={lam:.6g}: {e}"
            log.warning("continuation stopped: %s", branch.error)
            break

        prev_index = branch.rows[-1]["morse_index"]
        if row["morse_index"] != prev_index:
            row["flag"] = "index_change" if not row["flag"] else row["flag"] + ",index_change"
            if refine:
                try:
                    lam_b = _bisect_index_change(grid, prev, res, prev_index, tol, max_iters)
                    row["bifurcation_lambda"] = lam_b
                    branch.bifurcation_lambdas.append(lam_b)
                except TorusLabError as e:
                    log.warning("bifurcation refinement in (%.6g, %.6g) failed: %s", prev.lam, lam, e)
            log.info("Morse index %d -> %d between lambda=%.6g and %.6g",
                     prev_index, row["morse_index"], prev.lam, lam)
        elif row["flag"]:
            branch.bifurcation_lambdas.append(float(lam))
            log.info("near-singular Jacobian at lambda=%.6g (sigma_min=%.3e)", lam, row["min_singular_value"])

        branch.points.append(res)
        branch.rows.append(row)
        prev = res

    return branch


def trivial_branch_critical_lambda(grid: TorusGrid) -> float:
    """mu_1 |Omega|: the first lambda where the constant state loses nondegeneracy."""
    return grid.first_eigenvalue() * grid.area


# ---------- multi-start uniqueness probe ----------
@dataclass
class UniquenessReport:
    lam: float
    starts: int
    solutions: List[StationaryResult]
    failures: List[str]

    @property
    def distinct(self) -> int:
        return len(self.solutions)

    @property
    def message(self) -> str:
        if self.distinct == 1:
            return f"no second solution found among {self.starts} starts"
        return f"{self.distinct} distinct solutions found among {self.starts} starts"

    def as_dict(self) -> Dict:
        return {
            "lambda": float(self.lam),
            "starts": int(self.starts),
            "distinct": int(self.distinct),
            "failures": list(self.failures),
            "message": self.message,
            "solutions": [s.summary() for s in self.solutions],
        }


def probe_uniqueness(grid: TorusGrid, lam: float, starts: int = 10, amplitude: float = 0.5,
                     seed: int = 0, tol: float = 1e-11, max_iters: int = 50) -> UniquenessReport:
    """Newton from `starts` seeded random zero-mean guesses; solutions closer than DISTINCT_TOL are merged."""
    rng = np.random.default_rng(seed)
    found: List[StationaryResult] = []
    failures: List[str] = []
    for i in range(starts):
        v0 = grid.random_field(rng, modes=3, amplitude=amplitude)
        try:
            res = solve_mean_field(grid, v0, lam, tol=tol, max_iters=max_iters)
        except TorusLabError as e:
            failures.append(f"start {i}: {e}")
            continue
        if not res.converged:
            failures.append(f"start {i}: stalled at |R|={res.residual_l2:.3e}")
            continue
        if all(grid.norm_l2(res.v_star - s.v_star) > DISTINCT_TOL for s in found):
            found.append(res)
    report = UniquenessReport(lam=lam, starts=starts, solutions=found, failures=failures)
    log.info("uniqueness probe lambda=%.6g: %s", lam, report.message)
    return report
