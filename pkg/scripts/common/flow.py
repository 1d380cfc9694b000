#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Time integration of the w-form of the normalized Ricci flow on the torus

    d/dt e^w = Delta w + e^w - lambda/|Omega|,      int e^w = lambda,

i.e.  w_t = e^{-w} (Delta w + e^w - lambda/|Omega|) = -e^{-w} dE(w).

Schemes
  explicit_rk4   classical RK4, dt capped by the spectral stability limit
  semi_implicit  backward Euler; each step is a Newton solve of
                   (1-dt) e^w - e^{w_n} - dt Delta w + dt lambda/|Omega| = 0
                 with CG on (D - dt Delta) and a constant-coefficient
                 spectral preconditioner. Conserves the discrete mass exactly.

Per record: E, ||dE||_2, ||dE||_V*, mass, min/max u, dissipation int e^w w_t^2,
the Benilan-Crandall ratio max(u_t/u) * (1 - e^{-t}), and optional H(t), TMF.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace, asdict
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from scripts.common.errors import ConfigError, NonFiniteState, PositivityLost, StepRejected
from scripts.common.functionals import (
    EIGHT_PI,
    energy_E,
    energy_gap,
    first_variation_E,
    tmf_integral,
)
from scripts.common.torus import Field, TorusGrid

log = logging.getLogger(__name__)

SCHEMES = ("explicit_rk4", "semi_implicit")
# RK4 stability interval on the negative real axis
RK4_REAL_STABILITY = 2.785

# CSV columns of a trajectory (record attribute -> column)
CSV_COLUMNS: Dict[str, str] = {
    "t": "t",
    "energy_E": "E",
    "grad_E_l2": "grad_l2",
    "grad_E_Vstar": "grad_Vstar",
    "mass": "mass",
    "min_u": "min_u",
    "max_u": "max_u",
    "dissipation": "dissipation",
    "bc_ratio": "bc_ratio",
    "wt_l2": "wt_l2",
    "dt": "dt",
    "H": "H",
    "energy_gap": "energy_gap",
    "dist_l2": "dist_l2",
    "dist_V": "dist_V",
    "tmf": "tmf",
}


@dataclass(frozen=True)
class FlowConfig:
    dt_initial: float = 1e-3
    t_end: float = 40.0
    scheme: str = "explicit_rk4"
    dt_safety: float = 0.9
    renormalize_mass: bool = True
    record_every: int = 10
    energy_slack: float = 1e-12          # relative; allowed energy increase per step
    stop_tol: float = 1e-11              # ||dE||_2 below this ends the run
    max_retries: int = 20
    implicit_tol: float = 1e-13
    implicit_max_iters: int = 30
    dealias: bool = False
    tmf_diagnostic: bool = False
    h_theta: Optional[float] = None      # exponent of H(t) = (E - E_ref)^theta

    def __post_init__(self):
        if not self.dt_initial > 0:
            raise ConfigError(f"flow.dt_initial must be > 0 (got {self.dt_initial})")
        if not self.t_end > 0:
            raise ConfigError(f"flow.t_end must be > 0 (got {self.t_end})")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"flow.scheme must be one of {', '.join(SCHEMES)} (got {self.scheme})")
        if self.scheme == "semi_implicit" and not self.dt_initial < 1.0:
            raise ConfigError("flow.dt_initial must be < 1 for semi_implicit (the step operator loses definiteness)")
        if not 0 < self.dt_safety <= 1:
            raise ConfigError(f"flow.dt_safety must be in (0, 1] (got {self.dt_safety})")
        if self.record_every < 1:
            raise ConfigError("flow.record_every must be >= 1")
        if self.h_theta is not None and not 0 < self.h_theta <= 0.5:
            raise ConfigError("flow.h_theta must be in (0, 1/2]")


@dataclass(frozen=True)
class FlowState:
    t: float
    w: Field
    lam: float
    energy: Optional[float] = None


@dataclass(frozen=True)
class TrajectoryRecord:
    t: float
    energy_E: float
    grad_E_l2: float
    grad_E_Vstar: float
    mass: float
    min_u: float
    max_u: float
    dissipation: float
    bc_ratio: float
    wt_l2: float
    dt: float = float("nan")
    H: float = float("nan")
    energy_gap: float = float("nan")
    dist_l2: float = float("nan")
    dist_V: float = float("nan")
    tmf: float = float("nan")

    def as_row(self) -> Dict[str, float]:
        d = asdict(self)
        return {col: d[attr] for attr, col in CSV_COLUMNS.items()}


@dataclass
class Trajectory:
    records: List[TrajectoryRecord]
    final: FlowState
    snapshots: Optional[List[Field]] = None
    stopped_on_tolerance: bool = False
    steps: int = 0
    rejected: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def records_from_rows(rows: Sequence[Dict[str, float]]) -> List[TrajectoryRecord]:
    """Inverse of TrajectoryRecord.as_row (columns missing from a row become NaN)."""
    out = []
    for row in rows:
        kw = {attr: float(row.get(col, float("nan"))) for attr, col in CSV_COLUMNS.items()}
        out.append(TrajectoryRecord(**kw))
    return out


# ---------- right-hand side ----------
def rhs(grid: TorusGrid, w: Field, lam: float, dealias: bool = False) -> Field:
    c = lam / grid.area
    lap = grid.laplacian(w)
    return grid.pointwise(lambda w_, lap_: np.exp(-w_) * (lap_ + np.exp(w_) - c), w, lap, dealias=dealias)


def stable_dt(grid: TorusGrid, w: Field, config: FlowConfig) -> float:
    """Largest RK4 step for the diffusion e^{-w} Delta at the spectral cutoff."""
    return config.dt_safety * RK4_REAL_STABILITY * float(np.min(np.exp(w))) / grid.k2_max


def renormalize(grid: TorusGrid, w: Field, lam: float) -> Field:
    return w + np.log(lam / grid.integral(np.exp(w)))


# ---------- schemes ----------
def _rk4(grid: TorusGrid, w: Field, lam: float, dt: float, dealias: bool) -> Field:
    k1 = rhs(grid, w, lam, dealias)
    k2 = rhs(grid, w + 0.5 * dt * k1, lam, dealias)
    k3 = rhs(grid, w + 0.5 * dt * k2, lam, dealias)
    k4 = rhs(grid, w + dt * k3, lam, dealias)
    return w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _backward_euler(grid: TorusGrid, w_n: Field, lam: float, dt: float, config: FlowConfig) -> Field:
    c = lam / grid.area
    u_n = np.exp(w_n)
    scale = config.implicit_tol * float(np.max(u_n))
    n = grid.size
    w = w_n.copy()

    for it in range(config.implicit_max_iters):
        u = np.exp(w)
        G = (1.0 - dt) * u - u_n - dt * grid.laplacian(w) + dt * c
        if float(np.max(np.abs(G))) <= scale:
            return w
        d = (1.0 - dt) * u
        dbar = float(np.mean(d))

        def matvec(x, d=d):
            x = x.reshape(grid.shape)
            return (d * x - dt * grid.laplacian(x)).ravel()

        def precond(r):
            rh = grid.coeffs(r.reshape(grid.shape)) / (dbar + dt * grid.k2)
            return grid.from_coeffs(rh).ravel()

        A = LinearOperator((n, n), matvec=matvec, dtype=float)
        M = LinearOperator((n, n), matvec=precond, dtype=float)
        delta, info = cg(A, -G.ravel(), M=M, rtol=1e-12, atol=0.0, maxiter=500)
        if info < 0 or not np.all(np.isfinite(delta)):
            raise StepRejected("implicit linear solve failed", dt)
        w = w + delta.reshape(grid.shape)
        log.debug("backward euler newton it=%d |G|=%.3e", it, float(np.max(np.abs(G))))

    raise StepRejected("implicit Newton iteration did not converge", dt)


def step(grid: TorusGrid, state: FlowState, dt: float, config: FlowConfig) -> FlowState:
    if not dt > 0:
        raise StepRejected("dt must be positive", dt)
    if config.scheme == "explicit_rk4":
        w = _rk4(grid, state.w, state.lam, dt, config.dealias)
    else:
        w = _backward_euler(grid, state.w, state.lam, dt, config)

    if not np.all(np.isfinite(w)):
        raise StepRejected("non-finite state", dt)
    if not float(np.min(np.exp(w))) > 0.0:
        raise StepRejected("positivity lost", dt)
    if config.renormalize_mass:
        w = renormalize(grid, w, state.lam)

    e_old = state.energy if state.energy is not None else energy_E(grid, state.w, state.lam)
    e_new = energy_E(grid, w, state.lam)
    if e_new - e_old > config.energy_slack * max(1.0, abs(e_old)):
        raise StepRejected(f"energy increased by {e_new - e_old:.3e}", dt)
    return FlowState(t=state.t + dt, w=w, lam=state.lam, energy=e_new)


# ---------- diagnostics ----------
def benilan_crandall_bound(t: float) -> float:
    """e^t / (e^t - 1)."""
    return float("inf") if t <= 0 else -1.0 / float(np.expm1(-t))


def make_record(grid: TorusGrid, state: FlowState, config: FlowConfig, dt: float = float("nan"),
                w_ref: Optional[Field] = None) -> TrajectoryRecord:
    w, lam = state.w, state.lam
    u = np.exp(w)
    dE = first_variation_E(grid, w, lam)
    w_t = -dE / u
    energy = state.energy if state.energy is not None else energy_E(grid, w, lam)
    bc_ratio = 0.0 if state.t <= 0 else float(np.max(w_t)) / benilan_crandall_bound(state.t)

    extra = {}
    if w_ref is not None:
        gap = energy_gap(grid, w, w_ref, lam)
        extra.update(energy_gap=gap, dist_l2=grid.norm_l2(w - w_ref), dist_V=grid.norm_V(w - w_ref))
        if config.h_theta is not None:
            extra["H"] = max(gap, 0.0) ** config.h_theta
    if config.tmf_diagnostic:
        extra["tmf"] = tmf_integral(grid, w - np.mean(w))

    return TrajectoryRecord(
        t=state.t,
        energy_E=energy,
        grad_E_l2=grid.norm_l2(dE),
        grad_E_Vstar=grid.norm_Vstar(dE),
        mass=grid.integral(u),
        min_u=float(np.min(u)),
        max_u=float(np.max(u)),
        dissipation=grid.integral(u * w_t ** 2),
        bc_ratio=bc_ratio,
        wt_l2=grid.norm_l2(w_t),
        dt=dt,
        **extra,
    )


# ---------- driver ----------
def run_flow(grid: TorusGrid, w0: Field, lam: float, config: FlowConfig,
             w_ref: Optional[Field] = None, keep_snapshots: bool = False) -> Trajectory:
    if not lam > 0:
        raise ConfigError(f"lambda must be > 0 (got {lam})")
    if lam > EIGHT_PI * (1.0 + 1e-12):
        log.warning("lambda=%.6g > 8*pi: outside the global-existence range 0 < lambda <= 8 pi", lam)
    if not np.all(np.isfinite(w0)):
        raise NonFiniteState("initial data has non-finite values")

    state = FlowState(t=0.0, w=renormalize(grid, w0, lam), lam=lam)
    state = replace(state, energy=energy_E(grid, state.w, lam))
    records = [make_record(grid, state, config, w_ref=w_ref)]
    snapshots = [state.w.copy()] if keep_snapshots else None

    dt = config.dt_initial
    steps = rejected = 0
    stopped = records[0].grad_E_l2 < config.stop_tol
    last_dt = float("nan")

    while not stopped and state.t < config.t_end * (1.0 - 1e-14):
        dt_try = min(dt, config.t_end - state.t)
        if config.scheme == "explicit_rk4":
            dt_try = min(dt_try, stable_dt(grid, state.w, config))

        retries = 0
        while True:
            try:
                state = step(grid, state, dt_try, config)
                break
            except StepRejected as e:
                rejected += 1
                retries += 1
                log.debug("t=%.6g %s; halving dt", state.t, e)
                if retries > config.max_retries:
                    if e.reason in ("positivity lost", "non-finite state"):
                        raise PositivityLost(f"t={state.t:.6g}: {e.reason} after {retries - 1} retries") from e
                    raise
                dt_try *= 0.5

        steps += 1
        last_dt = dt_try
        dt = min(config.dt_initial, 2.0 * dt_try)

        at_end = state.t >= config.t_end * (1.0 - 1e-14)
        if steps % config.record_every == 0 or at_end:
            rec = make_record(grid, state, config, dt=last_dt, w_ref=w_ref)
            records.append(rec)
            if keep_snapshots:
                snapshots.append(state.w.copy())
            if not np.isfinite(rec.energy_E):
                raise NonFiniteState(f"t={state.t:.6g}: energy is not finite")
            stopped = rec.grad_E_l2 < config.stop_tol

    if records[-1].t != state.t:
        records.append(make_record(grid, state, config, dt=last_dt, w_ref=w_ref))
        if keep_snapshots:
            snapshots.append(state.w.copy())

    log.info("flow done: t=%.6g steps=%d rejected=%d |dE|=%.3e", state.t, steps, rejected, records[-1].grad_E_l2)
    return Trajectory(records=records, final=state, snapshots=snapshots,
                      stopped_on_tolerance=stopped, steps=steps, rejected=rejected)


def attach_reference(trajectory: Trajectory, grid: TorusGrid, w_star: Field, lam: float,
                     theta: Optional[float] = None) -> Trajectory:
    """Fill dist_l2, dist_V, energy_gap (and H if theta) from stored snapshots."""
    if trajectory.snapshots is None:
        raise ValueError("trajectory has no snapshots (run_flow(..., keep_snapshots=True))")
    out = []
    for rec, w in zip(trajectory.records, trajectory.snapshots):
        gap = energy_gap(grid, w, w_star, lam)
        kw = dict(energy_gap=gap, dist_l2=grid.norm_l2(w - w_star), dist_V=grid.norm_V(w - w_star))
        if theta is not None:
            kw["H"] = max(gap, 0.0) ** theta
        out.append(replace(rec, **kw))
    trajectory.records = out
    return trajectory


def dissipation_residual(grid: TorusGrid, w0: Field, lam: float, dt: float,
                         scheme: str = "explicit_rk4") -> float:
    """|Delta E / dt + (D_0 + D_1)/2| over a single step, D = int e^w w_t^2."""
    config = FlowConfig(dt_initial=dt, t_end=dt, scheme=scheme, renormalize_mass=False, energy_slack=np.inf)
    s0 = FlowState(t=0.0, w=renormalize(grid, w0, lam), lam=lam)
    s0 = replace(s0, energy=energy_E(grid, s0.w, lam))
    s1 = step(grid, s0, dt, config)
    d0 = make_record(grid, s0, config).dissipation
    d1 = make_record(grid, s1, config).dissipation
    return abs((s1.energy - s0.energy) / dt + 0.5 * (d0 + d1))
