#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Convergence-rate post-processing of flow trajectories.

  estimate_theta   fit log ||dE||_V* = (1 - theta) log(E - E*) - log C
  fit_decay        fit ||w - w*|| by  A e^{-gamma t}  and  A (t + t0)^{-p}
                   (p = theta / (1 - 2 theta)); choose by r^2 with a margin
  h_series         H(t) = (E - E*)^theta and the smallest C with
                   ||w_t||_2 <= C (-dH/dt) over the tail

-dH/dt is evaluated exactly from the recorded dissipation, dE/dt = -int e^w w_t^2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import curve_fit
from scipy.stats import linregress

from scripts.common.errors import ConfigError, InsufficientData, NonMonotoneEnergy
from scripts.common.flow import Trajectory, TrajectoryRecord, attach_reference
from scripts.common.functionals import first_variation_E
from scripts.common.linops import SpectrumReport
from scripts.common.manifold import ManifoldChart, chart_point, reduced_energy
from scripts.common.torus import Field, TorusGrid

log = logging.getLogger(__name__)

MIN_RECORDS = 10
GRAD_WINDOW = (1e-9, 1e-3)
SELECTION_MARGIN = 0.01
THETA_TOL = 0.05

Records = Union[Trajectory, Sequence[TrajectoryRecord]]


def _records(data: Records) -> List[TrajectoryRecord]:
    return list(data.records) if isinstance(data, Trajectory) else list(data)


def _column(records: Sequence[TrajectoryRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)


def exponent_from_theta(theta: float) -> float:
    return theta / (1.0 - 2.0 * theta)


def theta_from_exponent(p: float) -> float:
    return p / (1.0 + 2.0 * p)


def _gaps(records: Sequence[TrajectoryRecord], E_star: Optional[float]) -> np.ndarray:
    """E - E*, from the cancellation-safe column when present."""
    gap = _column(records, "energy_gap")
    if np.all(np.isfinite(gap)):
        return gap
    if E_star is None:
        raise InsufficientData("records carry no energy_gap and no E_star was given")
    return _column(records, "energy_E") - E_star


def _check_monotone(records: Sequence[TrajectoryRecord], slack: float = 1e-12) -> None:
    E = _column(records, "energy_E")
    rise = np.diff(E) - slack * np.maximum(1.0, np.abs(E[:-1]))
    if np.any(rise > 0):
        i = int(np.argmax(rise > 0))
        raise NonMonotoneEnergy(f"energy rises by {E[i + 1] - E[i]:.3e} between t={records[i].t:.6g} "
                                f"and t={records[i + 1].t:.6g}")


# ---------- Lojasiewicz exponent ----------
@dataclass(frozen=True)
class LojEstimate:
    theta: float
    constant_C: float
    r_squared: float
    sample_count: int
    in_range: bool

    def as_dict(self) -> Dict:
        return asdict(self)


def estimate_theta_series(gaps: Sequence[float], grads: Sequence[float], tol: float = THETA_TOL) -> LojEstimate:
    """Fit on paired (E - E*, ||dE||_V*) samples; nonpositive entries are dropped."""
    gaps = np.asarray(gaps, dtype=float)
    grads = np.asarray(grads, dtype=float)
    keep = (gaps > 0) & (grads > 0) & np.isfinite(gaps) & np.isfinite(grads)
    if np.count_nonzero(keep) < MIN_RECORDS:
        raise InsufficientData(f"{np.count_nonzero(keep)} usable samples (need {MIN_RECORDS})")
    fit = linregress(np.log(gaps[keep]), np.log(grads[keep]))
    theta = 1.0 - float(fit.slope)
    in_range = 0.0 < theta <= 0.5 + tol
    if not in_range:
        log.warning("fitted theta=%.4f outside (0, 1/2]", theta)
    return LojEstimate(theta=theta, constant_C=float(np.exp(-fit.intercept)),
                       r_squared=float(fit.rvalue ** 2), sample_count=int(np.count_nonzero(keep)),
                       in_range=in_range)


def estimate_theta(data: Records, E_star: Optional[float] = None,
                   grad_window: Tuple[float, float] = GRAD_WINDOW, tol: float = THETA_TOL) -> LojEstimate:
    records = _records(data)
    _check_monotone(records)
    g2 = _column(records, "grad_E_l2")
    window = (g2 >= grad_window[0]) & (g2 <= grad_window[1])
    tail = [r for r, keep in zip(records, window) if keep]
    if len(tail) < MIN_RECORDS:
        raise InsufficientData(f"{len(tail)} records with ||dE||_2 in [{grad_window[0]:.0e}, {grad_window[1]:.0e}]"
                               f" (need {MIN_RECORDS})")
    return estimate_theta_series(_gaps(tail, E_star), _column(tail, "grad_E_Vstar"), tol=tol)


# ---------- decay profile ----------
@dataclass(frozen=True)
class RateFit:
    model: str
    gamma: float                 # exponential rate
    theta_fit: float             # from the algebraic exponent
    exponent: float              # algebraic p
    t0: float
    r_squared: float
    r_squared_exponential: float
    r_squared_algebraic: float
    tie: bool
    window: Tuple[float, float]
    n_points: int
    amplitude_exponential: float = float("nan")
    amplitude_algebraic: float = float("nan")

    def as_dict(self) -> Dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d

    def predict(self, t: np.ndarray, model: Optional[str] = None) -> np.ndarray:
        model = model or self.model
        t = np.asarray(t, dtype=float)
        if model == "exponential":
            return self.amplitude_exponential * np.exp(-self.gamma * t)
        return self.amplitude_algebraic * (t + self.t0) ** (-self.exponent)


def _r_squared(y: np.ndarray, yhat: np.ndarray) -> float:
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)


def _log_algebraic(t, log_a, p, t0):
    return log_a - p * np.log(t + t0)


def _fit_algebraic(t: np.ndarray, y: np.ndarray) -> Tuple[float, float, float, float]:
    """(log A, p, t0, r^2) for log d = log A - p log(t + t0), t0 in [lo, t_lo + (t_hi - t_lo)/4]."""
    t_lo, t_hi = float(t[0]), float(t[-1])
    lo = 0.0 if t_lo > 0 else 1e-9 * max(1.0, t_hi)
    hi = max(t_lo + 0.25 * (t_hi - t_lo), 2.0 * lo)

    best = None
    for t0 in np.linspace(lo, hi, 33):
        fit = linregress(np.log(t + t0), y)
        if best is None or fit.rvalue ** 2 > best[3]:
            best = (float(fit.intercept), float(-fit.slope), float(t0), float(fit.rvalue ** 2))
    try:
        popt, _ = curve_fit(_log_algebraic, t, y, p0=best[:3],
                            bounds=([-np.inf, -np.inf, lo], [np.inf, np.inf, hi]), maxfev=20000)
        r2 = _r_squared(y, _log_algebraic(t, *popt))
        if r2 >= best[3]:
            return float(popt[0]), float(popt[1]), float(popt[2]), r2
    except (RuntimeError, ValueError) as e:
        log.debug("algebraic curve_fit failed (%s); keeping the grid estimate", e)
    return best


def fit_decay_series(t: Sequence[float], d: Sequence[float], margin: float = SELECTION_MARGIN) -> RateFit:
    """Fit both decay models to samples d(t) > 0 and select by r^2 (log space)."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    keep = np.isfinite(t) & np.isfinite(d) & (d > 0)
    t, d = t[keep], d[keep]
    if t.size < MIN_RECORDS:
        raise InsufficientData(f"{t.size} usable samples (need {MIN_RECORDS})")
    order = np.argsort(t)
    t, y = t[order], np.log(d[order])

    ex = linregress(t, y)
    r2_exp = float(ex.rvalue ** 2)
    log_a, p, t0, r2_alg = _fit_algebraic(t, y)

    if r2_exp >= r2_alg + margin:
        model, tie = "exponential", False
    elif r2_alg >= r2_exp + margin:
        model, tie = "algebraic", False
    else:
        model, tie = ("exponential" if r2_exp >= r2_alg else "algebraic"), True

    fit = RateFit(
        model=model,
        gamma=float(-ex.slope),
        theta_fit=theta_from_exponent(p) if p > 0 else float("nan"),
        exponent=p,
        t0=t0,
        r_squared=r2_exp if model == "exponential" else r2_alg,
        r_squared_exponential=r2_exp,
        r_squared_algebraic=r2_alg,
        tie=tie,
        window=(float(t[0]), float(t[-1])),
        n_points=int(t.size),
        amplitude_exponential=float(np.exp(ex.intercept)),
        amplitude_algebraic=float(np.exp(log_a)),
    )
    log.info("decay fit: %s (r2 exp=%.6f alg=%.6f%s) gamma=%.6g p=%.6g",
             model, r2_exp, r2_alg, ", tie" if tie else "", fit.gamma, p)
    return fit


def fit_decay(data: Records, w_star: Optional[Field] = None, grid: Optional[TorusGrid] = None,
              lam: Optional[float] = None, norm: str = "l2",
              grad_window: Tuple[float, float] = GRAD_WINDOW, margin: float = SELECTION_MARGIN) -> RateFit:
    """
    Fit ||w - w*|| (norm 'l2' or 'V') over the tail window of ||dE||_2.

    Distances come from the records; a Trajectory with snapshots is given them
    first when w_star, grid and lam are supplied.
    """
    if norm not in ("l2", "V"):
        raise ConfigError(f"norm must be 'l2' or 'V' (got {norm})")
    if w_star is not None and isinstance(data, Trajectory):
        if grid is None or lam is None:
            raise ConfigError("fit_decay with w_star needs grid and lam")
        data = attach_reference(data, grid, w_star, lam)
    records = _records(data)
    dist = _column(records, "dist_l2" if norm == "l2" else "dist_V")
    if not np.any(np.isfinite(dist)):
        raise InsufficientData("records carry no distance to w*")
    g2 = _column(records, "grad_E_l2")
    window = (g2 >= grad_window[0]) & (g2 <= grad_window[1])
    return fit_decay_series(_column(records, "t")[window], dist[window], margin=margin)


def overlay_rows(data: Records, fit: RateFit, norm: str = "l2") -> List[Dict]:
    """Observed distance next to both fitted curves, one row per record."""
    records = _records(data)
    t = _column(records, "t")
    observed = _column(records, "dist_l2" if norm == "l2" else "dist_V")
    exp_curve = fit.predict(t, "exponential")
    alg_curve = fit.predict(t, "algebraic")
    return [{"t": ti, "observed": oi, "exponential": ei, "algebraic": ai}
            for ti, oi, ei, ai in zip(t, observed, exp_curve, alg_curve)]


# ---------- classification ----------
@dataclass(frozen=True)
class ConvergenceVerdict:
    verdict: str                 # consistent | discrepancy | inconclusive
    nondegenerate: bool
    expected: str
    observed: str
    message: str

    def as_dict(self) -> Dict:
        return asdict(self)


def classify_convergence(stationary, spectrum: SpectrumReport, fit: RateFit) -> ConvergenceVerdict:
    """Nondegenerate states should show exponential decay; degenerate ones at least algebraic."""
    nondeg = bool(spectrum.nondegenerate)
    lam = getattr(stationary, "lam", float("nan"))
    if not nondeg:
        return ConvergenceVerdict("consistent", False, "exponential or algebraic", fit.model,
                                  f"degenerate state at lambda={lam:.6g}: {fit.model} decay is admissible")
    if fit.model == "exponential":
        return ConvergenceVerdict("consistent", True, "exponential", fit.model,
                                  f"nondegenerate state, exponential decay gamma={fit.gamma:.6g}")
    if fit.tie:
        return ConvergenceVerdict("inconclusive", True, "exponential", fit.model,
                                  f"r^2 exp={fit.r_squared_exponential:.4f} vs alg={fit.r_squared_algebraic:.4f} "
                                  f"within the selection margin")
    return ConvergenceVerdict("discrepancy", True, "exponential", fit.model,
                              f"nondegenerate state but algebraic fit preferred (r^2={fit.r_squared:.4f}); investigate")


# ---------- H(t) ----------
@dataclass
class HSeries:
    t: np.ndarray
    H: np.ndarray
    wt_l2: np.ndarray
    minus_dH: np.ndarray
    constant_C: float
    integral_wt: float
    bound: float                 # constant_C * H(t_start)

    @property
    def bound_holds(self) -> bool:
        return self.integral_wt <= self.bound * (1.0 + 1e-2) + 1e-14

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.H) <= 1e-12 * max(1.0, float(np.max(self.H, initial=0.0)))))

    def rows(self) -> List[Dict]:
        return [{"t": a, "H": b, "wt_l2": c, "minus_dH_dt": d}
                for a, b, c, d in zip(self.t, self.H, self.wt_l2, self.minus_dH)]

    def summary(self) -> Dict:
        return {"constant_C": self.constant_C, "integral_wt": self.integral_wt, "bound": self.bound,
                "bound_holds": self.bound_holds, "decreasing": self.decreasing, "records": int(self.t.size)}


def h_series(data: Records, E_star: Optional[float] = None, theta: float = 0.5,
             t_min: float = 0.0) -> HSeries:
    if not 0 < theta <= 0.5:
        raise ConfigError(f"theta must be in (0, 1/2] (got {theta})")
    records = [r for r in _records(data) if r.t >= t_min]
    if not records:
        raise InsufficientData(f"no records after t={t_min:g}")
    gap = np.maximum(_gaps(records, E_star), 0.0)
    # a run that starts stationary records once; H is identically zero there
    if len(records) < 3 and np.any(gap > 0):
        raise InsufficientData(f"{len(records)} records after t={t_min:g} (need 3)")

    t = _column(records, "t")
    H = gap ** theta
    wt = _column(records, "wt_l2")
    diss = _column(records, "dissipation")
    with np.errstate(divide="ignore", invalid="ignore"):
        minus_dH = np.where(gap > 0, theta * gap ** (theta - 1.0) * diss, 0.0)
        ratio = np.where(minus_dH > 0, wt / minus_dH, np.nan)
    C = float(np.nanmax(ratio)) if np.any(np.isfinite(ratio)) else 0.0
    integral = float(trapezoid(wt, t))
    return HSeries(t=t, H=H, wt_l2=wt, minus_dH=minus_dH, constant_C=C,
                   integral_wt=integral, bound=C * float(H[0]))


# ---------- exponent on the critical manifold ----------
def estimate_theta_on_chart(chart: ManifoldChart, direction: Optional[Sequence[float]] = None,
                            radii: Optional[Sequence[float]] = None, tol: float = THETA_TOL) -> LojEstimate:
    """Fit the gradient inequality along a ray c = r * direction of a chart's kernel coordinates."""
    if chart.kernel_dim == 0:
        # S = {w*}: the reduced energy is identically zero, the exponent is 1/2
        return LojEstimate(theta=0.5, constant_C=float("nan"), r_squared=1.0, sample_count=0, in_range=True)
    d = np.ones(chart.kernel_dim) if direction is None else np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    radii = np.geomspace(0.5 * chart.radius, 0.5 * chart.radius / 16, MIN_RECORDS + 2) if radii is None else radii
    gaps, grads = [], []
    for r in radii:
        c = r * d
        gaps.append(abs(reduced_energy(chart, c)))
        grads.append(chart.grid.norm_Vstar(first_variation_E(chart.grid, chart_point(chart, c), chart.lam)))
    return estimate_theta_series(gaps, grads, tol=tol)
