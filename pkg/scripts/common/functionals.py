#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Energy functionals of the logarithmic-diffusion / normalized Ricci flow and the
changes of variables between them.

    u  density (u > 0, integral(u) = lambda)
    w  = log u
    v  = w - mean(w)            (zero-mean potential)

    F(u)   = int u (log u - 1) + 1/2 int u * Delta^{-1} u
    J(v)   = 1/2 ||grad v||^2 - lambda * log int e^v
    E(w)   = int 1/2 |grad w|^2 - e^w + (lambda/|Omega|) w
    dE(w)  = -Delta w - e^w + lambda/|Omega|
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Dict, Optional

import numpy as np

from scripts.common.errors import NonPositiveDensity, NotZeroMean
from scripts.common.torus import Field, TorusGrid

NOT_ZERO_MEAN_RTOL = 1e-8
EIGHT_PI = 8.0 * np.pi


# ---------- change of variables ----------
def u_from_w(w: Field) -> Field:
    return np.exp(w)


def w_from_u(u: Field) -> Field:
    _require_positive(u)
    return np.log(u)


def v_from_w(w: Field) -> Field:
    return w - np.mean(w)


def u_from_v(grid: TorusGrid, v: Field, lam: float) -> Field:
    """u = lambda e^v / int e^v ; the mass is lambda by construction."""
    ev = np.exp(v - np.max(v))
    return lam * ev / grid.integral(ev)


def w_from_v(grid: TorusGrid, v: Field, lam: float) -> Field:
    # log of u_from_v, formed without exponentiating twice
    shift = float(np.max(v))
    return v + np.log(lam) - shift - np.log(grid.integral(np.exp(v - shift)))


def _require_positive(u: Field) -> None:
    umin = float(np.min(u))
    if not umin > 0.0:
        raise NonPositiveDensity(umin)


def _require_zero_mean(v: Field) -> None:
    m = float(np.mean(v))
    # floor of 1: a constant w leaves a uniform round-off residue in w - mean(w)
    if abs(m) > NOT_ZERO_MEAN_RTOL * max(float(np.max(np.abs(v))), 1.0):
        raise NotZeroMean(m)


# ---------- E(w) ----------
def energy_E(grid: TorusGrid, w: Field, lam: float) -> float:
    return 0.5 * grid.dirichlet(w) - grid.integral(np.exp(w)) + lam / grid.area * grid.integral(w)


def first_variation_E(grid: TorusGrid, w: Field, lam: float) -> Field:
    return -grid.laplacian(w) - np.exp(w) + lam / grid.area


def energy_gap(grid: TorusGrid, w: Field, w_ref: Field, lam: float) -> float:
    """E(w) - E(w_ref), arranged so the O(|w - w_ref|^2) result survives cancellation."""
    h = w - w_ref
    dirichlet = 0.5 * grid.dirichlet(h) + grid.dirichlet_pair(w_ref, h)
    mass = grid.integral(np.exp(w_ref) * np.expm1(h))
    return dirichlet - mass + lam / grid.area * grid.integral(h)


# ---------- F(u) ----------
def energy_F(grid: TorusGrid, u: Field) -> float:
    _require_positive(u)
    # Delta^{-1} u = -inv_laplacian_zero_mean(u)
    entropy = grid.integral(u * (np.log(u) - 1.0))
    return entropy - 0.5 * grid.inner(u, grid.inv_laplacian_zero_mean(u))


# ---------- J(v) ----------
def energy_J(grid: TorusGrid, v: Field, lam: float) -> float:
    _require_zero_mean(v)
    shift = float(np.max(v))
    log_z = shift + np.log(grid.integral(np.exp(v - shift)))
    return 0.5 * grid.dirichlet(v) - lam * log_z


def first_variation_J(grid: TorusGrid, v: Field, lam: float) -> Field:
    """-Delta v - lambda (e^v / int e^v - 1/|Omega|), the mean-field residual."""
    return -grid.laplacian(v) - (u_from_v(grid, v, lam) - lam / grid.area)


# ---------- diagnostics ----------
def tmf_integral(grid: TorusGrid, v: Field) -> float:
    """int exp(4 pi v^2 / ||grad v||^2) for zero-mean v (bounded on V_0 by Fontana)."""
    g2 = grid.dirichlet(v)
    if g2 <= 0.0:
        return grid.area
    return grid.integral(np.exp(4.0 * np.pi * (v - np.mean(v)) ** 2 / g2))


@dataclass(frozen=True)
class FunctionalReport:
    energy_E: float
    energy_F: float
    energy_J: float
    grad_E_l2: float
    grad_E_Vstar: float
    mass: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def functional_report(grid: TorusGrid, w: Field, lam: float, dE: Optional[Field] = None) -> FunctionalReport:
    u = u_from_w(w)
    if dE is None:
        dE = first_variation_E(grid, w, lam)
    return FunctionalReport(
        energy_E=energy_E(grid, w, lam),
        energy_F=energy_F(grid, u),
        energy_J=energy_J(grid, v_from_w(w), lam),
        grad_E_l2=grid.norm_l2(dE),
        grad_E_Vstar=grid.norm_Vstar(dE),
        mass=grid.integral(u),
    )
