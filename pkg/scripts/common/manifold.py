#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Lyapunov-Schmidt chart of the critical manifold around a stationary w*.

With phi_1..phi_n an L2-orthonormal basis of Ker L (L = -Delta - e^{w*}) and P
the orthogonal projector onto it,

    S = { w near w* : (I - P) dE(w) = 0 }
      = { w* + sum c_i phi_i + g(c) },       P g(c) = 0,

    Q w = w* + P(w - w*) + g(c(w)).

g is evaluated on demand by Newton on the P-complement and cached per coordinate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from scripts.common.errors import ChartExceeded, ConfigError, TorusLabError
from scripts.common.functionals import energy_E, energy_gap, first_variation_E
from scripts.common.linops import DENSE_MAX, LinearOperatorSpec, kernel_coordinates, projector_P, spectrum
from scripts.common.torus import Field, TorusGrid

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
DEFAULT_RADIUS = 1e-1


@dataclass
class ManifoldChart:
    grid: TorusGrid
    w_star: Field
    lam: float
    kernel_basis: np.ndarray                 # (n, nx, ny)
    radius: float = DEFAULT_RADIUS
    tol: float = RESIDUAL_TOL
    max_iters: int = 30
    cache_size: int = 4096                   # solve_g results kept, oldest evicted first
    samples: Dict[Tuple[float, ...], Field] = field(default_factory=dict, repr=False)

    @property
    def kernel_dim(self) -> int:
        return int(len(self.kernel_basis))

    def point(self, c: Sequence[float], w2: Optional[Field] = None) -> Field:
        """w* + sum c_i phi_i (+ w2)."""
        w = self.w_star.copy()
        for ci, phi in zip(c, self.kernel_basis):
            w = w + ci * phi
        return w if w2 is None else w + w2

    def P(self, f: Field) -> Field:
        return projector_P(self.grid, self.kernel_basis, f)

    def residual(self, w: Field) -> Field:
        """(I - P) dE(w)."""
        r = first_variation_E(self.grid, w, self.lam)
        return r - self.P(r)


def build_chart(grid: TorusGrid, w_star: Field, lam: float, k: int = 8,
                radius: float = DEFAULT_RADIUS) -> ManifoldChart:
    rep = spectrum(LinearOperatorSpec.at("L", grid, w_star, lam), k=min(k, grid.size))
    log.info("chart at lambda=%.6g: kernel_dim=%d", lam, rep.kernel_dim)
    return ManifoldChart(grid=grid, w_star=w_star, lam=lam, kernel_basis=rep.kernel_basis, radius=radius)


# ---------- g ----------
def _complement_solve(chart: ManifoldChart, w: Field, rhs: Field) -> Field:
    """Solve (I-P) L_w (I-P) d + P d = rhs, L_w = -Delta - e^w."""
    grid = chart.grid
    n = grid.size
    ew = np.exp(w)

    def op(f):
        f2 = f - chart.P(f)
        lf = -grid.laplacian(f2) - ew * f2
        return lf - chart.P(lf) + (f - f2)

    def matvec(x):
        return op(x.reshape(grid.shape)).ravel()

    def precond(r):
        return grid.from_coeffs(grid.coeffs(r.reshape(grid.shape)) / (1.0 + grid.k2)).ravel()

    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    M = LinearOperator((n, n), matvec=precond, dtype=float)
    b = rhs.ravel()
    bnorm = max(float(np.linalg.norm(b)), 1e-300)
    x, info = minres(A, b, M=M, rtol=1e-14, maxiter=4 * n)
    if info == 0 and np.linalg.norm(matvec(x) - b) <= 1e-9 * bnorm:
        return x.reshape(grid.shape)

    if n > DENSE_MAX:
        raise ChartExceeded(f"complement solve did not converge (info={info})")
    # dense fallback
    cols = np.array([op(e.reshape(grid.shape)).ravel() for e in np.eye(n)]).T
    try:
        x = np.linalg.solve(cols, b)
    except np.linalg.LinAlgError as e:
        raise ChartExceeded(f"complement Jacobian is singular: {e}") from e
    return x.reshape(grid.shape)


def solve_g(chart: ManifoldChart, c: Sequence[float]) -> Field:
    """w2 = g(c) with (I-P) dE(w* + sum c_i phi_i + w2) = 0 and P w2 = 0."""
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size != chart.kernel_dim:
        raise ConfigError(f"chart has {chart.kernel_dim} kernel coordinates, got {c.size}")
    grid = chart.grid
    if c.size == 0:
        return np.zeros(grid.shape)
    if float(np.linalg.norm(c)) > chart.radius * (1.0 + 1e-12):
        raise ChartExceeded(f"|c|={np.linalg.norm(c):.3e} outside chart radius {chart.radius:.3e}")

    key = tuple(float(x) for x in c)
    if key in chart.samples:
        return chart.samples[key].copy()

    w1 = chart.point(c)
    w2 = np.zeros(grid.shape)
    r = chart.residual(w1)
    rnorm = grid.norm_l2(r)
    target = 1e-3 * chart.tol

    for it in range(chart.max_iters):
        if rnorm <= target:
            break
        w = w1 + w2
        d = _complement_solve(chart, w, -r)
        w2_new = w2 + d
        w2_new = w2_new - chart.P(w2_new)
        r_new = chart.residual(w1 + w2_new)
        n_new = grid.norm_l2(r_new)
        log.debug("solve_g |c|=%.3e it=%d |(I-P)dE|=%.3e", np.linalg.norm(c), it, n_new)
        if not np.isfinite(n_new) or n_new >= 0.5 * rnorm:
            if n_new <= chart.tol and np.isfinite(n_new):
                w2, rnorm = w2_new, n_new
            break
        w2, r, rnorm = w2_new, r_new, n_new

    if not rnorm <= chart.tol:
        raise ChartExceeded(f"Newton for g failed at |c|={np.linalg.norm(c):.3e} (residual {rnorm:.3e})")
    if len(chart.samples) >= max(chart.cache_size, 1):
        chart.samples.pop(next(iter(chart.samples)))
    chart.samples[key] = w2.copy()
    return w2


def chart_point(chart: ManifoldChart, c: Sequence[float]) -> Field:
    """The point of S with kernel coordinates c."""
    return chart.point(c, solve_g(chart, c))


def project_Q(chart: ManifoldChart, w: Field) -> Field:
    c = kernel_coordinates(chart.grid, chart.kernel_basis, w - chart.w_star)
    return chart_point(chart, c)


def reduced_energy(chart: ManifoldChart, c: Sequence[float]) -> float:
    """E(w* + sum c_i phi_i + g(c)) - E(w*)."""
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size == 0:
        return 0.0
    return energy_gap(chart.grid, chart_point(chart, c), chart.w_star, chart.lam)


# ---------- radius and sampling ----------
def _probe_directions(n: int) -> List[np.ndarray]:
    dirs = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        dirs += [e, -e]
    if n > 1:
        dirs.append(np.ones(n) / np.sqrt(n))
    return dirs


def discover_radius(chart: ManifoldChart, start: float = DEFAULT_RADIUS, min_radius: float = 1e-6) -> float:
    """Halve the radius until solve_g succeeds on every probe direction; records it on the chart."""
    if chart.kernel_dim == 0:
        chart.radius = start
        return start
    r = start
    while r >= min_radius:
        chart.radius = r
        try:
            for d in _probe_directions(chart.kernel_dim):
                solve_g(chart, r * d)
            log.info("certified chart radius %.3e", r)
            return r
        except ChartExceeded as e:
            log.debug("radius %.3e rejected: %s", r, e)
            r *= 0.5
    raise ChartExceeded(f"no chart radius >= {min_radius:.1e} certified")


def reduced_energy_grid(chart: ManifoldChart, points: int = 9, radius: Optional[float] = None) -> List[Dict]:
    """Rows {c1[, c2], value} over a square grid of kernel coordinates (n <= 2)."""
    radius = chart.radius if radius is None else radius
    n = chart.kernel_dim
    if n == 0:
        return [{"value": 0.0}]
    if n > 2:
        raise ConfigError(f"reduced-energy grid supports kernel_dim <= 2 (got {n})")
    axis = np.linspace(-radius, radius, points) / np.sqrt(n)
    coords = [(x,) for x in axis] if n == 1 else [(x, y) for x in axis for y in axis]
    rows = []
    for c in coords:
        try:
            value = reduced_energy(chart, c)
        except ChartExceeded:
            continue
        row = {f"c{i + 1}": float(ci) for i, ci in enumerate(c)}
        row["value"] = value
        rows.append(row)
    return rows


# ---------- lemma ratios ----------
@dataclass
class LemmaBounds:
    """Maxima over samples of the three chart ratios."""
    energy_vs_distance: float          # |E(w) - E(Qw)| / ||w - Qw||_V^2
    distance_vs_gradient: float        # ||w - Qw||_V / ||dE(w)||_V*
    gradient_vs_gradient: float        # ||dE(Qw)||_V* / ||dE(w)||_V*
    samples: int
    sample_radius: float
    skipped: int = 0

    def as_dict(self) -> Dict:
        return {
            "energy_vs_distance": self.energy_vs_distance,
            "distance_vs_gradient": self.distance_vs_gradient,
            "gradient_vs_gradient": self.gradient_vs_gradient,
            "samples": self.samples,
            "sample_radius": self.sample_radius,
            "skipped": self.skipped,
        }

    def maxima(self) -> Tuple[float, float, float]:
        return (self.energy_vs_distance, self.distance_vs_gradient, self.gradient_vs_gradient)

    @property
    def finite(self) -> bool:
        return all(np.isfinite(m) for m in self.maxima())

    def stable_against(self, other: "LemmaBounds", factor: float = 2.0, floor: float = 1e-8) -> bool:
        """Each maximum of `other` is below factor * ours (values under `floor` count as zero)."""
        for mine, theirs in zip(self.maxima(), other.maxima()):
            if theirs <= floor:
                continue
            if not theirs < factor * max(mine, floor):
                return False
        return True


def verify_lemma_bounds(chart: ManifoldChart, samples: int = 100, sample_radius: float = 1e-2,
                        seed: int = 0, modes: int = 4) -> LemmaBounds:
    """
    Random w with ||w - w*||_V = sample_radius. The same seed gives the same
    directions at every radius, so reports at r and r/2 are directly comparable.
    """
    grid, lam = chart.grid, chart.lam
    rng = np.random.default_rng(seed)
    m1 = m2 = m3 = 0.0
    skipped = 0
    for _ in range(samples):
        h = grid.random_field(rng, modes=modes, zero_mean=False)
        h *= sample_radius / grid.norm_V(h)
        w = chart.w_star + h
        try:
            qw = project_Q(chart, w)
        except TorusLabError as e:
            log.debug("sample skipped: %s", e)
            skipped += 1
            continue
        g_w = grid.norm_Vstar(first_variation_E(grid, w, lam))
        g_q = grid.norm_Vstar(first_variation_E(grid, qw, lam))
        dist = grid.norm_V(w - qw)
        if dist > 0.0:
            m1 = max(m1, abs(energy_gap(grid, w, qw, lam)) / dist ** 2)
        if g_w > 0.0:
            m2 = max(m2, dist / g_w)
            m3 = max(m3, g_q / g_w)
    return LemmaBounds(m1, m2, m3, samples=samples - skipped, sample_radius=sample_radius, skipped=skipped)


@dataclass
class ChartSummary:
    kernel_dim: int
    radius: float
    lemma_bounds: Optional[LemmaBounds]
    base_energy: float

    def as_dict(self) -> Dict:
        return {
            "kernel_dim": self.kernel_dim,
            "certified_radius": self.radius,
            "base_energy": self.base_energy,
            "lemma_bounds": None if self.lemma_bounds is None else self.lemma_bounds.as_dict(),
        }


def summarize(chart: ManifoldChart, bounds: Optional[LemmaBounds] = None) -> ChartSummary:
    return ChartSummary(kernel_dim=chart.kernel_dim, radius=chart.radius, lemma_bounds=bounds,
                        base_energy=energy_E(chart.grid, chart.w_star, chart.lam))
