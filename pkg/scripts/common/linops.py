#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Linearized operators at a stationary state and their spectra.

    L phi = -Delta phi - e^{w*} phi                         on V    (second variation of E)
    B phi = -Delta phi - u* phi + (1/lambda) (phi, u*) u*   on V_0  (second variation of J)
    M phi = -Delta phi - u* phi                             on V

B is realized on the zero-mean subspace (D(B) = H^2 n V_0): inputs are
mean-projected, and for dense spectra the constant direction is pushed above
the spectrum by a shift so it never appears among the lowest eigenpairs.

Desk-size grids (N <= DENSE_MAX points) are assembled densely and solved with
scipy.linalg.eigh; larger grids go through eigsh on a LinearOperator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh, eigvalsh, null_space, svdvals
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, minres

from scripts.common.errors import ConfigError, DegenerateState, EigsNotConverged, NonPositiveDensity
from scripts.common.torus import Field, TorusGrid

log = logging.getLogger(__name__)

KINDS = ("L", "B", "M")
DENSE_MAX = 64 * 64
COERCIVITY_DENSE_MAX = 32 * 32
DEGENERATE_CONSTANT = 1e8


def kernel_threshold(grid: TorusGrid, lam: float) -> float:
    return 1e-6 * (1.0 + lam / grid.area)


@dataclass(frozen=True)
class LinearOperatorSpec:
    kind: str
    base_state: Field      # w* for L, u* for B and M
    lam: float
    grid: TorusGrid

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"operator kind must be one of {', '.join(KINDS)} (got {self.kind})")
        if self.kind in ("B", "M"):
            umin = float(np.min(self.base_state))
            if not umin > 0:
                raise NonPositiveDensity(umin)

    @property
    def potential(self) -> Field:
        return np.exp(self.base_state) if self.kind == "L" else self.base_state

    @classmethod
    def at(cls, kind: str, grid: TorusGrid, w_star: Field, lam: float) -> "LinearOperatorSpec":
        """Build from the log-density w*; B and M take u* = e^{w*}."""
        return cls(kind=kind, base_state=w_star if kind == "L" else np.exp(w_star), lam=lam, grid=grid)


# ---------- application ----------
def apply(spec: LinearOperatorSpec, phi: Field) -> Field:
    grid = spec.grid
    if spec.kind == "B":
        phi = phi - np.mean(phi)
    out = -grid.laplacian(phi) - spec.potential * phi
    if spec.kind == "B":
        u = spec.base_state
        out = out + grid.inner(phi, u) / spec.lam * u
        out = out - np.mean(out)
    return out


def assemble(spec: LinearOperatorSpec, shift: Optional[float] = None) -> np.ndarray:
    """Dense symmetric matrix on grid values; for B the constants get eigenvalue `shift`."""
    grid = spec.grid
    A = -grid.laplacian_matrix()
    A[np.diag_indices_from(A)] -= spec.potential.ravel()
    if spec.kind == "B":
        u = spec.base_state.ravel()
        A += np.outer(u, u) * (grid.cell_area / spec.lam)
        n = grid.size
        P0 = np.full((n, n), 1.0 / n)
        Pi = np.eye(n) - P0
        A = Pi @ A @ Pi
        A += (_constant_shift(spec) if shift is None else shift) * P0
    return 0.5 * (A + A.T)


def _constant_shift(spec: LinearOperatorSpec) -> float:
    # above every eigenvalue of B on V_0
    return 2.0 * (spec.grid.k2_max + float(np.max(spec.base_state)) * (1.0 + spec.grid.area) + 1.0)


# ---------- spectrum ----------
@dataclass
class SpectrumReport:
    kind: str
    eigenvalues: np.ndarray
    eigenfields: np.ndarray          # (k, nx, ny), L2-orthonormal
    kernel_dim: int
    kernel_basis: np.ndarray         # (n, nx, ny)
    nondegenerate: bool
    smallest_abs_eigenvalue: float
    threshold: float
    method: str = "dense"
    morse_index: Optional[int] = None

    def as_dict(self) -> Dict:
        return {
            "operator": self.kind,
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "kernel_dim": int(self.kernel_dim),
            "nondegenerate": bool(self.nondegenerate),
            "smallest_abs_eigenvalue": float(self.smallest_abs_eigenvalue),
            "kernel_threshold": float(self.threshold),
            "morse_index": None if self.morse_index is None else int(self.morse_index),
            "method": self.method,
        }


def spectrum(spec: LinearOperatorSpec, k: int, dense_max: int = DENSE_MAX) -> SpectrumReport:
    """
    The k lowest eigenpairs, plus the kernel and Morse index over the whole
    spectrum: the kernel may sit above the k-th eigenvalue.
    """
    grid = spec.grid
    n = grid.size
    kmax = n - 1 if spec.kind == "B" else n
    if not 1 <= k <= kmax:
        raise ConfigError(f"requested {k} eigenpairs; the grid supports 1..{kmax}")
    thr = kernel_threshold(grid, spec.lam)

    if n <= dense_max:
        A = assemble(spec)
        all_vals = eigvalsh(A)
        if spec.kind == "B":
            all_vals = all_vals[:-1]        # the shifted constant direction
        m = max(k, int(np.count_nonzero(all_vals < thr)))
        low_vals, low_vecs = eigh(A, subset_by_index=[0, m - 1])
        vals, vecs = low_vals[:k], low_vecs[:, :k]
        kernel_vecs = low_vecs[:, np.abs(low_vals) < thr]
        smallest = float(np.min(np.abs(all_vals)))
        morse = int(np.count_nonzero(all_vals < 0))
        method = "dense"
    else:
        vals, vecs = _iterative_lowest(spec, k)
        near_vals, near_vecs = _iterative_nearest_zero(spec, max(k, 6))
        in_kernel = np.abs(near_vals) < thr
        kernel_vecs = near_vecs[:, in_kernel]
        smallest = float(np.min(np.abs(near_vals)))
        morse = _count_negative(spec)
        method = "eigsh"

    scale = 1.0 / np.sqrt(grid.cell_area)
    fields = (vecs.T * scale).reshape(k, *grid.shape)
    kernel = (kernel_vecs.T * scale).reshape(kernel_vecs.shape[1], *grid.shape)
    log.debug("spectrum %s: lowest %s, kernel_dim=%d, morse=%d", spec.kind,
              np.array2string(vals[: min(k, 6)], precision=6), len(kernel), morse)
    return SpectrumReport(
        kind=spec.kind,
        eigenvalues=vals,
        eigenfields=fields,
        kernel_dim=int(len(kernel)),
        kernel_basis=kernel,
        nondegenerate=len(kernel) == 0,
        smallest_abs_eigenvalue=smallest,
        threshold=thr,
        method=method,
        morse_index=morse,
    )


def _matvec_full(spec: LinearOperatorSpec):
    """Matrix-free operator on the full grid space; for B the constants get the shift."""
    grid = spec.grid
    shift = _constant_shift(spec)

    def matvec(x):
        f = x.reshape(grid.shape)
        out = apply(spec, f)
        if spec.kind == "B":
            out = out + shift * np.mean(f)
        return out.ravel()

    return matvec


def _iterative_lowest(spec: LinearOperatorSpec, k: int) -> Tuple[np.ndarray, np.ndarray]:
    n = spec.grid.size
    op = LinearOperator((n, n), matvec=_matvec_full(spec), dtype=float)
    try:
        vals, vecs = eigsh(op, k=k, which="SA", tol=1e-12, maxiter=50 * n)
    except ArpackNoConvergence as e:
        raise EigsNotConverged(f"eigsh: {len(e.eigenvalues)} of {k} eigenpairs converged") from e
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def _iterative_nearest_zero(spec: LinearOperatorSpec, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Shift-invert eigsh around zero. The shift sits just below the kernel band so
    (A - sigma) stays invertible on an exact kernel; k grows while every
    returned pair is a kernel pair.
    """
    grid = spec.grid
    n = grid.size
    thr = kernel_threshold(grid, spec.lam)
    sigma = -2.0 * thr
    matvec = _matvec_full(spec)
    op = LinearOperator((n, n), matvec=matvec, dtype=float)

    def precond(r):
        return grid.from_coeffs(grid.coeffs(r.reshape(grid.shape)) / (1.0 + grid.k2)).ravel()

    M = LinearOperator((n, n), matvec=precond, dtype=float)

    def solve(b):
        x, info = minres(op, b, shift=sigma, M=M, rtol=1e-13, maxiter=20 * n)
        if info < 0:
            raise EigsNotConverged(f"shift-invert solve failed (minres info={info})")
        return x

    op_inv = LinearOperator((n, n), matvec=solve, dtype=float)
    kmax = n - 2
    k = min(k, kmax)
    while True:
        try:
            vals, vecs = eigsh(op, k=k, sigma=sigma, which="LM", OPinv=op_inv, tol=1e-12, maxiter=50 * n)
        except ArpackNoConvergence as e:
            raise EigsNotConverged(f"shift-invert eigsh: {len(e.eigenvalues)} of {k} eigenpairs converged") from e
        if np.count_nonzero(np.abs(vals) < thr) < k or k == kmax:
            break
        k = min(2 * k, kmax)
    order = np.argsort(np.abs(vals))
    return vals[order], vecs[:, order]


def _count_negative(spec: LinearOperatorSpec, k: int = 8) -> int:
    """Morse index by growing the SA window until it reaches a nonnegative eigenvalue."""
    n = spec.grid.size
    kmax = n - 2
    k = min(k, kmax)
    while True:
        vals = _iterative_lowest(spec, k)[0]
        if vals[-1] >= 0 or k == kmax:
            return int(np.count_nonzero(vals < 0))
        k = min(2 * k, kmax)


def smallest_singular_value(grid: TorusGrid, u_star: Field, lam: float,
                            dense_max: int = DENSE_MAX) -> Tuple[float, int]:
    """(min |eigenvalue|, Morse index) of the mean-field Jacobian B on V_0."""
    spec = LinearOperatorSpec(kind="B", base_state=u_star, lam=lam, grid=grid)
    if grid.size <= dense_max:
        vals = eigvalsh(assemble(spec))[:-1]
        return float(np.min(np.abs(vals))), int(np.count_nonzero(vals < 0))
    near = _iterative_nearest_zero(spec, 6)[0]
    return float(np.min(np.abs(near))), _count_negative(spec)


# ---------- nondegeneracy ----------
@dataclass
class NondegeneracyVerdict:
    nondegenerate: bool
    kernel_dim: int
    witnesses: np.ndarray                       # psi with -Delta psi = u* psi, int psi u* = 0
    witness_residuals: List[float] = field(default_factory=list)
    witness_orthogonality: List[float] = field(default_factory=list)
    spectrum: Optional[SpectrumReport] = None

    def as_dict(self) -> Dict:
        return {
            "nondegenerate": bool(self.nondegenerate),
            "kernel_dim": int(self.kernel_dim),
            "witness_residuals": [float(x) for x in self.witness_residuals],
            "witness_orthogonality": [float(x) for x in self.witness_orthogonality],
        }


def witness_from_kernel(grid: TorusGrid, phi: Field, u_star: Field, lam: float) -> Field:
    """B phi = 0  ->  psi = phi - (1/lambda) int u* phi  solves the linearized equation."""
    return phi - grid.inner(u_star, phi) / lam


def phi_from_witness(psi: Field) -> Field:
    """-Delta psi = u* psi, int psi u* = 0  ->  phi = psi - mean(psi) lies in Ker B."""
    return psi - np.mean(psi)


def nondegeneracy_check(grid: TorusGrid, u_star: Field, lam: float, k: int = 8) -> NondegeneracyVerdict:
    spec = LinearOperatorSpec(kind="B", base_state=u_star, lam=lam, grid=grid)
    rep = spectrum(spec, k=min(k, grid.size - 1))
    witnesses, residuals, orth = [], [], []
    for phi in rep.kernel_basis:
        psi = witness_from_kernel(grid, phi, u_star, lam)
        witnesses.append(psi)
        residuals.append(grid.norm_l2(-grid.laplacian(psi) - u_star * psi))
        orth.append(abs(grid.inner(psi, u_star)))
    return NondegeneracyVerdict(
        nondegenerate=rep.nondegenerate,
        kernel_dim=rep.kernel_dim,
        witnesses=np.array(witnesses).reshape(len(witnesses), *grid.shape),
        witness_residuals=residuals,
        witness_orthogonality=orth,
        spectrum=rep,
    )


# ---------- projector onto the kernel ----------
def projector_P(grid: TorusGrid, kernel_basis: Sequence[Field], f: Field) -> Field:
    out = np.zeros(grid.shape)
    for phi in kernel_basis:
        out += grid.inner(f, phi) * phi
    return out


def kernel_coordinates(grid: TorusGrid, kernel_basis: Sequence[Field], f: Field) -> np.ndarray:
    return np.array([grid.inner(f, phi) for phi in kernel_basis])


# ---------- coercivity of M on {int u* phi = 0} ----------
def _coercivity_ratio(grid: TorusGrid, spec: LinearOperatorSpec, phi: Field) -> float:
    denom = grid.norm_Vstar(apply(spec, phi))
    return float("inf") if denom == 0.0 else grid.norm_V(phi) / denom


def m_coercivity_constant(grid: TorusGrid, u_star: Field, lam: float, samples: int = 32,
                          rng: Optional[np.random.Generator] = None, k: int = 24) -> float:
    """Best C in ||phi||_V <= C ||M phi||_V* over phi with int u* phi = 0."""
    spec = LinearOperatorSpec(kind="M", base_state=u_star, lam=lam, grid=grid)

    if grid.size <= COERCIVITY_DENSE_MAX:
        c = _coercivity_dense(grid, spec)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        rep = spectrum(spec, k=min(k, grid.size))
        candidates = list(rep.eigenfields) + [grid.random_field(rng, modes=4) for _ in range(samples)]
        uu = grid.inner(u_star, u_star)
        c = 0.0
        for phi in candidates:
            phi = phi - grid.inner(u_star, phi) / uu * u_star
            if grid.norm_l2(phi) < 1e-8:
                continue
            c = max(c, _coercivity_ratio(grid, spec, phi))

    if not c <= DEGENERATE_CONSTANT:
        raise DegenerateState(f"coercivity constant of M exceeds {DEGENERATE_CONSTANT:.0e} (estimate {c:.3e})")
    return c


def _coercivity_dense(grid: TorusGrid, spec: LinearOperatorSpec) -> float:
    # C = 1 / min |T psi| over unit psi in q-perp,  T = S^{-1} M S^{-1},  S = (I - Delta)^{1/2},  q = S^{-1} u*
    n = grid.size
    basis = np.eye(n).reshape(n, *grid.shape)
    mult = 1.0 / np.sqrt(1.0 + grid.k2)
    s_inv = np.real(np.fft.ifft2(np.fft.fft2(basis, axes=(1, 2)) * mult, axes=(1, 2))).reshape(n, n).T
    s_inv = 0.5 * (s_inv + s_inv.T)
    m = assemble(spec)
    t = s_inv @ m @ s_inv
    q = s_inv @ spec.base_state.ravel()
    z = null_space(q[None, :])
    # dual norm sees all of T psi, including its q component
    smin = float(svdvals(t @ z).min())
    return float("inf") if smin == 0.0 else 1.0 / smin
