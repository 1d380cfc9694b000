#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Discrete flat torus  Omega = R^2 / (aZ x bZ)  with exact spectral calculus.

Fields are plain numpy arrays of shape (nx, ny), axis 0 = x, axis 1 = y
(meshgrid indexing='ij'). Spectral coefficients are normalized so that

    f(x) = sum_xi  fhat(xi) * exp(i xi.x),     fhat = fft2(f) / (nx*ny)

which gives  integral(f^2) = |Omega| * sum |fhat|^2  (Parseval).

First derivatives are never formed explicitly: the Dirichlet form is read off
the Laplacian multiplier, so the Nyquist row/column only enters through -|xi|^2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np

from scripts.common.errors import ConfigError, NonFiniteState

log = logging.getLogger(__name__)

# A Field is a real (nx, ny) array sampled on a TorusGrid.
Field = np.ndarray


@dataclass(frozen=True)
class TorusGrid:
    a: float = 1.0
    b: float = 1.0
    nx: int = 64
    ny: int = 64

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigError(f"side lengths must be positive (a={self.a}, b={self.b})")
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if int(n) != n or n < 4:
                raise ConfigError(f"{name}={n}: grid resolution must be an integer >= 4")
            if n % 2:
                raise ConfigError(f"{name}={n}: grid resolution must be even (Nyquist mode must be unambiguous)")

    # ---------- geometry ----------
    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> float:
        return self.a / self.nx

    @property
    def dy(self) -> float:
        return self.b / self.ny

    @property
    def h(self) -> float:
        return min(self.dx, self.dy)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return self.a * self.b

    @cached_property
    def xy(self) -> Tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    # ---------- wavevectors ----------
    @cached_property
    def kx1(self) -> np.ndarray:
        # 2*pi*m/a for m in the symmetric fft range
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)

    @cached_property
    def ky1(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)

    @cached_property
    def k2(self) -> np.ndarray:
        """|xi_mn|^2 = 4 pi^2 (m^2/a^2 + n^2/b^2)."""
        kx, ky = np.meshgrid(self.kx1, self.ky1, indexing="ij")
        return kx ** 2 + ky ** 2

    @cached_property
    def k2_inv(self) -> np.ndarray:
        out = np.zeros_like(self.k2)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @property
    def k2_max(self) -> float:
        return float(self.k2.max())

    def eigenvalue(self, m: int, n: int) -> float:
        """Eigenvalue of -Delta for the mode (m, n)."""
        return 4.0 * np.pi ** 2 * (m ** 2 / self.a ** 2 + n ** 2 / self.b ** 2)

    def first_eigenvalue(self) -> float:
        """mu_1: smallest nonzero eigenvalue of -Delta."""
        return self.eigenvalue(1, 0) if self.a >= self.b else self.eigenvalue(0, 1)

    # ---------- transforms ----------
    def coeffs(self, f: Field) -> np.ndarray:
        return np.fft.fft2(f) / self.size

    def from_coeffs(self, fhat: np.ndarray) -> Field:
        return np.real(np.fft.ifft2(fhat * self.size))

    # ---------- quadrature ----------
    def integral(self, f: Field) -> float:
        return float(np.sum(f) * self.cell_area)

    def mean(self, f: Field) -> float:
        return float(np.mean(f))

    def inner(self, f: Field, g: Field) -> float:
        return float(np.sum(f * g) * self.cell_area)

    def zero_mean(self, f: Field) -> Field:
        return f - np.mean(f)

    def spectral_square_integral(self, f: Field) -> float:
        """integral(f^2) evaluated on the spectral side."""
        return float(np.sum(np.abs(self.coeffs(f)) ** 2) * self.area)

    # ---------- differential operators ----------
    def laplacian(self, f: Field) -> Field:
        return self.from_coeffs(-self.k2 * self.coeffs(f))

    def inv_laplacian_zero_mean(self, f: Field) -> Field:
        """Zero-mean g with -Delta g = f - mean(f)."""
        return self.from_coeffs(self.k2_inv * self.coeffs(f))

    def dirichlet(self, f: Field) -> float:
        """||grad f||_2^2 = |Omega| * sum |xi|^2 |fhat|^2."""
        return float(np.sum(self.k2 * np.abs(self.coeffs(f)) ** 2) * self.area)

    def dirichlet_pair(self, f: Field, g: Field) -> float:
        """(grad f, grad g)_2."""
        return float(np.real(np.sum(self.k2 * self.coeffs(f) * np.conj(self.coeffs(g)))) * self.area)

    # ---------- norms ----------
    def norm_l2(self, f: Field) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def norm_V(self, f: Field) -> float:
        fh2 = np.abs(self.coeffs(f)) ** 2
        return float(np.sqrt(np.sum((1.0 + self.k2) * fh2) * self.area))

    def norm_Vstar(self, f: Field) -> float:
        # Riesz representative of the dual of V: multiplier 1/(1+|xi|^2)
        fh2 = np.abs(self.coeffs(f)) ** 2
        return float(np.sqrt(np.sum(fh2 / (1.0 + self.k2)) * self.area))

    # ---------- pointwise nonlinearities ----------
    @cached_property
    def padded_shape(self) -> Tuple[int, int]:
        # at least 3/2 of the grid, kept even so the padded grid is centred the same way
        return (self.nx + 2 * int(np.ceil(self.nx / 4)), self.ny + 2 * int(np.ceil(self.ny / 4)))

    def _pad(self, f: Field) -> np.ndarray:
        mx, my = self.padded_shape
        F = np.fft.fft2(f)
        F[self.nx // 2, :] = 0.0
        F[:, self.ny // 2] = 0.0
        px, py = (mx - self.nx) // 2, (my - self.ny) // 2
        G = np.zeros((mx, my), dtype=complex)
        G[px:px + self.nx, py:py + self.ny] = np.fft.fftshift(F)
        return np.real(np.fft.ifft2(np.fft.ifftshift(G))) * (mx * my) / self.size

    def _truncate(self, g: np.ndarray) -> Field:
        mx, my = self.padded_shape
        px, py = (mx - self.nx) // 2, (my - self.ny) // 2
        G = np.fft.fftshift(np.fft.fft2(g))
        F = np.fft.ifftshift(G[px:px + self.nx, py:py + self.ny]) * self.size / (mx * my)
        F[self.nx // 2, :] = 0.0
        F[:, self.ny // 2] = 0.0
        return np.real(np.fft.ifft2(F))

    def pointwise(self, fn: Callable[..., np.ndarray], *fields: Field, dealias: bool = False) -> Field:
        """fn(*fields) on the grid, or on a 3/2-padded grid and truncated back."""
        if not dealias:
            return fn(*fields)
        return self._truncate(fn(*(self._pad(f) for f in fields)))

    # ---------- field constructors ----------
    def constant(self, c: float) -> Field:
        return np.full(self.shape, float(c))

    def mode(self, kind: str, m: int, n: int) -> Field:
        x, y = self.xy
        phase = 2.0 * np.pi * (m * x / self.a + n * y / self.b)
        if kind == "cos":
            return np.cos(phase)
        if kind == "sin":
            return np.sin(phase)
        raise ConfigError(f"unknown mode kind '{kind}' (expected cos|sin)")

    def translate(self, f: Field, sx: float, sy: float) -> Field:
        """Spectral translation f(x - sx, y - sy)."""
        kx, ky = np.meshgrid(self.kx1, self.ky1, indexing="ij")
        shift = np.exp(-1j * (kx * sx + ky * sy))
        fh = self.coeffs(f)
        # a shifted Nyquist mode is not real-representable
        if sx:
            fh[self.nx // 2, :] = 0.0
        if sy:
            fh[:, self.ny // 2] = 0.0
        return self.from_coeffs(fh * shift)

    def random_field(self, rng: np.random.Generator, modes: int = 3, amplitude: float = 1.0,
                     zero_mean: bool = True) -> Field:
        """Seeded low-pass noise: random trig polynomial with |m|,|n| <= modes, scaled to max|f| = amplitude."""
        out = np.zeros(self.shape)
        for m in range(0, modes + 1):
            for n in range(-modes, modes + 1):
                if m == 0 and n <= 0:
                    continue
                c, s = rng.standard_normal(2)
                out += c * self.mode("cos", m, n) + s * self.mode("sin", m, n)
        if not zero_mean:
            out += rng.standard_normal()
        peak = float(np.max(np.abs(out)))
        return out * (amplitude / peak) if peak > 0 else out

    # ---------- dense assembly ----------
    def laplacian_matrix(self) -> np.ndarray:
        """Dense Delta acting on f.ravel() (row-major, x slow)."""
        d2x = np.real(np.fft.ifft(-(self.kx1 ** 2)[:, None] * np.fft.fft(np.eye(self.nx), axis=0), axis=0))
        d2y = np.real(np.fft.ifft(-(self.ky1 ** 2)[:, None] * np.fft.fft(np.eye(self.ny), axis=0), axis=0))
        return np.kron(d2x, np.eye(self.ny)) + np.kron(np.eye(self.nx), d2y)


def check_finite(f: Field, what: str = "field") -> None:
    if not np.all(np.isfinite(f)):
        raise NonFiniteState(f"{what} has non-finite values")


def describe(grid: TorusGrid, lam: Optional[float] = None) -> str:
    s = f"torus a={grid.a:g} b={grid.b:g} grid={grid.nx}x{grid.ny}"
    if lam is not None:
        s += f" lambda={lam:.6g} (lambda/|Omega|={lam / grid.area:.6g})"
    return s
