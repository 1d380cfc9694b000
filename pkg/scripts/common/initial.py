#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Initial data from named presets and mode lists (no expression language).

    constant                 v = 0
    constant+cos_x           v = A cos(2 pi x / a)
    constant+cos_x+sin_y     v = A (cos(2 pi x / a) + sin(2 pi y / b))

A mode list adds terms "kind:m:n:amp" separated by commas, e.g. "cos:1:0:0.1,sin:0:2:0.05".
Seeded low-pass noise is added last. w0 = v + log(lambda / int e^v), so int e^{w0} = lambda.
"""

import re
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from scripts.common.errors import ConfigError
from scripts.common.functionals import w_from_v
from scripts.common.torus import Field, TorusGrid

PRESETS = ("constant", "constant+cos_x", "constant+cos_x+sin_y", "modes")

_MODE_RE = re.compile(r"^(cos|sin):(-?\d+):(-?\d+):([-+0-9.eE]+)$")

Mode = Tuple[str, int, int, float]


def parse_modes(text: str) -> Tuple[Mode, ...]:
    if not text or not text.strip():
        return ()
    out = []
    for item in (s.strip() for s in text.split(",")):
        if not item:
            continue
        m = _MODE_RE.match(item)
        if not m:
            raise ConfigError(f"invalid mode '{item}' (expected kind:m:n:amp, kind in cos|sin)")
        out.append((m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))))
    return tuple(out)


@dataclass(frozen=True)
class InitialSpec:
    preset: str = "constant+cos_x"
    amplitude: float = 0.1
    modes: Tuple[Mode, ...] = ()
    noise_amplitude: float = 0.0
    noise_modes: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"initial.preset must be one of {', '.join(PRESETS)} (got {self.preset})")
        if self.noise_amplitude < 0:
            raise ConfigError("initial.noise_amplitude must be >= 0")
        if self.noise_modes < 1:
            raise ConfigError("initial.noise_modes must be >= 1")


def initial_potential(grid: TorusGrid, spec: InitialSpec) -> Field:
    """The zero-mean part v of the initial data."""
    v = np.zeros(grid.shape)
    if spec.preset in ("constant+cos_x", "constant+cos_x+sin_y"):
        v += spec.amplitude * grid.mode("cos", 1, 0)
    if spec.preset == "constant+cos_x+sin_y":
        v += spec.amplitude * grid.mode("sin", 0, 1)
    for kind, m, n, amp in spec.modes:
        if 2 * abs(m) >= grid.nx or 2 * abs(n) >= grid.ny:
            raise ConfigError(f"mode ({m},{n}) is not resolved on a {grid.nx}x{grid.ny} grid")
        v += amp * grid.mode(kind, m, n)
    if spec.noise_amplitude > 0:
        rng = np.random.default_rng(spec.seed)
        v += grid.random_field(rng, modes=spec.noise_modes, amplitude=spec.noise_amplitude)
    return grid.zero_mean(v)


def initial_state(grid: TorusGrid, lam: float, spec: InitialSpec) -> Field:
    return w_from_v(grid, initial_potential(grid, spec), lam)


def trivial_state(grid: TorusGrid, lam: float) -> Field:
    """w = log(lambda / |Omega|)."""
    return grid.constant(np.log(lam / grid.area))
