#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Exception hierarchy for the torus flow lab.

Entry points map these to exit codes:
  ConfigError            -> 2
  any other TorusLabError -> 3
"""

from typing import Optional


class TorusLabError(Exception):
    """Root of every failure raised by scripts.common.*"""


class ConfigError(TorusLabError, ValueError):
    pass


# ---------- densities / fields ----------
class NonPositiveDensity(TorusLabError):
    def __init__(self, min_value: float):
        super().__init__(f"density must be positive (min u = {min_value:.3e})")
        self.min_value = min_value


class NotZeroMean(TorusLabError):
    def __init__(self, mean_value: float):
        super().__init__(f"field must have zero mean (mean = {mean_value:.3e})")
        self.mean_value = mean_value


class NonFiniteState(TorusLabError):
    pass


# ---------- time stepping ----------
class StepRejected(TorusLabError):
    """Raised by flow.step; the caller halves dt and retries."""

    def __init__(self, reason: str, dt: Optional[float] = None):
        msg = f"step rejected: {reason}"
        if dt is not None:
            msg += f" (dt={dt:.3e})"
        super().__init__(msg)
        self.reason = reason
        self.dt = dt


class PositivityLost(TorusLabError):
    pass


# ---------- nonlinear / linear solves ----------
class NewtonDiverged(TorusLabError):
    pass


class SingularJacobian(TorusLabError):
    pass


class EigsNotConverged(TorusLabError):
    pass


class DegenerateState(TorusLabError):
    pass


class ChartExceeded(TorusLabError):
    pass


# ---------- post-processing ----------
class InsufficientData(TorusLabError):
    pass


class NonMonotoneEnergy(TorusLabError):
    pass
