"""
Shared fixtures: small grids and one converged flagship trajectory.

The flagship case (a = b = 1, lambda = 8 pi, 0.1 cos(2 pi x)) relaxes to the
constant state with w-form rate pi/2 - 1 at any resolution that resolves the
first mode, so 16x16 is enough for the rate checks.
"""

from dataclasses import dataclass

import numpy as np
import pytest

from scripts.common.flow import FlowConfig, Trajectory, attach_reference, run_flow
from scripts.common.functionals import EIGHT_PI
from scripts.common.initial import InitialSpec, initial_state
from scripts.common.stationary import StationaryResult, solve_mean_field
from scripts.common.torus import TorusGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid16():
    return TorusGrid(a=1.0, b=1.0, nx=16, ny=16)


@pytest.fixture
def grid8():
    return TorusGrid(a=1.0, b=1.0, nx=8, ny=8)


@pytest.fixture
def degenerate_grid():
    """a=1, b=2: mu_1 = pi^2 = lambda/|Omega| at lambda = 2 pi^2."""
    return TorusGrid(a=1.0, b=2.0, nx=8, ny=16)


@dataclass
class FlagshipRun:
    grid: TorusGrid
    lam: float
    trajectory: Trajectory
    stationary: StationaryResult


@pytest.fixture(scope="session")
def flagship():
    grid = TorusGrid(a=1.0, b=1.0, nx=16, ny=16)
    lam = EIGHT_PI
    w0 = initial_state(grid, lam, InitialSpec(preset="constant+cos_x", amplitude=0.1))
    config = FlowConfig(dt_initial=1e-2, t_end=40.0, record_every=10, h_theta=0.5)
    traj = run_flow(grid, w0, lam, config, keep_snapshots=True)
    res = solve_mean_field(grid, traj.final.w - np.mean(traj.final.w), lam)
    attach_reference(traj, grid, res.w_star, lam, theta=0.5)
    return FlagshipRun(grid=grid, lam=lam, trajectory=traj, stationary=res)
