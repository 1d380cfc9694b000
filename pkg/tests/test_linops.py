"""
Tests for the linearized operators L, B, M: matrix-free application against
the dense matrices, spectra at the constant state, the nondegeneracy verdict
and the coercivity constant of M.
"""

import numpy as np
import pytest

from scripts.common.errors import ConfigError, DegenerateState, NonPositiveDensity
from scripts.common.functionals import EIGHT_PI, u_from_v
from scripts.common.initial import trivial_state
from scripts.common.linops import (
    DENSE_MAX,
    LinearOperatorSpec,
    apply,
    assemble,
    kernel_threshold,
    m_coercivity_constant,
    nondegeneracy_check,
    phi_from_witness,
    projector_P,
    smallest_singular_value,
    spectrum,
    witness_from_kernel,
)
from scripts.common.manifold import build_chart
from scripts.common.torus import TorusGrid

# 4 pi^2 - 8 pi: first nonzero Laplace eigenvalue of the unit square minus u* = 8 pi
TRIVIAL_B_LOWEST = 4 * np.pi ** 2 - EIGHT_PI
DEGENERATE_LAMBDA = 2.0 * np.pi ** 2


def _spec(kind, grid, lam, u):
    return LinearOperatorSpec(kind=kind, base_state=np.log(u) if kind == "L" else u, lam=lam, grid=grid)


class TestApplyAndAssemble:
    @pytest.mark.parametrize("kind", ["L", "B", "M"])
    def test_matrix_free_matches_dense(self, grid8, rng, kind):
        lam = 7.0
        u = u_from_v(grid8, grid8.random_field(rng, amplitude=0.5), lam)
        spec = _spec(kind, grid8, lam, u)
        phi = grid8.random_field(rng, modes=3)
        np.testing.assert_allclose(assemble(spec) @ phi.ravel(), apply(spec, phi).ravel(), atol=1e-10)

    def test_B_ignores_constants(self, grid8, rng):
        lam = 7.0
        spec = _spec("B", grid8, lam, u_from_v(grid8, grid8.random_field(rng), lam))
        phi = grid8.random_field(rng)
        np.testing.assert_allclose(apply(spec, phi + 3.0), apply(spec, phi), atol=1e-12)
        assert abs(np.mean(apply(spec, phi))) < 1e-13

    def test_assembled_matrices_are_symmetric(self, grid8, rng):
        lam = 7.0
        u = u_from_v(grid8, grid8.random_field(rng), lam)
        for kind in ("L", "B", "M"):
            A = assemble(_spec(kind, grid8, lam, u))
            np.testing.assert_array_equal(A, A.T)

    def test_spec_validation(self, grid8):
        u = grid8.constant(1.0)
        with pytest.raises(ConfigError, match="kind"):
            LinearOperatorSpec(kind="K", base_state=u, lam=1.0, grid=grid8)
        u[2, 3] = -0.5
        with pytest.raises(NonPositiveDensity):
            LinearOperatorSpec(kind="B", base_state=u, lam=1.0, grid=grid8)
        # L takes the log-density, so negative entries are fine
        LinearOperatorSpec(kind="L", base_state=u, lam=1.0, grid=grid8)


class TestSpectrum:
    def test_B_at_constant_state(self, grid16):
        """On the unit square the lowest B eigenvalue at u* = 8 pi is 4 pi^2 - 8 pi, four-fold."""
        lam = EIGHT_PI
        spec = LinearOperatorSpec.at("B", grid16, trivial_state(grid16, lam), lam)
        rep = spectrum(spec, k=5)
        np.testing.assert_allclose(rep.eigenvalues[:4], TRIVIAL_B_LOWEST, atol=1e-6)
        assert rep.eigenvalues[4] == pytest.approx(8 * np.pi ** 2 - EIGHT_PI, abs=1e-6)
        assert rep.nondegenerate
        assert rep.kernel_dim == 0
        assert rep.as_dict()["method"] == "dense"

    def test_L_sees_the_constant_direction(self, grid16):
        lam = EIGHT_PI
        rep = spectrum(LinearOperatorSpec.at("L", grid16, trivial_state(grid16, lam), lam), k=2)
        assert rep.eigenvalues[0] == pytest.approx(-lam, abs=1e-8)
        assert rep.eigenvalues[1] == pytest.approx(TRIVIAL_B_LOWEST, abs=1e-6)

    def test_eigenfields_are_orthonormal(self, grid8, rng):
        lam = 7.0
        spec = _spec("B", grid8, lam, u_from_v(grid8, grid8.random_field(rng), lam))
        rep = spectrum(spec, k=6)
        gram = np.array([[grid8.inner(a, b) for b in rep.eigenfields] for a in rep.eigenfields])
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-10)
        for val, phi in zip(rep.eigenvalues, rep.eigenfields):
            np.testing.assert_allclose(apply(spec, phi), val * phi, atol=1e-8)

    def test_iterative_matches_dense(self, grid8, rng):
        lam = 7.0
        spec = _spec("B", grid8, lam, u_from_v(grid8, grid8.random_field(rng, amplitude=0.8), lam))
        dense = spectrum(spec, k=4)
        iterative = spectrum(spec, k=4, dense_max=0)
        assert iterative.method == "eigsh"
        np.testing.assert_allclose(iterative.eigenvalues, dense.eigenvalues, rtol=1e-7, atol=1e-9)

    @pytest.mark.parametrize("k", [0, 64])
    def test_k_out_of_range(self, grid8, k):
        """B lives on the zero-mean subspace, so an 8x8 grid supports at most 63 eigenpairs."""
        spec = LinearOperatorSpec.at("B", grid8, trivial_state(grid8, 3.0), 3.0)
        with pytest.raises(ConfigError, match="eigenpairs"):
            spectrum(spec, k=k)

    def test_smallest_singular_value_at_constant_state(self, grid16):
        lam = EIGHT_PI
        smin, morse = smallest_singular_value(grid16, np.exp(trivial_state(grid16, lam)), lam)
        assert smin == pytest.approx(TRIVIAL_B_LOWEST, abs=1e-6)
        assert morse == 0

    def test_morse_index_above_critical_lambda(self, grid8):
        lam = 50.0
        _, morse = smallest_singular_value(grid8, np.exp(trivial_state(grid8, lam)), lam)
        assert morse == 4


class TestNondegeneracy:
    def test_constant_state_is_nondegenerate(self, grid16):
        lam = EIGHT_PI
        verdict = nondegeneracy_check(grid16, np.exp(trivial_state(grid16, lam)), lam)
        assert verdict.nondegenerate
        assert verdict.witnesses.shape == (0, 16, 16)

    def test_two_dimensional_kernel_on_rectangle(self, degenerate_grid):
        lam = DEGENERATE_LAMBDA
        u_star = np.exp(trivial_state(degenerate_grid, lam))
        verdict = nondegeneracy_check(degenerate_grid, u_star, lam)
        assert not verdict.nondegenerate
        assert verdict.kernel_dim == 2
        assert max(verdict.witness_residuals) <= 1e-8
        assert max(verdict.witness_orthogonality) <= 1e-8
        spec = LinearOperatorSpec(kind="B", base_state=u_star, lam=lam, grid=degenerate_grid)
        for psi in verdict.witnesses:
            phi = phi_from_witness(psi)
            assert degenerate_grid.norm_l2(apply(spec, phi)) <= 1e-8
            np.testing.assert_allclose(witness_from_kernel(degenerate_grid, phi, u_star, lam), psi, atol=1e-10)

    def test_projector_is_idempotent(self, degenerate_grid, rng):
        lam = DEGENERATE_LAMBDA
        basis = nondegeneracy_check(degenerate_grid, np.exp(trivial_state(degenerate_grid, lam)), lam).spectrum.kernel_basis
        f = degenerate_grid.random_field(rng, modes=3)
        Pf = projector_P(degenerate_grid, basis, f)
        np.testing.assert_allclose(projector_P(degenerate_grid, basis, Pf), Pf, atol=1e-12)
        # cos(pi y) spans half the kernel
        g = degenerate_grid.mode("cos", 0, 1)
        np.testing.assert_allclose(projector_P(degenerate_grid, basis, g), g, atol=1e-10)


class TestCoercivity:
    def test_constant_state_value(self, grid8):
        """C = (1 + 4 pi^2) / (4 pi^2 - 8 pi): the first mode is the worst V -> V* ratio."""
        lam = EIGHT_PI
        c = m_coercivity_constant(grid8, np.exp(trivial_state(grid8, lam)), lam)
        assert c == pytest.approx((1 + 4 * np.pi ** 2) / TRIVIAL_B_LOWEST, rel=1e-8)

    def test_bounds_every_constrained_ratio(self, grid8, rng):
        """At a non-constant u* no phi with int u* phi = 0 beats C; the sampled estimate stays below it."""
        lam = 7.0
        u_star = u_from_v(grid8, grid8.random_field(rng, amplitude=0.8), lam)
        spec = LinearOperatorSpec(kind="M", base_state=u_star, lam=lam, grid=grid8)
        c = m_coercivity_constant(grid8, u_star, lam)
        uu = grid8.inner(u_star, u_star)
        for _ in range(50):
            phi = grid8.random_field(rng, modes=3, zero_mean=False)
            phi = phi - grid8.inner(u_star, phi) / uu * u_star
            ratio = grid8.norm_V(phi) / grid8.norm_Vstar(apply(spec, phi))
            assert ratio <= c * (1.0 + 1e-9)

    def test_sampled_estimate_is_a_lower_bound(self, grid8, rng, monkeypatch):
        lam = 7.0
        u_star = u_from_v(grid8, grid8.random_field(rng, amplitude=0.8), lam)
        exact = m_coercivity_constant(grid8, u_star, lam)
        monkeypatch.setattr("scripts.common.linops.COERCIVITY_DENSE_MAX", 0)
        sampled = m_coercivity_constant(grid8, u_star, lam, k=12)
        assert 0.0 < sampled <= exact * (1.0 + 1e-9)

    def test_degenerate_state_raises(self, degenerate_grid):
        lam = DEGENERATE_LAMBDA
        with pytest.raises(DegenerateState):
            m_coercivity_constant(degenerate_grid, np.exp(trivial_state(degenerate_grid, lam)), lam)


@pytest.fixture
def strip_grid():
    """a=1, b=2/(25 pi): lambda/|Omega| = 100 pi^2 = (2 pi 5)^2 at lambda = 8 pi.

    At the constant state the modes m = 1..4 along x are unstable (eight negative
    eigenvalues of B) and cos/sin(10 pi x) span a kernel that sits above them.
    """
    return TorusGrid(a=1.0, b=2.0 / (25.0 * np.pi), nx=16, ny=4)


class TestKernelAboveLowestEigenvalues:
    @pytest.mark.parametrize("dense_max", [DENSE_MAX, 0])
    def test_spectrum_finds_kernel(self, strip_grid, dense_max):
        lam = EIGHT_PI
        spec = LinearOperatorSpec.at("B", strip_grid, trivial_state(strip_grid, lam), lam)
        rep = spectrum(spec, k=4, dense_max=dense_max)
        assert np.all(rep.eigenvalues < 0)
        assert rep.kernel_dim == 2
        assert not rep.nondegenerate
        assert rep.morse_index == 8
        assert rep.smallest_abs_eigenvalue < rep.threshold
        for phi in rep.kernel_basis:
            assert strip_grid.norm_l2(apply(spec, phi)) <= 1e-6

    def test_kernel_is_the_fifth_mode(self, strip_grid):
        lam = EIGHT_PI
        spec = LinearOperatorSpec.at("B", strip_grid, trivial_state(strip_grid, lam), lam)
        assert strip_grid.norm_l2(apply(spec, strip_grid.mode("cos", 5, 0))) <= 1e-8
        basis = spectrum(spec, k=8).kernel_basis
        g = strip_grid.mode("sin", 5, 0)
        np.testing.assert_allclose(projector_P(strip_grid, basis, g), g, atol=1e-8)

    def test_nondegeneracy_check(self, strip_grid):
        lam = EIGHT_PI
        verdict = nondegeneracy_check(strip_grid, np.exp(trivial_state(strip_grid, lam)), lam)
        assert not verdict.nondegenerate
        assert verdict.kernel_dim == 2

    @pytest.mark.parametrize("dense_max", [DENSE_MAX, 0])
    def test_smallest_singular_value(self, strip_grid, dense_max):
        lam = EIGHT_PI
        smin, morse = smallest_singular_value(strip_grid, np.exp(trivial_state(strip_grid, lam)), lam,
                                              dense_max=dense_max)
        assert smin < kernel_threshold(strip_grid, lam)
        assert morse == 8

    def test_chart_sees_kernel(self, strip_grid):
        lam = EIGHT_PI
        chart = build_chart(strip_grid, trivial_state(strip_grid, lam), lam)
        assert chart.kernel_dim == 2
