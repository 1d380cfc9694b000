"""
Tests for the energy functionals and changes of variables.
"""

import numpy as np
import pytest

from scripts.common.errors import NonPositiveDensity, NotZeroMean
from scripts.common.functionals import (
    EIGHT_PI,
    energy_E,
    energy_F,
    energy_gap,
    energy_J,
    first_variation_E,
    first_variation_J,
    functional_report,
    tmf_integral,
    u_from_v,
    w_from_u,
    w_from_v,
)
from scripts.common.initial import trivial_state
from scripts.common.linops import LinearOperatorSpec, apply


class TestChangeOfVariables:
    def test_u_from_v_has_mass_lambda(self, grid16, rng):
        v = grid16.random_field(rng, amplitude=2.0)
        u = u_from_v(grid16, v, EIGHT_PI)
        assert grid16.integral(u) == pytest.approx(EIGHT_PI, rel=1e-13)
        assert np.all(u > 0)

    def test_w_from_v_is_log_u(self, grid16, rng):
        v = grid16.random_field(rng, amplitude=2.0)
        np.testing.assert_allclose(w_from_v(grid16, v, 3.0), np.log(u_from_v(grid16, v, 3.0)), atol=1e-13)

    def test_large_potential_does_not_overflow(self, grid16):
        v = 800.0 * grid16.mode("cos", 1, 0)
        u = u_from_v(grid16, v, 1.0)
        assert np.all(np.isfinite(u))
        assert grid16.integral(u) == pytest.approx(1.0, rel=1e-12)

    def test_w_from_u_rejects_nonpositive(self, grid8):
        u = grid8.constant(1.0)
        u[0, 0] = 0.0
        with pytest.raises(NonPositiveDensity):
            w_from_u(u)


class TestEnergyE:
    def test_trivial_state_value(self, grid16):
        """E(log(lambda/|Omega|)) = lambda (log(lambda/|Omega|) - 1)."""
        lam = EIGHT_PI
        w = trivial_state(grid16, lam)
        assert energy_E(grid16, w, lam) == pytest.approx(lam * (np.log(lam / grid16.area) - 1.0), rel=1e-13)

    def test_trivial_state_is_critical(self, grid16):
        lam = EIGHT_PI
        dE = first_variation_E(grid16, trivial_state(grid16, lam), lam)
        assert grid16.norm_l2(dE) < 1e-9

    def test_first_variation_matches_difference_quotient(self, grid16, rng):
        lam = 5.0
        w = np.log(lam) + grid16.random_field(rng, amplitude=0.4)
        d = grid16.random_field(rng, zero_mean=False)
        h = 1e-5
        fd = (energy_E(grid16, w + h * d, lam) - energy_E(grid16, w - h * d, lam)) / (2 * h)
        assert fd == pytest.approx(grid16.inner(first_variation_E(grid16, w, lam), d), rel=1e-7, abs=1e-9)


    @pytest.mark.parametrize("bound", [1.0, 2.0])
    def test_first_variation_is_lipschitz_on_bounded_sets(self, grid16, rng, bound):
        """||dE(w1) - dE(w2)||_V* <= (1 + e^K) ||w1 - w2||_V when max|w_i| <= K."""
        lam = 5.0
        for _ in range(10):
            w1 = grid16.random_field(rng, modes=4, amplitude=bound, zero_mean=False)
            w2 = grid16.random_field(rng, modes=4, amplitude=bound, zero_mean=False)
            diff = first_variation_E(grid16, w1, lam) - first_variation_E(grid16, w2, lam)
            assert grid16.norm_Vstar(diff) <= (1.0 + np.exp(bound)) * grid16.norm_V(w1 - w2)

    def test_second_variation_is_L(self, grid16, rng):
        lam = 5.0
        w = np.log(lam) + grid16.random_field(rng, amplitude=0.4)
        phi = grid16.random_field(rng, zero_mean=False)
        h = 1e-3
        fd = (energy_E(grid16, w + h * phi, lam) - 2 * energy_E(grid16, w, lam)
              + energy_E(grid16, w - h * phi, lam)) / h ** 2
        L = LinearOperatorSpec(kind="L", base_state=w, lam=lam, grid=grid16)
        assert fd == pytest.approx(grid16.inner(apply(L, phi), phi), rel=1e-5)

class TestEnergyGap:
    def test_matches_plain_difference(self, grid16, rng):
        lam = EIGHT_PI
        w_ref = trivial_state(grid16, lam)
        w = w_ref + grid16.random_field(rng, amplitude=0.3)
        direct = energy_E(grid16, w, lam) - energy_E(grid16, w_ref, lam)
        assert energy_gap(grid16, w, w_ref, lam) == pytest.approx(direct, rel=1e-9)

    def test_survives_cancellation(self, grid16):
        """For h = eps cos(2 pi x) the gap is eps^2 (4 pi^2 - 8 pi) / 4 to leading order."""
        lam = EIGHT_PI
        eps = 1e-6
        w_ref = trivial_state(grid16, lam)
        gap = energy_gap(grid16, w_ref + eps * grid16.mode("cos", 1, 0), w_ref, lam)
        expected = eps ** 2 * (4 * np.pi ** 2 - EIGHT_PI) / 4.0
        assert gap == pytest.approx(expected, rel=1e-4)

    def test_zero_at_reference(self, grid16):
        w = trivial_state(grid16, 3.0)
        assert energy_gap(grid16, w, w, 3.0) == 0.0


class TestEnergiesFJ:
    def test_F_at_constant(self, grid16):
        lam = 4.0
        u = grid16.constant(lam / grid16.area)
        assert energy_F(grid16, u) == pytest.approx(lam * (np.log(lam) - 1.0), rel=1e-13)

    def test_F_rejects_nonpositive(self, grid8):
        with pytest.raises(NonPositiveDensity):
            energy_F(grid8, grid8.constant(-1.0))

    def test_J_at_zero(self, grid16):
        """J(0) = -lambda log |Omega| = 0 on the unit torus."""
        assert energy_J(grid16, grid16.constant(0.0), EIGHT_PI) == pytest.approx(0.0, abs=1e-13)

    def test_J_requires_zero_mean(self, grid8):
        with pytest.raises(NotZeroMean):
            energy_J(grid8, grid8.constant(0.0) + grid8.mode("cos", 1, 0) + 0.5, 1.0)

    def test_first_variation_J_matches_difference_quotient(self, grid16, rng):
        lam = EIGHT_PI
        v = grid16.random_field(rng, amplitude=0.5)
        d = grid16.random_field(rng)
        h = 1e-5
        fd = (energy_J(grid16, v + h * d, lam) - energy_J(grid16, v - h * d, lam)) / (2 * h)
        assert fd == pytest.approx(grid16.inner(first_variation_J(grid16, v, lam), d), rel=1e-6, abs=1e-8)

    def test_second_variation_J_is_B(self, grid16, rng):
        lam = EIGHT_PI
        v = grid16.random_field(rng, amplitude=0.5)
        phi = grid16.random_field(rng, modes=4)
        h = 1e-3
        fd = (energy_J(grid16, v + h * phi, lam) - 2 * energy_J(grid16, v, lam)
              + energy_J(grid16, v - h * phi, lam)) / h ** 2
        B = LinearOperatorSpec(kind="B", base_state=u_from_v(grid16, v, lam), lam=lam, grid=grid16)
        assert fd == pytest.approx(grid16.inner(apply(B, phi), phi), rel=1e-5)

    def test_J_is_invariant_under_grid_shifts(self, grid16, rng):
        lam = EIGHT_PI
        v = grid16.random_field(rng, modes=3)
        shifted = np.roll(v, (3, 5), axis=(0, 1))
        assert energy_J(grid16, shifted, lam) == pytest.approx(energy_J(grid16, v, lam), rel=1e-13)

    def test_J_is_invariant_under_translation(self, grid16, rng):
        lam = EIGHT_PI
        v = grid16.random_field(rng, modes=2, amplitude=0.3)
        moved = grid16.translate(v, 0.3, 0.17)
        assert energy_J(grid16, moved, lam) == pytest.approx(energy_J(grid16, v, lam), rel=1e-9)

    def test_zero_potential_solves_mean_field(self, grid16):
        assert grid16.norm_l2(first_variation_J(grid16, grid16.constant(0.0), 3.0)) < 1e-13


class TestDiagnostics:
    def test_tmf_of_zero_is_area(self, grid8):
        assert tmf_integral(grid8, grid8.constant(0.0)) == pytest.approx(grid8.area)

    def test_tmf_of_mode_is_finite(self, grid16):
        value = tmf_integral(grid16, grid16.mode("cos", 1, 0))
        assert np.isfinite(value) and value > grid16.area

    def test_report(self, grid16):
        lam = EIGHT_PI
        rep = functional_report(grid16, trivial_state(grid16, lam), lam).as_dict()
        assert set(rep) == {"energy_E", "energy_F", "energy_J", "grad_E_l2", "grad_E_Vstar", "mass"}
        assert rep["mass"] == pytest.approx(lam)
        assert rep["grad_E_l2"] < 1e-10
