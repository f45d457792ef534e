import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmnls.dispersion import ConstantDispersion, DispersionMap
from dmnls.groundstate import critical_mass, exact_q_1d
from dmnls.linear import propagate_linear
from dmnls.reference import (
    BlowupProfile,
    blowup_seed_after_defocusing,
    gaussian_linear,
    next_period_start,
    pseudoconformal_field,
    zero_mean_averaged,
)
from dmnls.solver import BlowupTrigger, SolverConfig, evolve
from dmnls.spectral import Field, Grid, l2_norm

MAP = DispersionMap(1.0, 1.0, 0.5, 1.0)


def rel(a, b):
    return l2_norm(Field(a.grid, a.physical().values - b.physical().values)) / l2_norm(b)


@pytest.fixture(scope="module")
def wide():
    return Grid(1, 1024, 30.0)


class TestPseudoconformal:
    def test_initial_datum(self, q1d, grid1d):
        prof = BlowupProfile(a=1.3, gamma_plus=2.0, ground_state=q1d)
        v0 = pseudoconformal_field(prof, 0.0, grid1d).values
        x = grid1d.x
        expected = exact_q_1d(x / math.sqrt(2.0)) * np.exp(-1.3j * x ** 2 / 8.0)
        np.testing.assert_allclose(v0, expected, atol=1e-14)

    @pytest.mark.parametrize("gamma_plus", [0.5, 1.0, 2.0])
    def test_mass_is_constant(self, q1d, gamma_plus):
        fine = Grid(1, 4096, 30.0)
        prof = BlowupProfile(a=1.0, gamma_plus=gamma_plus, ground_state=q1d)
        expected = critical_mass(gamma_plus, q1d.mass, 1)
        assert math.isclose(prof.mass, expected)
        for t in (0.0, 0.2, 0.5, 0.8):
            assert l2_norm(pseudoconformal_field(prof, t, fine)) == pytest.approx(expected, rel=1e-8)

    def test_peak_scaling(self, q1d, wide):
        prof = BlowupProfile(a=2.0, gamma_plus=1.0, ground_state=q1d)
        qmax = 3 ** 0.25
        for t in (0.0, 0.1, 0.25, 0.4):
            peak = np.max(np.abs(pseudoconformal_field(prof, t, wide).values))
            assert peak == pytest.approx((1 - 2.0 * t) ** -0.5 * qmax, rel=1e-12)

    @pytest.mark.parametrize("t", [0.5, 0.7])
    def test_past_blowup_rejected(self, q1d, grid1d, t):
        prof = BlowupProfile(a=2.0, gamma_plus=1.0, ground_state=q1d)
        with pytest.raises(ValueError, match="blow-up time"):
            pseudoconformal_field(prof, t, grid1d)

    def test_invalid_parameters(self, q1d):
        with pytest.raises(ValueError):
            BlowupProfile(a=0.0, gamma_plus=1.0, ground_state=q1d)
        with pytest.raises(ValueError):
            BlowupProfile(a=1.0, gamma_plus=-1.0, ground_state=q1d)

    @pytest.mark.parametrize("gamma_plus", [1.0, 2.0])
    def test_solver_follows_closed_form(self, q1d, wide, gamma_plus):
        prof = BlowupProfile(a=1.0, gamma_plus=gamma_plus, ground_state=q1d)
        t_end = 0.5 / prof.a
        cfg = SolverConfig(dt_max=5e-4, p=5.0)
        u, _, report = evolve(pseudoconformal_field(prof, 0.0, wide),
                              ConstantDispersion(gamma_plus), 0.0, t_end, cfg)
        assert report is None
        assert rel(u, pseudoconformal_field(prof, t_end, wide)) < 1e-4

    def test_unscaled_opposite_chirp_is_not_a_solution(self, q1d, wide):
        # Q(sqrt(g) x / s) with a focusing-in chirp of the other sign drifts
        # away from the solver immediately once gamma_+ != 1.
        g, a, t_end = 2.0, 1.0, 0.2
        x = wide.x

        def candidate(t):
            s = 1 - a * t
            amp = s ** -0.5 * exact_q_1d(math.sqrt(g) * x / s)
            return Field(wide, amp * np.exp(1j * a * x ** 2 / (4 * s) + 1j * t / s))

        u, _, _ = evolve(candidate(0.0), ConstantDispersion(g), 0.0, t_end,
                         SolverConfig(dt_max=1e-3, p=5.0))
        assert rel(u, candidate(t_end)) > 0.1


class TestZeroMeanAveraged:
    def test_identity_at_t0(self, gaussian1d):
        out = zero_mean_averaged(gaussian1d, 1.2, 1.2, 3.0)
        np.testing.assert_array_equal(out.values, gaussian1d.values)

    @settings(max_examples=30, deadline=None)
    @given(t=st.floats(-5, 5), s=st.floats(-2, 2), p=st.floats(1.5, 5))
    def test_modulus_and_phase_advance(self, t, s, p):
        grid = Grid(1, 64, 5.0)
        phi = Field(grid, (1 + 0.5j) * np.exp(-grid.x ** 2))
        u = zero_mean_averaged(phi, t, 0.0, p).values
        v = zero_mean_averaged(phi, t + s, 0.0, p).values
        np.testing.assert_allclose(np.abs(u), np.abs(phi.values), rtol=1e-13, atol=1e-300)
        ratio = v / np.where(np.abs(u) > 1e-200, u, 1)
        expected = np.exp(1j * s * np.abs(phi.values) ** (p - 1))
        mask = np.abs(u) > 1e-100
        np.testing.assert_allclose(ratio[mask], expected[mask], atol=1e-10)

    def test_phase_ode_residual_is_second_order(self, gaussian1d):
        p, t = 3.0, 0.7

        def residual(h):
            up = zero_mean_averaged(gaussian1d, t + h, 0.0, p).values
            um = zero_mean_averaged(gaussian1d, t - h, 0.0, p).values
            u = zero_mean_averaged(gaussian1d, t, 0.0, p).values
            r = 1j * (up - um) / (2 * h) + np.abs(u) ** (p - 1) * u
            return l2_norm(Field(gaussian1d.grid, r))

        r1, r2 = residual(1e-2), residual(5e-3)
        assert r1 < 1e-3
        assert math.log2(r1 / r2) == pytest.approx(2.0, abs=0.05)


class TestGaussianLinear:
    def test_zero_gamma(self, grid1d):
        out = gaussian_linear(1.5, 0.0, grid1d)
        np.testing.assert_allclose(out.values, np.exp(-grid1d.x ** 2 / 4.5), atol=1e-15)

    @pytest.mark.parametrize("Gamma", [-1.0, 0.25, 0.8])
    def test_peak_amplitude(self, grid1d, Gamma):
        peak = np.max(np.abs(gaussian_linear(1.0, Gamma, grid1d).values))
        assert peak == pytest.approx((1 + 4 * Gamma ** 2) ** -0.25, rel=1e-12)

    @pytest.mark.parametrize("d,n,L", [(1, 256, 20.0), (2, 128, 20.0)])
    def test_matches_fourier_propagator(self, d, n, L):
        grid = Grid(d, n, L)
        phi = gaussian_linear(1.0, 0.0, grid)
        for Gamma in (-0.7, 0.3, 1.1):
            assert rel(propagate_linear(phi, Gamma), gaussian_linear(1.0, Gamma, grid)) < 1e-12

    def test_mass_independent_of_gamma(self):
        grid = Grid(1, 512, 40.0)
        m0 = l2_norm(gaussian_linear(0.8, 0.0, grid))
        for Gamma in (-2.0, 0.5, 2.0):
            assert l2_norm(gaussian_linear(0.8, Gamma, grid)) == pytest.approx(m0, rel=1e-12)

    def test_width_must_be_positive(self, grid1d):
        with pytest.raises(ValueError):
            gaussian_linear(0.0, 1.0, grid1d)


class TestBlowupSeed:
    @pytest.fixture(scope="class")
    @classmethod
    def setup(cls, q1d):
        grid = Grid(1, 1024, 20.0)
        prof = BlowupProfile(a=2.5, gamma_plus=1.0, ground_state=q1d)
        cfg = SolverConfig(dt_max=1e-3, p=5.0)
        seed = blowup_seed_after_defocusing(prof, MAP, 0.75, cfg, grid)
        return grid, prof, cfg, seed

    def test_next_period_start(self):
        m = MAP.with_epsilon(0.5)
        assert next_period_start(m, 0.3) == pytest.approx(0.5)
        assert next_period_start(m, 1.0) == 1.0
        assert next_period_start(m, 1.2) == pytest.approx(1.5)

    def test_forward_run_reaches_profile(self, setup):
        grid, prof, cfg, seed = setup
        quiet = cfg.replace(blowup_gradient_factor=math.inf)
        u, _, _ = evolve(seed, MAP, 0.75, 1.0, quiet)
        assert rel(u, pseudoconformal_field(prof, 0.0, grid)) < 1e-6

    def test_mass_is_critical(self, setup, q1d):
        _, prof, _, seed = setup
        assert l2_norm(seed) == pytest.approx(critical_mass(1.0, q1d.mass, 1), abs=1e-8)

    def test_seed_has_dispersed(self, setup):
        grid, prof, _, seed = setup
        assert rel(seed, pseudoconformal_field(prof, 0.0, grid)) > 0.05

    def test_blows_up_inside_next_focusing_piece(self, q1d):
        grid = Grid(1, 2048, 12.0)
        prof = BlowupProfile(a=2.5, gamma_plus=1.0, ground_state=q1d)
        # coarse grid: a lower growth factor keeps the check inside the resolved range
        cfg = SolverConfig(dt_max=1e-3, p=5.0, phase_step=0.01, blowup_gradient_factor=100.0)
        seed = blowup_seed_after_defocusing(prof, MAP, 0.75, cfg, grid)
        _, _, report = evolve(seed, MAP, 0.75, 2.0, cfg)
        assert report is not None
        assert report.trigger is BlowupTrigger.GradientGrowth
        assert 1.0 < report.detection_time < 1.0 + MAP.t_plus

    def test_rate_condition(self, q1d):
        slow = BlowupProfile(a=1.5, gamma_plus=1.0, ground_state=q1d)
        with pytest.raises(ValueError, match="rate condition"):
            blowup_seed_after_defocusing(slow, MAP, 0.75, SolverConfig(dt_max=1e-3, p=5.0))

    def test_focusing_start_rejected(self, q1d):
        prof = BlowupProfile(a=2.5, gamma_plus=1.0, ground_state=q1d)
        with pytest.raises(ValueError, match="focusing piece"):
            blowup_seed_after_defocusing(prof, MAP, 0.25, SolverConfig(dt_max=1e-3, p=5.0))

    def test_gamma_mismatch_rejected(self, q1d):
        prof = BlowupProfile(a=2.5, gamma_plus=2.0, ground_state=q1d)
        with pytest.raises(ValueError, match="gamma_plus"):
            blowup_seed_after_defocusing(prof, MAP, 0.75, SolverConfig(dt_max=1e-3, p=5.0))
