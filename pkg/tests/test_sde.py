"""Particle integrators: reproducibility across seeds and thread counts,
free-diffusion and gradient-flow limits, inverse-CDF sampling, reflection,
controlled runs with Girsanov bookkeeping, and marginal extraction.
"""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroflow import (ConfigError, ControlPolicy, CoverageError,
                       SimulationError, build_lambda, build_score,
                       builtin_potential, empirical_marginal,
                       ensemble_summary, gaussian_slice, integrate,
                       sample_from_slice, shift_times, simulate_forward,
                       simulate_reversed, simulate_second_forward,
                       solve_fokker_planck, total_variation,
                       write_ensemble_json, write_paths_csv)


@pytest.fixture(scope="module")
def reversal(ou, ou_field):
    """Score field plus the continuation solve used by reversal tests."""
    pot, grid, gibbs, _ = ou
    sf = build_score(ou_field, gibbs)
    leg2 = solve_fokker_planck(pot, ou_field.slices[-1], grid, 0.5,
                               grid.h ** 2)
    return sf, leg2


class TestForwardIntegrator:
    def test_free_diffusion_spreads_linearly(self):
        pot = builtin_potential("zero")
        ens = simulate_forward(pot, 0.0, 40_000, 0.25, 1e-3, seed=11)
        x = ens.final_states
        assert abs(x.mean()) < 0.012
        assert x.var() == pytest.approx(0.25, abs=0.012)

    def test_zero_noise_recovers_gradient_flow(self, ou):
        pot, _, _, _ = ou
        ens = simulate_forward(pot, 2.0, 8, 0.5, 1e-4, seed=0,
                               noise_scale=0.0)
        np.testing.assert_allclose(ens.final_states,
                                   2.0 * np.exp(-0.5), atol=2e-4)

    def test_same_seed_same_paths_any_thread_count(self, ou):
        pot, _, _, _ = ou
        runs = [simulate_forward(pot, 1.0, 500, 0.2, 1e-3, seed=7,
                                 threads=k) for k in (1, 4)]
        np.testing.assert_array_equal(runs[0].states, runs[1].states)
        other = simulate_forward(pot, 1.0, 500, 0.2, 1e-3, seed=8)
        assert not np.array_equal(runs[0].states, other.states)

    def test_reflection_confines_paths(self):
        pot = builtin_potential("zero")
        ens = simulate_forward(pot, 0.0, 2000, 1.0, 1e-2, seed=3,
                               domain=(-0.5, 0.5))
        assert np.all(np.abs(ens.states) <= 0.5)
        assert np.max(np.abs(ens.final_states)) > 0.4

    def test_recording_plan(self, ou):
        pot, _, _, _ = ou
        sparse = simulate_forward(pot, 0.0, 4, 0.5, 1e-3, seed=1,
                                  record_every=10 ** 9)
        assert sparse.times[0] == 0.0
        assert sparse.times[-1] == pytest.approx(0.5)
        assert sparse.times.size == 2
        dense = simulate_forward(pot, 0.0, 4, 0.5, 1e-3, seed=1,
                                 record_every=100)
        assert dense.times.size == 6  # multiples of 100 out of 500 steps

    def test_init_forms_and_validation(self, ou):
        pot, grid, gibbs, _ = ou
        samples = np.linspace(-1.0, 1.0, 16)
        ens = simulate_forward(pot, samples, 16, 0.1, 1e-3, seed=2)
        np.testing.assert_array_equal(ens.states[:, 0], samples)
        drawn = simulate_forward(pot, (grid, gibbs.values, 16), 16, 0.1,
                                 1e-3, seed=2)
        assert drawn.particles == 16
        with pytest.raises(ConfigError):
            simulate_forward(pot, samples, 8, 0.1, 1e-3, seed=2)
        with pytest.raises(ConfigError):
            simulate_forward(pot, samples.reshape(4, 4), 16, 0.1, 1e-3, seed=2)
        with pytest.raises(SimulationError):
            simulate_forward(pot, np.array([0.0, np.nan]), 2, 0.1, 1e-3, seed=2)
        with pytest.raises(ConfigError):
            simulate_forward(pot, 0.0, 0, 0.1, 1e-3, seed=2)
        with pytest.raises(ConfigError):
            simulate_forward(pot, 0.0, 4, 0.1, -1e-3, seed=2)


class TestSliceSampling:
    def test_quantiles_match_gaussian(self, ou):
        _, grid, _, p0 = ou
        from scipy.stats import norm
        u = np.linspace(0.01, 0.99, 99)
        x = sample_from_slice(grid, p0, u)
        np.testing.assert_allclose(x, norm.ppf(u, loc=1.0, scale=1.0),
                                   atol=2e-3)

    @given(mean=st.floats(-2.0, 2.0), var=st.floats(0.25, 2.0))
    @settings(max_examples=25, deadline=None)
    def test_inverse_cdf_is_monotone_and_bounded(self, mean, var):
        from entroflow import Grid
        grid = Grid(-8.0, 8.0, 256)
        values = gaussian_slice(grid, mean, var)
        u = np.linspace(1e-3, 1.0 - 1e-3, 41)
        x = sample_from_slice(grid, values, u)
        assert np.all(np.diff(x) >= 0)
        assert np.all((x >= grid.lower) & (x <= grid.upper))


class TestControlledRuns:
    def test_optimal_reversal_continues_forward_flow(self, ou, ou_field,
                                                     reversal):
        pot, grid, _, _ = ou
        sf, leg2 = reversal
        ens = simulate_reversed(pot, sf, ControlPolicy("score_optimal"),
                                (grid, ou_field.slices[-1], 20_000),
                                0.5, 1e-3, seed=5)
        hist = empirical_marginal(ens, 0.5, grid)
        assert total_variation(hist, leg2.slices[-1], grid) < 0.05
        assert np.all(ens.energy > 0)

    def test_uncontrolled_reversal_has_unit_weight(self, ou, ou_field,
                                                   reversal):
        pot, grid, _, _ = ou
        sf, _ = reversal
        ens = simulate_reversed(pot, sf, ControlPolicy("zero"),
                                (grid, ou_field.slices[-1], 512),
                                0.5, 1e-3, seed=5)
        assert np.all(ens.log_weight == 0.0)
        assert np.all(ens.energy == 0.0)
        assert np.all(ens.gap > 0.0)

    def test_perturbed_weight_has_unit_mean(self, ou, ou_field, reversal):
        pot, grid, _, _ = ou
        sf, _ = reversal
        policy = ControlPolicy("perturbed", lambda t, x: 0.3)
        ens = simulate_reversed(pot, sf, policy,
                                (grid, ou_field.slices[-1], 20_000),
                                0.5, 1e-3, seed=13)
        z = np.exp(ens.final_log_weight)
        se = z.std(ddof=1) / np.sqrt(z.size)
        assert abs(z.mean() - 1.0) < 3.0 * se

    def test_reversed_runs_are_thread_invariant(self, ou, ou_field, reversal):
        pot, grid, _, _ = ou
        sf, _ = reversal
        policy = ControlPolicy("perturbed", lambda t, x: 0.2)
        runs = [simulate_reversed(pot, sf, policy,
                                  (grid, ou_field.slices[-1], 600),
                                  0.5, 1e-3, seed=21, threads=k)
                for k in (1, 3)]
        np.testing.assert_array_equal(runs[0].states, runs[1].states)
        np.testing.assert_array_equal(runs[0].log_weight, runs[1].log_weight)

    def test_second_stage_accepts_only_lambda_fields(self, ou, reversal):
        pot, grid, gibbs, _ = ou
        sf, leg2 = reversal
        lf = build_lambda(shift_times(leg2, 0.5), gibbs, 0.5)
        with pytest.raises(ConfigError):
            simulate_second_forward(pot, sf, ControlPolicy("zero"),
                                    0.0, 0.5, 1e-3, seed=1)
        with pytest.raises(ConfigError):
            simulate_second_forward(pot, lf, ControlPolicy("score_optimal"),
                                    0.0, 0.5, 1e-3, seed=1)
        with pytest.raises(ConfigError):
            simulate_reversed(pot, sf, ControlPolicy("lambda_optimal"),
                              0.0, 0.5, 1e-3, seed=1)
        ens = simulate_second_forward(pot, lf,
                                      ControlPolicy("lambda_optimal"),
                                      (grid, leg2.slices[-1], 256),
                                      0.5, 1e-3, seed=1)
        assert ens.direction == "forward"

    def test_horizon_beyond_field_coverage(self, ou, reversal):
        pot, _, _, _ = ou
        sf, _ = reversal
        with pytest.raises(CoverageError):
            simulate_reversed(pot, sf, ControlPolicy("zero"), 0.0, 0.6,
                              1e-3, seed=1)

    def test_tight_clip_is_counted(self, ou, ou_field, reversal):
        pot, grid, _, _ = ou
        sf, _ = reversal
        ens = simulate_reversed(pot, sf, ControlPolicy("zero"),
                                (grid, ou_field.slices[-1], 256),
                                0.5, 1e-3, seed=9, clip_max=1e-3)
        assert ens.diagnostics["score_clipped"] > 0

    def test_policy_validation(self):
        with pytest.raises(ConfigError):
            ControlPolicy("sideways")
        with pytest.raises(ConfigError):
            ControlPolicy("perturbed")
        with pytest.raises(ConfigError):
            ControlPolicy("zero", bound=0.0)

    def test_callback_must_stay_finite(self, ou, ou_field, reversal):
        pot, grid, _, _ = ou
        sf, _ = reversal
        policy = ControlPolicy("custom", lambda t, x: np.full_like(x, np.nan))
        with pytest.raises(SimulationError):
            simulate_reversed(pot, sf, policy,
                              (grid, ou_field.slices[-1], 8),
                              0.5, 1e-3, seed=1)


class TestMarginalsAndOutput:
    def test_empirical_marginal_integrates_to_one(self, ou):
        pot, grid, _, _ = ou
        ens = simulate_forward(pot, 0.0, 5000, 0.2, 1e-3, seed=4)
        hist = empirical_marginal(ens, 0.2, grid)
        assert integrate(grid, hist) == pytest.approx(1.0, abs=1e-9)

    def test_unrecorded_time_is_an_error(self, ou):
        pot, _, _, _ = ou
        ens = simulate_forward(pot, 0.0, 8, 0.2, 1e-3, seed=4)
        with pytest.raises(CoverageError):
            ens.index_of(0.12345)

    def test_summary_and_json_round_trip(self, ou, tmp_path):
        pot, grid, _, _ = ou
        ens = simulate_forward(pot, 0.0, 64, 0.2, 1e-3, seed=4)
        summary = ensemble_summary(ens, grid)
        assert summary["particles"] == 64
        assert summary["direction"] == "forward"
        assert len(summary["histograms"]) == len(summary["times"])
        path = tmp_path / "ens.json"
        write_ensemble_json(ens, grid, path)
        assert json.loads(path.read_text()) == summary

    def test_paths_csv_has_one_row_per_state(self, ou, tmp_path):
        pot, _, _, _ = ou
        ens = simulate_forward(pot, 0.0, 5, 0.2, 1e-3, seed=4,
                               record_every=50)
        path = tmp_path / "paths.csv"
        write_paths_csv(ens, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "particle,t,x,log_weight"
        assert len(lines) == 1 + 5 * ens.times.size
