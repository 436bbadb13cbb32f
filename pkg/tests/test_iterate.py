"""Alternating-stage iteration toward the Gibbs law and the long-run
occupation average: per-stage entropies against the Gaussian closed form,
Monte Carlo probes landing on the next stage's entropy, early stopping, and
trace serialization.
"""
import math

import numpy as np
import pytest

from entroflow import (ConfigError, ergodic_occupation, run_iteration,
                       write_trace_csv)
from oracle_values import ou_entropy


class TestIteration:
    def test_stage_entropies_follow_closed_form(self, ou):
        pot, _, gibbs, p0 = ou
        result = run_iteration(pot, gibbs, p0, 0.5, 3, particles=0)
        assert len(result) == 3
        for row in result:
            assert row.entropy_at_stage == pytest.approx(
                ou_entropy(0.5 * row.stage), rel=5e-3)
            assert math.isnan(row.cost_value)
        assert result.final_entropy == pytest.approx(ou_entropy(1.5),
                                                     rel=5e-3)
        assert not result.stopped_early

    def test_directions_alternate_and_entropy_decreases(self, ou):
        pot, _, gibbs, p0 = ou
        result = run_iteration(pot, gibbs, p0, 0.5, 3, particles=0)
        assert [row.direction for row in result] == ["forward", "backward",
                                                     "forward"]
        entropies = [row.entropy_at_stage for row in result]
        tvs = [row.tv_at_stage for row in result]
        assert all(b < a for a, b in zip(entropies, entropies[1:]))
        assert all(b <= a for a, b in zip(tvs, tvs[1:]))

    def test_probe_costs_land_on_next_entropy(self, ou):
        pot, _, gibbs, p0 = ou
        result = run_iteration(pot, gibbs, p0, 0.5, 2, particles=20_000,
                               seed=42, verify_stages=(0, 1))
        for row, target in zip(result, (ou_entropy(0.5), ou_entropy(1.0))):
            assert row.cost_se < 0.02
            assert row.cost_value == pytest.approx(
                target, abs=4.0 * row.cost_se + 0.002)

    def test_unverified_stages_skip_the_probe(self, ou):
        pot, _, gibbs, p0 = ou
        result = run_iteration(pot, gibbs, p0, 0.5, 2, particles=500,
                               verify_stages=(1,))
        assert math.isnan(result[0].cost_value)
        assert not math.isnan(result[1].cost_value)

    def test_stop_below_halts_early(self, ou):
        pot, _, gibbs, p0 = ou
        result = run_iteration(pot, gibbs, p0, 0.5, 4, particles=0,
                               stop_below=1.0)
        assert result.stopped_early
        assert len(result) == 2
        assert result[-1].entropy_at_stage < 1.0
        assert result.final_entropy == pytest.approx(
            result[-1].entropy_at_stage)

    def test_stage_errors_carry_the_stage_number(self, ou):
        pot, _, gibbs, p0 = ou
        with pytest.raises(ConfigError, match="stage 0:"):
            run_iteration(pot, gibbs, 3.0 * p0, 0.5, 1, particles=0)

    def test_needs_at_least_one_stage(self, ou):
        pot, _, gibbs, p0 = ou
        with pytest.raises(ConfigError):
            run_iteration(pot, gibbs, p0, 0.5, 0)

    def test_trace_csv_layout(self, ou, tmp_path):
        pot, _, gibbs, p0 = ou
        result = run_iteration(pot, gibbs, p0, 0.5, 2, particles=0)
        path = tmp_path / "trace.csv"
        write_trace_csv(result, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "k,direction,H,tv,cost,se"
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "forward"
        assert first[4] == "nan"


class TestOccupation:
    def test_time_average_matches_gibbs_mass(self, coarse):
        pot, _, gibbs, _ = coarse
        occupation, q_mass = ergodic_occupation(pot, gibbs, (0.0, 8.0),
                                                horizon=400.0, N=16, seed=3)
        assert q_mass == pytest.approx(0.5, abs=1e-6)
        assert occupation == pytest.approx(q_mass, abs=0.025)

    def test_interval_is_clipped_to_the_domain(self, coarse):
        pot, _, gibbs, _ = coarse
        occupation, q_mass = ergodic_occupation(pot, gibbs, (5.0, 99.0),
                                                horizon=20.0, N=8, seed=1)
        assert q_mass < 1e-10
        assert occupation <= 0.01

    def test_repeat_runs_are_identical(self, coarse):
        pot, _, gibbs, _ = coarse
        a = ergodic_occupation(pot, gibbs, (0.0, 1.0), horizon=5.0, N=8,
                               seed=11)
        b = ergodic_occupation(pot, gibbs, (0.0, 1.0), horizon=5.0, N=8,
                               seed=11)
        assert a == b

    def test_validation(self, coarse):
        pot, _, gibbs, _ = coarse
        with pytest.raises(ConfigError):
            ergodic_occupation(pot, gibbs, (9.0, 12.0), 10.0, 4, seed=0)
        with pytest.raises(ConfigError):
            ergodic_occupation(pot, gibbs, (0.0, 1.0), 10.0, 0, seed=0)
        with pytest.raises(ConfigError):
            ergodic_occupation(pot, gibbs, (0.0, 1.0), -1.0, 4, seed=0)
        with pytest.raises(ConfigError):
            ergodic_occupation(pot, gibbs, (0.0, 1.0), 10.0, 4, seed=0,
                               dt=0.0)
