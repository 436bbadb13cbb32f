"""Acceptance gate: fifteen end-to-end checks at desk scale (domain [-8, 8],
1024-point grid, SDE step 1e-3, 100k particles).  Each test prints one
summary line with the measured value, the target, and the tolerance before
asserting, so a `pytest -s` run reads as a verification report.

The Gaussian targets come from the frozen closed forms in oracle_values:
the initial law N(1, 1) relaxes toward N(0, 1/2) under the quadratic
potential, giving H = 1.1534 at t = 0, 0.3952 at T = 0.5, and 0.1395 at 2T.
"""
import hashlib
import json

import numpy as np
import pytest

from entroflow import (ControlPolicy, DensityField, Grid, build_lambda,
                       build_score, builtin_potential,
                       backwards_martingale_expectation, dissipation_check,
                       empirical_marginal, ergodic_occupation,
                       expected_cost_reversed, expected_cost_second,
                       gaussian_slice, gibbs_measure,
                       infinite_horizon_identity, relative_entropy,
                       resample_density, run_iteration, shift_times,
                       simulate_reversed, simulate_second_forward,
                       solve_fokker_planck, standard_policy_family,
                       suboptimality_gap, total_variation,
                       trapezoid_weights)
from entroflow.cli import main as cli_main
from oracle_values import OU_ENTROPY, ou_entropy

SEED = 1303
PARTICLES = 100_000
T = 0.5
DT = 1e-3


def report(num, ok, detail):
    print(f"criterion {num:02d} {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def stage_fields(ou, ou_field):
    """Score field over [0, T], the continuation solve, and its field."""
    pot, grid, gibbs, _ = ou
    sf = build_score(ou_field, gibbs)
    leg2 = solve_fokker_planck(pot, ou_field.slices[-1], grid, T, grid.h ** 2)
    lf = build_lambda(shift_times(leg2, T), gibbs, T)
    return sf, leg2, lf


@pytest.fixture(scope="module")
def family(ou, ou_field, stage_fields):
    """Reversed runs and cost reports for the standard policy family."""
    pot, grid, gibbs, _ = ou
    sf, _, _ = stage_fields
    init = (grid, ou_field.slices[-1], PARTICLES)
    runs, reports = {}, {}
    for i, (label, policy) in enumerate(standard_policy_family()):
        rec = 250 if label == "score_optimal" else 10 ** 9
        ens = simulate_reversed(pot, sf, policy, init, T, DT,
                                SEED + 7919 * i, record_every=rec)
        runs[label] = ens
        reports[label] = expected_cost_reversed(ens, sf, gibbs, label)
    return runs, reports


@pytest.fixture(scope="module")
def second_stage(ou, stage_fields):
    pot, grid, gibbs, _ = ou
    _, leg2, lf = stage_fields
    ens = simulate_second_forward(pot, lf, ControlPolicy("lambda_optimal"),
                                  (grid, leg2.slices[-1], PARTICLES), T, DT,
                                  SEED + 104729, record_every=10 ** 9)
    return ens, expected_cost_second(ens, lf, gibbs, "lambda_optimal")


@pytest.fixture(scope="module")
def long_run(ou):
    """Horizon-6 solve whose tail entropy is negligible (about 7e-6)."""
    pot, grid, gibbs, p0 = ou
    field = solve_fokker_planck(pot, p0, grid, 6.0, grid.h ** 2)
    sf = build_score(field, gibbs)
    return field, sf, dissipation_check(field, sf, gibbs)


@pytest.fixture(scope="module")
def double_well_run():
    pot = builtin_potential("double_well", [1.0])
    grid = Grid(-8.0, 8.0, 1024)
    gibbs = gibbs_measure(pot, grid)
    p0 = gaussian_slice(grid, 1.0, 1.0)
    return pot, grid, gibbs, p0


def test_01_optimal_reversal_cost_equals_entropy(family):
    _, reports = family
    rep = reports["score_optimal"]
    target = OU_ENTROPY[0.5]
    tol = max(0.01 * target, 3.0 * rep.std_error)
    ok = abs(rep.total - target) <= tol
    perturbed = [r for r in reports.values()
                 if r.policy not in ("score_optimal", "zero")]
    assert len(perturbed) >= 5
    for r in perturbed:
        above = r.total >= target - 3.0 * r.std_error
        ok = ok and above
    report(1, ok, f"score_optimal total {rep.total:.5f} vs {target:.5f} "
                  f"(tol {tol:.5f}); {len(perturbed)} perturbed policies "
                  f"all >= target - 3se")


def test_02_null_control_pays_initial_entropy(family):
    _, reports = family
    rep = reports["zero"]
    target = OU_ENTROPY[0.0]
    tol = max(0.01 * target, 3.0 * rep.std_error)
    report(2, abs(rep.total - target) <= tol,
           f"zero-policy total {rep.total:.5f} vs {target:.5f} (tol {tol:.5f})")


def test_03_constant_shift_gap_identity(ou, family, stage_fields):
    _, _, gibbs, _ = ou
    sf, _, _ = stage_fields
    runs, _ = family
    gap = suboptimality_gap(runs["shift+0.50"], sf, gibbs)
    exact = 0.5 * 0.5 ** 2 * T
    spread = 3.0 * np.hypot(gap.gap_measured_se, gap.gap_predicted_se)
    ok = (gap.gap_predicted == pytest.approx(exact, abs=1e-12)
          and abs(gap.gap_measured - gap.gap_predicted) <= spread)
    report(3, ok, f"gap predicted {gap.gap_predicted:.6f} (exact {exact}), "
                  f"measured {gap.gap_measured:.6f} (3se {spread:.6f})")


def test_04_optimal_reversal_marginals_continue_the_flow(ou, family,
                                                         stage_fields):
    _, grid, _, _ = ou
    _, leg2, _ = stage_fields
    ens = family[0]["score_optimal"]
    cmp_grid = Grid(grid.lower, grid.upper, 128)
    tvs = {}
    for s in (0.5 * T, T):
        emp = empirical_marginal(ens, s, cmp_grid)
        ref = resample_density(leg2.interp_at(s), grid, cmp_grid)
        tvs[s] = total_variation(emp, ref, cmp_grid)
    ok = max(tvs.values()) <= 0.02
    report(4, ok, "reversal marginal TV "
           + ", ".join(f"s={s:g}: {v:.4f}" for s, v in tvs.items())
           + " (limit 0.02)")


def test_05_both_stage_weights_are_martingales(family, second_stage):
    runs, _ = family
    lines = []
    ok = True
    for label, ens in (("first", runs["score_optimal"]),
                       ("second", second_stage[0])):
        z = np.exp(ens.final_log_weight)
        se = z.std(ddof=1) / np.sqrt(z.size)
        ok = ok and abs(z.mean() - 1.0) <= 3.0 * se
        lines.append(f"{label}: {z.mean():.5f} +- {se:.5f}")
    report(5, ok, "mean exp(log weight) " + "; ".join(lines))


def test_06_second_stage_cost_equals_final_entropy(second_stage):
    _, rep = second_stage
    target = OU_ENTROPY[1.0]
    tol = max(0.01 * target, 3.0 * rep.std_error)
    report(6, abs(rep.total - target) <= tol,
           f"lambda_optimal total {rep.total:.5f} vs {target:.5f} "
           f"(tol {tol:.5f})")


def test_07_entropy_dissipates_at_half_fisher(long_run):
    _, _, rep = long_run
    rel = rep.dissipation_residual[1:-1] / (0.5 * rep.I[1:-1])
    worst = float(np.nanmax(rel))
    integral_err = abs(rep.integral_drop - rep.integral_half_i) / rep.integral_drop
    ok = worst <= 0.02 and integral_err <= 0.01
    report(7, ok, f"max interior residual {worst:.4f} (limit 0.02); "
                  f"integral form error {integral_err:.4f} (limit 0.01)")


def test_08_initial_entropy_equals_integrated_fisher(ou, long_run):
    _, _, gibbs, _ = ou
    field, sf, _ = long_run
    horizon = infinite_horizon_identity(field, sf, gibbs)
    err = abs(horizon.lhs - horizon.rhs) / horizon.lhs
    ok = horizon.adequate and err <= 0.01 and (
        abs(horizon.lhs - OU_ENTROPY[0.0]) <= 0.01 * OU_ENTROPY[0.0])
    report(8, ok, f"H(0) {horizon.lhs:.5f} vs half-integral {horizon.rhs:.5f} "
                  f"(error {err:.5f}, tail {horizon.truncation:.2e})")


def test_09_entropy_decays_exponentially(ou, ou_field, long_run):
    _, grid, gibbs, _ = ou
    field, sf, _ = long_run
    w = trapezoid_weights(grid)
    h_all = np.sum(w * field.slices * sf.log_ratio, axis=1)
    bound = np.exp(-2.0 * field.times) * h_all[0] * (1.0 + 1e-2)
    spot = relative_entropy(ou_field.slices[-1], gibbs)
    ok = bool(np.all(h_all <= bound)) and spot <= 0.4244
    margin = float(np.min(bound - h_all))
    report(9, ok, f"H(t) under exp(-2t)H(0)(1.01) at {field.times.size} "
                  f"times (min margin {margin:.2e}); H(0.5) {spot:.5f} "
                  f"<= 0.4244")


def test_10_pinsker_holds_on_both_potentials(long_run, double_well_run):
    _, _, ou_rep = long_run
    pot, grid, gibbs, p0 = double_well_run
    field = solve_fokker_planck(pot, p0, grid, 1.0, grid.h ** 2)
    dw_rep = dissipation_check(field, build_score(field, gibbs), gibbs)
    margins = {"quadratic": float(np.min(ou_rep.pinsker_margin)),
               "double_well": float(np.min(dw_rep.pinsker_margin))}
    ok = all(m >= -1e-6 for m in margins.values())
    report(10, ok, "min H - 2 TV^2 margin "
           + ", ".join(f"{k}: {v:.3e}" for k, v in margins.items())
           + " (limit -1e-6)")


def test_11_alternating_stages_drive_both_laws_home(ou, double_well_run):
    pot_dw, _, gibbs_dw, p0_dw = double_well_run
    dw = run_iteration(pot_dw, gibbs_dw, p0_dw, 1.0, 5, particles=0)
    dw_h = [r.entropy_at_stage for r in dw] + [dw.final_entropy]
    dw_tv = [r.tv_at_stage for r in dw] + [dw.final_tv]
    dw_ok = (all(b < a for a, b in zip(dw_h, dw_h[1:]))
             and all(b <= a + 1e-12 for a, b in zip(dw_tv, dw_tv[1:])))

    pot, _, gibbs, p0 = ou
    ou_res = run_iteration(pot, gibbs, p0, T, 6, particles=0)
    errs = [abs(r.entropy_at_stage - ou_entropy(T * r.stage))
            / ou_entropy(T * r.stage) for r in ou_res]
    ou_ok = max(errs) <= 0.01
    report(11, dw_ok and ou_ok,
           f"double_well K=5 H {dw_h[0]:.3f}->{dw_h[-1]:.3f} monotone; "
           f"OU K=6 worst stage error {max(errs):.5f} (limit 0.01)")


def test_12_gibbs_law_is_the_fixed_point(ou):
    pot, grid, gibbs, _ = ou
    step = grid.h ** 2
    field = solve_fokker_planck(pot, gibbs.values, grid, 1000 * step, step,
                                store_every=10 ** 9)
    l1 = 2.0 * total_variation(field.slices[-1], gibbs.values, grid)
    flat = build_score(DensityField(grid, [0.0, 1.0],
                                    np.stack([gibbs.values, gibbs.values])),
                       gibbs)
    worst_score = float(np.max(np.abs(flat.score)))
    ok = l1 <= 1e-8 and worst_score <= 1e-8
    report(12, ok, f"L1 drift over 1000 steps {l1:.2e} (limit 1e-8); "
                   f"max |score of q| {worst_score:.2e}")


def test_13_long_run_occupation_matches_gibbs_mass(ou):
    pot, _, gibbs, _ = ou
    occupation, mass = ergodic_occupation(pot, gibbs, (0.0, 8.0), 1.0e4, 8,
                                          seed=3)
    ok = abs(occupation - 0.5) <= 0.01
    report(13, ok, f"occupation of [0, inf) {occupation:.4f} vs {mass:.4f} "
                   f"(limit 0.50 +- 0.01)")


def test_14_stationary_likelihood_ratio_expectation(ou, stage_fields):
    pot, _, gibbs, _ = ou
    sf, _, _ = stage_fields
    lines, ok = [], True
    for i, t in enumerate((0.25, 0.5)):
        mean, se = backwards_martingale_expectation(pot, gibbs, sf, t,
                                                    PARTICLES,
                                                    SEED + 31 * (i + 1))
        ok = ok and abs(mean - 1.0) <= 3.0 * se
        lines.append(f"t={t:g}: {mean:.5f} +- {se:.5f}")
    report(14, ok, "E_Q[l(t, X(t))] " + "; ".join(lines))


def test_15_identical_seeds_give_identical_bytes(tmp_path, monkeypatch):
    monkeypatch.delenv("ENTROFLOW_OUT", raising=False)
    cfg = tmp_path / "exp.toml"
    cfg.write_text("""
[domain]
resolution = 256
[run]
T = 0.2
N = 500
ensemble = true
""")
    digests = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli_main(["forward", "--config", str(cfg), "--seed", "7",
                         "--out", str(out)]) == 0
        digests.append({
            f.name: hashlib.sha256(f.read_bytes()).hexdigest()
            for f in sorted(out.iterdir()) if f.name != "manifest.json"})
    ok = digests[0] == digests[1] and len(digests[0]) == 5
    report(15, ok, f"{len(digests[0])} data files byte-identical across "
                   f"reruns with seed 7")
