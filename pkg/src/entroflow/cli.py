"""Command-line entry point: configuration, orchestration, artifacts.

Subcommands
    forward         Fokker-Planck solve (+ optional particle ensemble)
    reverse         controlled time reversal with marginal comparison
    verify-control  cost table for a policy family against the entropy value
    entropy-report  dissipation, decay, Pinsker, and martingale diagnostics
    iterate         alternating forward/backward stages toward the Gibbs law
    ergodic         long-run occupation fraction of an interval

Every command reads one config file (TOML primary; a ``.json`` path is parsed
as JSON), applies ``--seed/--threads/--out`` overrides, writes its artifacts
plus a ``manifest.json`` (config echo, version, per-module pass/fail, SHA-256
inventory of every emitted file), and exits 0 on success, 2 on configuration
errors, 3 on numeric/simulation failures, 4 when a verification check fails.
Identical config and seed give byte-identical artifacts; only the manifest
carries timestamps.

Config defaults (all keys optional; unknown keys are rejected):

    [potential]   name = "quadratic"        params = []
    [domain]      lower = -8.0  upper = 8.0 resolution = 1024
    [initial]     kind = "gaussian"  mean = 1.0  variance = 1.0
                  (kind "mixture": weights/means/variances; kind "gibbs")
    [run]         T = 0.5   dt = 1e-3  dt_pde = 0.0 (auto)  store_every = 0
                  N = 100000  seed = 0  threads = 1  ensemble = false
                  K = 6  stop_below = 0.0  policies = ["standard"]
    [ergodic]     interval = [0.0, 8.0]  horizon = 1e4  dt = 1e-2  chains = 8
    [tolerances]  tv = 0.02  se_multiplier = 3.0  occupation = 0.01
                  dissipation = 0.02  integral = 0.01  stationary = 1e-8
                  pinsker = 1e-6  decay_slack = 1e-2
    [output]      directory = ""

Output directory precedence: ``--out``, then ``$ENTROFLOW_OUT``, then
``[output] directory``, then ``./entroflow-out``.
"""
import argparse
import copy
import csv
import hashlib
import json
import os
import re
import sys
import time
from datetime import datetime, timezone

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .control import (entropic_decomposition, expected_cost_reversed,
                      expected_cost_second, policy_passes,
                      standard_policy_family, suboptimality_gap,
                      write_cost_reports_json,
                      constant_shift, cosine_shift, sine_shift)
from .entropy import (backwards_martingale_expectation, dissipation_check,
                      infinite_horizon_identity, relative_entropy,
                      total_variation, write_entropy_csv, write_entropy_json)
from .errors import ConfigError, EntroflowError, NumericError, UnsupportedMeasureError
from .grid import (Grid, gaussian_slice, mixture_slice, resample_density,
                   shift_times, solve_fokker_planck, trapezoid_weights,
                   write_density_csv, write_density_json)
from .iterate import ergodic_occupation, run_iteration, write_trace_csv
from .potential import builtin_potential, gibbs_measure
from .score import build_lambda, build_score
from .sde import (ControlPolicy, empirical_marginal, simulate_forward,
                  simulate_reversed, simulate_second_forward,
                  write_ensemble_json)

_DEFAULTS = {
    "potential": {"name": "quadratic", "params": []},
    "domain": {"lower": -8.0, "upper": 8.0, "resolution": 1024},
    "initial": {"kind": "gaussian", "mean": 1.0, "variance": 1.0,
                "weights": [], "means": [], "variances": []},
    "run": {"T": 0.5, "dt": 1e-3, "dt_pde": 0.0, "store_every": 0,
            "N": 100_000, "seed": 0, "threads": 1, "ensemble": False,
            "K": 6, "stop_below": 0.0, "policies": ["standard"]},
    "ergodic": {"interval": [0.0, 8.0], "horizon": 1.0e4, "dt": 1e-2,
                "chains": 8},
    "tolerances": {"tv": 0.02, "se_multiplier": 3.0, "occupation": 0.01,
                   "dissipation": 0.02, "integral": 0.01, "stationary": 1e-8,
                   "pinsker": 1e-6, "decay_slack": 1e-2},
    "output": {"directory": ""},
}


def _as_int(value, key: str, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum}")
    return value


def _as_float(value, key: str, minimum=None, strict=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"'{key}' must be finite")
    if minimum is not None and (value < minimum or (strict and value == minimum)):
        op = ">" if strict else ">="
        raise ConfigError(f"'{key}' must be {op} {minimum}")
    return value


def _as_float_list(value, key: str):
    if not isinstance(value, list):
        raise ConfigError(f"'{key}' must be a list of numbers")
    return [_as_float(v, key) for v in value]


def _merge_config(raw: dict) -> dict:
    merged = copy.deepcopy(_DEFAULTS)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table of sections")
    for section, body in raw.items():
        if section not in merged:
            raise ConfigError(f"unknown config section '{section}'")
        if not isinstance(body, dict):
            raise ConfigError(f"section '{section}' must be a table")
        for key, value in body.items():
            if key not in merged[section]:
                raise ConfigError(f"unknown config key '{section}.{key}'")
            merged[section][key] = value
    return merged


class ExperimentConfig:
    """Validated experiment description (defaults + file + CLI overrides)."""

    def __init__(self, merged: dict):
        self.echo = merged
        pot = merged["potential"]
        if not isinstance(pot["name"], str):
            raise ConfigError("'potential.name' must be a string")
        self.potential_name = pot["name"]
        self.potential_params = _as_float_list(pot["params"], "potential.params")

        dom = merged["domain"]
        self.lower = _as_float(dom["lower"], "domain.lower")
        self.upper = _as_float(dom["upper"], "domain.upper")
        self.resolution = _as_int(dom["resolution"], "domain.resolution", 16)
        if not self.upper > self.lower:
            raise ConfigError("'domain.upper' must exceed 'domain.lower'")

        ini = merged["initial"]
        if ini["kind"] not in ("gaussian", "mixture", "gibbs"):
            raise ConfigError("'initial.kind' must be gaussian, mixture, or gibbs")
        self.initial = {
            "kind": ini["kind"],
            "mean": _as_float(ini["mean"], "initial.mean"),
            "variance": _as_float(ini["variance"], "initial.variance", 0.0, strict=True),
            "weights": _as_float_list(ini["weights"], "initial.weights"),
            "means": _as_float_list(ini["means"], "initial.means"),
            "variances": _as_float_list(ini["variances"], "initial.variances"),
        }

        run = merged["run"]
        self.T = _as_float(run["T"], "run.T", 0.0, strict=True)
        self.dt = _as_float(run["dt"], "run.dt", 0.0, strict=True)
        self.dt_pde = _as_float(run["dt_pde"], "run.dt_pde", 0.0) or None
        self.store_every = _as_int(run["store_every"], "run.store_every", 0) or None
        self.N = _as_int(run["N"], "run.N", 0)
        self.seed = _as_int(run["seed"], "run.seed", 0)
        if self.seed >= 2 ** 64:
            raise ConfigError("'run.seed' must fit in 64 bits")
        self.threads = _as_int(run["threads"], "run.threads", 1)
        if not isinstance(run["ensemble"], bool):
            raise ConfigError("'run.ensemble' must be a boolean")
        self.ensemble = run["ensemble"]
        self.K = _as_int(run["K"], "run.K", 1)
        self.stop_below = _as_float(run["stop_below"], "run.stop_below", 0.0) or None
        if (not isinstance(run["policies"], list) or not run["policies"]
                or not all(isinstance(p, str) for p in run["policies"])):
            raise ConfigError("'run.policies' must be a non-empty list of names")
        self.policies = run["policies"]

        erg = merged["ergodic"]
        interval = _as_float_list(erg["interval"], "ergodic.interval")
        if len(interval) != 2 or not interval[1] > interval[0]:
            raise ConfigError("'ergodic.interval' must be [a, b] with b > a")
        self.ergodic_interval = tuple(interval)
        self.ergodic_horizon = _as_float(erg["horizon"], "ergodic.horizon", 0.0, strict=True)
        self.ergodic_dt = _as_float(erg["dt"], "ergodic.dt", 0.0, strict=True)
        self.ergodic_chains = _as_int(erg["chains"], "ergodic.chains", 1)

        self.tol = {key: _as_float(val, f"tolerances.{key}", 0.0)
                    for key, val in merged["tolerances"].items()}
        if not isinstance(merged["output"]["directory"], str):
            raise ConfigError("'output.directory' must be a string")
        self.out_dir = merged["output"]["directory"]


def load_config(path=None, seed=None, threads=None) -> ExperimentConfig:
    """Parse + validate a config file, applying CLI overrides."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                if str(path).endswith(".json"):
                    raw = json.load(fh)
                else:
                    raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}")
    merged = _merge_config(raw)
    if seed is not None:
        merged["run"]["seed"] = seed
    if threads is not None:
        merged["run"]["threads"] = threads
    return ExperimentConfig(merged)


_POLICY_PATTERN = re.compile(
    r"^(shift|sine|cosine)\s*([+-]?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)$")


def parse_policy(name: str):
    """(label, ControlPolicy) for a policy name like 'zero' or 'shift+0.5'."""
    text = name.strip()
    if text in ("zero", "score_optimal", "lambda_optimal"):
        return text, ControlPolicy(text)
    match = _POLICY_PATTERN.match(text)
    if match:
        kind, amp = match.group(1), float(match.group(2))
        maker = {"shift": constant_shift, "sine": sine_shift,
                 "cosine": cosine_shift}[kind]
        return text, ControlPolicy("perturbed", maker(amp))
    raise ConfigError(f"unknown policy '{name}'")


def expand_policies(names):
    policies = []
    for name in names:
        if name.strip() == "standard":
            policies.extend(standard_policy_family())
        else:
            policies.append(parse_policy(name))
    return policies


def _build_problem(cfg: ExperimentConfig):
    pot = builtin_potential(cfg.potential_name, cfg.potential_params)
    grid = Grid(cfg.lower, cfg.upper, cfg.resolution)
    gibbs = gibbs_measure(pot, grid)
    ini = cfg.initial
    if ini["kind"] == "gibbs":
        if gibbs.infinite:
            raise ConfigError("initial kind 'gibbs' needs a normalizable Gibbs measure")
        p0 = gibbs.values.copy()
    elif ini["kind"] == "gaussian":
        p0 = gaussian_slice(grid, ini["mean"], ini["variance"])
    else:
        p0 = mixture_slice(grid, ini["weights"], ini["means"], ini["variances"])
    return pot, grid, gibbs, p0


def _pde_step(cfg: ExperimentConfig, grid: Grid) -> float:
    return cfg.dt_pde if cfg.dt_pde is not None else grid.h ** 2


def _derived_seed(seed: int, offset: int) -> int:
    return (seed + offset) % (2 ** 63)


def _within_se(value: float, target: float, se: float, mult: float) -> bool:
    return abs(value - target) <= mult * max(se, 1e-300)


def _solve_two_legs(cfg, pot, grid, gibbs, p0):
    """Back-to-back FP legs of length T; returns (leg1, leg2, leg1 score).

    Each leg is solved separately so both end exactly on T; leg2's clock
    starts at 0 again (absolute time T + s).
    """
    step = _pde_step(cfg, grid)
    leg1 = solve_fokker_planck(pot, p0, grid, cfg.T, step,
                               store_every=cfg.store_every)
    leg2 = solve_fokker_planck(pot, leg1.slices[-1], grid, cfg.T, step,
                               store_every=cfg.store_every)
    return leg1, leg2, build_score(leg1, gibbs)


def cmd_forward(cfg: ExperimentConfig, out: str):
    pot, grid, gibbs, p0 = _build_problem(cfg)
    field = solve_fokker_planck(pot, p0, grid, cfg.T, _pde_step(cfg, grid),
                                store_every=cfg.store_every)
    files = {"density.csv": write_density_csv,
             "density.json": write_density_json}
    for name, writer in files.items():
        writer(field, os.path.join(out, name))
    files = dict.fromkeys(files)

    masses = field.slices @ trapezoid_weights(grid)
    checks = {"grid.mass_conservation": bool(np.max(np.abs(masses - 1.0)) <= 1e-6)}
    summary = {"stored_times": int(field.times.size)}

    if not gibbs.infinite:
        sf = build_score(field, gibbs)
        report = dissipation_check(field, sf, gibbs)
        write_entropy_csv(report, os.path.join(out, "entropy.csv"))
        write_entropy_json(report, os.path.join(out, "entropy.json"))
        files.update({"entropy.csv": None, "entropy.json": None})
        checks["entropy.monotone"] = bool(np.all(np.diff(report.H) <= 1e-10))
        checks["entropy.pinsker"] = bool(
            np.min(report.pinsker_margin) >= -cfg.tol["pinsker"])
        summary["initial_entropy"] = float(report.H[0])
        summary["final_entropy"] = float(report.H[-1])

    if cfg.ensemble and cfg.N > 0:
        ens = simulate_forward(pot, (grid, p0, cfg.N), cfg.N, cfg.T, cfg.dt,
                               cfg.seed, domain=(grid.lower, grid.upper),
                               threads=cfg.threads)
        write_ensemble_json(ens, grid, os.path.join(out, "ensemble.json"))
        files["ensemble.json"] = None
        checks["sde.finite_paths"] = bool(np.all(np.isfinite(ens.states)))
    return files, checks, summary


def cmd_reverse(cfg: ExperimentConfig, out: str):
    pot, grid, gibbs, p0 = _build_problem(cfg)
    leg1, leg2, sf = _solve_two_legs(cfg, pot, grid, gibbs, p0)
    label, policy = expand_policies(cfg.policies)[0]
    if policy.kind == "lambda_optimal":
        raise ConfigError("'lambda_optimal' drives second-stage runs, not reversals")

    n_steps = max(1, int(np.ceil(cfg.T / cfg.dt - 1e-9)))
    ens = simulate_reversed(pot, sf, policy, (grid, leg1.slices[-1], cfg.N),
                            cfg.T, cfg.dt, cfg.seed,
                            record_every=max(1, n_steps // 4),
                            threads=cfg.threads)
    report = expected_cost_reversed(ens, sf, gibbs, label)
    write_cost_reports_json([report], os.path.join(out, "costs.json"))
    write_ensemble_json(ens, grid, os.path.join(out, "ensemble.json"))

    mult = cfg.tol["se_multiplier"]
    z = np.exp(ens.final_log_weight)
    z_se = float(z.std(ddof=1) / np.sqrt(cfg.N)) if cfg.N > 1 else 0.0
    checks = {
        "control.cost": policy_passes(report, optimal=policy.kind == "score_optimal"),
        "sde.girsanov_mean_one": _within_se(float(z.mean()), 1.0, z_se, mult),
        "score.clip_rate": not report.flagged,
    }
    summary = {"policy": label, "total": report.total,
               "std_error": report.std_error,
               "reference_entropy": report.reference_entropy,
               "girsanov_mean": float(z.mean())}

    cmp_grid = Grid(grid.lower, grid.upper, 128)
    rows, tvs = [], []
    for target in (0.5 * cfg.T, cfg.T):
        s = float(ens.times[np.argmin(np.abs(ens.times - target))])
        emp = empirical_marginal(ens, s, cmp_grid)
        ref = resample_density(leg2.interp_at(s), grid, cmp_grid)
        tvs.append(total_variation(emp, ref, cmp_grid))
        rows.extend((s, x, e, r) for x, e, r
                    in zip(cmp_grid.nodes, emp, ref))
    with open(os.path.join(out, "marginals.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "x", "empirical", "reference"])
        for row in rows:
            writer.writerow([f"{v:.17g}" for v in row])
    summary["marginal_tv"] = [float(v) for v in tvs]
    if policy.kind == "score_optimal":
        checks["sde.marginal_tv"] = bool(max(tvs) <= cfg.tol["tv"])

    files = dict.fromkeys(["costs.json", "ensemble.json", "marginals.csv"])
    return files, checks, summary


def cmd_verify_control(cfg: ExperimentConfig, out: str):
    pot, grid, gibbs, p0 = _build_problem(cfg)
    leg1, leg2, sf = _solve_two_legs(cfg, pot, grid, gibbs, p0)
    init = (grid, leg1.slices[-1], cfg.N)
    mult = cfg.tol["se_multiplier"]

    reports, checks = [], {}
    gaps, decompositions, martingales = {}, {}, {}
    for i, (label, policy) in enumerate(expand_policies(cfg.policies)):
        if policy.kind == "lambda_optimal":
            raise ConfigError("'lambda_optimal' drives second-stage runs, not reversals")
        ens = simulate_reversed(pot, sf, policy, init, cfg.T, cfg.dt,
                                _derived_seed(cfg.seed, 7919 * i),
                                record_every=10 ** 9, threads=cfg.threads)
        report = expected_cost_reversed(ens, sf, gibbs, label)
        reports.append(report)
        optimal = policy.kind == "score_optimal"
        checks[f"control.cost.{label}"] = policy_passes(report, optimal=optimal)
        if policy.kind == "perturbed":
            gap = suboptimality_gap(ens, sf, gibbs)
            gaps[label] = {"measured": gap.gap_measured,
                           "predicted": gap.gap_predicted,
                           "measured_se": gap.gap_measured_se,
                           "predicted_se": gap.gap_predicted_se}
            checks[f"control.gap.{label}"] = gap.consistent
        if optimal:
            z = np.exp(ens.final_log_weight)
            se = float(z.std(ddof=1) / np.sqrt(cfg.N))
            martingales["first_stage"] = {"mean": float(z.mean()), "se": se}
            checks["sde.girsanov_first"] = _within_se(float(z.mean()), 1.0, se, mult)
            dec = entropic_decomposition(ens, sf, gibbs, "first")
            decompositions["first_stage"] = {
                "H_term": dec.H_term, "D_term": dec.D_term, "total": dec.total,
                "mean_log_z": dec.mean_log_z, "endpoint_kl": dec.endpoint_kl}
            checks["entropy.decomposition_first"] = bool(dec.D_term >= -0.01)

    lf = build_lambda(shift_times(leg2, cfg.T), gibbs, cfg.T)
    init2 = (grid, leg2.slices[-1], cfg.N)
    ens2 = simulate_second_forward(pot, lf, ControlPolicy("lambda_optimal"),
                                   init2, cfg.T, cfg.dt,
                                   _derived_seed(cfg.seed, 104729),
                                   record_every=10 ** 9, threads=cfg.threads)
    report2 = expected_cost_second(ens2, lf, gibbs, "lambda_optimal")
    reports.append(report2)
    checks["control.cost.lambda_optimal"] = policy_passes(report2, optimal=True)
    z2 = np.exp(ens2.final_log_weight)
    se2 = float(z2.std(ddof=1) / np.sqrt(cfg.N))
    martingales["second_stage"] = {"mean": float(z2.mean()), "se": se2}
    checks["sde.girsanov_second"] = _within_se(float(z2.mean()), 1.0, se2, mult)
    dec2 = entropic_decomposition(ens2, lf, gibbs, "second")
    decompositions["second_stage"] = {
        "H_term": dec2.H_term, "D_term": dec2.D_term, "total": dec2.total,
        "mean_log_z": dec2.mean_log_z, "endpoint_kl": dec2.endpoint_kl}
    checks["entropy.decomposition_second"] = bool(dec2.D_term >= -0.01)

    write_cost_reports_json(reports, os.path.join(out, "costs.json"))
    with open(os.path.join(out, "verify.json"), "w") as fh:
        json.dump({"gaps": gaps, "decompositions": decompositions,
                   "martingales": martingales}, fh, sort_keys=True, indent=1)
        fh.write("\n")

    print(f"{'policy':<16} {'total':>10} {'se':>9} {'gap':>10}  result")
    for report in reports:
        ok = checks.get(f"control.cost.{report.policy}", False)
        print(f"{report.policy:<16} {report.total:>10.5f} "
              f"{report.std_error:>9.5f} {report.gap:>10.5f}  "
              f"{'pass' if ok else 'FAIL'}")
    summary = {"reference_entropy_first": reports[0].reference_entropy,
               "reference_entropy_second": report2.reference_entropy,
               "policies": [r.policy for r in reports]}
    files = dict.fromkeys(["costs.json", "verify.json"])
    return files, checks, summary


def cmd_entropy_report(cfg: ExperimentConfig, out: str):
    pot, grid, gibbs, p0 = _build_problem(cfg)
    if gibbs.infinite:
        raise ConfigError("entropy reports need a normalizable Gibbs measure")
    field = solve_fokker_planck(pot, p0, grid, cfg.T, _pde_step(cfg, grid),
                                store_every=cfg.store_every)
    sf = build_score(field, gibbs)
    report = dissipation_check(field, sf, gibbs)
    horizon = infinite_horizon_identity(field, sf, gibbs)
    mult = cfg.tol["se_multiplier"]

    entropy_initial = relative_entropy(field.slices[0], gibbs)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = report.dissipation_residual / (0.5 * report.I)
    interior = rel[1:-1][np.isfinite(rel[1:-1])]
    drop, half_i = report.integral_drop, report.integral_half_i
    checks = {
        "entropy.monotone": bool(np.all(np.diff(report.H) <= 1e-10)),
        "entropy.dissipation": bool(interior.size == 0
                                    or np.max(interior) <= cfg.tol["dissipation"]),
        "entropy.integral_form": bool(
            abs(drop - half_i) <= cfg.tol["integral"] * max(abs(drop), 1e-300)),
        "entropy.pinsker": bool(
            np.min(report.pinsker_margin) >= -cfg.tol["pinsker"]),
    }
    summary = {"entropy_initial": entropy_initial,
               "entropy_final": float(report.H[-1]),
               "integral_drop": drop, "integral_half_I": half_i,
               "infinite_horizon": {"lhs": horizon.lhs, "rhs": horizon.rhs,
                                    "truncation": horizon.truncation,
                                    "adequate": horizon.adequate}}
    if horizon.adequate:
        checks["entropy.infinite_horizon"] = bool(
            abs(horizon.lhs - horizon.rhs) <= cfg.tol["integral"] * horizon.lhs)

    kappa = pot.hessian_lower_bound
    if kappa is not None and kappa > 0:
        bound = (np.exp(-2.0 * kappa * report.times) * entropy_initial
                 * (1.0 + cfg.tol["decay_slack"]))
        checks["entropy.decay"] = bool(np.all(report.H <= bound))

    martingale = {}
    if cfg.N > 0:
        for i, t in enumerate((0.5 * cfg.T, cfg.T)):
            mean, se = backwards_martingale_expectation(
                pot, gibbs, sf, t, cfg.N, _derived_seed(cfg.seed, 31 * (i + 1)),
                dt=cfg.dt)
            martingale[f"{t:g}"] = {"mean": mean, "se": se}
            checks[f"entropy.martingale_t{i + 1}"] = _within_se(mean, 1.0, se, mult)
    summary["martingale"] = martingale

    report.metadata.update({"infinite_horizon": summary["infinite_horizon"],
                            "martingale": martingale})
    write_entropy_csv(report, os.path.join(out, "entropy.csv"))
    write_entropy_json(report, os.path.join(out, "entropy.json"))
    files = dict.fromkeys(["entropy.csv", "entropy.json"])
    return files, checks, summary


def cmd_iterate(cfg: ExperimentConfig, out: str):
    pot, grid, gibbs, p0 = _build_problem(cfg)
    if gibbs.infinite:
        raise ConfigError("iteration needs a normalizable Gibbs measure")
    result = run_iteration(pot, gibbs, p0, cfg.T, cfg.K, dt_sde=cfg.dt,
                           particles=cfg.N, seed=cfg.seed,
                           threads=cfg.threads, dt_pde=cfg.dt_pde,
                           stop_below=cfg.stop_below,
                           store_every=cfg.store_every)
    write_trace_csv(result, os.path.join(out, "trace.csv"))

    entropies = [row.entropy_at_stage for row in result] + [result.final_entropy]
    tvs = [row.tv_at_stage for row in result] + [result.final_tv]
    mult = cfg.tol["se_multiplier"]
    checks = {
        "iterate.entropy_decreasing": bool(
            all(a > b for a, b in zip(entropies, entropies[1:]))),
        "iterate.tv_decreasing": bool(
            all(a >= b - 1e-12 for a, b in zip(tvs, tvs[1:]))),
    }
    for i, row in enumerate(result):
        if np.isfinite(row.cost_value):
            target = entropies[i + 1]
            checks[f"control.probe_stage{row.stage}"] = _within_se(
                row.cost_value, target, row.cost_se, mult)
    summary = {"stages_run": len(result), "early_stop": result.stopped_early,
               "final_entropy": result.final_entropy,
               "final_tv": result.final_tv}
    for row in result:
        print(f"stage {row.stage} ({row.direction:>8}): "
              f"H={row.entropy_at_stage:.6f} tv={row.tv_at_stage:.6f}"
              + (f" cost={row.cost_value:.6f} (se {row.cost_se:.6f})"
                 if np.isfinite(row.cost_value) else ""))
    files = dict.fromkeys(["trace.csv"])
    return files, checks, summary


def cmd_ergodic(cfg: ExperimentConfig, out: str):
    pot, grid, gibbs, _ = _build_problem(cfg)
    if gibbs.infinite:
        raise ConfigError("occupation fractions need a normalizable Gibbs measure")
    occupation, mass = ergodic_occupation(
        pot, gibbs, cfg.ergodic_interval, cfg.ergodic_horizon,
        cfg.ergodic_chains, cfg.seed, dt=cfg.ergodic_dt)
    error = abs(occupation - mass)
    payload = {"interval": list(cfg.ergodic_interval),
               "horizon": cfg.ergodic_horizon, "chains": cfg.ergodic_chains,
               "occupation": occupation, "gibbs_mass": mass, "error": error,
               "tolerance": cfg.tol["occupation"]}
    with open(os.path.join(out, "occupation.json"), "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"occupation {occupation:.5f} vs Gibbs mass {mass:.5f} "
          f"(error {error:.5f})")
    checks = {"iterate.occupation": bool(error <= cfg.tol["occupation"])}
    return dict.fromkeys(["occupation.json"]), checks, payload


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(out: str, command: str, cfg: ExperimentConfig, files,
                   checks: dict, summary: dict, elapsed: float) -> str:
    modules = {}
    for key, passed in checks.items():
        module = key.split(".", 1)[0]
        ok = modules.get(module, True) and bool(passed)
        modules[module] = ok
    manifest = {
        "package": "entroflow",
        "version": __version__,
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": round(elapsed, 3),
        "config": cfg.echo,
        "checks": {key: bool(val) for key, val in sorted(checks.items())},
        "modules": {mod: "pass" if ok else "fail"
                    for mod, ok in sorted(modules.items())},
        "summary": summary,
        "files": {name: _sha256(os.path.join(out, name)) for name in sorted(files)},
    }
    path = os.path.join(out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


_COMMANDS = {
    "forward": cmd_forward,
    "reverse": cmd_reverse,
    "verify-control": cmd_verify_control,
    "entropy-report": cmd_entropy_report,
    "iterate": cmd_iterate,
    "ergodic": cmd_ergodic,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entroflow",
        description="Langevin diffusions, controlled reversals, and "
                    "entropic-cost verification on 1D grids.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("forward", "solve the density evolution (optional ensemble)"),
            ("reverse", "run a controlled reversal and compare marginals"),
            ("verify-control", "cost table for a policy family"),
            ("entropy-report", "entropy/Fisher diagnostics along a run"),
            ("iterate", "alternate stages toward the Gibbs measure"),
            ("ergodic", "long-run occupation of an interval")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", metavar="PATH",
                         help="TOML (or .json) experiment description")
        cmd.add_argument("--seed", type=int, metavar="U64",
                         help="override the config seed")
        cmd.add_argument("--threads", type=int, metavar="N",
                         help="override the worker-thread count")
        cmd.add_argument("--out", metavar="DIR", help="output directory")
    return parser


def resolve_out_dir(flag, cfg: ExperimentConfig) -> str:
    out = (flag or os.environ.get("ENTROFLOW_OUT") or cfg.out_dir
           or "entroflow-out")
    os.makedirs(out, exist_ok=True)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.threads)
        out = resolve_out_dir(args.out, cfg)
        started = time.perf_counter()
        files, checks, summary = _COMMANDS[args.command](cfg, out)
        manifest = write_manifest(out, args.command, cfg, files, checks,
                                  summary, time.perf_counter() - started)
    except (ConfigError, UnsupportedMeasureError) as exc:
        print(f"entroflow: config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"entroflow: numeric failure: {exc}", file=sys.stderr)
        return 3
    except EntroflowError as exc:
        print(f"entroflow: {exc}", file=sys.stderr)
        return 3
    failed = [name for name, ok in sorted(checks.items()) if not ok]
    for name in sorted(checks):
        print(f"{'PASS' if checks[name] else 'FAIL'} {name}")
    print(f"manifest: {manifest}")
    if failed:
        print(f"entroflow: {len(failed)} check(s) failed", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
