"""Alternating forward-backward iteration driving the law to the Gibbs
measure, plus the long-run occupation check.

Stage k advances the marginal law from P(kT) to P((k+1)T) with one
Fokker-Planck solve; the direction label alternates (forward, backward, ...)
following the two controlled dynamics that realize the same advance.  When a
stage is verified, its optimal-control cost is estimated by Monte Carlo --
a score-optimal reversal for even stages, a lambda-optimal second-stage run
for odd ones -- and must match H(P((k+1)T)|Q), the relative entropy the
stage lands on.
"""
import csv
import time
from dataclasses import dataclass

import numpy as np

from .entropy import relative_entropy, total_variation
from .errors import ConfigError, SimulationError
from .grid import integrate, interval_mass, shift_times, solve_fokker_planck
from .rng import CHANNEL_ERGODIC, CHANNEL_INIT, NoiseStream
from .score import build_lambda, build_score
from .sde import (ControlPolicy, _reflect, sample_from_slice,
                  simulate_reversed, simulate_second_forward)
from .control import expected_cost_reversed, expected_cost_second


@dataclass
class IterationTrace:
    """One stage of the alternating scheme."""

    stage: int
    direction: str
    entropy_at_stage: float
    tv_at_stage: float
    cost_value: float = float("nan")
    cost_se: float = float("nan")
    wall_time: float = 0.0


class IterationResult(list):
    """List of IterationTrace rows plus end-of-run summary attributes."""

    final_entropy: float = float("nan")
    final_tv: float = float("nan")
    stopped_early: bool = False


def run_iteration(pot, gibbs, p0, T: float, stages: int, dt_sde: float = 1e-3,
                  particles: int = 100_000, seed: int = 0,
                  verify_stages=(0, 1), threads: int = 1, dt_pde: float = None,
                  stop_below: float = None, store_every: int = None) -> IterationResult:
    """Advance P(0) through `stages` legs of length T, tracking H and TV.

    Each stage runs one Fokker-Planck leg (PDE step bounded by h^2); stages
    listed in `verify_stages` additionally run the stage's optimal-control
    Monte Carlo probe with `particles` paths.  With `stop_below` set, the
    iteration halts once the stage entropy falls under that floor.
    """
    if stages < 1:
        raise ConfigError("need at least one stage")
    grid = gibbs.grid
    h2 = grid.h ** 2
    dt_pde = h2 if dt_pde is None else min(dt_pde, h2)
    verify = set(int(k) for k in (verify_stages or ()))
    q = gibbs.values
    p = np.asarray(p0, dtype=float)

    result = IterationResult()
    for k in range(stages):
        started = time.perf_counter()
        entropy = relative_entropy(p, gibbs)
        tv = total_variation(p, q, grid)
        direction = "forward" if k % 2 == 0 else "backward"
        if stop_below is not None and entropy < stop_below:
            result.append(IterationTrace(k, direction, entropy, tv))
            result.stopped_early = True
            break

        try:
            leg = solve_fokker_planck(pot, p, grid, T, dt_pde,
                                      store_every=store_every)
        except Exception as exc:
            raise type(exc)(f"stage {k}: {exc}") from exc

        cost = se = float("nan")
        if k in verify and particles > 0:
            stage_seed = seed + 1000003 * (k + 1)
            init = (grid, leg.slices[-1], particles)
            try:
                if k % 2 == 0:
                    sf = build_score(leg, gibbs)
                    ens = simulate_reversed(
                        pot, sf, ControlPolicy("score_optimal"), init, T,
                        dt_sde, stage_seed, record_every=10 ** 9, threads=threads)
                    rep = expected_cost_reversed(ens, sf, gibbs, f"stage {k}")
                else:
                    lf = build_lambda(shift_times(leg, T), gibbs, T)
                    ens = simulate_second_forward(
                        pot, lf, ControlPolicy("lambda_optimal"), init, T,
                        dt_sde, stage_seed, record_every=10 ** 9, threads=threads)
                    rep = expected_cost_second(ens, lf, gibbs, f"stage {k}")
            except Exception as exc:
                raise type(exc)(f"stage {k}: {exc}") from exc
            cost, se = rep.total, rep.std_error

        result.append(IterationTrace(
            k, direction, entropy, tv, cost, se,
            time.perf_counter() - started))
        p = leg.slices[-1]

    result.final_entropy = relative_entropy(p, gibbs)
    result.final_tv = total_variation(p, q, grid)
    return result


def ergodic_occupation(pot, gibbs, interval, horizon: float, N: int,
                       seed: int, dt: float = 1e-2):
    """(time-average occupation of `interval`, its Gibbs probability).

    Runs a small ensemble of N independent trajectories started from the
    Gibbs measure over the full horizon and averages the indicator of the
    interval over all post-initial steps and chains.
    """
    grid = gibbs.grid
    a, b = float(interval[0]), float(interval[1])
    a = max(a, grid.lower)
    b = min(b, grid.upper)
    if not b > a:
        raise ConfigError("occupation interval is empty within the domain")
    if N < 1 or horizon <= 0 or dt <= 0:
        raise ConfigError("occupation run needs N >= 1, horizon > 0, dt > 0")

    n_steps = max(1, int(np.ceil(horizon / dt - 1e-9)))
    dt_eff = horizon / n_steps
    sqdt = np.sqrt(dt_eff)
    u = NoiseStream(seed, CHANNEL_INIT, N).uniforms(0)
    x = sample_from_slice(grid, gibbs.values, u)
    stream = NoiseStream(seed, CHANNEL_ERGODIC, N)

    hits = 0
    for k in range(n_steps):
        x = x - np.asarray(pot.gradient(x), dtype=float) * dt_eff \
            + sqdt * stream.normals(k, 0, N)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"occupation run diverged at step {k + 1}")
        x = _reflect(x, grid.lower, grid.upper)
        hits += int(np.count_nonzero((x >= a) & (x <= b)))
    occupation = hits / (n_steps * N)
    q_mass = interval_mass(grid, gibbs.values, a, b) / integrate(grid, gibbs.values)
    return occupation, float(q_mass)


def write_trace_csv(result, path) -> None:
    """Stage trace (k, direction, H, tv, cost, se), 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "direction", "H", "tv", "cost", "se"])
        for row in result:
            writer.writerow([
                row.stage, row.direction,
                f"{row.entropy_at_stage:.17g}", f"{row.tv_at_stage:.17g}",
                f"{row.cost_value:.17g}", f"{row.cost_se:.17g}",
            ])
