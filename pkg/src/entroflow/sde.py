"""Euler-Maruyama ensembles for the Langevin dynamics, its controlled time
reversal, and the controlled second-stage forward dynamics.

Every run draws noise from counter-based streams (see rng), so a given
(seed, channel) pair yields bit-identical trajectories regardless of how the
particle range is chunked across threads.  Controlled runs accumulate, per
particle, the Girsanov log-weight of the control against the realized noise,
the control energy 1/2 int |u|^2, and the optimality gap 1/2 int |dL + u|^2.
For the optimal policies the drift cancellation is applied analytically
(drift = -grad Psi) while the weight still uses the interpolated field, so
weight statistics exercise the score field itself.
"""
import csv
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError, CoverageError, SimulationError
from .grid import Grid, cell_edges, cumulative
from .rng import (CHANNEL_FORWARD, CHANNEL_INIT, CHANNEL_REVERSED,
                  CHANNEL_SECOND, NoiseStream)
from .score import CLIP_DEFAULT, LambdaField, ScoreField, _gather

POLICY_KINDS = ("zero", "score_optimal", "lambda_optimal", "perturbed", "custom")


class ControlPolicy:
    """Control for the reversed (gamma) or second-stage (beta) dynamics.

    kind selects the drift rule; `callback(time_to_go, positions)` supplies
    the perturbation (kind "perturbed", added to the optimal control) or the
    full control (kind "custom").  Outputs are capped at `bound`.
    """

    def __init__(self, kind: str, callback=None, bound: float = CLIP_DEFAULT):
        if kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind '{kind}'")
        if kind in ("perturbed", "custom") and callback is None:
            raise ConfigError(f"policy kind '{kind}' requires a callback")
        if bound <= 0:
            raise ConfigError("policy bound must be positive")
        self.kind = kind
        self.callback = callback
        self.bound = float(bound)

    def control_term(self, time_to_go: float, x: np.ndarray) -> np.ndarray:
        """Bounded callback output; raises on non-finite values."""
        u = np.asarray(self.callback(time_to_go, x), dtype=float)
        u = np.broadcast_to(u, x.shape)
        if not np.all(np.isfinite(u)):
            raise SimulationError("policy callback produced non-finite control")
        return np.clip(u, -self.bound, self.bound)


class PathEnsemble:
    """States and running Girsanov log-weights recorded at selected times."""

    def __init__(self, times, states, log_weight, seed, direction,
                 energy=None, gap=None, diagnostics=None):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.log_weight = np.asarray(log_weight, dtype=float)
        self.seed = int(seed)
        self.direction = direction
        self.particles = self.states.shape[0]
        if self.states.shape != (self.particles, self.times.size):
            raise ConfigError("states must have shape (particles, times)")
        if self.log_weight.shape != self.states.shape:
            raise ConfigError("log_weight must match states")
        n = self.particles
        self.energy = np.zeros(n) if energy is None else np.asarray(energy)
        self.gap = np.zeros(n) if gap is None else np.asarray(gap)
        self.diagnostics = dict(diagnostics or {})

    def index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise CoverageError(f"time {t} was not recorded")
        return idx

    def states_at(self, t: float) -> np.ndarray:
        return self.states[:, self.index_of(t)]

    @property
    def final_states(self) -> np.ndarray:
        return self.states[:, -1]

    @property
    def final_log_weight(self) -> np.ndarray:
        return self.log_weight[:, -1]


def sample_from_slice(grid: Grid, slice_values, u: np.ndarray) -> np.ndarray:
    """Invert the CDF of a piecewise-linear density at uniforms u in (0,1)."""
    slice_values = np.asarray(slice_values, dtype=float)
    cdf = cumulative(grid, slice_values)
    targets = u * cdf[-1]
    i = np.clip(np.searchsorted(cdf, targets, side="right") - 1,
                0, grid.points - 2)
    m = np.maximum(targets - cdf[i], 0.0)
    b = slice_values[i]
    a = 0.5 * (slice_values[i + 1] - slice_values[i]) / grid.h
    linear = np.abs(a) * grid.h < 1e-12 * np.maximum(b, 1e-300)
    disc = np.sqrt(np.maximum(b * b + 4.0 * a * m, 0.0))
    d = np.where(linear, m / np.maximum(b, 1e-300),
                 (disc - b) / np.where(linear, 1.0, 2.0 * a))
    return grid.nodes[i] + np.clip(d, 0.0, grid.h)


def _resolve_init(init, seed, expected=None):
    """Initial particle positions from samples, a scalar, or (grid, slice, N)."""
    if isinstance(init, PathEnsemble):
        states = init.final_states.copy()
    elif isinstance(init, tuple) and len(init) == 3 and isinstance(init[0], Grid):
        grid, slice_values, n = init
        u = NoiseStream(seed, CHANNEL_INIT, int(n)).uniforms(0)
        states = sample_from_slice(grid, slice_values, u)
    elif np.ndim(init) == 0:
        if expected is None:
            raise ConfigError("scalar init needs an explicit particle count")
        states = np.full(expected, float(init))
    else:
        states = np.asarray(init, dtype=float).copy()
        if states.ndim != 1:
            raise ConfigError("init samples must be one-dimensional")
    if expected is not None and states.size != expected:
        raise ConfigError(f"init provides {states.size} states, expected {expected}")
    if not np.all(np.isfinite(states)):
        raise SimulationError("initial states contain non-finite values")
    return states


def _reflect(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    x = np.where(x < lo, 2.0 * lo - x, x)
    x = np.where(x > hi, 2.0 * hi - x, x)
    return np.clip(x, lo, hi)


def _steps(T: float, dt: float):
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if T < dt:
        raise ConfigError("horizon must be at least one step")
    n = max(1, int(np.ceil(T / dt - 1e-9)))
    return n, T / n


def _record_plan(n_steps: int, record_every):
    if record_every is None:
        record_every = max(1, n_steps // 32)
    ks = sorted(set(range(0, n_steps + 1, int(record_every))) | {0, n_steps})
    return np.asarray(ks, dtype=np.int64)


def _chunk_ranges(n: int, threads: int):
    threads = max(1, int(threads))
    edges = np.linspace(0, n, threads + 1, dtype=np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _check_finite(x: np.ndarray, offset: int, step: int):
    bad = ~np.isfinite(x)
    if np.any(bad):
        particle = offset + int(np.argmax(bad))
        raise SimulationError(f"particle {particle} became non-finite at step {step}")


def simulate_forward(pot, init, N: int, T: float, dt: float, seed: int,
                     domain=(-8.0, 8.0), record_every=None,
                     noise_scale: float = 1.0, threads: int = 1) -> PathEnsemble:
    """Euler-Maruyama for dX = -grad Psi dt + dW with reflecting bounds.

    `init` may be per-particle samples, a scalar start, or (grid, slice, N)
    for inverse-CDF sampling.  `noise_scale` rescales dW (0 gives the
    deterministic gradient flow, used by tests).
    """
    if N < 1:
        raise ConfigError("need at least one particle")
    n_steps, dt_eff = _steps(T, dt)
    rec = _record_plan(n_steps, record_every)
    lo, hi = float(domain[0]), float(domain[1])
    init_states = _resolve_init(init, seed, expected=N)
    stream = NoiseStream(seed, CHANNEL_FORWARD, N)
    sqdt = noise_scale * np.sqrt(dt_eff)

    states = np.empty((N, rec.size))
    rec_index = {int(k): j for j, k in enumerate(rec)}

    def run(bounds):
        a, b = bounds
        x = _reflect(init_states[a:b], lo, hi)
        states[a:b, 0] = x
        for k in range(n_steps):
            drift = -np.asarray(pot.gradient(x), dtype=float)
            x = x + drift * dt_eff + sqdt * stream.normals(k, a, b)
            _check_finite(x, a, k + 1)
            x = _reflect(x, lo, hi)
            j = rec_index.get(k + 1)
            if j is not None:
                states[a:b, j] = x

    ranges = _chunk_ranges(N, threads)
    if len(ranges) == 1:
        run(ranges[0])
    else:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            list(pool.map(run, ranges))
    times = rec * dt_eff
    return PathEnsemble(times, states, np.zeros_like(states), seed, "forward",
                        diagnostics={"steps": n_steps, "dt": dt_eff})


def _simulate_controlled(pot, field, policy, init, T, dt, seed, channel,
                         direction, optimal_kind, record_every, threads,
                         clip_max):
    """Shared integrator for the reversed and second-stage dynamics.

    The drift is field_score(T - tau) + u - grad Psi on the field's grid,
    where tau is the run's own clock; for the matching optimal kind the
    cancellation drift = -grad Psi is hard-coded.
    """
    kind = policy.kind
    if kind in ("score_optimal", "lambda_optimal") and kind != optimal_kind:
        raise ConfigError(f"policy '{kind}' does not apply to this stage")
    n_steps, dt_eff = _steps(T, dt)
    cover = 1e-9 * max(1.0, T)
    if field.times[0] > cover or field.times[-1] < T - cover:
        raise CoverageError("field does not cover the run horizon")
    rec = _record_plan(n_steps, record_every)
    grid = field.grid
    init_states = _resolve_init(init, seed)
    N = init_states.size
    stream = NoiseStream(seed, channel, N)
    sqdt = np.sqrt(dt_eff)

    states = np.empty((N, rec.size))
    log_weight = np.zeros((N, rec.size))
    energy = np.zeros(N)
    gap = np.zeros(N)
    clip_counts = np.zeros(len(_chunk_ranges(N, threads)), dtype=np.int64)
    rec_index = {int(k): j for j, k in enumerate(rec)}

    def run(job):
        ci, (a, b) = job
        x = _reflect(init_states[a:b], grid.lower, grid.upper)
        states[a:b, 0] = x
        logw = np.zeros(b - a)
        half = 0.5 * dt_eff
        for k in range(n_steps):
            time_to_go = T - k * dt_eff
            lo_i, hi_i, wt = field.time_bracket(time_to_go)
            row = (field.score[lo_i] if lo_i == hi_i
                   else (1.0 - wt) * field.score[lo_i] + wt * field.score[hi_i])
            raw = _gather(row, grid, x)
            over = np.abs(raw) > clip_max
            if np.any(over):
                clip_counts[ci] += int(np.count_nonzero(over))
                raw = np.clip(raw, -clip_max, clip_max)

            if kind == "zero":
                u = None
                drift = raw
                gap[a:b] += half * raw ** 2
            elif kind == optimal_kind:
                u = -raw
                drift = np.zeros_like(raw)
                energy[a:b] += half * raw ** 2
            elif kind == "perturbed":
                delta = policy.control_term(time_to_go, x)
                u = delta - raw
                drift = delta
                energy[a:b] += half * u ** 2
                gap[a:b] += half * delta ** 2
            else:  # custom
                u = policy.control_term(time_to_go, x)
                drift = raw + u
                energy[a:b] += half * u ** 2
                gap[a:b] += half * (raw + u) ** 2
            drift = drift - np.asarray(pot.gradient(x), dtype=float)

            dw = sqdt * stream.normals(k, a, b)
            if u is not None:
                logw += u * dw - half * u ** 2
            x = x + drift * dt_eff + dw
            _check_finite(x, a, k + 1)
            if not np.all(np.isfinite(logw)):
                raise SimulationError(f"non-finite log-weight at step {k + 1}")
            x = _reflect(x, grid.lower, grid.upper)
            j = rec_index.get(k + 1)
            if j is not None:
                states[a:b, j] = x
                log_weight[a:b, j] = logw

    jobs = list(enumerate(_chunk_ranges(N, threads)))
    if len(jobs) == 1:
        run(jobs[0])
    else:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            list(pool.map(run, jobs))
    times = rec * dt_eff
    diagnostics = {
        "steps": n_steps,
        "dt": dt_eff,
        "score_evaluations": int(n_steps) * int(N),
        "score_clipped": int(clip_counts.sum()),
    }
    return PathEnsemble(times, states, log_weight, seed, direction,
                        energy=energy, gap=gap, diagnostics=diagnostics)


def simulate_reversed(pot, sf: ScoreField, policy: ControlPolicy, init,
                      T: float, dt: float, seed: int, record_every=None,
                      threads: int = 1, clip_max: float = CLIP_DEFAULT) -> PathEnsemble:
    """Controlled time reversal dX(s) = (dL(T-s) + gamma - grad Psi) ds + dW.

    `init` should be samples of the forward law at time T (array, ensemble,
    or (grid, slice, N) to draw them).  With the score_optimal policy the
    drift is exactly -grad Psi and the run re-enacts the forward dynamics
    started from P(T).
    """
    if not isinstance(sf, ScoreField):
        raise ConfigError("simulate_reversed needs a ScoreField")
    return _simulate_controlled(pot, sf, policy, init, T, dt, seed,
                                CHANNEL_REVERSED, "reversed", "score_optimal",
                                record_every, threads, clip_max)


def simulate_second_forward(pot, lf: LambdaField, policy: ControlPolicy, init,
                            T: float, dt: float, seed: int, record_every=None,
                            threads: int = 1, clip_max: float = CLIP_DEFAULT) -> PathEnsemble:
    """Second-stage dynamics dX(t) = (dLambda(T-t) + beta - grad Psi) dt + dW.

    `init` should be samples of the reversed run's terminal law (a proxy for
    P(2T)); with the lambda_optimal policy the drift is exactly -grad Psi.
    """
    if not isinstance(lf, LambdaField):
        raise ConfigError("simulate_second_forward needs a LambdaField")
    return _simulate_controlled(pot, lf, policy, init, T, dt, seed,
                                CHANNEL_SECOND, "forward", "lambda_optimal",
                                record_every, threads, clip_max)


def empirical_marginal(ens: PathEnsemble, t: float, grid: Grid,
                       weighted: bool = False, weights=None) -> np.ndarray:
    """Histogram density of the recorded states at time t on grid cells.

    With `weighted=True` particles carry exp(log_weight(t)); an explicit
    `weights` array overrides.  The returned slice integrates to 1 against
    the trapezoid weights.
    """
    idx = ens.index_of(t)
    x = ens.states[:, idx]
    if weights is None and weighted:
        lw = ens.log_weight[:, idx]
        weights = np.exp(lw - lw.max())
    edges = cell_edges(grid)
    mass, _ = np.histogram(np.clip(x, grid.lower, grid.upper), bins=edges,
                           weights=weights)
    mass = mass.astype(float)
    total = mass.sum()
    if total <= 0:
        raise SimulationError("empirical marginal has no mass on the grid")
    return mass / np.diff(edges) / total


def ensemble_summary(ens: PathEnsemble, grid: Grid, bins: int = 64) -> dict:
    """JSON-ready summary: recorded times, histograms, weight statistics."""
    edges = np.linspace(grid.lower, grid.upper, bins + 1)
    histograms = []
    for j, t in enumerate(ens.times):
        counts, _ = np.histogram(ens.states[:, j], bins=edges)
        histograms.append(counts.tolist())
    lw = ens.log_weight[:, -1]
    return {
        "particles": int(ens.particles),
        "direction": ens.direction,
        "seed": ens.seed,
        "times": ens.times.tolist(),
        "bin_edges": edges.tolist(),
        "histograms": histograms,
        "log_weight_final": {
            "mean": float(lw.mean()),
            "std": float(lw.std()),
            "min": float(lw.min()),
            "max": float(lw.max()),
        },
        "mean_energy": float(ens.energy.mean()),
        "mean_gap": float(ens.gap.mean()),
        "diagnostics": {k: (int(v) if isinstance(v, (int, np.integer)) else float(v))
                        for k, v in ens.diagnostics.items()},
    }


def write_ensemble_json(ens: PathEnsemble, grid: Grid, path) -> None:
    with open(path, "w") as fh:
        json.dump(ensemble_summary(ens, grid), fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_paths_csv(ens: PathEnsemble, path) -> None:
    """Full recorded paths: one row per (particle, time)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["particle", "t", "x", "log_weight"])
        for i in range(ens.particles):
            for j, t in enumerate(ens.times):
                writer.writerow([i, f"{t:.17g}", f"{ens.states[i, j]:.17g}",
                                 f"{ens.log_weight[i, j]:.17g}"])
