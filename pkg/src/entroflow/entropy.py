"""Relative entropy, relative Fisher information, total variation, the
dissipation identity dH/dt = -I/2, the Pinsker bound, and the
infinite-horizon identity H(0) = 1/2 int_0^inf I dt.

All entropies are in nats.  Integrands floor the density at ``floor * q``
(matching the score module) and the mass of floored cells is tracked so it
can be asserted negligible.
"""
import csv
import json
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import trapezoid

from .errors import (CoverageError, GridMismatchError,
                     UnsupportedMeasureError)
from .grid import DensityField, Grid, trapezoid_weights
from .score import ScoreField, eval_log_ratio
from .sde import simulate_forward


def _check_finite_measure(gibbs):
    if gibbs.infinite:
        raise UnsupportedMeasureError(
            "relative quantities need a normalizable Gibbs measure; "
            "use differential_entropy for the free (zero-potential) case")


def relative_entropy_detail(slice_values, gibbs, floor: float = 1e-14):
    """(H, contribution of floored cells, floored-cell count)."""
    _check_finite_measure(gibbs)
    p = np.asarray(slice_values, dtype=float)
    grid = gibbs.grid
    if p.shape != (grid.points,):
        raise GridMismatchError("slice does not match the Gibbs measure grid")
    q = gibbs.values
    w = trapezoid_weights(grid)
    floored = p < floor * q
    ratio_log = (np.log(np.maximum(p, np.maximum(floor * q, 1e-300)))
                 - gibbs.log_density(grid.nodes))
    terms = w * p * ratio_log
    return (float(terms.sum()), float(terms[floored].sum()),
            int(np.count_nonzero(floored)))


def relative_entropy(slice_values, gibbs, floor: float = 1e-14) -> float:
    """H(p | q) = int p log(p/q) by trapezoid quadrature, in nats."""
    return relative_entropy_detail(slice_values, gibbs, floor)[0]


def differential_entropy(slice_values, grid: Grid) -> float:
    """-int p log p for free dynamics, where no Gibbs reference exists."""
    p = np.asarray(slice_values, dtype=float)
    if p.shape != (grid.points,):
        raise GridMismatchError("slice does not match the grid")
    terms = np.where(p > 0.0, p * np.log(np.maximum(p, 1e-300)), 0.0)
    return -float(np.sum(trapezoid_weights(grid) * terms))


def fisher_information(sf: ScoreField, field: DensityField, t: float) -> float:
    """I(t) = int |dL(t,.)|^2 p(t,.) at a stored time."""
    if not sf.grid == field.grid:
        raise GridMismatchError("score and density fields use different grids")
    p = field.slice_at(t)
    s = sf.score[_score_index(sf, t)]
    return float(np.sum(trapezoid_weights(sf.grid) * s ** 2 * p))


def _score_index(sf: ScoreField, t: float) -> int:
    idx = int(np.argmin(np.abs(sf.times - t)))
    if abs(sf.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
        raise CoverageError(f"time {t} is not stored in the score field")
    return idx


def total_variation(slice_a, slice_b, grid: Grid) -> float:
    """Half the trapezoid L1 distance between two densities."""
    a = np.asarray(slice_a, dtype=float)
    b = np.asarray(slice_b, dtype=float)
    if a.shape != (grid.points,) or b.shape != (grid.points,):
        raise GridMismatchError("slices do not match the grid")
    return 0.5 * float(np.sum(trapezoid_weights(grid) * np.abs(a - b)))


@dataclass
class EntropyReport:
    """Entropy/Fisher/TV trace with dissipation and Pinsker diagnostics.

    dissipation_residual holds |dH/dt + I/2| at interior times (centered
    differences; endpoints carry NaN).  integral_drop and integral_half_i
    express the integral form H(t0) - H(T) = 1/2 int I dt.
    """

    times: np.ndarray
    H: np.ndarray
    I: np.ndarray
    tv: np.ndarray
    dissipation_residual: np.ndarray
    pinsker_margin: np.ndarray
    integral_drop: float
    integral_half_i: float
    floored_fraction: float = 0.0
    metadata: dict = dc_field(default_factory=dict)


def dissipation_check(field: DensityField, sf: ScoreField, gibbs,
                      t_min: float = None) -> EntropyReport:
    """Entropy trace on the stored-time lattice of a density evolution.

    Uses times in [t_min, horizon] (default: the first stored time after 0,
    where the regularity needed by the identity holds).  Requires at least
    three such times.
    """
    _check_finite_measure(gibbs)
    if not (field.grid == sf.grid == gibbs.grid):
        raise GridMismatchError("density, score, and Gibbs grids must agree")
    if t_min is None:
        if field.times.size < 2:
            raise CoverageError("density field stores too few times")
        t_min = field.times[1]
    keep = field.times >= t_min - 1e-12
    times = field.times[keep]
    if times.size < 3:
        raise CoverageError("need at least three stored times at or after t_min")

    w = trapezoid_weights(field.grid)
    q = gibbs.values
    log_q = gibbs.log_density(field.grid.nodes)
    floor = sf.floor
    if sf.times.size != field.times.size or not np.allclose(sf.times, field.times):
        raise CoverageError("score field must store the density field's times")
    p_rows = field.slices[keep]
    s_rows = sf.score[keep]

    log_ratio = np.log(np.maximum(p_rows, floor * q)) - log_q
    H = np.sum(w * p_rows * log_ratio, axis=1)
    I = np.sum(w * s_rows ** 2 * p_rows, axis=1)
    tv = 0.5 * np.sum(w * np.abs(p_rows - q), axis=1)
    floored = float(np.max(np.abs(np.sum(
        np.where(p_rows < floor * q, w * p_rows * log_ratio, 0.0), axis=1))))

    residual = np.full(times.size, np.nan)
    if times.size >= 3:
        dh = np.gradient(H, times)
        residual[1:-1] = np.abs(dh[1:-1] + 0.5 * I[1:-1])
    pinsker = H - 2.0 * tv ** 2
    return EntropyReport(
        times=times, H=H, I=I, tv=tv,
        dissipation_residual=residual,
        pinsker_margin=pinsker,
        integral_drop=float(H[0] - H[-1]),
        integral_half_i=0.5 * float(trapezoid(I, times)),
        floored_fraction=floored / max(abs(H[0]), 1e-300),
        metadata={"t_min": float(t_min), "floor": floor},
    )


@dataclass
class InfiniteHorizonReport:
    """Truncated version of H(P(0)|Q) = 1/2 int_0^inf I dt."""

    lhs: float
    rhs: float
    truncation: float
    adequate: bool

    def __iter__(self):
        return iter((self.lhs, self.rhs))


def infinite_horizon_identity(field: DensityField, sf: ScoreField,
                              gibbs) -> InfiniteHorizonReport:
    """Compare H(P(0)|Q) with 1/2 int_0^T I dt on a long-run field.

    The truncation tail H(P(T)|Q) is returned; if it exceeds 1e-4 of the
    initial entropy a precision warning is emitted (not an error).
    """
    _check_finite_measure(gibbs)
    if not (field.grid == sf.grid == gibbs.grid):
        raise GridMismatchError("density, score, and Gibbs grids must agree")
    if sf.times.size != field.times.size or sf.times.size < 3:
        raise CoverageError("score field must store the density field's times")
    w = trapezoid_weights(field.grid)
    lhs = relative_entropy(field.slices[0], gibbs, sf.floor)
    tail = relative_entropy(field.slices[-1], gibbs, sf.floor)
    I = np.sum(w * sf.score ** 2 * field.slices, axis=1)
    rhs = 0.5 * float(trapezoid(I, field.times))
    adequate = tail <= 1e-4 * max(lhs, 1e-300)
    if not adequate:
        warnings.warn(
            f"horizon leaves entropy tail {tail:.3g} (> 1e-4 of H(0)); "
            "the identity is compared up to that truncation", stacklevel=2)
    return InfiniteHorizonReport(lhs, rhs, tail, adequate)


def backwards_martingale_expectation(pot, gibbs, sf: ScoreField, T: float,
                                     N: int, seed: int, dt: float = 1e-3):
    """(mean, standard error) of l(T, X(T)) for X(0) ~ Q.

    Since X(t) stays Q-distributed, the mean must be int p(T) = 1; deviation
    beyond Monte Carlo error indicates a broken likelihood-ratio field.
    """
    _check_finite_measure(gibbs)
    grid = gibbs.grid
    ens = simulate_forward(pot, (grid, gibbs.values, N), N, T, dt, seed,
                           domain=(grid.lower, grid.upper))
    values = np.exp(eval_log_ratio(sf, T, ens.final_states))
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(N))


def write_entropy_csv(report: EntropyReport, path) -> None:
    """CSV trace (t, H, I, tv, residual, pinsker_margin), 17 digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "H", "I", "tv", "residual", "pinsker_margin"])
        for j in range(report.times.size):
            writer.writerow([
                f"{report.times[j]:.17g}", f"{report.H[j]:.17g}",
                f"{report.I[j]:.17g}", f"{report.tv[j]:.17g}",
                f"{report.dissipation_residual[j]:.17g}",
                f"{report.pinsker_margin[j]:.17g}",
            ])


def write_entropy_json(report: EntropyReport, path) -> None:
    payload = {
        "integral_drop": report.integral_drop,
        "integral_half_i": report.integral_half_i,
        "floored_fraction": report.floored_fraction,
        "metadata": report.metadata,
        "initial_H": float(report.H[0]),
        "final_H": float(report.H[-1]),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
