"""Log likelihood-ratio fields L = log(p/q), their gradients, and the
second-stage field Lambda(s, x) = L(T + s, x).

Fields are built nodewise from a DensityField against a Gibbs measure, with
the density floored at ``floor * q`` so tails never produce -inf.  Gradients
use second-order differences (one-sided at the boundaries).  Evaluation at
arbitrary (t, x) is bilinear -- linear in time between stored slices, linear
in space between nodes -- with queries clamped into the covered rectangle and
values clipped to a configurable bound.
"""
import csv
import json

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigError, CoverageError, GridMismatchError, NumericError
from .grid import Grid, trapezoid_weights

CLIP_DEFAULT = 1e3


class ScoreField:
    """Immutable stack of L(t, .) and dL(t, .) slices on a shared grid."""

    def __init__(self, grid: Grid, times, log_ratio, score, floor: float):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.log_ratio = np.asarray(log_ratio, dtype=float)
        self.score = np.asarray(score, dtype=float)
        self.floor = float(floor)
        if self.log_ratio.shape != (self.times.size, grid.points):
            raise GridMismatchError("log-ratio slices must match (times, points)")
        if self.score.shape != self.log_ratio.shape:
            raise GridMismatchError("score slices must match log-ratio slices")
        for arr in (self.times, self.log_ratio, self.score):
            arr.setflags(write=False)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def time_bracket(self, t: float):
        """Index pair and blend weight for linear interpolation in time."""
        times = self.times
        if t <= times[0]:
            return 0, 0, 0.0
        if t >= times[-1]:
            return times.size - 1, times.size - 1, 0.0
        hi = int(np.searchsorted(times, t))
        lo = hi - 1
        return lo, hi, (t - times[lo]) / (times[hi] - times[lo])


class LambdaField(ScoreField):
    """ScoreField re-indexed by the second-stage clock s = t - T."""

    def __init__(self, grid, times, log_ratio, score, floor, reference_time):
        super().__init__(grid, times, log_ratio, score, floor)
        self.reference_time = float(reference_time)


def _log_ratio_slices(field, gibbs, floor):
    """L = log(max(p, floor*q)/q) rows and their spatial gradients.

    An absolute floor of 1e-300 keeps the log finite at nodes where both p
    and q underflow (deep tails of steep potentials); those nodes carry no
    mass, and evaluation clips the resulting large values anyway.
    """
    log_q = gibbs.log_density(field.grid.nodes)
    q = np.exp(log_q)
    floored = np.maximum(field.slices, np.maximum(floor * q, 1e-300))
    log_ratio = np.log(floored) - log_q
    score = np.gradient(log_ratio, field.grid.h, axis=1, edge_order=2)
    return log_ratio, score


def _check_build(field, gibbs, floor):
    if gibbs.infinite:
        raise NumericError("score fields need a normalizable Gibbs measure")
    if not field.grid == gibbs.grid:
        raise GridMismatchError("density and Gibbs measure use different grids")
    if not 1e-300 <= floor <= 1e-8:
        raise ConfigError("floor must lie in [1e-300, 1e-8]")


def build_score(field, gibbs, floor: float = 1e-14) -> ScoreField:
    """Likelihood-ratio field of a density evolution against its Gibbs law."""
    _check_build(field, gibbs, floor)
    log_ratio, score = _log_ratio_slices(field, gibbs, floor)
    return ScoreField(field.grid, field.times.copy(), log_ratio, score, floor)


def build_lambda(field_second_leg, gibbs, reference_time: float,
                 floor: float = 1e-14) -> LambdaField:
    """Second-stage field Lambda(s, .) = L(T + s, .) for s in [0, T].

    The supplied density must cover [T, 2T]; slices outside that window are
    dropped.  Values are computed by the same rule as build_score, so shared
    instants agree exactly.
    """
    _check_build(field_second_leg, gibbs, floor)
    T = float(reference_time)
    if T <= 0:
        raise ConfigError("reference time must be positive")
    tol = 1e-9 * max(1.0, T)
    keep = (field_second_leg.times >= T - tol) & (field_second_leg.times <= 2 * T + tol)
    times = field_second_leg.times[keep]
    if times.size < 2 or times[0] > T + tol or times[-1] < 2 * T - tol:
        raise CoverageError("density field does not cover [T, 2T]")
    sub = type(field_second_leg)(field_second_leg.grid, times,
                                 field_second_leg.slices[keep], check=False)
    log_ratio, score = _log_ratio_slices(sub, gibbs, floor)
    return LambdaField(field_second_leg.grid, times - times[0], log_ratio,
                       score, floor, T)


def _gather(row: np.ndarray, grid: Grid, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of one slice at pre-clamped positions."""
    pos = (x - grid.lower) / grid.h
    idx = np.clip(pos.astype(np.int64), 0, grid.points - 2)
    lam = pos - idx
    return (1.0 - lam) * row[idx] + lam * row[idx + 1]


def _interp(sf: ScoreField, slices: np.ndarray, t: float, x) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), sf.grid.lower, sf.grid.upper)
    lo, hi, wt = sf.time_bracket(t)
    row = slices[lo] if lo == hi else (1.0 - wt) * slices[lo] + wt * slices[hi]
    return _gather(row, sf.grid, x)


def eval_score(sf: ScoreField, t: float, x, clip_max: float = CLIP_DEFAULT):
    """dL at (t, x), bilinear, clamped to the field and clipped to clip_max."""
    out = np.clip(_interp(sf, sf.score, t, x), -clip_max, clip_max)
    return float(out) if np.ndim(x) == 0 else out


def eval_log_ratio(sf: ScoreField, t: float, x):
    """L at (t, x), bilinear with the same clamping as eval_score."""
    out = _interp(sf, sf.log_ratio, t, x)
    return float(out) if np.ndim(x) == 0 else out


def score_with_clip_count(sf: ScoreField, t: float, x, clip_max: float):
    """(clipped dL values, how many were clipped) for integrator bookkeeping."""
    raw = _interp(sf, sf.score, t, x)
    clipped = int(np.count_nonzero(np.abs(raw) > clip_max))
    if clipped:
        raw = np.clip(raw, -clip_max, clip_max)
    return raw, clipped


def fisher_quadrature(sf: ScoreField, field, t_min: float) -> float:
    """Space-time trapezoid of |dL|^2 p over [t_min, horizon]."""
    if not sf.grid == field.grid:
        raise GridMismatchError("score and density fields use different grids")
    keep = sf.times >= t_min - 1e-12
    if np.count_nonzero(keep) < 2:
        raise CoverageError("fewer than two slices at or after t_min")
    times = sf.times[keep]
    w = trapezoid_weights(sf.grid)
    rates = np.sum(w * sf.score[keep] ** 2 * field.slices[keep], axis=1)
    return float(trapezoid(rates, times))


def write_score_csv(sf: ScoreField, path) -> None:
    """Long-format CSV (t, x, L, dL) with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "L", "dL"])
        for t, lrow, srow in zip(sf.times, sf.log_ratio, sf.score):
            for x, lval, sval in zip(sf.grid.nodes, lrow, srow):
                writer.writerow([f"{t:.17g}", f"{x:.17g}",
                                 f"{lval:.17g}", f"{sval:.17g}"])


def write_score_json(sf: ScoreField, path) -> None:
    header = {
        "grid": {"lower": sf.grid.lower, "upper": sf.grid.upper,
                 "points": sf.grid.points},
        "times": sf.times.tolist(),
        "floor": sf.floor,
    }
    with open(path, "w") as fh:
        json.dump(header, fh, sort_keys=True, indent=1)
        fh.write("\n")
