"""Uniform 1D grids, time-indexed density fields, and the Fokker-Planck solver.

The solver advances ``dp/dt = 1/2 p_xx + (Psi' p)_x`` in conservative flux
form.  Interface conductances use exponential fitting (the flux between nodes
is written in terms of the ratio p/q with a Bernoulli-weighted average of
q = exp(-2 Psi)), so the Gibbs density is an exact discrete steady state and
mass is conserved to rounding per step.  Time stepping is Crank-Nicolson with
tridiagonal solves; boundaries carry zero flux.
"""
import csv
import json

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, CoverageError, GridMismatchError, SolverError


class Grid:
    """Uniform grid of `points` nodes on [lower, upper]."""

    def __init__(self, lower: float, upper: float, points: int):
        lower, upper, points = float(lower), float(upper), int(points)
        if not upper > lower:
            raise ConfigError("grid upper bound must exceed lower bound")
        if points < 16:
            raise ConfigError("grid needs at least 16 points")
        self.lower = lower
        self.upper = upper
        self.points = points
        self.h = (upper - lower) / (points - 1)
        self.nodes = np.linspace(lower, upper, points)

    def __eq__(self, other):
        return (isinstance(other, Grid) and self.lower == other.lower
                and self.upper == other.upper and self.points == other.points)

    def __hash__(self):
        return hash((self.lower, self.upper, self.points))

    def __repr__(self):
        return f"Grid({self.lower}, {self.upper}, {self.points})"


def trapezoid_weights(grid: Grid) -> np.ndarray:
    """Quadrature weights: node j owns a cell of width h (h/2 at the ends)."""
    w = np.full(grid.points, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def cell_edges(grid: Grid) -> np.ndarray:
    """Edges of the node-centered cells; outermost edges sit on the bounds."""
    mid = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
    return np.concatenate(([grid.lower], mid, [grid.upper]))


def integrate(grid: Grid, values) -> float:
    return float(np.sum(trapezoid_weights(grid) * values))


class DensityField:
    """Stack of mass-one density slices p(t_i, .) on a shared grid."""

    def __init__(self, grid: Grid, times, slices, check: bool = True):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.slices = np.asarray(slices, dtype=float)
        if self.slices.shape != (self.times.size, grid.points):
            raise GridMismatchError("slices must have shape (times, grid points)")
        if check:
            if np.any(np.diff(self.times) <= 0):
                raise ConfigError("times must be strictly increasing")
            if np.min(self.slices) < 0:
                raise ConfigError("density slices must be nonnegative")
            masses = self.slices @ trapezoid_weights(grid)
            if np.max(np.abs(masses - 1.0)) > 1e-6:
                raise ConfigError("every density slice must integrate to 1")

    def index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise CoverageError(f"time {t} is not stored (nearest {self.times[idx]})")
        return idx

    def slice_at(self, t: float) -> np.ndarray:
        return self.slices[self.index_of(t)]

    def interp_at(self, t: float) -> np.ndarray:
        """Slice at t, linearly interpolated between stored instants."""
        times = self.times
        if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
            raise CoverageError(f"time {t} is outside [{times[0]}, {times[-1]}]")
        if t <= times[0]:
            return self.slices[0]
        if t >= times[-1]:
            return self.slices[-1]
        hi = int(np.searchsorted(times, t))
        lo = hi - 1
        wt = (t - times[lo]) / (times[hi] - times[lo])
        return (1.0 - wt) * self.slices[lo] + wt * self.slices[hi]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def gaussian_slice(grid: Grid, mean: float, var: float) -> np.ndarray:
    """Normal density restricted to the grid and renormalized."""
    if var <= 0:
        raise ConfigError("variance must be positive")
    p = np.exp(-((grid.nodes - mean) ** 2) / (2.0 * var))
    return p / integrate(grid, p)


def mixture_slice(grid: Grid, weights, means, variances) -> np.ndarray:
    """Convex mixture of Gaussians, renormalized on the grid."""
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if not weights.size or not weights.size == means.size == variances.size:
        raise ConfigError("weights, means, variances must have equal length")
    if np.min(weights) <= 0 or np.min(variances) <= 0:
        raise ConfigError("mixture weights and variances must be positive")
    p = np.zeros(grid.points)
    for w, m, v in zip(weights / weights.sum(), means, variances):
        p += w * np.exp(-((grid.nodes - m) ** 2) / (2.0 * v)) / np.sqrt(2 * np.pi * v)
    return p / integrate(grid, p)


def _bernoulli(x: np.ndarray) -> np.ndarray:
    """B(x) = x / (exp(x) - 1), stable near zero."""
    out = np.empty_like(x)
    small = np.abs(x) < 1e-8
    out[small] = 1.0 - 0.5 * x[small]
    xs = np.clip(x[~small], -700.0, 700.0)
    out[~small] = xs / np.expm1(xs)
    return out


def _operator(pot, grid: Grid):
    """Tridiagonal generator A with exact discrete Gibbs fixed point.

    Returns (lower, diag, upper): the three bands of A (row-wise).  The
    interface rates use only potential differences, B(dw) outward and
    B(-dw) inward, so detailed balance against e^(-2 potential) holds
    exactly however deep the tails run -- no overflow, no capping, and in
    particular no spurious flat zone where the drift would vanish.
    """
    w = 2.0 * np.asarray(pot.evaluate(grid.nodes), dtype=float)
    dw = w[1:] - w[:-1]
    out_rate = _bernoulli(dw) / (2.0 * grid.h)
    in_rate = _bernoulli(-dw) / (2.0 * grid.h)
    wcell = trapezoid_weights(grid)

    upper = np.zeros(grid.points)
    lower = np.zeros(grid.points)
    diag = np.zeros(grid.points)
    upper[:-1] = in_rate / wcell[:-1]
    lower[1:] = out_rate / wcell[1:]
    diag[:-1] -= out_rate / wcell[:-1]
    diag[1:] -= in_rate / wcell[1:]
    return lower, diag, upper


def _apply(lower, diag, upper, p):
    out = diag * p
    out[:-1] += upper[:-1] * p[1:]
    out[1:] += lower[1:] * p[:-1]
    return out


def stationary_residual(pot, slice_values, grid: Grid) -> float:
    """L1 norm of the discrete steady-state operator applied to a slice."""
    slice_values = np.asarray(slice_values, dtype=float)
    if slice_values.shape != (grid.points,):
        raise GridMismatchError("slice does not match the grid")
    if np.min(slice_values) < 0:
        raise ConfigError("slice must be nonnegative")
    lower, diag, upper = _operator(pot, grid)
    return float(np.sum(trapezoid_weights(grid)
                        * np.abs(_apply(lower, diag, upper, slice_values))))


def solve_fokker_planck(pot, p0, grid: Grid, horizon: float, dt: float,
                        store_every: int = None) -> DensityField:
    """March p0 forward to `horizon`, storing every `store_every`-th step.

    Requires dt <= h^2 and a normalized, nonnegative p0.  The step actually
    used is horizon/n for the smallest n with horizon/n <= dt (shortened
    further if needed to keep the explicit Crank-Nicolson factor
    nonnegative), so the horizon is always hit exactly and every step
    preserves positivity.  Detected instability (negative mass beyond
    -1e-12, or 1e6-fold growth) raises SolverError naming the step.
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (grid.points,):
        raise GridMismatchError("p0 does not match the grid")
    if np.min(p0) < 0:
        p0 = np.clip(p0, 0.0, None)
    mass = integrate(grid, p0)
    if abs(mass - 1.0) > 1e-6:
        raise ConfigError("p0 must integrate to 1 (got %.8f)" % mass)
    p0 = p0 / mass
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if dt > grid.h ** 2 * (1 + 1e-12):
        raise SolverError(f"dt={dt:g} exceeds the stability budget h^2={grid.h ** 2:g}")

    lower, diag, upper = _operator(pot, grid)
    # keep the explicit half-step nonnegative so every step preserves
    # positivity (the implicit half is an M-matrix and always does)
    dt_internal = min(dt, 2.0 / np.max(-diag))
    n_steps = max(1, int(np.ceil(horizon / dt_internal - 1e-9)))
    dt_eff = horizon / n_steps
    if store_every is None:
        store_every = max(1, n_steps // 800)
    half = 0.5 * dt_eff
    # banded form of (I - dt/2 A) for solve_banded
    ab = np.zeros((3, grid.points))
    ab[0, 1:] = -half * upper[:-1]
    ab[1, :] = 1.0 - half * diag
    ab[2, :-1] = -half * lower[1:]

    cap = 1e6 * max(p0.max(), 1e-300)
    weights = trapezoid_weights(grid)
    p = p0.copy()
    times = [0.0]
    slices = [p0.copy()]
    for k in range(1, n_steps + 1):
        rhs = p + half * _apply(lower, diag, upper, p)
        p = solve_banded((1, 1), ab, rhs)
        pmin = p.min()
        if pmin < -1e-12 or not np.all(np.isfinite(p)):
            raise SolverError(f"instability at step {k}: negative mass {pmin:g}")
        if pmin < 0.0:
            p = np.clip(p, 0.0, None)
            p /= np.sum(weights * p)
        if p.max() > cap:
            raise SolverError(f"instability at step {k}: unbounded growth")
        if k % store_every == 0 or k == n_steps:
            times.append(k * dt_eff)
            slices.append(p.copy())
    return DensityField(grid, np.array(times), np.array(slices))


def shift_times(field: DensityField, offset: float) -> DensityField:
    """Same slices relabeled with times + offset (e.g. a second leg)."""
    return DensityField(field.grid, field.times + offset, field.slices, check=False)


def restrict_times(field: DensityField, lo: float, hi: float) -> DensityField:
    """Sub-field of the stored times falling in [lo, hi] (1e-9 tolerance)."""
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    keep = (field.times >= lo - tol) & (field.times <= hi + tol)
    if np.count_nonzero(keep) < 2:
        raise CoverageError(f"fewer than two stored times in [{lo}, {hi}]")
    return DensityField(field.grid, field.times[keep], field.slices[keep],
                        check=False)


def moments(field: DensityField, t: float):
    """Trapezoid mean, covariance and second moment of the slice at t."""
    p = field.slice_at(t)
    w = trapezoid_weights(field.grid)
    x = field.grid.nodes
    mean = float(np.sum(w * x * p))
    second = float(np.sum(w * x ** 2 * p))
    return mean, second - mean ** 2, second


def cumulative(grid: Grid, slice_values) -> np.ndarray:
    """CDF of the piecewise-linear density at the nodes (starts at 0)."""
    avg = 0.5 * (slice_values[:-1] + slice_values[1:]) * grid.h
    return np.concatenate(([0.0], np.cumsum(avg)))


def interval_mass(grid: Grid, slice_values, a: float, b: float) -> float:
    """Exact integral of the piecewise-linear density over [a, b]."""
    slice_values = np.asarray(slice_values, dtype=float)
    cdf = cumulative(grid, slice_values)

    def point(xi):
        xi = min(max(xi, grid.lower), grid.upper)
        i = min(int((xi - grid.lower) / grid.h), grid.points - 2)
        lam = (xi - grid.nodes[i]) / grid.h
        rise = grid.h * (slice_values[i] * lam
                         + 0.5 * (slice_values[i + 1] - slice_values[i]) * lam ** 2)
        return cdf[i] + rise

    return point(b) - point(a)


def resample_density(slice_values, grid_from: Grid, grid_to: Grid) -> np.ndarray:
    """Cell averages of a fine-grid density on the cells of a coarser grid."""
    edges = cell_edges(grid_to)
    masses = np.array([interval_mass(grid_from, slice_values, a, b)
                       for a, b in zip(edges[:-1], edges[1:])])
    out = masses / np.diff(edges)
    return out / integrate(grid_to, out)


def write_density_csv(field: DensityField, path) -> None:
    """Long-format CSV (t, x, p) with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "p"])
        for t, row in zip(field.times, field.slices):
            for x, p in zip(field.grid.nodes, row):
                writer.writerow([f"{t:.17g}", f"{x:.17g}", f"{p:.17g}"])


def density_header(field: DensityField) -> dict:
    return {
        "grid": {"lower": field.grid.lower, "upper": field.grid.upper,
                 "points": field.grid.points},
        "times": field.times.tolist(),
    }


def write_density_json(field: DensityField, path) -> None:
    with open(path, "w") as fh:
        json.dump(density_header(field), fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_density(csv_path, json_path) -> DensityField:
    """Rebuild a DensityField from the CSV/JSON pair written above."""
    with open(json_path) as fh:
        header = json.load(fh)
    grid = Grid(header["grid"]["lower"], header["grid"]["upper"],
                header["grid"]["points"])
    times = np.asarray(header["times"], dtype=float)
    values = np.empty((times.size, grid.points))
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader)
        if head != ["t", "x", "p"]:
            raise ConfigError(f"unexpected CSV header {head}")
        flat = [float(row[2]) for row in reader]
    if len(flat) != values.size:
        raise ConfigError("CSV row count does not match the JSON header")
    values[:] = np.reshape(flat, values.shape)
    return DensityField(grid, times, values)
