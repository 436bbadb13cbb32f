"""Potentials, their gradients, and the associated invariant (Gibbs) measure.

A potential is the scalar field driving the overdamped dynamics
``dX = -grad(Psi)(X) dt + dW``; the corresponding invariant density is
``q(x) = exp(-2 Psi(x))``, normalized over the configured domain whenever the
integral is finite.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericError
from .grid import Grid, trapezoid_weights

# exp() arguments are kept above this floor so densities stay strictly positive
_LOG_FLOOR = -700.0


@dataclass(frozen=True)
class Potential:
    """Scalar potential with an analytically coded gradient."""

    label: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian_lower_bound: Optional[float] = None
    params: tuple = field(default_factory=tuple)


def builtin_potential(name: str, params: Sequence[float] = ()) -> Potential:
    """Construct one of the built-in potential families.

    zero         Psi = 0                       (no params)
    quadratic    Psi = x^2 / 2                 (no params)
    double_well  Psi = (x^2 - a^2)^2           (params = [a], a > 0)
    polynomial   Psi = sum_k c_k x^k           (params = [c_0, c_1, ...])
    """
    params = tuple(float(p) for p in params)
    if name == "zero":
        return Potential("zero",
                         lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                         lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                         hessian_lower_bound=0.0)
    if name == "quadratic":
        return Potential("quadratic",
                         lambda x: 0.5 * np.asarray(x, dtype=float) ** 2,
                         lambda x: np.asarray(x, dtype=float),
                         hessian_lower_bound=1.0)
    if name == "double_well":
        if len(params) != 1 or params[0] <= 0:
            raise ConfigError("double_well requires a single parameter a > 0")
        a2 = params[0] ** 2
        return Potential("double_well",
                         lambda x: (np.asarray(x, dtype=float) ** 2 - a2) ** 2,
                         lambda x: 4.0 * np.asarray(x, dtype=float)
                         * (np.asarray(x, dtype=float) ** 2 - a2),
                         params=params)
    if name == "polynomial":
        if not params or not all(np.isfinite(params)):
            raise ConfigError("polynomial requires a finite coefficient list")
        poly = np.polynomial.Polynomial(params)
        dpoly = poly.deriv()
        return Potential("polynomial",
                         lambda x: poly(np.asarray(x, dtype=float)),
                         lambda x: dpoly(np.asarray(x, dtype=float)),
                         params=params)
    raise ConfigError(f"unknown potential family '{name}'")


class GibbsMeasure:
    """Invariant density q = exp(-2 Psi) / Z on a grid.

    For the zero potential the measure is not normalizable; it is flagged
    infinite and only the unnormalized density is available.
    """

    def __init__(self, potential: Potential, grid: Grid):
        self.potential = potential
        self.grid = grid
        self.infinite = potential.label == "zero"
        w = 2.0 * np.asarray(potential.evaluate(grid.nodes), dtype=float)
        if not np.all(np.isfinite(w)):
            raise NumericError("potential is not finite on the grid")
        if np.min(-w) > -_LOG_FLOOR:
            raise NumericError("exp(-2 Psi) overflows on this domain")
        self._w = w
        if self.infinite:
            self.normalizing_constant = None
            self.values = None
            self._log_z = None
        else:
            # integrate in shifted log-space so deep wells cannot underflow
            w_min = w.min()
            z_shifted = np.sum(trapezoid_weights(grid)
                               * np.exp(-np.minimum(w - w_min, -_LOG_FLOOR)))
            self.normalizing_constant = float(z_shifted * np.exp(-w_min))
            self._log_z = float(np.log(z_shifted) - w_min)
            self.values = np.exp(np.maximum(-w - self._log_z, _LOG_FLOOR))

    def density_unnormalized(self, x):
        w = 2.0 * np.asarray(self.potential.evaluate(x), dtype=float)
        return np.exp(np.maximum(-w, _LOG_FLOOR))

    def density(self, x):
        if self.infinite:
            raise NumericError("measure is not normalizable; no density")
        return np.exp(np.maximum(self.log_density(x), _LOG_FLOOR))

    def log_density(self, x):
        """log q(x), computed exactly as -2 Psi(x) - log Z."""
        if self.infinite:
            raise NumericError("measure is not normalizable; no log-density")
        return -2.0 * np.asarray(self.potential.evaluate(x), dtype=float) - self._log_z


def gibbs_measure(pot: Potential, domain, resolution: int = None) -> GibbsMeasure:
    """Normalize exp(-2 Psi) on `domain` by composite trapezoid quadrature."""
    if isinstance(domain, Grid):
        grid = domain
    else:
        lo, hi = float(domain[0]), float(domain[1])
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ConfigError("domain bounds must be finite")
        grid = Grid(lo, hi, int(resolution))
    if grid.points < 16:
        raise ConfigError("resolution must be at least 16")
    return GibbsMeasure(pot, grid)


@dataclass
class AdmissibilityReport:
    """Coercivity, second-moment and initial-entropy checks (report only)."""

    coercivity_margin: float
    second_moment: float
    initial_entropy: float
    coercivity_ok: bool
    second_moment_ok: bool
    entropy_ok: bool

    @property
    def passed(self) -> bool:
        return self.coercivity_ok and self.second_moment_ok and self.entropy_ok


def check_admissibility(pot: Potential, init_density, radius: float,
                        constant: float) -> AdmissibilityReport:
    """Verify the standing assumptions on (Psi, p0).

    Reports the coercivity margin ``min_{|x| >= R} <x, grad Psi(x)> + c |x|^2``
    over the grid, the second moment of the initial density, and its relative
    entropy with respect to the Gibbs measure of `pot` on the same grid.
    """
    from .entropy import relative_entropy

    grid = init_density.grid
    p0 = init_density.slices[0]
    x = grid.nodes
    weights = trapezoid_weights(grid)

    outer = np.abs(x) >= radius
    if np.any(outer):
        margin = float(np.min(x[outer] * pot.gradient(x[outer])
                              + constant * x[outer] ** 2))
    else:
        margin = np.inf
    second = float(np.sum(weights * x ** 2 * p0))

    gibbs = gibbs_measure(pot, grid, grid.points)
    if gibbs.infinite:
        entropy = np.inf
        entropy_ok = False
    else:
        entropy = relative_entropy(p0, gibbs)
        entropy_ok = bool(np.isfinite(entropy))

    return AdmissibilityReport(
        coercivity_margin=margin,
        second_moment=second,
        initial_entropy=float(entropy),
        coercivity_ok=bool(margin >= 0.0),
        second_moment_ok=bool(np.isfinite(second)),
        entropy_ok=entropy_ok,
    )
