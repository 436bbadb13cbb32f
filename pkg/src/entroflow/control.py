"""Expected-cost functionals for the controlled dynamics.

The cost of a controlled run is terminal + energy, where the terminal term
evaluates the log likelihood-ratio field at a small positive time t_min on
the run's final states (the regularized stand-in for time 0) and the energy
term is the per-particle accumulator 1/2 int |u|^2.  The optimal policy's
cost equals the relative entropy of the run's *initial* law, which is also
the reference every other policy is compared against; the excess over the
reference is predicted exactly by the mean of 1/2 int |dL + u|^2.

The entropic decomposition splits a controlled run's cost into an endpoint
entropy part and a time-reversal part: D = E[log Z] - KL(controlled endpoint
law || uncontrolled endpoint law), with log Z the path-space density of the
controlled law and the endpoint laws estimated by (self-normalized) endpoint
histograms; H = total - D by construction.
"""
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError, CoverageError
from .grid import trapezoid_weights
from .score import ScoreField, eval_log_ratio
from .sde import ControlPolicy, PathEnsemble, empirical_marginal

CLIP_RATE_LIMIT = 1e-4


@dataclass
class CostReport:
    """Monte Carlo estimate of a controlled run's expected cost."""

    policy: str
    terminal_term: float
    energy_term: float
    total: float
    std_error: float
    reference_entropy: float
    gap: float
    clip_rate: float = 0.0
    flagged: bool = False
    terminal_sensitivity: dict = dc_field(default_factory=dict)
    particles: int = 0


@dataclass
class GapReport:
    """Measured vs predicted excess cost of a suboptimal policy."""

    gap_measured: float
    gap_measured_se: float
    gap_predicted: float
    gap_predicted_se: float

    def __iter__(self):
        return iter((self.gap_measured, self.gap_predicted))

    @property
    def consistent(self) -> bool:
        spread = 3.0 * np.hypot(self.gap_measured_se, self.gap_predicted_se)
        return abs(self.gap_measured - self.gap_predicted) <= spread


@dataclass
class DecompositionReport:
    """Split total = H_term + D_term of a controlled run's cost."""

    H_term: float
    D_term: float
    total: float
    mean_log_z: float
    endpoint_kl: float
    std_error: float

    def __iter__(self):
        return iter((self.H_term, self.D_term))


def _check_run(ens: PathEnsemble, field: ScoreField):
    T = ens.times[-1]
    if abs(field.horizon - T) > 1e-9 * max(1.0, T):
        raise CoverageError("field horizon does not match the run horizon")
    if ens.energy.shape != (ens.particles,):
        raise ConfigError("ensemble lacks per-particle energy accumulators")


def reference_entropy(field: ScoreField, gibbs) -> float:
    """H of the field's horizon slice, reconstructed as p = exp(L + log q)."""
    w = trapezoid_weights(gibbs.grid)
    L = field.log_ratio[-1]
    p = np.exp(L + gibbs.log_density(gibbs.grid.nodes))
    return float(np.sum(w * p * L))


def _clip_rate(ens: PathEnsemble):
    evals = ens.diagnostics.get("score_evaluations", 0)
    return ens.diagnostics.get("score_clipped", 0) / evals if evals else 0.0


def _expected_cost(ens, field, gibbs, policy_label, t_min):
    _check_run(ens, field)
    dt = ens.diagnostics.get("dt", ens.times[1] - ens.times[0])
    if t_min is None:
        t_min = dt
    x_end = ens.final_states
    terminal = eval_log_ratio(field, t_min, x_end)
    totals = terminal + ens.energy
    total = float(totals.mean())
    se = float(totals.std(ddof=1) / np.sqrt(ens.particles)) if ens.particles > 1 else 0.0
    ref = reference_entropy(field, gibbs)
    sensitivity = {}
    for mult in (1, 2, 4):
        probe = mult * dt
        sensitivity[f"{mult}dt"] = float(
            np.mean(eval_log_ratio(field, probe, x_end)) + ens.energy.mean())
    rate = _clip_rate(ens)
    return CostReport(
        policy=policy_label,
        terminal_term=float(np.mean(terminal)),
        energy_term=float(ens.energy.mean()),
        total=total,
        std_error=se,
        reference_entropy=ref,
        gap=total - ref,
        clip_rate=rate,
        flagged=rate >= CLIP_RATE_LIMIT,
        terminal_sensitivity=sensitivity,
        particles=int(ens.particles),
    )


def expected_cost_reversed(ens: PathEnsemble, sf: ScoreField, gibbs,
                           policy_label: str = "", t_min: float = None) -> CostReport:
    """Cost of a reversed run: E[L(t_min, X(T))] + E[1/2 int |gamma|^2].

    The reference entropy is H at the field horizon (the reversed run's
    initial law), which the score-optimal policy attains.
    """
    if ens.direction != "reversed":
        raise ConfigError("expected a reversed-run ensemble")
    return _expected_cost(ens, sf, gibbs, policy_label or "reversed", t_min)


def expected_cost_second(ens: PathEnsemble, lf, gibbs,
                         policy_label: str = "", t_min: float = None) -> CostReport:
    """Second-stage mirror of expected_cost_reversed, with Lambda for L."""
    if ens.direction != "forward":
        raise ConfigError("expected a second-stage (forward) ensemble")
    return _expected_cost(ens, lf, gibbs, policy_label or "second", t_min)


def suboptimality_gap(ens: PathEnsemble, sf: ScoreField, gibbs,
                      t_min: float = None) -> GapReport:
    """Excess cost over the reference vs the accumulated gap integral.

    Both are estimators of E[1/2 int |dL + u|^2]; for a perturbed policy
    u = -dL + delta this is 1/2 int |delta|^2 exactly.  Requires the
    implied perturbation bound |delta| <= 10.
    """
    _check_run(ens, sf)
    T = ens.times[-1]
    if ens.gap.max() > 0.5 * 10.0 ** 2 * T * (1 + 1e-9):
        raise ConfigError("perturbation exceeds the admissible bound |delta| <= 10")
    report = _expected_cost(ens, sf, gibbs, "gap-probe", t_min)
    dt = ens.diagnostics.get("dt", ens.times[1] - ens.times[0])
    x_end = ens.final_states
    totals = eval_log_ratio(sf, t_min if t_min is not None else dt, x_end) + ens.energy
    measured_se = float(totals.std(ddof=1) / np.sqrt(ens.particles))
    predicted = float(ens.gap.mean())
    predicted_se = float(ens.gap.std(ddof=1) / np.sqrt(ens.particles))
    return GapReport(report.gap, measured_se, predicted, predicted_se)


def entropic_decomposition(ens: PathEnsemble, field: ScoreField, gibbs,
                           stage: str = "first", t_min: float = None) -> DecompositionReport:
    """(H_term, D_term) with H_term + D_term = total by construction.

    log Z per path is the Girsanov weight against the realized noise plus
    twice the energy (the path-space density of the controlled law).  The
    endpoint KL compares the run's own endpoint histogram with the
    exp(-log Z)-weighted one (the uncontrolled endpoint law) on the Gibbs
    grid.  D_term must not fall below a small statistical floor.
    """
    if stage not in ("first", "second"):
        raise ConfigError("stage must be 'first' or 'second'")
    expected_direction = "reversed" if stage == "first" else "forward"
    if ens.direction != expected_direction:
        raise ConfigError(f"stage '{stage}' expects a {expected_direction} ensemble")
    report = _expected_cost(ens, field, gibbs, f"decomposition-{stage}", t_min)

    log_z = ens.final_log_weight + 2.0 * ens.energy
    mean_log_z = float(log_z.mean())
    T = ens.times[-1]
    grid = gibbs.grid
    h_controlled = empirical_marginal(ens, T, grid)
    h_base = empirical_marginal(ens, T, grid, weights=np.exp(log_z.mean() - log_z))
    w = trapezoid_weights(grid)
    support = h_controlled > 0.0
    kl = float(np.sum(w[support] * h_controlled[support]
                      * np.log(h_controlled[support]
                               / np.maximum(h_base[support], 1e-300))))
    d_term = mean_log_z - kl
    return DecompositionReport(
        H_term=report.total - d_term,
        D_term=d_term,
        total=report.total,
        mean_log_z=mean_log_z,
        endpoint_kl=kl,
        std_error=report.std_error,
    )


def constant_shift(c: float):
    """Perturbation callback delta(t, x) = c."""
    return lambda time_to_go, x: np.full_like(np.asarray(x, dtype=float), c)


def sine_shift(amplitude: float, frequency: float = 1.0):
    """Perturbation callback delta(t, x) = amplitude * sin(frequency x)."""
    return lambda time_to_go, x: amplitude * np.sin(frequency * np.asarray(x, dtype=float))


def cosine_shift(amplitude: float, frequency: float = 1.0):
    return lambda time_to_go, x: amplitude * np.cos(frequency * np.asarray(x, dtype=float))


def standard_policy_family():
    """Optimal policy, the null control, and five bounded perturbations."""
    return [
        ("score_optimal", ControlPolicy("score_optimal")),
        ("zero", ControlPolicy("zero")),
        ("shift+0.50", ControlPolicy("perturbed", constant_shift(0.5))),
        ("shift-0.50", ControlPolicy("perturbed", constant_shift(-0.5))),
        ("shift+0.25", ControlPolicy("perturbed", constant_shift(0.25))),
        ("sine 0.30", ControlPolicy("perturbed", sine_shift(0.3))),
        ("cosine 0.30", ControlPolicy("perturbed", cosine_shift(0.3))),
    ]


def cost_report_payload(report: CostReport) -> dict:
    return {
        "policy": report.policy,
        "terminal_term": report.terminal_term,
        "energy_term": report.energy_term,
        "total": report.total,
        "std_error": report.std_error,
        "reference_entropy": report.reference_entropy,
        "gap": report.gap,
        "clip_rate": report.clip_rate,
        "flagged": report.flagged,
        "terminal_sensitivity": report.terminal_sensitivity,
        "particles": report.particles,
    }


def write_cost_reports_json(reports, path) -> None:
    with open(path, "w") as fh:
        json.dump([cost_report_payload(r) for r in reports], fh,
                  sort_keys=True, indent=1)
        fh.write("\n")


def policy_passes(report: CostReport, optimal: bool = False) -> bool:
    """Cost-vs-entropy acceptance rule for one policy's report.

    An optimal policy must match the reference entropy within 3 standard
    errors; any other policy must not undercut it by more than that.
    """
    if report.flagged:
        return False
    spread = 3.0 * report.std_error
    if optimal:
        return abs(report.gap) <= spread
    return report.gap >= -spread
