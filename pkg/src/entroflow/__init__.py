"""Langevin diffusions on 1D grids: Fokker-Planck densities, likelihood-ratio
scores, controlled forward/reversed particle systems, and the entropic-cost
identities that tie them together.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, CoverageError, EntroflowError,
                     GridMismatchError, NumericError, SimulationError,
                     SolverError, UnsupportedMeasureError)
from .potential import builtin_potential, check_admissibility, gibbs_measure
from .grid import (DensityField, Grid, gaussian_slice, integrate,
                   mixture_slice, moments, read_density, resample_density,
                   restrict_times, shift_times, solve_fokker_planck,
                   stationary_residual, trapezoid_weights, write_density_csv,
                   write_density_json)
from .score import (LambdaField, ScoreField, build_lambda, build_score,
                    eval_log_ratio, eval_score, fisher_quadrature,
                    write_score_csv, write_score_json)
from .sde import (ControlPolicy, PathEnsemble, empirical_marginal,
                  ensemble_summary, sample_from_slice, simulate_forward,
                  simulate_reversed, simulate_second_forward,
                  write_ensemble_json, write_paths_csv)
from .entropy import (EntropyReport, InfiniteHorizonReport,
                      backwards_martingale_expectation, differential_entropy,
                      dissipation_check, fisher_information,
                      infinite_horizon_identity, relative_entropy,
                      relative_entropy_detail, total_variation,
                      write_entropy_csv, write_entropy_json)
from .control import (CostReport, DecompositionReport, GapReport,
                      constant_shift, cosine_shift, entropic_decomposition,
                      expected_cost_reversed, expected_cost_second,
                      policy_passes, reference_entropy, sine_shift,
                      standard_policy_family, suboptimality_gap,
                      write_cost_reports_json)
from .iterate import (IterationResult, IterationTrace, ergodic_occupation,
                      run_iteration, write_trace_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
