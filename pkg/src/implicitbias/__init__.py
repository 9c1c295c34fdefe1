"""Implicit bias of gradient descent on separable data.

Max-margin solver with KKT artifacts, loss families with controlled tails,
GD / normalized GD / steepest descent with theory checks, rate predictions
and gradient-flow oracles.
"""

from .dataset import (Dataset, Indeterminate, NotSeparable, SeparabilityWitness, check_separable,
                      fold_labels, load_csv, make_appendix_d_dataset, make_fig1_dataset,
                      make_gaussian_dataset, rescale, save_csv)
from .flow import (FlowResult, direction_limit_report, exp_closed_form, integrate_flow,
                   powerlaw_closed_form, subpoly_closed_form, subpoly_ratio)
from .losses import (UNBOUNDED, LossSpec, gradient, inverse_loss, log_total_loss, loss_deriv,
                     loss_second, loss_value, smoothness_bound, tail_envelope_check, total_loss)
from .maxmargin import (DegenerateSpan, Infeasible, MaxIterations, MaxMarginError, MaxMarginSolution,
                        ZeroDual, brute_force_margin, dual_margin_lower_bound, general_norm_margin,
                        min_norm_point, solve_a, solve_hard_margin, solve_wbar, solve_wcheck2,
                        solve_wtilde)
from .optimize import (BoundViolation, NonFiniteIterate, OptimizerConfig, StepSizeError,
                       TrajectoryRecord, checkpoint_grid, loss_upper_bound_cert, polyak_check,
                       run, run_gd, run_normalized_gd, run_steepest_descent, thm4_bound)
from .rates import (RatePrediction, fit_rate, g_poly_exp, generic_g, named_tail,
                    predicted_gaps_generic, predicted_gaps_table1, table1_constants)

__version__ = "0.1.0"
