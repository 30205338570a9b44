"""
Semi-discrete entropic optimal transport: dual solvers, epsilon-sensitivity
of the potentials and convergence of the regularized costs.
"""

from .annealing import AnnealResult, EpsSchedule, anneal, warm_start_gap
from .cost_analysis import (
    CostGapRecord,
    asymptote_coefficient_1d,
    cost_gap_closed_form_1d,
    cost_gap_record,
    cost_gap_residual_closed_form,
    plan_convergence_check,
    plan_convergence_rate,
    primal_values,
    w2_squared_1d,
    w2_squared_extrapolated,
    w2eps_squared,
)
from .dual_solver import (
    ConvergenceError,
    SolveReport,
    breakpoints_1d,
    primal_plan_density,
    solve_dual,
    solve_unregularized_1d,
)
from .entropic_core import (
    KantorovichDerivatives,
    Potential,
    c_eps_transform,
    kantorovich_eval,
    laguerre_index,
    legendre_transform,
    soft_assignment,
)
from .measures import DiscreteTarget, SourceDensity, builtin_density, product_density, random_target
from .oracle import SinkhornResult, finite_diff_eps_grad, finite_diff_gradient, finite_diff_hessian_form, sinkhorn_discrete
from .quadrature import QuadratureRule, build_rule, expectation, refine_near_boundaries, source_rule
from .sensitivity import RateFit, check_strong_convexity, fit_rate, psi_dot, rough_constant_bound

__version__ = "0.1.0"
