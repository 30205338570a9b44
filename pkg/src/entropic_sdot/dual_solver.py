"""
Solvers for the semi-dual problem ``min_{sum psi = 0} K^eps(psi) + <psi, mu>``.

For ``eps > 0`` a damped Newton method runs on the zero-sum subspace; the
quadrature rule is re-refined around the current iterate until it stops
changing. For ``eps = 0`` in 1D the Laguerre breakpoints are the quantiles of
the cumulative target weights.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .entropic_core import Potential, kantorovich_eval, solve_zero_sum, laguerre_index, soft_assignment
from .measures import DiscreteTarget, SourceDensity, as_points
from .quadrature import QuadratureRule, refine_near_boundaries, source_rule

__all__ = [
    "SolveReport",
    "ConvergenceError",
    "solve_dual",
    "solve_unregularized_1d",
    "breakpoints_1d",
    "primal_plan_density",
    "solver_rule",
]

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Raised when the Newton solver fails and ``raise_on_failure`` is set."""

    def __init__(self, message, potential=None, report=None):
        super().__init__(message)
        self.potential = potential
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    objective: float
    line_search_backtracks: int
    wall_time: float
    warm_started: bool
    converged: bool
    regularized: bool = False
    quadrature_warning: bool = False
    n_nodes: int = 0
    refinements: int = 0

    def as_dict(self, timing: bool = False) -> dict:
        d = dict(self.__dict__)
        if not timing:
            d.pop("wall_time")
        return d


def solver_rule(rho: SourceDensity, order: int = 8, panels_per_axis: int = 16) -> QuadratureRule:
    """Base quadrature rule used by :func:`solve_dual` when none is given."""
    return source_rule(rho, order=order, panels_per_axis=panels_per_axis)


def _newton(psi, rho, target, eps, rule, tol, max_iter, armijo=1e-4, shrink=0.5, max_backtracks=60):
    mu = target.weights
    ev = kantorovich_eval(psi, rho, eps, rule, target)
    F = ev.value + psi @ mu
    g = ev.gradient + mu
    res = np.abs(g).max()
    its = backtracks = 0
    regularized = False
    while res > tol and its < max_iter:
        d, reg = solve_zero_sum(ev.hessian, -g)
        regularized |= reg
        slope = g @ d
        if not slope < 0:
            # roundoff in a nearly flat direction; fall back to steepest descent
            d = -(g - g.mean())
            slope = g @ d
        t = 1.0
        slack = 10 * np.finfo(float).eps * max(1.0, abs(F))
        for _ in range(max_backtracks):
            cand = psi + t * d
            cand -= cand.mean()
            ev_c = kantorovich_eval(cand, rho, eps, rule, target)
            F_c = ev_c.value + cand @ mu
            if F_c <= F + armijo * t * slope + slack:
                break
            t *= shrink
            backtracks += 1
        else:
            logger.debug("line search exhausted at eps=%g (residual %.3e)", eps, res)
            break
        psi, ev, F = cand, ev_c, F_c
        g = ev.gradient + mu
        res = np.abs(g).max()
        its += 1
    return psi, F, res, its, backtracks, regularized


def solve_dual(
    rho: SourceDensity,
    target: DiscreteTarget,
    eps: float,
    init=None,
    tol: float = 1e-10,
    *,
    max_iter: int = 100,
    quad: Optional[QuadratureRule] = None,
    refine: bool = True,
    max_refinements: int = 8,
    raise_on_failure: bool = False,
    return_rule: bool = False,
):
    """Damped Newton solve of the regularized semi-dual problem.

    Parameters
    ----------
    rho : SourceDensity
    target : DiscreteTarget
    eps : float
        Regularization, > 0.
    init : array_like, optional
        Warm start (recentered). Defaults to zero.
    tol : float
        Target sup-norm of ``grad K^eps(psi) + mu``.
    max_iter : int
        Newton iterations per refinement round.
    quad : QuadratureRule, optional
        Base rule; defaults to :func:`solver_rule`.
    refine : bool
        Refine the base rule around the iterate's soft boundaries.
    raise_on_failure : bool
        Raise :class:`ConvergenceError` instead of returning a failed report.
    return_rule : bool
        Also return the final (refined) rule.

    Returns
    -------
    psi : Potential
    report : SolveReport
    rule : QuadratureRule
        Only when ``return_rule`` is set.
    """
    if not eps > 0:
        raise ValueError("solve_dual needs eps > 0")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    start = time.perf_counter()
    base = solver_rule(rho) if quad is None else quad
    N = target.size
    psi = np.zeros(N) if init is None else np.array(init, dtype=float).ravel()
    if psi.shape != (N,):
        raise ValueError("init has the wrong length")
    psi = psi - psi.mean()

    total_its = total_bt = 0
    regularized = False
    rule = refine_near_boundaries(base, psi, eps, target) if refine else base
    rounds = 0
    while True:
        psi, F, res, its, bt, reg = _newton(psi, rho, target, eps, rule, tol, max_iter)
        total_its += its
        total_bt += bt
        regularized |= reg
        if not refine or rounds >= max_refinements:
            break
        new_rule = refine_near_boundaries(base, psi, eps, target)
        if new_rule.same_panels(rule):
            break
        rule = new_rule
        rounds += 1
        ev = kantorovich_eval(psi, rho, eps, rule, target, want=("gradient",))
        if np.abs(ev.gradient + target.weights).max() <= tol:
            # the new rule already certifies the iterate
            res = np.abs(ev.gradient + target.weights).max()
            F = kantorovich_eval(psi, rho, eps, rule, target, want=("value",)).value + psi @ target.weights
            break

    converged = bool(res <= tol)
    report = SolveReport(
        iterations=total_its,
        final_residual=float(res),
        objective=float(F),
        line_search_backtracks=total_bt,
        wall_time=time.perf_counter() - start,
        warm_started=init is not None,
        converged=converged,
        regularized=regularized,
        quadrature_warning=bool(rule.depth_exceeded),
        n_nodes=rule.size,
        refinements=rounds,
    )
    out = Potential(psi, eps, solved=converged)
    if not converged:
        msg = f"Newton solver did not reach tol={tol:g} at eps={eps:g} (residual {res:.3e})"
        logger.warning(msg)
        if raise_on_failure:
            raise ConvergenceError(msg, out, report)
    if return_rule:
        return out, report, rule
    return out, report


def _check_sorted_1d(target: DiscreteTarget):
    if target.dim != 1:
        raise ValueError("the exact unregularized solver is one-dimensional")
    y = target.points[:, 0]
    if np.any(np.diff(y) <= 0):
        raise ValueError("target points must be sorted strictly increasing")
    return y


def solve_unregularized_1d(rho: SourceDensity, target: DiscreteTarget) -> Potential:
    """Exact ``eps = 0`` potential in 1D from the quantile function of ``rho``.

    Breakpoints ``b_i = Q(mu_1 + ... + mu_i)`` separate consecutive Laguerre
    intervals, and ``psi_{i+1} - psi_i = b_i (y_{i+1} - y_i)``.
    """
    y = _check_sorted_1d(target)
    if rho.dim != 1 or rho.quantile is None:
        raise ValueError("source must be 1D with a quantile evaluator")
    cum = np.cumsum(target.weights)[:-1]
    b = np.atleast_1d(rho.quantile(np.clip(cum, 0.0, 1.0)))
    psi = np.concatenate([[0.0], np.cumsum(b * np.diff(y))])
    return Potential(psi, 0.0, solved=True)


def breakpoints_1d(psi, target: DiscreteTarget) -> np.ndarray:
    """Boundaries ``(psi_{i+1} - psi_i) / (y_{i+1} - y_i)`` of 1D Laguerre cells."""
    y = _check_sorted_1d(target)
    return np.diff(np.asarray(psi, dtype=float)) / np.diff(y)


def primal_plan_density(psi, target: DiscreteTarget, eps: float, x) -> np.ndarray:
    """Conditional plan ``pi(x, .)`` over targets.

    Soft assignment for ``eps > 0``; for ``eps = 0`` the Laguerre indicator,
    split uniformly over ties.
    """
    if eps > 0:
        return soft_assignment(psi, target, x, eps)
    sets = laguerre_index(psi, target, x)
    single = isinstance(sets, frozenset)
    sets = [sets] if single else sets
    out = np.zeros((len(sets), target.size))
    for k, s in enumerate(sets):
        out[k, list(s)] = 1.0 / len(s)
    return out[0] if single else out
