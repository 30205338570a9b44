"""
Regularized quadratic costs and their convergence to the unregularized
Wasserstein cost.

``W2eps^2`` is the quadratic cost of the plan that solves the correlation
problem at ``eps / 2``. In 1D the unregularized cost is exact (Laguerre
intervals from the quantile breakpoints) and so is the second-order
coefficient of the gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .dual_solver import breakpoints_1d, primal_plan_density, solve_dual, solve_unregularized_1d
from .entropic_core import log_soft_assignment
from .measures import DiscreteTarget, SourceDensity
from .quadrature import rule_from_edges
from .sensitivity import RateFit, c_x_margin, fit_exponential_rate

__all__ = [
    "CostGapRecord",
    "w2eps_squared",
    "w2_squared_1d",
    "w2_squared_extrapolated",
    "primal_values",
    "cost_gap_record",
    "cost_gap_closed_form_1d",
    "cost_gap_residual_closed_form",
    "asymptote_coefficient_1d",
    "plan_convergence_check",
    "plan_convergence_rate",
]


@dataclass(frozen=True)
class CostGapRecord:
    """One point of the cost-gap curve."""

    epsilon: float
    w2eps_sq: float
    w2_sq: float
    gap: float
    asymptote: float
    residual: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _plan_cost(psi, rho, target, eps, rule):
    nodes = rule.nodes
    wr = rule.weights * rho.pdf(nodes)
    keep = wr > 0
    nodes, wr = nodes[keep], wr[keep]
    p = primal_plan_density(psi, target, eps, nodes)
    sq = ((nodes[:, None, :] - target.points[None, :, :]) ** 2).sum(axis=-1)
    return float(wr @ (p * sq).sum(axis=1))


def w2eps_squared(rho: SourceDensity, target: DiscreteTarget, eps: float, quad=None, **solver_kw) -> float:
    """``E_pi ||x - y||^2`` for the plan solving the correlation problem at ``eps / 2``.

    Solver failures propagate (``raise_on_failure`` is forced on).
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    solver_kw["raise_on_failure"] = True
    psi, _, rule = solve_dual(rho, target, 0.5 * eps, quad=quad, return_rule=True, **solver_kw)
    return _plan_cost(psi, rho, target, 0.5 * eps, rule)


def _interval_rule(a, b, inner, order=20, panels=16, grading=0, at=()):
    edges = list(np.linspace(a, b, panels + 1)) + [t for t in inner if a < t < b]
    h = (b - a) / panels
    for k in at:
        for j in range(1, grading + 1):
            edges += [k - h * 0.5**j, k + h * 0.5**j]
    edges = np.array([e for e in edges if a <= e <= b])
    return rule_from_edges([edges], order)


def w2_squared_1d(rho: SourceDensity, target: DiscreteTarget) -> float:
    """Exact squared Wasserstein distance in 1D.

    Integrates ``(x - y_i)^2 rho(x)`` over each Laguerre interval of the
    unregularized potential, with panel edges at the breakpoints and at the
    density's kinks.
    """
    if rho.dim != 1 or target.dim != 1:
        raise ValueError("w2_squared_1d needs d = 1")
    order = np.argsort(target.points[:, 0])
    y = target.points[order, 0]
    if target.size == 1:
        cells = np.array([rho.lower[0], rho.upper[0]])
    else:
        sorted_target = DiscreteTarget(y, target.weights[order])
        b = breakpoints_1d(solve_unregularized_1d(rho, sorted_target), sorted_target)
        cells = np.concatenate([[rho.lower[0]], np.clip(b, rho.lower[0], rho.upper[0]), [rho.upper[0]]])
    kinks = tuple(rho.breakpoints)
    rule = _interval_rule(rho.lower[0], rho.upper[0], tuple(cells[1:-1]) + kinks, grading=30, at=kinks)
    x = rule.nodes[:, 0]
    cell = np.clip(np.searchsorted(cells, x, side="right") - 1, 0, y.size - 1)
    return float(rule.weights @ (rho.pdf(rule.nodes) * (x - y[cell]) ** 2))


def w2_squared_extrapolated(rho: SourceDensity, target: DiscreteTarget, eps: float, **solver_kw):
    """Approximate ``W2^2`` from ``W2eps^2`` at ``eps`` and ``eps / 2``.

    Richardson extrapolation in ``eps^2``. Meant for ``d >= 2`` where no exact
    unregularized solver is available.

    Returns
    -------
    value : float
    approximate : bool
        Always ``True``.
    """
    coarse = w2eps_squared(rho, target, eps, **solver_kw)
    fine = w2eps_squared(rho, target, 0.5 * eps, **solver_kw)
    return (4.0 * fine - coarse) / 3.0, True


def primal_values(psi, rho: SourceDensity, target: DiscreteTarget, eps: float, quad) -> dict:
    """Primal objectives evaluated at the plan induced by ``psi``.

    Returns
    -------
    dict
        ``correlation``: ``int <x, y> dpi - eps KL(pi | rho x counting)``.
        ``quadratic``: ``int ||x - y||^2 dpi + 2 eps KL(pi | rho x mu)``, the
        quadratic problem at ``2 eps``.
        ``relation``: ``M2(rho) + M2(mu) - 2 eps H(mu) - 2 correlation`` with
        ``H(mu) = sum mu log mu``; equals ``quadratic`` when ``pi`` has the
        marginal ``mu``.
    """
    nodes = quad.nodes
    wr = quad.weights * rho.pdf(nodes)
    keep = wr > 0
    nodes, wr = nodes[keep], wr[keep]
    y, mu = target.points, target.weights
    logp = log_soft_assignment(psi, target, nodes, eps)
    p = np.exp(logp)
    plogp = np.where(p > 0, p * logp, 0.0)
    kl_counting = float(wr @ (plogp - p).sum(axis=1))
    kl_mu = float(wr @ (plogp - p * np.log(mu)).sum(axis=1)) - float(wr @ p.sum(axis=1))
    corr = float(wr @ (p * (nodes @ y.T)).sum(axis=1))
    sq = ((nodes[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)
    quad_cost = float(wr @ (p * sq).sum(axis=1))
    m2_rho = float(wr @ (nodes**2).sum(axis=1))
    neg_entropy = float(mu @ np.log(mu))
    correlation = corr - eps * kl_counting
    return {
        "correlation": correlation,
        "quadratic": quad_cost + 2 * eps * kl_mu,
        "relation": m2_rho + target.second_moment - 2 * eps * neg_entropy - 2 * correlation,
    }


def asymptote_coefficient_1d(rho: SourceDensity, target: DiscreteTarget) -> float:
    """Second-order gap coefficient ``(pi^2 / 12) sum_i rho(b_i) / (y_{i+1} - y_i)``.

    ``b_i`` are the Laguerre breakpoints of the unregularized potential.
    """
    if rho.dim != 1 or target.dim != 1:
        raise ValueError("asymptote_coefficient_1d needs d = 1")
    if target.size == 1:
        return 0.0
    order = np.argsort(target.points[:, 0])
    sorted_target = DiscreteTarget(target.points[order, 0], target.weights[order])
    b = breakpoints_1d(solve_unregularized_1d(rho, sorted_target), sorted_target)
    dy = np.diff(sorted_target.points[:, 0])
    return float(np.pi**2 / 12 * np.sum(rho.pdf(b.reshape(-1, 1)) / dy))


def cost_gap_record(rho: SourceDensity, target: DiscreteTarget, eps: float, **solver_kw) -> CostGapRecord:
    """Gap ``W2eps^2 - W2^2`` and its distance to ``coefficient * eps^2`` (1D)."""
    w2e = w2eps_squared(rho, target, eps, **solver_kw)
    w2 = w2_squared_1d(rho, target)
    gap = w2e - w2
    asym = asymptote_coefficient_1d(rho, target) * eps**2
    return CostGapRecord(float(eps), w2e, w2, gap, asym, abs(gap - asym))


_SYMMETRIC_MSG = "closed form requires the symmetric two-point instance (rho symmetric, y = (-1, 1), mu = (1/2, 1/2))"


def _check_symmetric_instance(rho, target):
    if rho.dim != 1 or not rho.symmetric or not np.isclose(rho.lower[0], -rho.upper[0], rtol=0, atol=1e-14):
        raise ValueError(_SYMMETRIC_MSG)
    if target is not None:
        pts = np.sort(target.points[:, 0])
        if target.size != 2 or not np.allclose(pts, [-1.0, 1.0], rtol=0, atol=1e-14):
            raise ValueError(_SYMMETRIC_MSG)
        if not np.allclose(target.weights, 0.5, rtol=0, atol=1e-14):
            raise ValueError(_SYMMETRIC_MSG)


def _half_line_rule(s, eps):
    # uniform panels plus geometric grading toward 0 and panels of width ~eps
    edges = list(np.linspace(0.0, s, 17))
    edges += [s / 16 * 0.5**j for j in range(1, 41)]
    edges += [t for t in eps * np.arange(1, 65) / 4 if t < s]
    return rule_from_edges([np.array(edges)], 20)


def _logistic_tail(s, eps):
    """``int_s^inf x / (1 + exp(4 x / eps)) dx``."""
    val, _ = integrate.quad(lambda x: x * special.expit(-4.0 * x / eps), s, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return val


def cost_gap_closed_form_1d(rho: SourceDensity, eps: float, target: DiscreteTarget = None) -> float:
    """``8 int_0^s x rho(x) / (1 + exp(4 x / eps)) dx`` on ``[-s, s]``.

    Valid for a symmetric source and ``mu = (delta_{-1} + delta_1) / 2``; pass
    ``target`` to have it checked.
    """
    _check_symmetric_instance(rho, target)
    if not eps > 0:
        raise ValueError("eps must be > 0")
    s = float(rho.upper[0])
    rule = _half_line_rule(s, eps)
    x = rule.nodes
    return float(8 * rule.weights @ (x[:, 0] * rho.pdf(x) * special.expit(-4 * x[:, 0] / eps)))


def cost_gap_residual_closed_form(rho: SourceDensity, eps: float, target: DiscreteTarget = None) -> float:
    """``|gap - (pi^2 rho(0) / 24) eps^2|`` on the symmetric instance, without cancellation.

    Uses ``8 int_0^s x sigma (rho(x) - rho(0)) dx - 8 rho(0) int_s^inf x sigma dx``
    with ``sigma = 1 / (1 + exp(4 x / eps))``.
    """
    _check_symmetric_instance(rho, target)
    if not eps > 0:
        raise ValueError("eps must be > 0")
    s = float(rho.upper[0])
    rho0 = float(rho.pdf(np.zeros((1, 1)))[0])
    rule = _half_line_rule(s, eps)
    x = rule.nodes
    inner = 8 * rule.weights @ (x[:, 0] * (rho.pdf(x) - rho0) * special.expit(-4 * x[:, 0] / eps))
    return float(abs(inner - 8 * rho0 * _logistic_tail(s, eps)))


def plan_convergence_check(psi_eps, psi0, target: DiscreteTarget, eps: float, x):
    """Compare ``||pi^eps_x - pi^0_x||_inf`` with ``exp(-c_x / (2 eps))``.

    Returns
    -------
    observed, bound : float
    holds : bool

    Raises
    ------
    ValueError
        If ``x`` lies on a Laguerre boundary of ``psi0``.
    """
    c_x = c_x_margin(psi0, x, target)
    observed = float(np.abs(primal_plan_density(psi_eps, target, eps, x) - primal_plan_density(psi0, target, 0.0, x)).max())
    bound = float(np.exp(-c_x / (2 * eps)))
    return observed, bound, bool(observed <= bound)


def plan_convergence_rate(rho: SourceDensity, target: DiscreteTarget, x, eps_grid, psi0=None, **solver_kw):
    """Fit ``log ||pi^eps_x - pi^0_x||_inf`` against ``-1/eps``.

    The slope estimates the exponent ``c_x``; ``psi0`` defaults to the exact 1D
    unregularized potential.

    Returns
    -------
    fit : RateFit
    c_x : float
    observed : ndarray
    """
    if psi0 is None:
        psi0 = solve_unregularized_1d(rho, target)
    c_x = c_x_margin(psi0, x, target)
    observed = []
    psi = None
    for eps in sorted(np.asarray(eps_grid, dtype=float), reverse=True):
        psi, _ = solve_dual(rho, target, float(eps), init=psi, raise_on_failure=True, **solver_kw)
        observed.append(plan_convergence_check(psi, psi0, target, float(eps), x)[0])
    eps_sorted = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    observed = np.array(observed)
    return fit_exponential_rate(eps_sorted, observed), c_x, observed
