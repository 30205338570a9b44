"""
Sensitivity of the potentials to the regularization, rate fits and the
inequality checks (strong convexity, hidden-constant estimate, plan margins).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .entropic_core import kantorovich_eval, legendre_transform, solve_zero_sum
from .measures import DiscreteTarget, SourceDensity

__all__ = [
    "RateFit",
    "ConstantBound",
    "psi_dot",
    "fit_rate",
    "fit_exponential_rate",
    "check_strong_convexity",
    "strong_convexity_constant",
    "rough_constant_bound",
    "max_triangle_angle",
    "c_x_margin",
]


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``(log eps, log value)``."""

    slope: float
    intercept: float
    r_squared: float
    eps_range: tuple
    n_points: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "eps_min": self.eps_range[0],
            "eps_max": self.eps_range[1],
            "n_points": self.n_points,
        }


def psi_dot(psi, rho: SourceDensity, target: DiscreteTarget, eps: float, quad) -> np.ndarray:
    """Derivative of the solved potential with respect to ``eps``.

    Solves ``hess K^eps(psi) v = -d_eps grad K^eps(psi)`` for the unique
    zero-sum ``v``. ``psi`` must solve the problem at this ``eps`` and ``quad``
    should be the rule it was solved with.
    """
    ev = kantorovich_eval(psi, rho, eps, quad, target, want=("hessian", "eps_grad"))
    v, _ = solve_zero_sum(ev.hessian, -ev.eps_grad)
    return v - v.mean()


def _line_fit(u, v):
    A = np.vstack([u, np.ones_like(u)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, v, rcond=None)
    pred = A @ np.array([slope, intercept])
    ss_res = float(np.sum((v - pred) ** 2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(intercept), r2


def _check_grid(eps_grid, values):
    eps = np.asarray(eps_grid, dtype=float)
    vals = np.asarray(values, dtype=float)
    if eps.shape != vals.shape:
        raise ValueError("eps_grid and values must have the same length")
    if eps.size < 3:
        raise ValueError("a rate fit needs at least 3 points")
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    if np.any(~(vals > 0)):
        raise ValueError("values must be positive for a log fit")
    return eps, vals


def fit_rate(eps_grid, values) -> RateFit:
    """Slope of ``log(values)`` against ``log(eps)``.

    >>> eps = np.array([1e-1, 1e-2, 1e-3])
    >>> round(fit_rate(eps, eps**2).slope, 12)
    2.0
    """
    eps, vals = _check_grid(eps_grid, values)
    slope, intercept, r2 = _line_fit(np.log(eps), np.log(vals))
    return RateFit(slope, intercept, r2, (float(eps.min()), float(eps.max())), int(eps.size))


def fit_exponential_rate(eps_grid, values) -> RateFit:
    """Slope of ``log(values)`` against ``-1/eps``: ``values ~ C exp(-slope/eps)``."""
    eps, vals = _check_grid(eps_grid, values)
    slope, intercept, r2 = _line_fit(-1.0 / eps, np.log(vals))
    return RateFit(slope, intercept, r2, (float(eps.min()), float(eps.max())), int(eps.size))


def strong_convexity_constant(rho: SourceDensity, target: DiscreteTarget, eps: float) -> float:
    """``exp(R_Y diam(X)) M_rho / m_rho + eps``."""
    if not rho.lower_bound > 0:
        raise ValueError("strong convexity constant needs m_rho > 0")
    return float(np.exp(target.radius * rho.diameter) * rho.upper_bound / rho.lower_bound + eps)


def check_strong_convexity(psi, rho: SourceDensity, target: DiscreteTarget, eps: float, v, quad, hessian=None):
    """Compare ``Var_mu(v)`` with ``constant * <v, hess K^eps(psi) v>``.

    Returns
    -------
    lhs, rhs : float
    holds : bool
        ``lhs <= rhs * (1 + 1e-8)`` up to an absolute slack at the roundoff
        level of ``<v, H v>`` (so ``v = 1_N``, where both sides vanish, holds).
    """
    v = np.asarray(v, dtype=float)
    mu = target.weights
    if hessian is None:
        hessian = kantorovich_eval(psi, rho, eps, quad, target, want=("hessian",)).hessian
    const = strong_convexity_constant(rho, target, eps)
    lhs = float(mu @ v**2 - (mu @ v) ** 2)
    rhs = const * float(v @ hessian @ v)
    slack = 1e-12 * const * float(v @ v) * max(1.0, float(np.trace(hessian)))
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-8) + slack)


def max_triangle_angle(points, collinear_tol: float = 1e-12):
    """Largest angle (radians) over all non-collinear triples, ``None`` if none."""
    pts = np.asarray(points, dtype=float)
    best = None
    for a, b, c in itertools.permutations(range(len(pts)), 3):
        if not a < c:
            continue
        u, w = pts[a] - pts[b], pts[c] - pts[b]
        nu, nw = np.linalg.norm(u), np.linalg.norm(w)
        cos = np.clip(u @ w / (nu * nw), -1.0, 1.0)
        if 1.0 - abs(cos) <= collinear_tol:
            continue
        ang = float(np.arccos(cos))
        best = ang if best is None else max(best, ang)
    return best


@dataclass(frozen=True)
class ConstantBound:
    """Evaluated hidden-constant expression, up to a dimension-only factor ``C_d``."""

    value: float
    theta: float | None
    theta_term_omitted: bool
    terms: dict

    def __str__(self):
        note = " (theta term omitted)" if self.theta_term_omitted else ""
        return f"{self.value:.6g} x C_d{note}"


def rough_constant_bound(rho: SourceDensity, target: DiscreteTarget) -> ConstantBound:
    """Rough upper bound on the constants hidden in the ``eps^alpha'`` rate.

    The three bracketed terms are reported in ``terms``. When no three target
    points span a proper triangle (1D, or ``N < 3``) the angle term is dropped
    and ``theta_term_omitted`` is set.
    """
    if not rho.lower_bound > 0:
        raise ValueError("the bound needs m_rho > 0")
    N = target.size
    d = rho.dim
    mu_min = target.min_weight
    M, m = rho.upper_bound, rho.lower_bound
    C, alpha = rho.holder_constant, rho.holder_exponent
    RX, RY = rho.radius, target.radius
    dX, dY = rho.diameter, target.diameter
    delta = target.min_separation
    log_mu = np.log(1.0 / mu_min)

    first = N * RX * dY + log_mu
    second = N**2 * M * dX ** (d - 1) * (1 + C / delta**alpha + RX * dY + log_mu)
    theta = max_triangle_angle(target.points) if N >= 3 else None
    if theta is None:
        third = 0.0
    else:
        third = N**3 * M * dX ** (d - 2) * dY**4 / (np.cos(theta / 2) * delta**4) * (1 + RX * dY + log_mu)
    prefactor = N / mu_min * M / m * np.exp(RY * dX)
    value = float(prefactor * (first + second + third))
    return ConstantBound(
        value=value,
        theta=theta,
        theta_term_omitted=theta is None,
        terms={"prefactor": float(prefactor), "first": float(first), "second": float(second), "third": float(third)},
    )


def c_x_margin(psi0, x, target: DiscreteTarget) -> float:
    """Gap between the best and the second-best score at ``x`` for ``psi0``.

    Raises
    ------
    ValueError
        If ``x`` lies on a Laguerre boundary (the maximizer is not unique).
    """
    value, argmax = legendre_transform(psi0, target, x)
    if len(argmax) > 1:
        raise ValueError("boundary point: x belongs to several Laguerre cells")
    if target.size == 1:
        return np.inf
    x = np.atleast_1d(np.asarray(x, dtype=float))
    scores = target.points @ x - np.asarray(psi0, dtype=float)
    others = np.delete(scores, next(iter(argmax)))
    return float(value - others.max())
