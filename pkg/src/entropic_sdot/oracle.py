"""
Independent checks for the continuous solver: central finite differences of
the Kantorovich functional, and a log-domain Sinkhorn solver on a discretized
source.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.special import logsumexp

from .entropic_core import kantorovich_eval
from .measures import DiscreteTarget

__all__ = [
    "SinkhornResult",
    "finite_diff_gradient",
    "finite_diff_hessian_form",
    "finite_diff_eps_grad",
    "sinkhorn_discrete",
    "default_step",
]


def default_step(psi) -> float:
    """``max(1e-6, 1e-4 ||psi||_inf)``."""
    return max(1e-6, 1e-4 * float(np.abs(np.asarray(psi, dtype=float)).max(initial=0.0)))


def _value(psi, rho, eps, quad, target):
    return kantorovich_eval(psi, rho, eps, quad, target, want=("value",)).value


def _warn_noise(delta, scale, what):
    if abs(delta) < 1e3 * np.finfo(float).eps * max(1.0, abs(scale)):
        warnings.warn(f"{what}: difference is at the roundoff floor, increase h", RuntimeWarning, stacklevel=3)


def finite_diff_gradient(psi, rho, eps, quad, target, h=None) -> np.ndarray:
    """Central differences of ``K^eps`` along each coordinate axis.

    No recentering: the perturbations live in ``R^N`` and the result compares
    with the raw gradient ``-E pi``.
    """
    psi = np.asarray(psi, dtype=float)
    h = default_step(psi) if h is None else float(h)
    if not h > 0:
        raise ValueError("h must be > 0")
    diffs = np.empty(psi.size)
    scale = 0.0
    for i in range(psi.size):
        e = np.zeros(psi.size)
        e[i] = h
        fp = _value(psi + e, rho, eps, quad, target)
        fm = _value(psi - e, rho, eps, quad, target)
        diffs[i] = fp - fm
        scale = max(scale, abs(fp))
    _warn_noise(np.abs(diffs).max(), scale, "finite_diff_gradient")
    return diffs / (2 * h)


def finite_diff_hessian_form(psi, v, rho, eps, quad, target, h=None) -> float:
    """``<v, hess K^eps(psi) v>`` from a second difference of the value along ``v``."""
    psi = np.asarray(psi, dtype=float)
    v = np.asarray(v, dtype=float)
    h = default_step(psi) if h is None else float(h)
    if not h > 0:
        raise ValueError("h must be > 0")
    # second differences lose twice the digits, so the step is floored relative to eps
    h = max(h, 1e-4 * eps)
    f0 = _value(psi, rho, eps, quad, target)
    fp = _value(psi + h * v, rho, eps, quad, target)
    fm = _value(psi - h * v, rho, eps, quad, target)
    _warn_noise(fp - 2 * f0 + fm, f0, "finite_diff_hessian_form")
    return (fp - 2 * f0 + fm) / h**2


def finite_diff_eps_grad(psi, rho, eps, quad, target, h=None) -> np.ndarray:
    """``(grad K^{eps+h}(psi) - grad K^{eps-h}(psi)) / (2h)`` at fixed ``psi``."""
    h = 1e-3 * eps if h is None else float(h)
    if not 0 < h < 0.5 * eps:
        raise ValueError("need 0 < h < eps / 2")
    gp = kantorovich_eval(psi, rho, eps + h, quad, target, want=("gradient",)).gradient
    gm = kantorovich_eval(psi, rho, eps - h, quad, target, want=("gradient",)).gradient
    return (gp - gm) / (2 * h)


@dataclass
class SinkhornResult:
    """Output of :func:`sinkhorn_discrete`.

    ``target_potential`` has zero sum and compares with the semi-dual
    potential; ``source_potential`` is the matching ``(c, eps)``-transform on
    the atoms.
    """

    source_potential: np.ndarray
    target_potential: np.ndarray
    iterations: int
    marginal_violation: float
    converged: bool
    objective_history: List[float] = field(default_factory=list)


def sinkhorn_discrete(
    atoms,
    atom_weights,
    target: DiscreteTarget,
    eps: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    raise_on_failure: bool = True,
) -> SinkhornResult:
    """Log-domain Sinkhorn for the correlation problem on discrete marginals.

    Alternates exact minimization of
    ``<phi, a> + <psi, mu> + eps sum_k a_k sum_i exp((<x_k, y_i> - phi_k - psi_i) / eps)``
    over ``phi`` and ``psi`` until the target marginal is matched within
    ``tol`` in sup norm. After each ``phi`` step this equals the semi-dual
    objective ``sum_k a_k phi_k + <psi, mu> + eps``, which is recorded in
    ``objective_history`` and never increases.

    Parameters
    ----------
    atoms : array_like, shape (K, d) or (K,)
    atom_weights : array_like, shape (K,)
        Probability weights of the atoms.
    target : DiscreteTarget
    eps : float
    tol : float
    max_iter : int
    raise_on_failure : bool
        Raise ``RuntimeError`` when ``max_iter`` is exceeded.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    x = np.asarray(atoms, dtype=float)
    x = x.reshape(-1, 1) if x.ndim == 1 else x
    a = np.asarray(atom_weights, dtype=float)
    if a.shape != (x.shape[0],) or np.any(a < 0) or not np.isclose(a.sum(), 1.0, rtol=0, atol=1e-12):
        raise ValueError("atom weights must be nonnegative, one per atom, summing to 1")
    keep = a > 0
    x, a = x[keep], a[keep]
    mu = target.weights
    log_a = np.log(a)
    log_mu = np.log(mu)
    S = (x @ target.points.T) / eps  # (K, N)

    psi = np.zeros(target.size)
    history = []
    violation = np.inf
    it = 0
    while it < max_iter:
        # phi_k / eps = LSE_i(S_ki - psi_i / eps): source marginal exact
        phi = eps * logsumexp(S - psi / eps, axis=1)
        # target update: column marginal exact
        psi = eps * (logsumexp(S - phi[:, None] / eps + log_a[:, None], axis=0) - log_mu)
        it += 1
        phi = eps * logsumexp(S - psi / eps, axis=1)
        history.append(float(a @ phi + mu @ psi + eps))
        col = np.exp(logsumexp(S - phi[:, None] / eps - psi / eps + log_a[:, None], axis=0))
        violation = float(np.abs(col - mu).max())
        if violation <= tol:
            break
    converged = violation <= tol
    if not converged and raise_on_failure:
        raise RuntimeError(f"Sinkhorn did not converge in {max_iter} iterations (violation {violation:.3e})")
    shift = psi.mean()
    return SinkhornResult(
        source_potential=phi + shift,
        target_potential=psi - shift,
        iterations=it,
        marginal_violation=violation,
        converged=converged,
        objective_history=history,
    )
