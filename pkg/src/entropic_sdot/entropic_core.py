"""
Pointwise entropic kernel for the correlation cost ``<x, y>``.

Everything is evaluated from the stabilized logits
``z_i(x) = (<x, y_i> - psi_i) / eps`` minus their row maximum, so that
probabilities and log-probabilities stay finite for small ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measures import DiscreteTarget, SourceDensity, as_points

__all__ = [
    "Potential",
    "KantorovichDerivatives",
    "c_eps_transform",
    "legendre_transform",
    "soft_assignment",
    "log_soft_assignment",
    "laguerre_index",
    "kantorovich_eval",
    "solve_zero_sum",
]

# exp underflows to 0 below this log value
_LOG_UNDERFLOW = -745.0


class Potential(np.ndarray):
    """Gauge-fixed dual vector (zero sum) tagged with the ``eps`` it solves.

    A thin ``ndarray`` subclass: it can be used anywhere an array is
    expected. Construction recenters the values.
    """

    def __new__(cls, values, epsilon: float = np.nan, solved: bool = False):
        arr = np.array(values, dtype=float).ravel()
        arr = arr - arr.mean()
        obj = arr.view(cls)
        obj.epsilon = float(epsilon)
        obj.solved = bool(solved)
        return obj

    def __array_finalize__(self, obj):
        self.epsilon = getattr(obj, "epsilon", np.nan)
        self.solved = getattr(obj, "solved", False)

    def __array_wrap__(self, arr, context=None, return_scalar=False):
        # arithmetic leaves the gauge, so results are plain arrays
        arr = np.asarray(arr)
        if return_scalar or arr.ndim == 0:
            return arr[()]
        return arr.view(np.ndarray)

    def __reduce__(self):
        return (Potential, (np.asarray(self), self.epsilon, self.solved))

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self)

    def sup_norm_bound(self, rho: SourceDensity, target: DiscreteTarget) -> float:
        """``R_X diam(Y) + eps log(1/min mu)`` for this potential's eps."""
        eps = 0.0 if np.isnan(self.epsilon) else self.epsilon
        return rho.radius * target.diameter + eps * np.log(1.0 / target.min_weight)


@dataclass
class KantorovichDerivatives:
    """Value and derivatives of ``K^eps`` at one potential (``None`` if not requested)."""

    value: Optional[float] = None
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None
    eps_grad: Optional[np.ndarray] = None


def _points(target) -> np.ndarray:
    if isinstance(target, DiscreteTarget):
        return target.points
    pts = np.asarray(target, dtype=float)
    return pts.reshape(-1, 1) if pts.ndim == 1 else pts


def _scores(psi, target, x):
    """Return ``<x, y_i> - psi_i`` for points x, plus a flag for scalar input."""
    y = _points(target)
    single = np.ndim(x) == 0 or (np.ndim(x) == 1 and y.shape[1] > 1)
    x = as_points(x, y.shape[1])
    return x @ y.T - np.asarray(psi, dtype=float), single


def _check_eps(eps):
    if not eps > 0:
        raise ValueError("eps must be > 0; use legendre_transform / laguerre_index for eps = 0")


def c_eps_transform(psi, target, x, eps: float):
    """``eps * log sum_i exp((<x, y_i> - psi_i) / eps)`` at one or many points."""
    _check_eps(eps)
    s, single = _scores(psi, target, x)
    m = s.max(axis=1)
    out = m + eps * np.log(np.exp((s - m[:, None]) / eps).sum(axis=1))
    return float(out[0]) if single else out


def legendre_transform(psi, target, x):
    """``max_i <x, y_i> - psi_i`` and the set of maximizing indices.

    For a single point returns ``(value, argmax_set)``; for many points a value
    array and a list of index sets. Ties are reported, not broken.
    """
    s, single = _scores(psi, target, x)
    m = s.max(axis=1)
    tol = 1e-12 * np.maximum(1.0, np.abs(m))
    sets = [frozenset(np.flatnonzero(row >= mm - t).tolist()) for row, mm, t in zip(s, m, tol)]
    if single:
        return float(m[0]), sets[0]
    return m, sets


def laguerre_index(psi, target, x):
    """Indices ``i`` with ``x`` in the Laguerre cell ``Lag_i(psi)``."""
    return legendre_transform(psi, target, x)[1]


def log_soft_assignment(psi, target, x, eps: float) -> np.ndarray:
    """Log of :func:`soft_assignment`, computed as logits minus their LSE."""
    _check_eps(eps)
    s, single = _scores(psi, target, x)
    z = s / eps
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return logp[0] if single else logp


def soft_assignment(psi, target, x, eps: float) -> np.ndarray:
    """Softmax of ``(<x, y_i> - psi_i) / eps`` over targets.

    Returns shape ``(N,)`` for a single point, ``(K, N)`` otherwise; rows lie
    exactly on the simplex up to rounding.
    """
    p = np.exp(log_soft_assignment(psi, target, x, eps))
    return p / p.sum(axis=-1, keepdims=True)


def kantorovich_eval(
    psi,
    rho: SourceDensity,
    eps: float,
    quad,
    target,
    want=("value", "gradient", "hessian", "eps_grad"),
) -> KantorovichDerivatives:
    """Evaluate ``K^eps(psi) = int psi^{c,eps} d rho + eps`` and its derivatives.

    Parameters
    ----------
    psi : array_like, shape (N,)
    rho : SourceDensity
    eps : float
        Regularization, must be positive.
    quad : QuadratureRule
        Rule covering the support of ``rho``.
    target : DiscreteTarget or array of points
    want : iterable of str
        Subset of ``value``, ``gradient``, ``hessian``, ``eps_grad``.

    Returns
    -------
    KantorovichDerivatives
        ``gradient = -E pi``, ``hessian = E(diag(pi) - pi pi^T) / eps`` and
        ``eps_grad = E((diag(pi) - pi pi^T) log pi) / eps``, all from one pass
        over the nodes.
    """
    _check_eps(eps)
    if quad.size == 0:
        raise ValueError("empty quadrature rule")
    want = set(want)
    y = _points(target)
    psi = np.asarray(psi, dtype=float)
    nodes = quad.nodes
    wr = quad.weights * rho.pdf(nodes)
    keep = wr > 0
    nodes, wr = nodes[keep], wr[keep]

    s = nodes @ y.T - psi
    m = s.max(axis=1, keepdims=True)
    z = (s - m) / eps
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    p = np.exp(logp)

    out = KantorovichDerivatives()
    if "value" in want:
        ctrans = m[:, 0] + eps * lse[:, 0]
        out.value = float(wr @ ctrans + eps)
    if "gradient" in want:
        out.gradient = -(wr @ p)
    if "hessian" in want:
        pw = p * wr[:, None]
        H = np.diag(pw.sum(axis=0)) - p.T @ pw
        out.hessian = 0.5 * (H + H.T) / eps
    if "eps_grad" in want:
        plogp = np.where(logp < _LOG_UNDERFLOW, 0.0, p * logp)
        integrand = plogp - p * plogp.sum(axis=1, keepdims=True)
        out.eps_grad = (wr @ integrand) / eps
    return out


def solve_zero_sum(H: np.ndarray, rhs: np.ndarray):
    """Solve ``H v = rhs`` for ``v`` with zero sum, ``H`` PSD with kernel ``1``.

    Uses the drop-one basis ``B = [I; -1^T]`` of the zero-sum subspace and the
    reduced system ``B^T H B z = B^T rhs``. A singular reduced matrix gets a
    Tikhonov shift of ``1e-12 * trace / (N - 1)`` and is retried once.

    Returns
    -------
    v : ndarray
    regularized : bool
    """
    n = H.shape[0]
    if n == 1:
        return np.zeros(1), False
    B = np.vstack([np.eye(n - 1), -np.ones((1, n - 1))])
    Hr = B.T @ H @ B
    br = B.T @ rhs
    regularized = False
    try:
        z = np.linalg.solve(Hr, br)
        if not np.all(np.isfinite(z)) or np.linalg.cond(Hr) > 1e15:
            raise np.linalg.LinAlgError("ill-conditioned reduced Hessian")
    except np.linalg.LinAlgError:
        lam = 1e-12 * np.trace(Hr) / (n - 1)
        regularized = True
        z = np.linalg.solve(Hr + lam * np.eye(n - 1), br)
        if not np.all(np.isfinite(z)):
            raise np.linalg.LinAlgError("reduced Hessian is singular even after regularization")
    return B @ z, regularized
