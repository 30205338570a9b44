"""
Composite tensor Gauss-Legendre rules on boxes, with panels split where the
soft assignment develops thin transition layers.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .measures import SourceDensity

__all__ = [
    "QuadratureRule",
    "build_rule",
    "rule_from_edges",
    "source_rule",
    "refine_near_boundaries",
    "expectation",
]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Composite rule made of boxes (panels) carrying the same reference rule.

    Attributes
    ----------
    lower, upper : ndarray, shape (P, d)
        Panel corners.
    order : int
        Gauss-Legendre points per axis and per panel.
    depth : ndarray, shape (P,)
        Number of bisections that produced each panel.
    depth_exceeded : bool
        Set by :func:`refine_near_boundaries` when a flagged panel hit the
        maximum depth.
    """

    lower: np.ndarray
    upper: np.ndarray
    order: int
    depth: np.ndarray
    depth_exceeded: bool = False

    def __post_init__(self):
        ref_x, ref_w = _reference(self.order, self.lower.shape[1])
        half = 0.5 * (self.upper - self.lower)
        mid = 0.5 * (self.upper + self.lower)
        nodes = mid[:, None, :] + half[:, None, :] * ref_x[None, :, :]
        weights = np.prod(half, axis=1)[:, None] * ref_w[None, :]
        object.__setattr__(self, "panel_nodes", nodes)
        object.__setattr__(self, "panel_weights", weights)

    @property
    def dim(self) -> int:
        return self.lower.shape[1]

    @property
    def n_panels(self) -> int:
        return self.lower.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.panel_nodes.reshape(-1, self.dim)

    @property
    def weights(self) -> np.ndarray:
        return self.panel_weights.ravel()

    @property
    def size(self) -> int:
        return self.panel_weights.size

    def same_panels(self, other: "QuadratureRule") -> bool:
        return (
            self.order == other.order
            and self.lower.shape == other.lower.shape
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )


_REF_CACHE: dict = {}


def _reference(order: int, dim: int):
    key = (order, dim)
    if key not in _REF_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        xs = np.array(list(itertools.product(x, repeat=dim)))
        ws = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
        _REF_CACHE[key] = (xs, ws)
    return _REF_CACHE[key]


def build_rule(lower, upper, order: int = 8, panels_per_axis: int = 16) -> QuadratureRule:
    """Uniform composite Gauss-Legendre rule on the box ``[lower, upper]``.

    Exact for polynomials of degree ``2 * order - 1`` on every panel.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if order < 1 or panels_per_axis < 1:
        raise ValueError("order and panels_per_axis must be >= 1")
    if lower.shape != upper.shape or np.any(upper <= lower):
        raise ValueError("degenerate box")
    edges = [np.linspace(lo, hi, panels_per_axis + 1) for lo, hi in zip(lower, upper)]
    return rule_from_edges(edges, order)


def rule_from_edges(edges: Sequence, order: int = 8) -> QuadratureRule:
    """Tensor rule whose panels are the cells of the given per-axis edges."""
    edges = [np.unique(np.asarray(e, dtype=float)) for e in edges]
    if any(e.size < 2 for e in edges):
        raise ValueError("each axis needs at least two distinct edges")
    lo_axes = [e[:-1] for e in edges]
    hi_axes = [e[1:] for e in edges]
    lower = np.array(list(itertools.product(*lo_axes)))
    upper = np.array(list(itertools.product(*hi_axes)))
    return QuadratureRule(lower, upper, order, np.zeros(lower.shape[0], dtype=int))


def _graded_edges(a: float, b: float, kinks, n_panels: int, grading: int, ratio: float = 0.5):
    edges = list(np.linspace(a, b, n_panels + 1))
    inner = [k for k in kinks if a < k < b]
    edges += inner
    if grading > 0:
        h = (b - a) / n_panels
        for k in inner:
            for j in range(1, grading + 1):
                t = h * ratio**j
                edges += [k - t, k + t]
    return np.array([e for e in edges if a <= e <= b])


def source_rule(rho: SourceDensity, order: int = 8, panels_per_axis: int = 16, grading: int = 30) -> QuadratureRule:
    """Default rule for ``rho``: uniform panels, with edges at the density's
    non-smooth points and geometric grading toward them (1D)."""
    if rho.dim == 1:
        edges = _graded_edges(rho.lower[0], rho.upper[0], rho.breakpoints, panels_per_axis, grading)
        return rule_from_edges([edges], order)
    return build_rule(rho.lower, rho.upper, order, panels_per_axis)


def _panel_flags(lower, upper, order, psi, eps, points, threshold):
    """True where a panel sees a non-negligible soft-assignment layer."""
    dim = lower.shape[1]
    ref_x, _ = _reference(order, dim)
    corners = np.array(list(itertools.product((-1.0, 1.0), repeat=dim)))
    probe = np.vstack([ref_x, corners])
    half = 0.5 * (upper - lower)
    mid = 0.5 * (upper + lower)
    x = mid[:, None, :] + half[:, None, :] * probe[None, :, :]  # (P, m, d)
    z = (x @ points.T - psi) / eps
    hard = np.argmax(z, axis=-1)
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(logp)
    entropy = -(p * np.where(p > 0, logp, 0.0)).sum(axis=-1)
    crosses = np.any(hard != hard[:, :1], axis=1)
    return crosses | (entropy.max(axis=1) > threshold)


def refine_near_boundaries(
    rule: QuadratureRule,
    psi,
    eps: float,
    target,
    *,
    threshold: float = 1e-10,
    kappa: float = 4.0,
    max_depth: int = 12,
) -> QuadratureRule:
    """Bisect panels that straddle a soft Laguerre boundary.

    A panel is flagged when the hard assignment changes across its probe
    points (nodes and corners) or the soft-assignment entropy at a probe point
    exceeds ``threshold``. Flagged panels wider than ``kappa * eps`` are
    bisected along every axis, recursively, up to ``max_depth`` levels; hitting
    the depth limit sets ``depth_exceeded`` and emits a warning.
    """
    if not eps > 0:
        raise ValueError("refinement needs eps > 0")
    points = target.points if hasattr(target, "points") else np.atleast_2d(target)
    psi = np.asarray(psi, dtype=float)
    dim = rule.dim
    lower, upper, depth = rule.lower, rule.upper, rule.depth
    done_lo, done_hi, done_depth = [], [], []
    exceeded = rule.depth_exceeded
    children = np.array(list(itertools.product((0, 1), repeat=dim)))

    while lower.shape[0]:
        wide = (upper - lower).max(axis=1) > kappa * eps
        flag = np.zeros(lower.shape[0], dtype=bool)
        if np.any(wide):
            flag[wide] = _panel_flags(lower[wide], upper[wide], rule.order, psi, eps, points, threshold)
        capped = flag & (depth >= max_depth)
        if np.any(capped):
            exceeded = True
        split = flag & ~capped
        done_lo.append(lower[~split])
        done_hi.append(upper[~split])
        done_depth.append(depth[~split])
        if not np.any(split):
            break
        lo, hi = lower[split], upper[split]
        mid = 0.5 * (lo + hi)
        new_lo = np.where(children[None, :, :] == 0, lo[:, None, :], mid[:, None, :]).reshape(-1, dim)
        new_hi = np.where(children[None, :, :] == 0, mid[:, None, :], hi[:, None, :]).reshape(-1, dim)
        lower, upper = new_lo, new_hi
        depth = np.repeat(depth[split] + 1, children.shape[0])

    lower = np.vstack(done_lo)
    upper = np.vstack(done_hi)
    depth = np.concatenate(done_depth)
    order_idx = np.lexsort(lower.T[::-1])
    if exceeded and not rule.depth_exceeded:
        warnings.warn("quadrature refinement reached max_depth; layers may be under-resolved", RuntimeWarning)
    return QuadratureRule(lower[order_idx], upper[order_idx], rule.order, depth[order_idx], exceeded)


def expectation(rule: QuadratureRule, rho: SourceDensity, f: Callable[[np.ndarray], np.ndarray]):
    """``E_{x ~ rho} f(x)`` as ``sum_k w_k rho(x_k) f(x_k)``.

    ``f`` maps nodes of shape ``(K, d)`` to an array whose leading axis has
    length ``K``; the trailing shape (scalar, vector, matrix) is preserved.
    """
    nodes = rule.nodes
    values = np.asarray(f(nodes), dtype=float)
    if values.shape[0] != nodes.shape[0]:
        raise ValueError("integrand must return one value per node")
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"non-finite integrand at node {k}: x = {nodes[k].tolist()}")
    wr = rule.weights * rho.pdf(nodes)
    return np.tensordot(wr, values, axes=(0, 0))
