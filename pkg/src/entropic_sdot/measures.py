"""
Source densities on boxes and finitely supported target measures.

The four built-in one-dimensional families (``lebesgue``, ``gaussian``,
``laplace`` and ``holder``) are normalized in closed form on their (possibly
shrunk) support and carry the regularity metadata used by the analysis
modules: lower/upper density bounds, Hölder exponent and constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize, special

__all__ = [
    "SourceDensity",
    "DiscreteTarget",
    "builtin_density",
    "product_density",
    "cdf_and_quantile",
    "discretize_source",
    "random_target",
    "as_points",
    "BUILTIN_NAMES",
]

BUILTIN_NAMES = ("lebesgue", "gaussian", "laplace", "holder")


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to an array of points of shape ``(n, dim)``.

    Scalars and flat arrays are read as one-dimensional points when
    ``dim == 1``; a flat array of length ``dim`` is a single point otherwise.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        if dim == 1:
            return x.reshape(-1, 1)
        return x.reshape(1, dim)
    return x


@dataclass(frozen=True, eq=False)
class SourceDensity:
    """Absolutely continuous probability density on an axis-aligned box.

    Attributes
    ----------
    lower, upper : ndarray, shape (d,)
        Corners of the support box.
    pdf : callable
        Vectorized evaluator mapping points of shape ``(n, d)`` to ``(n,)``.
    lower_bound, upper_bound : float
        ``m_rho <= rho <= M_rho`` on the box.
    holder_exponent, holder_constant : float
        ``|rho(x) - rho(x')| <= C * |x - x'|**alpha``.
    cdf, quantile : callable, optional
        One-dimensional distribution and quantile functions.
    breakpoints : tuple of float
        Points (1D) where the density is not smooth; quadrature panels are
        aligned and graded there.
    symmetric : bool
        Whether ``rho(x) == rho(-x)`` on a box symmetric about the origin.
    """

    lower: np.ndarray
    upper: np.ndarray
    pdf: Callable[[np.ndarray], np.ndarray]
    lower_bound: float
    upper_bound: float
    holder_exponent: float
    holder_constant: float
    cdf: Optional[Callable] = None
    quantile: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    breakpoints: tuple = ()
    symmetric: bool = False

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def radius(self) -> float:
        """Smallest R with the box inside the centered ball B(0, R)."""
        corner = np.maximum(np.abs(self.lower), np.abs(self.upper))
        return float(np.linalg.norm(corner))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def __call__(self, x) -> np.ndarray:
        return self.pdf(as_points(x, self.dim))

    def contains(self, x) -> np.ndarray:
        x = as_points(x, self.dim)
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)


@dataclass(frozen=True, eq=False)
class DiscreteTarget:
    """Finitely supported measure ``sum_i weights[i] * delta_{points[i]}``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights have different lengths")
        if pts.shape[0] == 0:
            raise ValueError("target must have at least one point")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("target weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"target weights sum to {w.sum()!r}, not 1")
        if pts.shape[0] > 1 and self._pairwise(pts)[np.triu_indices(pts.shape[0], 1)].min() <= 0:
            raise ValueError("target points must be distinct")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @staticmethod
    def _pairwise(pts):
        return np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def min_weight(self) -> float:
        return float(self.weights.min())

    @property
    def min_separation(self) -> float:
        """delta = min_{i != j} |y_i - y_j| (``inf`` for a single point)."""
        if self.size < 2:
            return np.inf
        d = self._pairwise(self.points)
        return float(d[np.triu_indices(self.size, 1)].min())

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.points, axis=1).max())

    @property
    def diameter(self) -> float:
        if self.size < 2:
            return 0.0
        return float(self._pairwise(self.points).max())

    @property
    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.points**2, axis=1))


# --------------------------------------------------------------------------
# Built-in one-dimensional families
# --------------------------------------------------------------------------

def _family(name: str, sigma: float, alpha: float):
    """Unnormalized profile f, its antiderivative F0 and |f'| on a 1D grid."""
    if name == "lebesgue":
        f = lambda x: np.ones_like(x)
        F0 = lambda x: x
        slope = lambda x: np.zeros_like(x)
        return f, F0, slope, 1.0
    if name == "gaussian":
        if not sigma > 0:
            raise ValueError("gaussian requires sigma > 0")
        f = lambda x: np.exp(-0.5 * (x / sigma) ** 2)
        F0 = lambda x: sigma * np.sqrt(2 * np.pi) * (special.ndtr(x / sigma) - 0.5)
        slope = lambda x: np.abs(x) / sigma**2 * np.exp(-0.5 * (x / sigma) ** 2)
        return f, F0, slope, 1.0
    if name == "laplace":
        f = lambda x: np.exp(-np.abs(x))
        F0 = lambda x: np.sign(x) * -np.expm1(-np.abs(x))
        slope = lambda x: np.exp(-np.abs(x))
        return f, F0, slope, 1.0
    if name == "holder":
        if not 0 < alpha <= 1:
            raise ValueError("holder requires alpha in (0, 1]")
        f = lambda x: 1.0 - np.abs(x) ** alpha
        F0 = lambda x: np.sign(x) * (np.abs(x) - np.abs(x) ** (alpha + 1) / (alpha + 1))
        return f, F0, None, alpha
    raise ValueError(f"unknown density name {name!r}; expected one of {BUILTIN_NAMES}")


def builtin_density(
    name: str,
    *,
    sigma: float = 1.0,
    alpha: float = 0.5,
    shrink: Optional[float] = None,
    support: Sequence[float] = (-1.0, 1.0),
) -> SourceDensity:
    """Build one of the benchmark densities on a 1D interval.

    Parameters
    ----------
    name : {'lebesgue', 'gaussian', 'laplace', 'holder'}
        Family. ``gaussian`` is ``exp(-x^2 / 2 sigma^2)``, ``laplace`` is
        ``exp(-|x|)`` and ``holder`` is ``1 - |x|^alpha``, each restricted to
        the support and renormalized.
    sigma : float
        Gaussian scale.
    alpha : float
        Hölder exponent of the ``holder`` family.
    shrink : float in (0, 1], optional
        Restrict the support to the centered sub-interval of relative half
        width ``shrink`` and renormalize. Defaults to 0.99 for ``holder``
        (which vanishes at the endpoints of [-1, 1]) and 1 otherwise.
    support : (a, b)
        Interval before shrinking.

    Returns
    -------
    SourceDensity
    """
    f, F0, slope, exponent = _family(name, sigma, alpha)
    if shrink is None:
        shrink = 0.99 if name == "holder" else 1.0
    if not 0 < shrink <= 1:
        raise ValueError("shrink must be in (0, 1]")
    a0, b0 = map(float, support)
    if not b0 > a0:
        raise ValueError("degenerate support interval")
    center, half = 0.5 * (a0 + b0), 0.5 * (b0 - a0)
    a, b = center - shrink * half, center + shrink * half

    Z = float(F0(b) - F0(a))
    if not (np.isfinite(Z) and Z > 0):
        raise ValueError(f"{name} is not normalizable on [{a}, {b}]")

    # all profiles decrease in |x|
    near = 0.0 if a <= 0 <= b else (a if abs(a) < abs(b) else b)
    far = a if abs(a) >= abs(b) else b
    m_rho = float(f(np.array(far))) / Z
    M_rho = float(f(np.array(near))) / Z
    if name == "holder" and m_rho <= 0:
        m_rho = 0.0

    if name == "holder":
        holder_constant = 1.0 / Z
    else:
        cands = [a, b, near]
        if name == "gaussian":
            cands += [s for s in (-sigma, sigma) if a <= s <= b]
        holder_constant = float(np.max(slope(np.array(cands)))) / Z

    Fa = float(F0(a))

    def pdf(x):
        x = np.asarray(x, dtype=float)
        t = x[:, 0] if x.ndim == 2 else x
        inside = (t >= a) & (t <= b)
        return np.where(inside, f(t), 0.0) / Z

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), a, b)
        return (F0(x) - Fa) / Z

    quantile = _make_quantile(name, sigma, a, b, Fa, Z, F0)

    kinks = (0.0,) if name in ("laplace", "holder") and a < 0 < b else ()
    params = {"sigma": sigma} if name == "gaussian" else {"alpha": alpha} if name == "holder" else {}
    params["shrink"] = shrink
    return SourceDensity(
        lower=np.array([a]),
        upper=np.array([b]),
        pdf=pdf,
        lower_bound=m_rho,
        upper_bound=M_rho,
        holder_exponent=exponent,
        holder_constant=holder_constant,
        cdf=cdf,
        quantile=quantile,
        name=name,
        params=params,
        breakpoints=kinks,
        symmetric=abs(a + b) < 1e-15,
    )


def _make_quantile(name, sigma, a, b, Fa, Z, F0):
    def check(p):
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
            raise ValueError("probabilities must lie in [0, 1]")
        return p

    if name == "lebesgue":
        def quantile(p):
            return a + check(p) * (b - a)
    elif name == "gaussian":
        pa, pb = special.ndtr(a / sigma), special.ndtr(b / sigma)

        def quantile(p):
            p = check(p)
            return np.clip(sigma * special.ndtri(pa + p * (pb - pa)), a, b)
    elif name == "laplace":
        def quantile(p):
            t = Fa + check(p) * Z  # target value of F0, in (-1, 1)
            return np.clip(-np.sign(t) * np.log1p(-np.abs(t)), a, b)
    else:
        def scalar(p):
            if p <= 0:
                return a
            if p >= 1:
                return b
            target = Fa + p * Z
            return optimize.brentq(lambda x: F0(x) - target, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)

        def quantile(p):
            p = check(p)
            out = np.vectorize(scalar, otypes=[float])(p)
            return out if out.ndim else float(out)

    return quantile


def cdf_and_quantile(rho: SourceDensity, p):
    """Quantile of a one-dimensional density: the ``x`` with ``cdf(x) = p``."""
    if rho.dim != 1 or rho.quantile is None:
        raise ValueError("quantiles are only available for 1D densities with a quantile evaluator")
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)) or np.any(np.isnan(p_arr)):
        raise ValueError("probabilities must lie in [0, 1]")
    out = rho.quantile(p_arr)
    return float(out) if np.ndim(out) == 0 else np.asarray(out)


def product_density(first: SourceDensity, second: SourceDensity) -> SourceDensity:
    """Tensor product of two 1D densities, a density on a 2D box."""
    if first.dim != 1 or second.dim != 1:
        raise ValueError("product_density expects two 1D densities")

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return first.pdf(x[:, :1]) * second.pdf(x[:, 1:2])

    lower = np.concatenate([first.lower, second.lower])
    upper = np.concatenate([first.upper, second.upper])
    alpha = min(first.holder_exponent, second.holder_exponent)
    D = float(np.linalg.norm(upper - lower))
    # |d_k|^a_k <= D^(a_k - a) |d|^a on the box
    C = (second.upper_bound * first.holder_constant * D ** (first.holder_exponent - alpha)
         + first.upper_bound * second.holder_constant * D ** (second.holder_exponent - alpha))
    return SourceDensity(
        lower=lower,
        upper=upper,
        pdf=pdf,
        lower_bound=first.lower_bound * second.lower_bound,
        upper_bound=first.upper_bound * second.upper_bound,
        holder_exponent=alpha,
        holder_constant=C,
        name=f"{first.name}x{second.name}",
        params={"first": first.params, "second": second.params},
        symmetric=first.symmetric and second.symmetric,
    )


def discretize_source(rho: SourceDensity, rule):
    """Weighted atoms ``(x_k, w_k rho(x_k))`` of a quadrature rule, renormalized.

    Returns
    -------
    atoms : ndarray, shape (K, d)
    weights : ndarray, shape (K,)
    """
    if rule.size == 0:
        raise ValueError("empty quadrature rule")
    atoms = rule.nodes
    w = rule.weights * rho.pdf(atoms)
    keep = w > 0
    atoms, w = atoms[keep], w[keep]
    return atoms, w / w.sum()


def random_target(
    n: int,
    rho: SourceDensity,
    seed: int,
    *,
    weights=None,
    min_separation: float = 0.05,
    max_tries: int = 100_000,
) -> DiscreteTarget:
    """Draw ``n`` target points uniformly in the support of ``rho``.

    Points are rejection-sampled so that all pairwise distances are at least
    ``min_separation * diam(X)``. In 1D the points are returned sorted.
    ``weights`` defaults to uniform.
    """
    rng = np.random.default_rng(seed)
    sep = min_separation * rho.diameter
    pts = []
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("could not place target points with the requested separation")
        y = rng.uniform(rho.lower, rho.upper)
        if all(np.linalg.norm(y - q) >= sep for q in pts):
            pts.append(y)
    pts = np.array(pts)
    if rho.dim == 1:
        pts = np.sort(pts, axis=0)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    return DiscreteTarget(pts, w)
