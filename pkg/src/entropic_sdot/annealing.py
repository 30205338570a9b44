"""
Epsilon-scaling: solve a geometric sequence of decreasing regularizations,
warm-starting each level from the previous potential.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dual_solver import SolveReport, solve_dual
from .entropic_core import Potential

__all__ = ["EpsSchedule", "AnnealLevel", "AnnealResult", "anneal", "warm_start_gap"]


@dataclass(frozen=True)
class EpsSchedule:
    """Levels ``eps_start * factor**k``; the last level is clamped to ``eps_final``."""

    eps_start: float
    eps_final: float
    factor: float = 0.5

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ValueError("factor must be in (0, 1)")
        if not (self.eps_start > 0 and self.eps_final > 0):
            raise ValueError("eps levels must be positive")

    @property
    def geometric_levels(self) -> np.ndarray:
        """``eps_start * factor**k`` down to the first level ``<= eps_final``."""
        if self.eps_start <= self.eps_final:
            return np.array([self.eps_start])
        levels = [self.eps_start]
        while levels[-1] > self.eps_final:
            levels.append(levels[-1] * self.factor)
        return np.array(levels)

    @property
    def levels(self) -> np.ndarray:
        """Geometric levels with the last one replaced by ``eps_final``.

        An overshooting final level would solve at an eps the caller did not
        ask for, so it is clamped (the previous level stays above it).
        """
        lv = self.geometric_levels.copy()
        if lv.size > 1:
            lv[-1] = self.eps_final
        return lv


@dataclass
class AnnealLevel:
    eps: float
    potential: Potential
    report: SolveReport


@dataclass
class AnnealResult:
    levels: List[AnnealLevel] = field(default_factory=list)
    failed_index: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.failed_index is None

    @property
    def final(self) -> Potential:
        return self.levels[-1].potential

    @property
    def total_iterations(self) -> int:
        return sum(lv.report.iterations for lv in self.levels)

    def gaps(self) -> np.ndarray:
        """``|psi_k - psi_{k+1}|_inf`` between consecutive levels."""
        pots = [lv.potential for lv in self.levels]
        return np.array([warm_start_gap(a, b) for a, b in zip(pots[:-1], pots[1:])])


def anneal(
    rho,
    target,
    schedule: EpsSchedule,
    tol: float = 1e-10,
    *,
    intermediate_tol: Optional[float] = None,
    **solver_kw,
) -> AnnealResult:
    """Solve every level of ``schedule``, warm-starting from the previous one.

    Every level is solved to ``tol`` unless ``intermediate_tol`` is given, in
    which case all levels but the last use that looser tolerance.

    Stops at the first level that fails to converge and records its index in
    ``failed_index``; results up to and including that level are returned.
    """
    result = AnnealResult()
    psi = None
    levels = schedule.levels
    for k, eps in enumerate(levels):
        level_tol = tol if intermediate_tol is None or k == len(levels) - 1 else intermediate_tol
        psi, report = solve_dual(rho, target, float(eps), init=psi, tol=level_tol, **solver_kw)
        result.levels.append(AnnealLevel(float(eps), psi, report))
        if not report.converged:
            result.failed_index = k
            break
    return result


def warm_start_gap(psi_prev, psi_next) -> float:
    """Sup-norm distance between consecutive schedule potentials."""
    a = np.asarray(psi_prev, dtype=float)
    b = np.asarray(psi_next, dtype=float)
    if a.shape != b.shape:
        raise ValueError("potentials have different dimensions")
    return float(np.abs(a - b).max())
