"""
Epsilon scaling
===============

Halve epsilon from 1 down to 1e-3, warm-starting each Newton solve from the
previous level, and compare against a cold start at the final level.
"""

import numpy as np

from entropic_sdot import EpsSchedule, anneal, builtin_density, random_target, solve_dual, warm_start_gap

rho = builtin_density("laplace")
target = random_target(5, rho, 42)

chain = anneal(rho, target, EpsSchedule(1.0, 1e-3))
for lv in chain.levels:
    print(f"eps={lv.eps:.6f}  its={lv.report.iterations:>2}  residual={lv.report.final_residual:.1e}")

cold, report = solve_dual(rho, target, 1e-3)
print("final vs cold start:", warm_start_gap(chain.final, cold))
print("Newton iterations: chain", chain.total_iterations, " cold", report.iterations)

# Per-level movement of the potential, scaled by the epsilon step.
levels = np.array([lv.eps for lv in chain.levels])
print("gap / d_eps:", np.round(chain.gaps() / -np.diff(levels), 3))

# Loose intermediate tolerances trade accuracy on the way for fewer steps.
loose = anneal(rho, target, EpsSchedule(1.0, 1e-3), intermediate_tol=1e-4)
print("chain with loose intermediates:", loose.total_iterations, "iterations")
