"""
Acceptance suite. Each test prints one ``PASS``/``FAIL`` line (collected in
the pytest terminal summary) and asserts the same verdict.

Tolerances and windows below are pinned; do not loosen them to make a run
green. Run standalone with ``python3 tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest
from scipy import integrate

from entropic_sdot.annealing import EpsSchedule, anneal, warm_start_gap
from entropic_sdot.cli import rate_mask, sweep_values
from entropic_sdot.cost_analysis import (
    asymptote_coefficient_1d,
    cost_gap_closed_form_1d,
    cost_gap_residual_closed_form,
    plan_convergence_rate,
    w2_squared_1d,
    w2eps_squared,
)
from entropic_sdot.dual_solver import solve_dual, solver_rule
from entropic_sdot.entropic_core import kantorovich_eval
from entropic_sdot.measures import builtin_density, discretize_source, random_target
from entropic_sdot.oracle import finite_diff_eps_grad, finite_diff_gradient, finite_diff_hessian_form, sinkhorn_discrete
from entropic_sdot.quadrature import build_rule
from entropic_sdot.sensitivity import check_strong_convexity, fit_rate, psi_dot

from conftest import NAMES, five_point, symmetric_pair

# criterion 1
SYM_EPS = (1e-3, 1e-2, 0.1, 1.0, 10.0)
SYM_PSI_TOL = 1e-9
SYM_PSI_DOT_TOL = 1e-8
SYM_RUNTIME = 10.0
# criterion 2
FOC_EPS = (1e-3, 1e-2, 0.1, 0.5, 1.0)
FOC_TOL = 1e-10
# criterion 3
FD_EPS = (0.1, 0.5)
FD_TOL = {"gradient": 1e-5, "hessian_form": 1e-4, "eps_grad": 1e-4}
# criterion 4
ODE_EPS = (0.05, 0.2)
ODE_TOL = 1e-3
# criterion 5
SC_EPS = (0.01, 0.1, 1.0)
SC_DIRECTIONS = 100
# criterion 7
RATE_RANGE = (3e-3, 3e-1)
RATE_PPD = 20
RATE_RUNTIME = 300.0
PSI_DOT_WINDOWS = {"laplace": (0.7, 1.3), "holder": (0.3, 0.7), "lebesgue": (1.0, np.inf), "gaussian": (1.0, np.inf)}
PSI_GAP_WINDOWS = {"laplace": (1.7, 2.3), "holder": (1.2, 1.8), "lebesgue": (1.0, np.inf), "gaussian": (1.0, np.inf)}
# criterion 8
LONG_EPS = (1.0, 2.0, 4.0, 8.0, 16.0)
LONG_WEIGHTS = (0.1, 0.15, 0.2, 0.25, 0.3)
LONG_FACTOR = 3.0
# criterion 9
CF_EPS = (0.1, 0.5, 1.0)
CF_TOL = 1e-6
W2_TOL = 1e-10
# criterion 10
RES_RANGE = (1e-2, 3e-1)
RES_WINDOWS = {"laplace": (2.6, 3.4), "holder": (2.2, 2.8), "lebesgue": (3.0, np.inf), "gaussian": (3.0, np.inf)}
COEFF_TOL = 1e-12
# criterion 11
SK_EPS = 0.5
SK_ATOMS = 2048
SK_TOL = 5e-4
SK_RATIO = (3.0, 5.0)
# criterion 12
ANNEAL_START, ANNEAL_FINAL = 1.0, 1e-3
ANNEAL_TOL = 1e-8
# criterion 13
PLAN_X = 0.5
PLAN_RANGE = (0.02, 0.2)
PLAN_MIN_SLOPE = 0.9


def _log_grid(lo, hi, ppd):
    n = int(round(ppd * np.log10(hi / lo))) + 1
    return np.logspace(np.log10(lo), np.log10(hi), n)


def _rel(a, b):
    return float(np.abs(np.asarray(a) - np.asarray(b)).max() / np.abs(np.asarray(b)).max())


def _in(x, window):
    return window[0] <= x <= window[1]


def test_criterion_01_exact_symmetry(verdict):
    pair = symmetric_pair()
    t0 = time.perf_counter()
    worst_psi = worst_dot = 0.0
    for name in NAMES:
        rho = builtin_density(name)
        for eps in SYM_EPS:
            psi, _, rule = solve_dual(rho, pair, eps, return_rule=True)
            worst_psi = max(worst_psi, float(np.abs(psi).max()))
            worst_dot = max(worst_dot, float(np.abs(psi_dot(psi, rho, pair, eps, rule)).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_psi <= SYM_PSI_TOL and worst_dot <= SYM_PSI_DOT_TOL and elapsed <= SYM_RUNTIME
    detail = f"max|psi|={worst_psi:.1e} (<= {SYM_PSI_TOL:g}), max|psi_dot|={worst_dot:.1e} (<= {SYM_PSI_DOT_TOL:g}), {elapsed:.2f}s"
    assert verdict(1, "exact symmetry", ok, detail)


def test_criterion_02_first_order_condition(verdict):
    rho, target = five_point()
    worst = 0.0
    for eps in FOC_EPS:
        psi, rep, rule = solve_dual(rho, target, eps, return_rule=True)
        ev = kantorovich_eval(psi, rho, eps, rule, target, want=("gradient",))
        worst = max(worst, float(np.abs(ev.gradient + target.weights).max()))
    ok = worst <= FOC_TOL
    assert verdict(2, "first-order condition", ok, f"max|grad K + mu|={worst:.1e} over eps={FOC_EPS} (<= {FOC_TOL:g})")


def test_criterion_03_derivative_oracles(verdict):
    rho, target = five_point()
    rule = solver_rule(rho)
    rng = np.random.default_rng(42)
    worst = dict.fromkeys(FD_TOL, 0.0)
    for eps in FD_EPS:
        psi_eps, _ = solve_dual(rho, target, eps, quad=rule, refine=False)
        probes = [np.asarray(psi_eps)]
        for _ in range(3):
            p = rng.normal(size=target.size)
            probes.append(p - p.mean())
        for psi in probes:
            ev = kantorovich_eval(psi, rho, eps, rule, target)
            worst["gradient"] = max(worst["gradient"], _rel(finite_diff_gradient(psi, rho, eps, rule, target), ev.gradient))
            v = rng.normal(size=target.size)
            v -= v.mean()
            exact = float(v @ ev.hessian @ v)
            fd = finite_diff_hessian_form(psi, v, rho, eps, rule, target)
            worst["hessian_form"] = max(worst["hessian_form"], abs(fd - exact) / abs(exact))
            worst["eps_grad"] = max(worst["eps_grad"], _rel(finite_diff_eps_grad(psi, rho, eps, rule, target), ev.eps_grad))
    ok = all(worst[k] <= FD_TOL[k] for k in FD_TOL)
    detail = ", ".join(f"{k} {worst[k]:.1e} (<= {FD_TOL[k]:g})" for k in FD_TOL)
    assert verdict(3, "derivative oracles", ok, detail)


def test_criterion_04_ode_consistency(verdict):
    rho, target = five_point()
    errs = []
    for eps in ODE_EPS:
        h = eps / 100
        psi, _, rule = solve_dual(rho, target, eps, return_rule=True)
        v = psi_dot(psi, rho, target, eps, rule)
        fd = (solve_dual(rho, target, eps + h, init=psi)[0] - solve_dual(rho, target, eps - h, init=psi)[0]) / (2 * h)
        errs.append(_rel(fd, v))
    ok = max(errs) <= ODE_TOL
    detail = ", ".join(f"eps={e:g}: {r:.1e}" for e, r in zip(ODE_EPS, errs)) + f" (<= {ODE_TOL:g})"
    assert verdict(4, "ODE consistency", ok, detail)


def test_criterion_05_strong_convexity(verdict):
    rng = np.random.default_rng(42)
    violations, checked, min_ratio = 0, 0, np.inf
    for name in NAMES:
        rho = builtin_density(name)
        target = random_target(5, rho, 42)
        for eps in SC_EPS:
            psi, _, rule = solve_dual(rho, target, eps, return_rule=True)
            hess = kantorovich_eval(psi, rho, eps, rule, target, want=("hessian",)).hessian
            for _ in range(SC_DIRECTIONS):
                v = rng.normal(size=target.size)
                lhs, rhs, ok = check_strong_convexity(psi, rho, target, eps, v, rule, hessian=hess)
                checked += 1
                violations += not ok
                if lhs > 0:
                    min_ratio = min(min_ratio, rhs / lhs)
    ok = violations == 0
    assert verdict(5, "strong convexity", ok, f"{violations} violations in {checked} checks, min rhs/lhs={min_ratio:.2f}")


def test_criterion_06_sup_norm_bound(verdict):
    instances = [(builtin_density(n), symmetric_pair()) for n in NAMES]
    instances += [(rho, random_target(5, rho, 42)) for rho in map(builtin_density, NAMES)]
    instances.append(five_point())
    violations, solves, tightest = 0, 0, 0.0
    for rho, target in instances:
        psi = None
        for eps in sorted(set(SYM_EPS + FOC_EPS + SC_EPS + FD_EPS + ODE_EPS), reverse=True):
            psi, _ = solve_dual(rho, target, eps, init=psi)
            bound = psi.sup_norm_bound(rho, target)
            size = float(np.abs(psi).max())
            solves += 1
            violations += size > bound
            tightest = max(tightest, size / bound)
    ok = violations == 0
    assert verdict(6, "sup-norm potential bound", ok, f"{violations} violations in {solves} solves, max |psi|/bound={tightest:.3f}")


def test_criterion_07_short_time_rates(verdict):
    grid = _log_grid(*RATE_RANGE, RATE_PPD)
    t0 = time.perf_counter()
    parts, ok = [], True
    for quantity, windows, tag in (("psi_dot_norm", PSI_DOT_WINDOWS, "psi_dot"), ("psi_gap_to_zero_eps", PSI_GAP_WINDOWS, "psi_gap")):
        for name in NAMES:
            rho = builtin_density(name)
            target = random_target(5, rho, 42)
            vals, flags = sweep_values(rho, target, grid, quantity, return_flags=True)
            keep = rate_mask(grid, flags)
            slope = fit_rate(grid[keep], vals[keep]).slope
            good = _in(slope, windows[name])
            ok &= good
            lo, hi = windows[name]
            want = f">={lo:g}" if np.isinf(hi) else f"[{lo:g},{hi:g}]"
            parts.append(f"{tag}/{name} {slope:.2f} {want}{'' if good else '!'}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= RATE_RUNTIME
    assert verdict(7, "short-time rates", ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_08_long_time_boundedness(verdict):
    rho = builtin_density("laplace")
    target = random_target(5, rho, 42, weights=LONG_WEIGHTS)
    norms, psi = [], None
    for eps in LONG_EPS:
        psi, _, rule = solve_dual(rho, target, eps, init=psi, return_rule=True)
        norms.append(float(np.linalg.norm(psi_dot(psi, rho, target, eps, rule))))
    ratio = max(norms) / norms[0]
    ok = ratio <= LONG_FACTOR
    assert verdict(8, "long-time boundedness", ok, f"max ||psi_dot||_2 / value at eps=1 = {ratio:.3f} (<= {LONG_FACTOR:g})")


def _quantile_w2(rho, target):
    y = target.points[:, 0]
    cum = np.concatenate([[0.0], np.cumsum(target.weights)])
    return sum(
        integrate.quad(lambda t: (rho.quantile(t) - y[i]) ** 2, cum[i], cum[i + 1], epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        for i in range(target.size)
    )


def test_criterion_09_closed_form_vs_generic(verdict):
    rho, pair = builtin_density("lebesgue"), symmetric_pair()
    w2 = w2_squared_1d(rho, pair)
    gaps = [abs(cost_gap_closed_form_1d(rho, eps, pair) - (w2eps_squared(rho, pair, eps) - w2)) for eps in CF_EPS]
    oracle = _quantile_w2(rho, pair)
    w2_err = max(abs(oracle - 1 / 3), abs(w2 - 1 / 3))
    ok = max(gaps) <= CF_TOL and w2_err <= W2_TOL
    detail = f"max |closed - generic|={max(gaps):.1e} (<= {CF_TOL:g}), |W2^2 - 1/3|={w2_err:.1e} (<= {W2_TOL:g})"
    assert verdict(9, "cost-gap closed form vs generic path", ok, detail)


def test_criterion_10_cost_expansion_residual(verdict):
    pair = symmetric_pair()
    grid = _log_grid(*RES_RANGE, RATE_PPD)
    parts, ok = [], True
    for name in NAMES:
        rho = builtin_density(name)
        res = np.array([cost_gap_residual_closed_form(rho, eps, pair) for eps in grid])
        slope = fit_rate(grid, res).slope
        good = _in(slope, RES_WINDOWS[name])
        ok &= good
        parts.append(f"{name} {slope:.2f}{'' if good else '!'}")
    coeff_err = abs(asymptote_coefficient_1d(builtin_density("lebesgue"), pair) - np.pi**2 / 48)
    ok &= coeff_err <= COEFF_TOL
    assert verdict(10, "cost-expansion residual", ok, "slopes " + ", ".join(parts) + f"; lebesgue coeff err {coeff_err:.1e}")


def test_criterion_11_sinkhorn_agreement(verdict):
    rho, target = five_point()
    psi, _ = solve_dual(rho, target, SK_EPS)
    gaps = []
    for atoms in (SK_ATOMS, 2 * SK_ATOMS):
        x, w = discretize_source(rho, build_rule(rho.lower, rho.upper, order=1, panels_per_axis=atoms))
        sk = sinkhorn_discrete(x, w, target, SK_EPS)
        gaps.append(float(np.abs(sk.target_potential - np.asarray(psi)).max()))
    ratio = gaps[0] / gaps[1]
    ok = gaps[0] <= SK_TOL and _in(ratio, SK_RATIO)
    detail = f"gap at {SK_ATOMS} atoms {gaps[0]:.1e} (<= {SK_TOL:g}), halving ratio {ratio:.2f} in {list(SK_RATIO)}"
    assert verdict(11, "Sinkhorn oracle agreement", ok, detail)


def test_criterion_12_annealing(verdict):
    rho, target = five_point()
    chain = anneal(rho, target, EpsSchedule(ANNEAL_START, ANNEAL_FINAL))
    cold, cold_rep = solve_dual(rho, target, ANNEAL_FINAL)
    dist = warm_start_gap(chain.final, cold)
    levels = np.array([lv.eps for lv in chain.levels])
    per_level = chain.gaps() / -np.diff(levels)
    monotone = bool(np.all(np.diff(per_level) <= 0))
    fewer = chain.total_iterations < cold_rep.iterations
    ok = chain.ok and dist <= ANNEAL_TOL and fewer and monotone
    detail = (
        f"final vs cold {dist:.1e} (<= {ANNEAL_TOL:g}); iterations warm {chain.total_iterations} vs cold "
        f"{cold_rep.iterations}{'' if fewer else '!'}; gap/deps non-increasing: {monotone}{'' if monotone else '!'} "
        f"[{', '.join(f'{g:.3f}' for g in per_level)}]"
    )
    assert verdict(12, "annealing", ok, detail)


def test_criterion_13_plan_convergence(verdict):
    rho, pair = builtin_density("lebesgue"), symmetric_pair()
    eps = np.linspace(*PLAN_RANGE, 10)
    fit, c_x, _ = plan_convergence_rate(rho, pair, PLAN_X, eps)
    ok = fit.slope >= PLAN_MIN_SLOPE
    assert verdict(13, "plan exponential convergence", ok, f"slope {fit.slope:.4f} (>= {PLAN_MIN_SLOPE:g}), c_x={c_x:g}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
