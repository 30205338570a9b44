"""
Command-line driver.

Usage::

    entropic-sdot solve  --config run.json --out results/
    entropic-sdot sweep  --config run.json --quantity psi_dot_norm
    entropic-sdot rate   --config run.json --quantity psi_gap_to_zero_eps
    entropic-sdot check  --config run.json
    entropic-sdot anneal --config run.json

Configs are JSON objects with the sections ``source``, ``target``, ``eps``,
``tolerances``, ``quadrature`` and ``outputs`` (see :func:`load_config`).
Exit codes: 0 ok, 1 numerical or check failure, 2 config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import re
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .annealing import EpsSchedule, anneal
from .cost_analysis import cost_gap_record, cost_gap_residual_closed_form
from .dual_solver import ConvergenceError, solve_dual, solve_unregularized_1d
from .entropic_core import kantorovich_eval
from .measures import DiscreteTarget, builtin_density, discretize_source, product_density, random_target
from .oracle import finite_diff_eps_grad, finite_diff_gradient, finite_diff_hessian_form, sinkhorn_discrete
from .quadrature import build_rule, source_rule
from .sensitivity import check_strong_convexity, fit_rate, psi_dot

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "eps_grid",
    "sweep_values",
    "rate_mask",
    "run_checks",
    "read_csv",
    "write_csv",
    "input_hash",
    "main",
]

QUANTITIES = ("psi_dot_norm", "psi_gap_to_zero_eps", "cost_gap_residual")

DEFAULTS = {
    "tolerances": {"newton": 1e-10, "max_iter": 100, "sinkhorn": 1e-12},
    "quadrature": {"order": 8, "panels": 16, "refine": True},
    "outputs": {"dir": "."},
}


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration (exit code 2)."""


@dataclass
class ExperimentConfig:
    raw: dict
    rho: object
    target: DiscreteTarget
    out_override: str = None

    @property
    def tol(self) -> float:
        return float(self.raw["tolerances"]["newton"])

    @property
    def solver_kw(self) -> dict:
        q = self.raw["quadrature"]
        quad = source_rule(self.rho, order=int(q["order"]), panels_per_axis=int(q["panels"]))
        return {
            "tol": self.tol,
            "max_iter": int(self.raw["tolerances"]["max_iter"]),
            "quad": quad,
            "refine": bool(q["refine"]),
        }

    @property
    def out_dir(self) -> str:
        return self.out_override if self.out_override is not None else self.raw["outputs"]["dir"]


def _require(section: dict, key: str, where: str):
    if not isinstance(section, dict) or key not in section:
        raise ConfigError(f"missing field '{where}.{key}'")
    return section[key]


def _density(spec: dict, where: str):
    if "factors" in spec:
        factors = spec["factors"]
        if not isinstance(factors, list) or len(factors) != 2:
            raise ConfigError(f"'{where}.factors' must list two 1D sources")
        return product_density(*(_density(f, f"{where}.factors[{k}]") for k, f in enumerate(factors)))
    name = _require(spec, "name", where)
    params = spec.get("params", {})
    kw = {k: float(params[k]) for k in ("sigma", "alpha") if k in params}
    if "shrink" in spec:
        kw["shrink"] = float(spec["shrink"])
    if "support" in spec:
        kw["support"] = tuple(spec["support"])
    try:
        return builtin_density(name, **kw)
    except ValueError as exc:
        raise ConfigError(f"'{where}': {exc}") from exc


_RANDOM_RE = re.compile(r"^\s*random\(\s*(\d+)\s*,\s*(-?\d+)\s*\)\s*$")


def _target(spec, rho, seed_override):
    if not isinstance(spec, dict):
        raise ConfigError("missing field 'target'")
    weights = spec.get("weights")
    try:
        if "random" in spec:
            r = spec["random"]
            n = int(_require(r, "n", "target.random"))
            seed = int(_require(r, "seed", "target.random")) if seed_override is None else int(seed_override)
            spec["random"]["seed"] = seed
            return random_target(n, rho, seed, weights=weights, min_separation=float(r.get("min_separation", 0.05)))
        points = _require(spec, "points", "target")
        if weights is None:
            weights = [1.0 / len(points)] * len(points)
        return DiscreteTarget(np.asarray(points, dtype=float), np.asarray(weights, dtype=float))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"'target': {exc}") from exc


def parse_config(raw: dict, *, seed=None, out=None) -> ExperimentConfig:
    """Validate a config dict, fill defaults and build the instance.

    ``seed`` overrides the random-target seed and is written back into the
    echoed config. ``out`` overrides the output directory without entering
    the config, so reruns into different directories produce identical files.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = copy.deepcopy(raw)
    for section, values in DEFAULTS.items():
        merged = dict(values)
        merged.update(raw.get(section, {}))
        raw[section] = merged
    rho = _density(_require(raw, "source", "config"), "source")
    if isinstance(raw.get("target"), str):
        m = _RANDOM_RE.match(raw["target"])
        if not m:
            raise ConfigError("'target' string must look like random(N, seed)")
        raw["target"] = {"random": {"n": int(m.group(1)), "seed": int(m.group(2))}}
    target = _target(raw.get("target"), rho, seed)
    if target.dim != rho.dim:
        raise ConfigError("'target' points and 'source' have different dimensions")
    return ExperimentConfig(raw, rho, target, out)


def load_config(path, *, seed=None, out=None) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw, seed=seed, out=out)


def eps_grid(spec: dict) -> np.ndarray:
    """Ascending eps values from ``{"values": [...]}`` or ``{"start", "stop", "points_per_decade"}``."""
    if not isinstance(spec, dict):
        raise ConfigError("missing field 'config.eps'")
    if "values" in spec:
        vals = np.asarray(spec["values"], dtype=float)
    elif "value" in spec:
        vals = np.array([float(spec["value"])])
    else:
        start = float(_require(spec, "start", "eps"))
        stop = float(_require(spec, "stop", "eps"))
        ppd = float(_require(spec, "points_per_decade", "eps"))
        if not (0 < start < stop) or ppd <= 0:
            raise ConfigError("'eps' grid needs 0 < start < stop and points_per_decade > 0")
        n = int(round(ppd * np.log10(stop / start))) + 1
        vals = np.logspace(np.log10(start), np.log10(stop), max(n, 2))
    if vals.size == 0 or np.any(~(vals > 0)):
        raise ConfigError("'eps' values must be positive")
    return np.sort(vals)


def _schedule(spec: dict) -> EpsSchedule:
    s = _require(spec, "schedule", "eps")
    try:
        return EpsSchedule(float(_require(s, "start", "eps.schedule")), float(_require(s, "final", "eps.schedule")), float(s.get("factor", 0.5)))
    except ValueError as exc:
        raise ConfigError(f"'eps.schedule': {exc}") from exc


def _is_symmetric_pair(cfg: ExperimentConfig) -> bool:
    t = cfg.target
    return (
        cfg.rho.dim == 1
        and cfg.rho.symmetric
        and t.size == 2
        and np.allclose(np.sort(t.points[:, 0]), [-1.0, 1.0], rtol=0, atol=1e-14)
        and np.allclose(t.weights, 0.5, rtol=0, atol=1e-14)
    )


def sweep_values(rho, target, grid, quantity: str, *, solver_kw=None, symmetric_closed_form=False, return_flags=False):
    """Evaluate ``quantity`` on the ascending ``grid``.

    Solves are warm-started from the largest eps downward. ``psi_gap_to_zero_eps``
    uses the exact 1D unregularized potential; ``cost_gap_residual`` uses the
    cancellation-free closed form when ``symmetric_closed_form`` is set and
    the generic path otherwise.

    With ``return_flags`` also returns a boolean array marking grid points
    whose solve hit the quadrature depth limit.
    """
    if quantity not in QUANTITIES:
        raise ConfigError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")
    kw = dict(solver_kw or {})
    kw["raise_on_failure"] = True
    grid = np.asarray(grid, dtype=float)
    out = np.empty(grid.size)
    flags = np.zeros(grid.size, dtype=bool)
    if quantity == "cost_gap_residual":
        if rho.dim != 1:
            raise ConfigError("cost_gap_residual needs the exact 1D unregularized cost")
        for k, eps in enumerate(grid):
            if symmetric_closed_form:
                out[k] = cost_gap_residual_closed_form(rho, float(eps), target)
            else:
                out[k] = cost_gap_record(rho, target, float(eps), **kw).residual
        return (out, flags) if return_flags else out
    psi0 = None
    if quantity == "psi_gap_to_zero_eps":
        if rho.dim != 1:
            raise ConfigError("psi_gap_to_zero_eps needs the exact 1D unregularized potential")
        psi0 = solve_unregularized_1d(rho, target)
    psi = None
    for k in np.argsort(grid)[::-1]:
        psi, report, rule = solve_dual(rho, target, float(grid[k]), init=psi, return_rule=True, **kw)
        flags[k] = report.quadrature_warning
        if quantity == "psi_dot_norm":
            out[k] = np.abs(psi_dot(psi, rho, target, float(grid[k]), rule)).max()
        else:
            out[k] = np.abs(np.asarray(psi) - np.asarray(psi0)).max()
    return (out, flags) if return_flags else out


def rate_mask(grid, flags) -> np.ndarray:
    """Drop the two smallest eps from a rate fit when their solves were flagged."""
    keep = np.ones(len(grid), dtype=bool)
    smallest = np.argsort(grid)[:2]
    if np.any(np.asarray(flags)[smallest]):
        keep[smallest] = False
    return keep


def _rel_err(approx, exact) -> float:
    """Sup-norm relative error; 0 when both vanish, inf when only ``exact`` does."""
    diff = float(np.abs(np.asarray(approx) - np.asarray(exact)).max())
    scale = float(np.abs(np.asarray(exact)).max())
    if scale == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / scale


def run_checks(cfg: ExperimentConfig, eps_values, *, seed: int = 0, corrupt: float = 0.0) -> list:
    """Oracle and invariant checks at each eps; one dict per check.

    ``corrupt`` shifts the solved potential along a zero-sum direction before
    the checks run (negative control).
    """
    rho, target = cfg.rho, cfg.target
    rng = np.random.default_rng(seed)
    kw = cfg.solver_kw
    results = []

    def add(name, eps, lhs, rhs, passed, **extra):
        rec = {"check": name, "epsilon": float(eps), "lhs": float(lhs), "rhs": float(rhs), "pass": bool(passed)}
        rec.update(extra)
        results.append(rec)

    for eps in eps_values:
        eps = float(eps)
        psi, _, rule = solve_dual(rho, target, eps, return_rule=True, **kw)
        psi = np.asarray(psi, dtype=float)
        if corrupt:
            bump = np.zeros(target.size)
            bump[0], bump[-1] = corrupt, -corrupt
            psi = psi + bump
        ev = kantorovich_eval(psi, rho, eps, rule, target)
        foc = np.abs(ev.gradient + target.weights).max()
        add("first_order_condition", eps, foc, cfg.tol, foc <= cfg.tol)

        bound = rho.radius * target.diameter + eps * np.log(1.0 / target.min_weight)
        sup = np.abs(psi).max()
        add("sup_norm_bound", eps, sup, bound, sup <= bound)

        # probes perturb psi by O(eps) so the soft assignments stay non-degenerate
        probes = [psi] + [psi + eps * (lambda v: v - v.mean())(rng.normal(size=target.size)) for _ in range(3)]
        for j, p in enumerate(probes):
            evp = kantorovich_eval(p, rho, eps, rule, target)
            err = _rel_err(finite_diff_gradient(p, rho, eps, rule, target), evp.gradient)
            add("finite_diff_gradient", eps, err, 1e-5, err <= 1e-5, probe=j)
            v = rng.normal(size=target.size)
            v -= v.mean()
            exact = float(v @ evp.hessian @ v)
            err = _rel_err(finite_diff_hessian_form(p, v, rho, eps, rule, target), exact)
            add("finite_diff_hessian_form", eps, err, 1e-4, err <= 1e-4, probe=j)
            err = _rel_err(finite_diff_eps_grad(p, rho, eps, rule, target), evp.eps_grad)
            add("finite_diff_eps_grad", eps, err, 1e-4, err <= 1e-4, probe=j)

        violations = 0
        worst = (0.0, 1.0)
        for _ in range(100):
            v = rng.normal(size=target.size)
            lhs, rhs, ok = check_strong_convexity(psi, rho, target, eps, v, rule, hessian=ev.hessian)
            violations += not ok
            if lhs * worst[1] > worst[0] * rhs:
                worst = (lhs, rhs)
        add("strong_convexity", eps, worst[0], worst[1], violations == 0, violations=violations)

        if rho.dim == 1:
            atoms, weights = discretize_source(rho, build_rule(rho.lower, rho.upper, order=1, panels_per_axis=2048))
            sk = sinkhorn_discrete(atoms, weights, target, eps, tol=float(cfg.raw["tolerances"]["sinkhorn"]))
            gap = np.abs(sk.target_potential - psi).max()
            add("sinkhorn_agreement", eps, gap, 5e-4, gap <= 5e-4, atoms=2048)
    return results


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, eps, values):
    """``epsilon,value`` CSV with 17 significant digits and LF line endings."""
    lines = ["epsilon,value"] + [f"{_fmt(e)},{_fmt(v)}" for e, v in zip(eps, values)]
    _atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path: str):
    """Inverse of :func:`write_csv`; returns ``(eps, values)`` arrays."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["epsilon", "value"]:
        raise ValueError("expected header 'epsilon,value'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
    return data[:, 0], data[:, 1]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def input_hash(raw: dict) -> str:
    """git blob sha1 of the canonical JSON of the resolved config."""
    data = json.dumps(_clean(raw), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _write_json(path: str, command: str, cfg: ExperimentConfig, results: dict):
    doc = {"command": command, "config": cfg.raw, "input_hash": input_hash(cfg.raw), "results": results}
    _atomic_write(path, json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def _potentials_csv(path, rows, n):
    header = "epsilon," + ",".join(f"psi_{i + 1}" for i in range(n))
    lines = [header] + [",".join(_fmt(v) for v in [e, *psi]) for e, psi in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def cmd_solve(cfg: ExperimentConfig, args) -> int:
    spec = _require(cfg.raw, "eps", "config")
    if "schedule" in spec:
        return cmd_anneal(cfg, args, command="solve")
    grid = eps_grid(spec)
    kw = cfg.solver_kw
    runs, rows, status = [], [], 0
    for eps in grid:
        psi, report = solve_dual(cfg.rho, cfg.target, float(eps), **kw)
        runs.append({"epsilon": float(eps), "potential": np.asarray(psi), "report": report.as_dict()})
        rows.append((eps, np.asarray(psi)))
        if not report.converged:
            status = 1
    _potentials_csv(os.path.join(cfg.out_dir, "potential.csv"), rows, cfg.target.size)
    _write_json(os.path.join(cfg.out_dir, "solve.json"), "solve", cfg, {"runs": runs, "converged": status == 0})
    if status:
        print("error: solver did not converge", file=sys.stderr)
    return status


def _sweep(cfg, quantity):
    grid = eps_grid(_require(cfg.raw, "eps", "config"))
    return grid, *sweep_values(
        cfg.rho,
        cfg.target,
        grid,
        quantity,
        solver_kw=cfg.solver_kw,
        symmetric_closed_form=_is_symmetric_pair(cfg),
        return_flags=True,
    )


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    quantity = args.quantity or "psi_dot_norm"
    grid, vals, _ = _sweep(cfg, quantity)
    write_csv(os.path.join(cfg.out_dir, f"sweep_{quantity}.csv"), grid, vals)
    return 0


def cmd_rate(cfg: ExperimentConfig, args) -> int:
    quantity = args.quantity or "psi_dot_norm"
    if args.plant_power is not None:
        grid = eps_grid(_require(cfg.raw, "eps", "config"))
        vals = grid**args.plant_power
        flags = np.zeros(grid.size, dtype=bool)
    else:
        grid, vals, flags = _sweep(cfg, quantity)
    write_csv(os.path.join(cfg.out_dir, f"sweep_{quantity}.csv"), grid, vals)
    keep = rate_mask(grid, flags)
    try:
        fit = fit_rate(grid[keep], vals[keep])
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_json(os.path.join(cfg.out_dir, f"rate_{quantity}.json"), "rate", cfg, {"quantity": quantity, "fit": fit.as_dict(), "excluded_eps": grid[~keep]})
    return 0


def cmd_check(cfg: ExperimentConfig, args) -> int:
    spec = cfg.raw.get("eps", {"values": [0.1, 0.5]})
    grid = eps_grid(spec) if "schedule" not in spec else np.array([0.1, 0.5])
    seed = args.seed if args.seed is not None else 0
    results = run_checks(cfg, grid, seed=seed, corrupt=args.corrupt_potential)
    failed = [r["check"] for r in results if not r["pass"]]
    _write_json(os.path.join(cfg.out_dir, "check.json"), "check", cfg, {"checks": results, "all_pass": not failed})
    if failed:
        print("check failed: " + ", ".join(dict.fromkeys(failed)), file=sys.stderr)
        return 1
    return 0


def cmd_anneal(cfg: ExperimentConfig, args, command="anneal") -> int:
    sched = _schedule(_require(cfg.raw, "eps", "config"))
    res = anneal(cfg.rho, cfg.target, sched, **cfg.solver_kw)
    levels = [
        {"epsilon": lv.eps, "potential": np.asarray(lv.potential), "report": lv.report.as_dict()} for lv in res.levels
    ]
    _potentials_csv(
        os.path.join(cfg.out_dir, "potential.csv"), [(lv.eps, np.asarray(lv.potential)) for lv in res.levels], cfg.target.size
    )
    results = {
        "levels": levels,
        "gaps": res.gaps(),
        "total_iterations": res.total_iterations,
        "failed_index": res.failed_index,
        "ok": res.ok,
    }
    _write_json(os.path.join(cfg.out_dir, f"{command}.json"), command, cfg, results)
    if not res.ok:
        print(f"error: annealing failed at level {res.failed_index}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "rate": cmd_rate, "check": cmd_check, "anneal": cmd_anneal}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entropic-sdot", description="Semi-discrete entropic optimal transport experiments.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (overrides outputs.dir)")
    parser.add_argument("--quantity", choices=QUANTITIES, help="sweep/rate quantity")
    parser.add_argument("--seed", type=int, help="random target seed (overrides the config)")
    # test hooks
    parser.add_argument("--plant-power", type=float, default=None, help=argparse.SUPPRESS)
    parser.add_argument("--corrupt-potential", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
