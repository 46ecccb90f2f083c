"""Batch front-end: scenario config in, tables, CSV artifacts and figures out.

Exit codes: 0 on success, 1 on a validation-gate failure, 2 on config or
hypothesis errors.  All outputs are deterministic given (config, seed);
every CSV starts with a comment line echoing the config hash.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_config, parse_contract_spec
from .contracts import Contract, stats
from .criterion import mc_estimate, utility_closed_form
from .errors import ConfigError, HypothesisViolationError, ModelError, NoBracketError
from .figures import (
    save_contract_figure,
    save_moments_figure,
    save_simulation_figure,
    save_sweep_figure,
    save_terms_figure,
)
from .hawkes import path_seed, simulate_batch, simulate_path
from .moments import compute_moments, mean_count
from .optimizer import poisson_limit_sweep, solve_three_piece
from .validation import run_validation

__all__ = ["main"]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, config_hash: str, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_sha256={config_hash}", ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _contract_grid(cfg: ScenarioConfig, contract: Contract, upper: float | None = None):
    z_hi = upper if upper is not None else 1.2 * cfg.marks.quantile(0.999)
    z = np.linspace(0.0, z_hi, max(cfg.run.grid_points, 2))
    return z, contract(z)


def _post_jump_intensities(path, params) -> np.ndarray:
    """Intensity right after each recorded event, by incremental replay."""
    lam = params.lambda0
    prev = 0.0
    out = []
    for t, z in zip(path.times, path.marks):
        lam = params.lambda_bar + (lam - params.lambda_bar) * math.exp(-params.beta * (t - prev))
        lam += float(params.impact(z))
        out.append(lam)
        prev = t
    return np.asarray(out)


def _cmd_simulate(cfg: ScenarioConfig, args) -> int:
    seed = cfg.require_seed("simulate")
    n_paths = args.paths or cfg.run.n_paths
    out = cfg.run.output_dir
    params, T = cfg.hawkes, cfg.economic.horizon

    batch = simulate_batch(params, T, n_paths, seed)
    moments = compute_moments(params, T)
    mass = params.marks.total_mass
    counts = batch.counts.astype(float)
    hf = params.impact.h_f(params.marks)
    var_theory = mass * mass * moments.A_T + mass * hf * moments.B_T + mass * moments.M_T
    rows = [
        ("n_paths", n_paths),
        ("mean_count", counts.mean()),
        ("mean_count_theory", mass * moments.M_T),
        ("var_count", counts.var(ddof=1)),
        ("var_count_theory", var_theory),
        ("mean_terminal_intensity", float(batch.terminal_intensity.mean())),
        ("mean_terminal_intensity_theory", moments.m_fn(T)),
    ]
    _write_csv(out / "simulate_summary.csv", cfg.sha256, ["quantity", "value"], rows)

    if args.dump_events or cfg.run.dump_events:
        ev_rows = []
        for i in range(n_paths):
            p = simulate_path(params, T, path_seed(seed, i))
            for j, (t, z, lam) in enumerate(zip(p.times, p.marks,
                                                _post_jump_intensities(p, params))):
                ev_rows.append((i, j, t, z, lam))
        _write_csv(out / "events.csv", cfg.sha256,
                   ["path_id", "event_index", "time", "mark", "intensity_after"], ev_rows)

    first = simulate_path(params, T, path_seed(seed, 0))
    step_t = np.concatenate(([0.0], first.times, [T]))
    lam_steps = np.concatenate(([params.lambda0], _post_jump_intensities(first, params),
                                [first.terminal_intensity]))
    save_simulation_figure(step_t, lam_steps, T, counts, out / "simulate.png")

    print(f"simulated {n_paths} paths over T = {T}")
    print(f"  mean count {counts.mean():.4f} (theory {mass * moments.M_T:.4f})")
    print(f"  var  count {counts.var(ddof=1):.4f} (theory {var_theory:.4f})")
    return 0


def _cmd_moments(cfg: ScenarioConfig, args) -> int:
    grid_n = args.grid or cfg.run.grid_points
    params, T = cfg.hawkes, cfg.economic.horizon
    bundle = compute_moments(params, T)
    ts = np.linspace(0.0, T, grid_n + 1)
    rows = [(t, bundle.m_fn(t), bundle.m2_fn(t), mean_count(params, t)) for t in ts]
    out = cfg.run.output_dir
    _write_csv(out / "moments_grid.csv", cfg.sha256, ["t", "m", "m2", "M"], rows)
    summary = [("M_T", bundle.M_T), ("M2_T", bundle.M2_T), ("A_T", bundle.A_T),
               ("B_T", bundle.B_T), ("kappa", bundle.kappa)]
    _write_csv(out / "moments_summary.csv", cfg.sha256, ["quantity", "value"], summary)
    save_moments_figure(ts, np.array([r[1] for r in rows]), np.array([r[2] for r in rows]),
                        out / "moments.png")
    print(f"M(T)={bundle.M_T:.8g}  A(T)={bundle.A_T:.8g}  "
          f"B(T)={bundle.B_T:.8g}  kappa={bundle.kappa:.8g}")
    return 0


def _cmd_evaluate(cfg: ScenarioConfig, args) -> int:
    if args.contract:
        contract = parse_contract_spec(args.contract)
    elif cfg.contract is not None:
        contract = cfg.contract
    else:
        raise ConfigError("no contract: pass --contract or add a 'contract' section")
    params, econ = cfg.hawkes, cfg.economic
    moments = compute_moments(params, econ.horizon)
    closed = utility_closed_form(contract, econ, moments, cfg.marks, cfg.impact)

    n_paths = args.paths if args.paths is not None else cfg.run.n_paths
    mc = None
    if n_paths >= 2:
        seed = cfg.require_seed("evaluate")
        mc = mc_estimate(contract, econ, params, n_paths, seed)

    rows = [("mean", closed.mean, mc.mean if mc else "", mc.mean_se if mc else ""),
            ("variance", closed.variance, mc.variance if mc else "",
             mc.variance_se if mc else ""),
            ("utility", closed.utility, mc.utility if mc else "",
             mc.utility_se if mc else "")]
    rows += [(f"term/{k}", v, "", "") for k, v in closed.terms.items()]
    out = cfg.run.output_dir
    _write_csv(out / "evaluate_report.csv", cfg.sha256,
               ["term", "closed_form", "mc_estimate", "se"], rows)
    z, phi = _contract_grid(cfg, contract)
    _write_csv(out / "contract_curve.csv", cfg.sha256, ["z", "phi"], zip(z, phi))
    save_contract_figure(z, phi, out / "evaluate.png", label=contract.shape)
    save_terms_figure(closed.terms, out / "evaluate_terms.png")

    print(f"{'':14s}{'closed form':>16s}{'monte carlo':>16s}{'se':>12s}")
    for name, cf, mcv, se in rows[:3]:
        mc_s = f"{mcv:>16.6f}" if mcv != "" else f"{'-':>16s}"
        se_s = f"{se:>12.2g}" if se != "" else f"{'-':>12s}"
        print(f"{name:14s}{cf:>16.6f}{mc_s}{se_s}")
    return 0


def _cmd_optimize(cfg: ScenarioConfig, args) -> int:
    params, econ = cfg.hawkes, cfg.economic
    moments = compute_moments(params, econ.horizon)
    res = solve_three_piece(econ, moments, cfg.marks, cfg.impact)
    out = cfg.run.output_dir
    cs = stats(res.contract, cfg.marks, cfg.impact, econ.c)
    rows = [
        ("a", res.a), ("b", res.b), ("slope", res.slope), ("c_star", res.c_star),
        ("utility", res.utility), ("residual_slope_eq", res.residuals[0]),
        ("residual_intercept_eq", res.residuals[1]),
        ("residual_scale", res.residual_scale),
        ("sign_pattern_ok", res.sign_pattern_ok),
        ("cost_rate", cs.cost_rate),
        ("M_T", moments.M_T), ("A_T", moments.A_T), ("B_T", moments.B_T),
    ]
    _write_csv(out / "optimal_contract.csv", cfg.sha256, ["quantity", "value"], rows)
    z, phi = _contract_grid(cfg, res.contract, upper=1.25 * res.b)
    _write_csv(out / "optimal_curve.csv", cfg.sha256, ["z", "phi"], zip(z, phi))
    save_contract_figure(z, phi, out / "optimize.png", a=res.a, b=res.b,
                         label="optimal contract")
    print(f"a = {res.a:.8g}   b = {res.b:.8g}   slope = {res.slope:.8g}")
    print(f"utility = {res.utility:.8g}   residuals = "
          f"({res.residuals[0]:.2e}, {res.residuals[1]:.2e})")
    return 0


def _cmd_sweep(cfg: ScenarioConfig, args) -> int:
    if args.lambda_grid:
        grid = [float(v) for v in args.lambda_grid.split(",")]
    elif cfg.run.lambda_grid:
        grid = list(cfg.run.lambda_grid)
    else:
        raise ConfigError("no feedback grid: pass --lambda-grid or set run.lambda_grid")
    res = poisson_limit_sweep(cfg.hawkes, cfg.economic, grid)
    out = cfg.run.output_dir
    rows = [(r.lam, r.lambda_bar, r.c_effective, r.a, r.b, r.slope, r.cost,
             r.cost_dev, r.M_T, r.error or "") for r in res.rows]
    _write_csv(out / "sweep.csv", cfg.sha256,
               ["lambda", "lambda_bar", "c_effective", "a", "b", "slope", "cost",
                "cost_dev", "M_T", "error"], rows)
    good = [r for r in res.rows if r.error is None]
    save_sweep_figure([r.lam for r in good], [r.slope for r in good],
                      [r.a for r in good], [r.b for r in good], out / "sweep.png")
    print(f"rows: {len(res.rows)} ({len(good)} solved)   "
          f"slope non-increasing: {res.slope_non_increasing}   "
          f"a non-increasing: {res.a_non_increasing}   "
          f"b non-decreasing: {res.b_non_decreasing}")
    print(f"terminal slope gap: {res.terminal_slope_gap:.3e}   "
          f"cost within band: {res.cost_within_band}")
    return 0


def _cmd_validate(cfg: ScenarioConfig, args) -> int:
    seed = cfg.require_seed("validate")
    gates = run_validation(cfg.hawkes, cfg.economic, seed,
                           n_paths=cfg.run.n_paths, qp_atoms=cfg.run.qp_atoms,
                           fast=args.fast)
    rows = [(g.name, g.value, g.threshold, g.passed, g.detail) for g in gates]
    _write_csv(cfg.run.output_dir / "validate_report.csv", cfg.sha256,
               ["gate", "value", "threshold", "passed", "detail"], rows)
    for g in gates:
        status = "PASS" if g.passed else "FAIL"
        print(f"[{status}] {g.name}: value={g.value:.3e} threshold={g.threshold:.3e}"
              + (f"  ({g.detail})" if g.detail else ""))
    n_fail = sum(not g.passed for g in gates)
    print(f"{len(gates) - n_fail}/{len(gates)} gates passed")
    return 1 if n_fail else 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hawkes-reinsurance",
        description="Clustered-loss reinsurance toolkit: simulate, evaluate, optimize.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, **extra):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", type=Path, help="scenario YAML file")
        p.add_argument("--output-dir", type=Path, default=None,
                       help="override run.output_dir")
        return p

    p = add("simulate", "simulate claim paths and compare count moments")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dump-events", action="store_true")

    p = add("moments", "emit mean/second-moment curves and criterion coefficients")
    p.add_argument("--grid", type=int, default=None)

    p = add("evaluate", "closed-form and Monte Carlo criterion for one contract")
    p.add_argument("--contract", type=str, default=None,
                   help="e.g. full | deductible:a=1.0 | three_piece:a=1,b=3")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    add("optimize", "solve for the optimal three-piece contract")

    p = add("sweep", "optimal contract along a decreasing feedback grid")
    p.add_argument("--lambda-grid", type=str, default=None,
                   help="comma-separated feedback slopes, e.g. 0.5,0.25,0.1")

    p = add("validate", "run the full oracle suite; nonzero exit on gate failure")
    p.add_argument("--fast", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if getattr(args, "seed", None) is not None:
            cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, seed=args.seed))
        if args.output_dir is not None:
            cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run,
                                                                   output_dir=args.output_dir))
        handler = {
            "simulate": _cmd_simulate,
            "moments": _cmd_moments,
            "evaluate": _cmd_evaluate,
            "optimize": _cmd_optimize,
            "sweep": _cmd_sweep,
            "validate": _cmd_validate,
        }[args.command]
        return handler(cfg, args)
    except (ConfigError, HypothesisViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, NoBracketError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
