"""Self-contained oracle suite behind the ``validate`` subcommand.

Each gate pits an implementation against an independent route: Monte Carlo
against closed forms, generic quadrature against exponential-polynomial
algebra, finite differences against the criterion gradient, and the
discretized brute-force maximizer against the analytic contract solver.
Every gate is deterministic given the scenario seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as sstats

from .contracts import Contract, stats
from .criterion import (
    EconomicParams,
    gradient_inner_product,
    mc_estimate,
    utility_closed_form,
    utility_constant_impact,
    utility_poisson,
    wealth_samples,
)
from .errors import HypothesisViolationError, NoBracketError
from .hawkes import HawkesParams, simulate_batch, simulate_path
from .marks import ImpactSpec, MarkLaw, discretize_law
from .moments import compute_moments, moments_by_quadrature
from .optimizer import poisson_atom_maximizer, qp_oracle, solve_three_piece

__all__ = ["Gate", "run_validation"]


@dataclass(frozen=True)
class Gate:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


def _gate(name: str, value: float, threshold: float, detail: str = "") -> Gate:
    return Gate(name=name, value=value, threshold=threshold,
                passed=bool(value <= threshold), detail=detail)


def _rel(x: float, y: float) -> float:
    return abs(x - y) / max(abs(x), abs(y), 1e-300)


def _default_contracts(law: MarkLaw) -> dict[str, Contract]:
    z_ref = law.quantile(0.999)
    q50 = max(law.quantile(0.5), 1e-3 * z_ref)
    a = max(law.quantile(0.25), 1e-3 * z_ref)
    b = max(law.quantile(0.75), 2.0 * a)
    return {
        "deductible": Contract.deductible(q50),
        "proportional": Contract.proportional(0.5),
        "three_piece": Contract.three_piece(a, b),
    }


def _moment_route_gates(params: HawkesParams, horizon: float) -> list[Gate]:
    closed = compute_moments(params, horizon)
    quadr = moments_by_quadrature(params, horizon)
    out = []
    for key, val in (("M_T", closed.M_T), ("M2_T", closed.M2_T),
                     ("A_T", closed.A_T), ("B_T", closed.B_T)):
        out.append(_gate(f"moments/route-agreement/{key}", _rel(val, quadr[key]), 1e-7,
                         f"closed {val:.10g} vs quadrature {quadr[key]:.10g}"))
    return out


def _specialization_gates(econ: EconomicParams, law: MarkLaw) -> list[Gate]:
    out = []
    # Degenerate branch: flat intensity, no feedback, checked term by term.
    lam0 = max(econ.c * 0.65, 0.5)
    pois = HawkesParams(lambda0=lam0, lambda_bar=lam0, beta=0.0,
                        impact=ImpactSpec.constant(0.0), marks=law)
    moments = compute_moments(pois, econ.horizon)
    for name, contract in _default_contracts(law).items():
        general = utility_closed_form(contract, econ, moments, law, pois.impact)
        special = utility_poisson(contract, econ, lam0, law)
        worst = max(
            _rel(general.terms[k], special.terms[k]) if special.terms[k] != 0.0
            else abs(general.terms[k])
            for k in special.terms
        )
        out.append(_gate(f"criterion/poisson-branch/{name}", worst, 1e-12))
    # Constant feedback: the cross term folds into the count term.
    beta = 2.0
    fbar = 0.3 * beta / law.total_mass
    const = HawkesParams(lambda0=1.1, lambda_bar=1.0, beta=beta,
                         impact=ImpactSpec.constant(fbar), marks=law)
    momc = compute_moments(const, econ.horizon)
    for name, contract in _default_contracts(law).items():
        general = utility_closed_form(contract, econ, momc, law, const.impact)
        grouped = utility_constant_impact(contract, econ, momc, law, fbar)
        out.append(_gate(f"criterion/constant-impact/{name}",
                         _rel(general.utility, grouped.utility), 1e-12))
    return out


def _mc_gates(params: HawkesParams, econ: EconomicParams, n_paths: int,
              seed: int) -> list[Gate]:
    law, impact = params.marks, params.impact
    T = econ.horizon
    moments = compute_moments(params, T)
    batch = simulate_batch(params, T, n_paths, seed)
    out = []

    counts = batch.counts.astype(float)
    mass = law.total_mass
    mean_th = mass * moments.M_T
    se = counts.std(ddof=1) / math.sqrt(n_paths)
    out.append(_gate("simulate/count-mean", abs(counts.mean() - mean_th), 3.0 * se,
                     f"mc {counts.mean():.5g} vs {mean_th:.5g}"))

    hf = impact.h_f(law)
    var_th = mass * mass * moments.A_T + mass * hf * moments.B_T + mass * moments.M_T
    s2 = counts.var(ddof=1)
    xc = counts - counts.mean()
    var_se = math.sqrt(max((np.mean(xc**4) - (n_paths - 3) / (n_paths - 1) * s2 * s2)
                           / n_paths, 0.0))
    out.append(_gate("simulate/count-variance", abs(s2 - var_th), 3.0 * var_se,
                     f"mc {s2:.5g} vs {var_th:.5g}"))

    for name, contract in _default_contracts(law).items():
        cs = stats(contract, law, impact, econ.c)
        x = batch.path_sums(lambda z: contract(z) - z)
        mean_th = cs.h_gap * moments.M_T
        se = x.std(ddof=1) / math.sqrt(n_paths)
        out.append(_gate(f"criterion/mean-identity/{name}", abs(x.mean() - mean_th),
                         3.0 * se, f"mc {x.mean():.5g} vs {mean_th:.5g}"))
        x2 = x * x
        ex2_th = (cs.h_gap**2 * (moments.A_T + moments.M_T**2)
                  + cs.h_gap * cs.h_f_gap * moments.B_T + cs.h_gap_sq * moments.M_T)
        se2 = x2.std(ddof=1) / math.sqrt(n_paths)
        out.append(_gate(f"criterion/second-moment-identity/{name}",
                         abs(x2.mean() - ex2_th), 3.0 * se2,
                         f"mc {x2.mean():.5g} vs {ex2_th:.5g}"))
        r = wealth_samples(batch, contract, econ, law, impact)
        closed = utility_closed_form(contract, econ, moments, law, impact)
        u_mc = float(r.mean()) - econ.gamma * float(r.var(ddof=1))
        rc = r - r.mean()
        m3 = float(np.mean(rc**3))
        s2 = float(r.var(ddof=1))
        var_s2 = max((np.mean(rc**4) - (n_paths - 3) / (n_paths - 1) * s2 * s2)
                     / n_paths, 0.0)
        g = econ.gamma
        se_u = math.sqrt(max(s2 / n_paths + g * g * var_s2 - 2.0 * g * m3 / n_paths, 0.0))
        out.append(_gate(f"criterion/mc-vs-closed-utility/{name}",
                         abs(u_mc - closed.utility), 3.0 * max(se_u, 1e-12),
                         f"mc {u_mc:.6g} vs closed {closed.utility:.6g}"))
    return out


def _gradient_gates(params: HawkesParams, econ: EconomicParams, n_pairs: int,
                    seed: int) -> list[Gate]:
    # Discrete-mark version of the model so the gradient pairing is exact.
    law = discretize_law(params.marks, 60)
    impact = params.impact
    moments = compute_moments(replace(params, marks=law), econ.horizon)
    zs = np.asarray(law.atoms)
    rng = np.random.default_rng(seed)
    eps = 1e-6
    worst = 0.0
    for _ in range(n_pairs):
        u = rng.uniform(0.0, 1.0, len(zs))
        v = rng.uniform(0.0, 1.0, len(zs))
        phi1 = Contract.tabulated(list(zip(zs, u * zs)))
        phi2 = Contract.tabulated(list(zip(zs, v * zs)))
        direction = lambda z, p1=phi1, p2=phi2: p2(z) - p1(z)
        bumped = Contract.tabulated(list(zip(zs, (1 - eps) * phi1(zs) + eps * phi2(zs))))
        u0 = utility_closed_form(phi1, econ, moments, law, impact).utility
        u1 = utility_closed_form(bumped, econ, moments, law, impact).utility
        fd = (u1 - u0) / eps
        ip = gradient_inner_product(phi1, direction, econ, moments, law, impact)
        worst = max(worst, _rel(fd, ip) if ip != 0.0 else abs(fd))
    return [_gate("criterion/gradient-vs-finite-differences", worst, 1e-4,
                  f"{n_pairs} random contract/direction pairs")]


def _optimizer_gates(params: HawkesParams, econ: EconomicParams,
                     n_atoms: int) -> list[Gate]:
    out = []
    law, impact = params.marks, params.impact
    moments = compute_moments(params, econ.horizon)
    try:
        res = solve_three_piece(econ, moments, law, impact)
    except (HypothesisViolationError, NoBracketError) as exc:
        out.append(Gate("optimizer/three-piece", math.inf, 0.0, False, str(exc)))
        return out
    scale = 1e-9 * res.residual_scale
    out.append(_gate("optimizer/residuals", max(abs(r) for r in res.residuals), scale))
    out.append(_gate("optimizer/slope-above-one", 1.0 - res.slope, 0.0,
                     f"slope {res.slope:.6g}"))
    out.append(Gate("optimizer/gradient-sign-pattern", res.interior_gradient_max,
                    1e-7 * max(1.0, float(np.max(np.abs(res.region_gradient)))),
                    res.sign_pattern_ok))

    # The oracle maximizes the true criterion (continuous-law moments) over
    # contracts discretized at the law's atoms.
    z_hi = law.quantile(1.0 - 1e-4)
    dlaw = discretize_law(law, n_atoms, z_hi=z_hi)
    oracle = qp_oracle(econ, moments, dlaw, impact)
    spacing = z_hi / n_atoms
    interior = oracle.grid <= z_hi  # tail atom sits beyond the uniform grid
    sup_diff = float(np.max(np.abs(oracle.phi_values[interior]
                                   - res.contract(oracle.grid[interior]))))
    out.append(_gate("optimizer/analytic-vs-qp-supnorm", sup_diff, 2.0 * spacing))
    out.append(_gate("optimizer/analytic-vs-qp-utility",
                     _rel(oracle.utility, res.utility), 1e-3))
    return out


def _poisson_recovery_gates(econ: EconomicParams, law: MarkLaw, n_atoms: int) -> list[Gate]:
    lam0 = max(econ.c * 0.65, 0.5)
    z_hi = law.quantile(1.0 - 1e-4)
    dlaw = discretize_law(law, n_atoms, z_hi=z_hi)
    pois = HawkesParams(lambda0=lam0, lambda_bar=lam0, beta=0.0,
                        impact=ImpactSpec.constant(0.0), marks=dlaw)
    moments = compute_moments(pois, econ.horizon)
    oracle = qp_oracle(econ, moments, dlaw, ImpactSpec.constant(0.0))
    closed = poisson_atom_maximizer(econ, lam0, dlaw)
    sup_diff = float(np.max(np.abs(oracle.phi_values - closed)))
    # The per-atom closed form is exact on any discrete law, so a natively
    # discrete law gets a tight gate; discretized continuous laws get the
    # grid gate.
    tol = 1e-6 * z_hi if law.family == "discrete" else 2.0 * z_hi / n_atoms
    gates = [_gate("optimizer/poisson-recovery-supnorm", sup_diff, tol)]
    interior = oracle.active_interior
    if len(interior) >= 2:
        slope = float(np.polyfit(oracle.grid[interior], oracle.phi_values[interior], 1)[0])
        gates.append(_gate("optimizer/poisson-recovery-slope", abs(slope - 1.0), 1e-6,
                           f"interior slope {slope:.8g}"))
    return gates


def _simulator_gates(law: MarkLaw, seed: int, n_samples: int) -> list[Gate]:
    lam = 1.3
    pois = HawkesParams(lambda0=lam, lambda_bar=lam, beta=0.0,
                        impact=ImpactSpec.constant(0.0), marks=law)
    rate = lam * law.total_mass
    horizon = 1.15 * n_samples / rate
    path = simulate_path(pois, horizon, seed)
    gaps = np.diff(np.concatenate(([0.0], path.times)))[:n_samples]
    p_value = sstats.kstest(gaps, "expon", args=(0.0, 1.0 / rate)).pvalue
    return [Gate("simulate/poisson-interarrival-ks", p_value, 1e-3,
                 bool(p_value > 1e-3),
                 f"KS p-value {p_value:.4g} on {len(gaps)} gaps (gate: p > 0.001)")]


def run_validation(params: HawkesParams, econ: EconomicParams, seed: int,
                   n_paths: int = 100_000, qp_atoms: int = 400,
                   fast: bool = False) -> list[Gate]:
    """Run every gate; a gate list with any ``passed=False`` means failure."""
    if fast:
        n_paths = max(n_paths // 10, 2_000)
        qp_atoms = min(qp_atoms, 200)
    ks_samples = 2_000 if fast else 10_000
    law = params.marks

    gates: list[Gate] = []
    gates += _moment_route_gates(params, econ.horizon)
    gates += _specialization_gates(econ, law)
    gates += _mc_gates(params, econ, n_paths, seed)
    gates += _gradient_gates(params, econ, 10 if fast else 50, seed + 1)
    if params.impact.kind == "linear" and params.impact.value > 0.0 \
            and law.family != "discrete":
        gates += _optimizer_gates(params, econ, qp_atoms)
    gates += _poisson_recovery_gates(econ, law, qp_atoms)
    gates += _simulator_gates(law, seed + 2, ks_samples)
    return gates
