"""Acceptance suite: every gate at its stated tolerance.

Each criterion is one test; the terminal summary prints one PASS/FAIL line
per criterion (see conftest).  Monte Carlo gates run on 1e5-path batches
shared across criteria through the session fixture.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats as sstats

from conftest import contract_families, register_criterion, three_se
from hawkes_reinsurance import (
    Contract,
    EconomicParams,
    HawkesParams,
    ImpactSpec,
    MarkLaw,
    compute_moments,
    discretize_law,
    poisson_limit_sweep,
    qp_oracle,
    simulate_batch,
    simulate_path,
    solve_three_piece,
    stats,
    utility_closed_form,
)
from hawkes_reinsurance.cli import main
from hawkes_reinsurance.criterion import (
    gradient_inner_product,
    utility_constant_impact,
    utility_poisson,
)
from hawkes_reinsurance.optimizer import poisson_atom_maximizer

register_criterion("test_criterion_1", "1",
                   "mean identity E[X_T] = H[phi-I] M(T), 3 families x 3 sets, 3 SE")
register_criterion("test_criterion_2", "2",
                   "second-moment identity certifies A(T), B(T), 3 SE")
register_criterion("test_criterion_3", "3",
                   "criterion reduces to the Poisson / constant-impact forms, 1e-12")
register_criterion("test_criterion_4", "4",
                   "gradient matches finite differences, 50 pairs, rel 1e-4")
register_criterion("test_criterion_5", "5",
                   "three-piece optimum: residuals, sign pattern, QP oracle match")
register_criterion("test_criterion_6", "6",
                   "Poisson recovery: QP maximizer is the closed-form deductible")
register_criterion("test_criterion_7", "7",
                   "feedback sweep monotone with invariant M(T) and cost")
register_criterion("test_criterion_8", "8",
                   "simulator gates: interarrival KS and count variance")
register_criterion("test_criterion_9", "9",
                   "validate twice produces byte-identical outputs")

SE_GATE = 3.0


@pytest.fixture(scope="module")
def timed_batches(ergodic_instances):
    out = {}
    for i, inst in enumerate(ergodic_instances):
        t0 = time.time()
        batch = simulate_batch(inst.params, inst.econ.horizon, 100_000,
                               seed=987_000 + i)
        out[inst.name] = (batch, time.time() - t0)
    return out


def test_criterion_1_mean_identity(ergodic_instances, timed_batches):
    for inst in ergodic_instances:
        batch, elapsed = timed_batches[inst.name]
        assert elapsed < 60.0, f"{inst.name}: simulation took {elapsed:.1f}s"
        moments = inst.moments
        for family, contract in contract_families(inst.law).items():
            cs = stats(contract, inst.law, inst.impact, inst.econ.c)
            x = batch.path_sums(lambda z: contract(z) - z)
            expected = cs.h_gap * moments.M_T
            gap = abs(x.mean() - expected)
            assert gap <= three_se(x), (inst.name, family, gap, three_se(x))


def test_criterion_2_second_moment_identity(ergodic_instances, timed_batches):
    for inst in ergodic_instances:
        batch, _ = timed_batches[inst.name]
        m = inst.moments
        for family, contract in contract_families(inst.law).items():
            cs = stats(contract, inst.law, inst.impact, inst.econ.c)
            x2 = batch.path_sums(lambda z: contract(z) - z) ** 2
            expected = (cs.h_gap**2 * (m.A_T + m.M_T**2)
                        + cs.h_gap * cs.h_f_gap * m.B_T + cs.h_gap_sq * m.M_T)
            gap = abs(x2.mean() - expected)
            assert gap <= three_se(x2), (inst.name, family, gap, three_se(x2))


def test_criterion_3_specializations():
    rng = np.random.default_rng(2718)
    laws = [MarkLaw.exponential(1.0), MarkLaw.lognormal(-0.2, 0.6),
            MarkLaw.discrete([(0.5, 0.5), (2.5, 0.5)])]

    def rel(x, y):
        return abs(x - y) / max(abs(x), abs(y), 1e-15)

    for _ in range(20):
        law = laws[rng.integers(len(laws))]
        econ = EconomicParams(r0=rng.uniform(1, 20), rho=rng.uniform(0.8, 2.0),
                              c=rng.uniform(1.2, 3.0), gamma=rng.uniform(0.1, 2.0),
                              horizon=rng.uniform(1.0, 6.0))
        z_ref = law.quantile(0.9)
        contract = Contract.three_piece(0.4 * z_ref, 1.7 * z_ref)

        # Degenerate branch: flat intensity, zero impact.
        lam0 = rng.uniform(0.3, 2.0)
        pois = HawkesParams(lam0, lam0, 0.0, ImpactSpec.constant(0.0), law)
        gen = utility_closed_form(contract, econ, compute_moments(pois, econ.horizon),
                                  law, pois.impact)
        spec = utility_poisson(contract, econ, lam0, law)
        for key, val in spec.terms.items():
            if val == 0.0:
                assert abs(gen.terms[key]) <= 1e-12
            else:
                assert rel(gen.terms[key], val) <= 1e-12, key

        # Constant impact: cross term folds into the count term.
        beta = rng.uniform(0.8, 3.0)
        fbar = rng.uniform(0.0, 0.8) * beta / law.total_mass
        lam_bar = rng.uniform(0.4, 1.5)
        const = HawkesParams(lam_bar * rng.uniform(1.0, 1.6), lam_bar, beta,
                             ImpactSpec.constant(fbar), law)
        momc = compute_moments(const, econ.horizon)
        gen_c = utility_closed_form(contract, econ, momc, law, const.impact)
        grouped = utility_constant_impact(contract, econ, momc, law, fbar)
        assert rel(gen_c.utility, grouped.utility) <= 1e-12
        assert rel(gen_c.variance, grouped.variance) <= 1e-12


def test_criterion_4_gradient(exp_instance):
    law = discretize_law(exp_instance.law, 80)
    params = replace(exp_instance.params, marks=law)
    econ = exp_instance.econ
    moments = compute_moments(params, econ.horizon)
    zs = np.asarray(law.atoms)
    rng = np.random.default_rng(424242)
    eps = 1e-6
    for _ in range(50):
        u = rng.uniform(0.0, 1.0, len(zs))
        v = rng.uniform(0.0, 1.0, len(zs))
        phi = Contract.tabulated(list(zip(zs, u * zs)))
        other = Contract.tabulated(list(zip(zs, v * zs)))
        bumped = Contract.tabulated(list(zip(zs, (1 - eps) * u * zs + eps * v * zs)))
        u0 = utility_closed_form(phi, econ, moments, law, params.impact).utility
        u1 = utility_closed_form(bumped, econ, moments, law, params.impact).utility
        fd = (u1 - u0) / eps
        ip = gradient_inner_product(phi, lambda z: other(z) - phi(z),
                                    econ, moments, law, params.impact)
        assert fd == pytest.approx(ip, rel=1e-4)


def test_criterion_5_optimal_shape(solver_instances):
    n_atoms = 400
    for inst in solver_instances:
        t0 = time.time()
        moments = inst.moments
        assert inst.econ.theorem_hypothesis_holds(moments), inst.name
        res = solve_three_piece(inst.econ, moments, inst.law, inst.impact)

        tol = 1e-9 * res.residual_scale
        assert abs(res.residuals[0]) <= tol, inst.name
        assert abs(res.residuals[1]) <= tol, inst.name
        assert res.slope > 1.0, inst.name
        assert res.sign_pattern_ok, inst.name

        z_hi = inst.law.quantile(1.0 - 1e-4)
        dlaw = discretize_law(inst.law, n_atoms, z_hi=z_hi)
        oracle = qp_oracle(inst.econ, moments, dlaw, inst.impact)
        on_grid = oracle.grid <= z_hi
        sup = np.max(np.abs(oracle.phi_values[on_grid]
                            - res.contract(oracle.grid[on_grid])))
        assert sup <= 2.0 * z_hi / n_atoms, (inst.name, sup)
        assert abs(oracle.utility - res.utility) <= 1e-3 * abs(res.utility), inst.name

        elapsed = time.time() - t0
        assert elapsed < 120.0, f"{inst.name}: took {elapsed:.1f}s"


def test_criterion_6_poisson_recovery():
    econ = EconomicParams(r0=10.0, rho=1.2, c=2.0, gamma=0.8, horizon=5.0)
    lam0 = 1.3
    law = MarkLaw.exponential(1.0)
    z_hi = law.quantile(1.0 - 1e-4)
    n_atoms = 400
    dlaw = discretize_law(law, n_atoms, z_hi=z_hi)
    pois = HawkesParams(lam0, lam0, 0.0, ImpactSpec.constant(0.0), dlaw)
    moments = compute_moments(pois, econ.horizon)
    oracle = qp_oracle(econ, moments, dlaw, pois.impact)
    closed = poisson_atom_maximizer(econ, lam0, dlaw)
    # Closed form is exact per atom, so the oracle should match far inside
    # the grid tolerance.
    assert np.max(np.abs(oracle.phi_values - closed)) <= 2.0 * z_hi / n_atoms
    interior = oracle.active_interior
    assert len(interior) >= 2
    slope = float(np.polyfit(oracle.grid[interior], oracle.phi_values[interior], 1)[0])
    assert abs(slope - 1.0) <= 1e-6


def test_criterion_7_limit_sweep(exp_instance):
    grid = [0.5, 0.35, 0.25, 0.15, 0.08, 0.04, 0.02, 0.01, 0.003, 0.001]
    res = poisson_limit_sweep(exp_instance.params, exp_instance.econ, grid)
    assert all(r.error is None for r in res.rows)
    assert res.slope_non_increasing
    assert res.a_non_increasing
    assert res.b_non_decreasing
    assert res.terminal_slope_gap <= 1e-3
    T = exp_instance.econ.horizon
    for row in res.rows:
        assert row.M_T == pytest.approx(res.lam_poisson * T, rel=1e-8)


def test_criterion_8_simulator_gates(ergodic_instances, timed_batches):
    # Interarrival KS in the degenerate flat-intensity mode, fixed seed.
    law = MarkLaw.exponential(1.0, total_mass=2.0)
    lam = 1.3
    pois = HawkesParams(lam, lam, 0.0, ImpactSpec.constant(0.0), law)
    rate = lam * law.total_mass
    n_samples = 10_000
    path = simulate_path(pois, 1.15 * n_samples / rate, seed=5150)
    gaps = np.diff(np.concatenate(([0.0], path.times)))[:n_samples]
    assert len(gaps) == n_samples
    p_value = sstats.kstest(gaps, "expon", args=(0.0, 1.0 / rate)).pvalue
    assert p_value > 1e-3, f"KS p-value {p_value}"

    # Count variance in the same mode: A(T) = 0 so the variance is
    # mass^2 A + mass M exactly.
    T = 4.0
    moments = compute_moments(pois, T)
    batch = simulate_batch(pois, T, 100_000, seed=5151)
    counts = batch.counts.astype(float)
    var_th = law.total_mass**2 * moments.A_T + law.total_mass * moments.M_T
    s2 = counts.var(ddof=1)
    xc = counts - counts.mean()
    n = len(counts)
    var_se = math.sqrt((np.mean(xc**4) - (n - 3) / (n - 1) * s2 * s2) / n)
    assert abs(s2 - var_th) <= SE_GATE * var_se

    # With feedback the count variance carries the cross term
    # mass H[f] B(T) as well; check on the shared ergodic batches.
    for inst in ergodic_instances:
        b, _ = timed_batches[inst.name]
        m = inst.moments
        mass = inst.law.total_mass
        hf = inst.impact.h_f(inst.law)
        var_full = mass**2 * m.A_T + mass * hf * m.B_T + mass * m.M_T
        c = b.counts.astype(float)
        s2 = c.var(ddof=1)
        xc = c - c.mean()
        n = len(c)
        var_se = math.sqrt((np.mean(xc**4) - (n - 3) / (n - 1) * s2 * s2) / n)
        assert abs(s2 - var_full) <= SE_GATE * var_se, inst.name


def test_criterion_9_determinism(tmp_path):
    config = tmp_path / "scenario.yaml"
    config.write_text(
        "hawkes:\n"
        "  lambda0: 1.0\n"
        "  lambda_bar: 1.0\n"
        "  beta: 2.0\n"
        "  impact: {kind: linear, value: 0.5}\n"
        "marks: {family: exponential, mean: 1.0}\n"
        "economic: {r0: 10.0, rho: 1.2, c: 2.0, gamma: 0.8, horizon: 5.0}\n"
        "run: {seed: 33, n_paths: 20000, qp_atoms: 300}\n"
    )
    outputs = []
    for label in ("a", "b"):
        out = tmp_path / label
        assert main(["validate", str(config), "--output-dir", str(out)]) == 0
        outputs.append((out / "validate_report.csv").read_bytes())
    assert outputs[0] == outputs[1]
