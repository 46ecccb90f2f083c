"""Simulator correctness: replay, determinism, Poisson degeneration, mean counts."""

import math

import numpy as np
import pytest

from hawkes_reinsurance import (
    ClusterExplosionError,
    ErgodicityError,
    EventPath,
    HawkesParams,
    ImpactSpec,
    MarkLaw,
    compute_moments,
    intensity_at,
    simulate_batch,
    simulate_path,
)
from hawkes_reinsurance.hawkes import path_seed

EXP1 = MarkLaw.exponential(1.0)


def _ergodic_params():
    return HawkesParams(1.0, 1.0, 2.0, ImpactSpec.linear(0.5), EXP1)


def _poisson_params(lam=2.0):
    return HawkesParams(lam, lam, 0.0, ImpactSpec.constant(0.0), EXP1)


class TestConstruction:
    def test_lambda0_below_long_run_rejected(self):
        with pytest.raises(ValueError):
            HawkesParams(0.5, 1.0, 2.0, ImpactSpec.constant(0.0), EXP1)

    def test_non_ergodic_rejected(self):
        with pytest.raises(ErgodicityError):
            HawkesParams(1.0, 1.0, 1.0, ImpactSpec.linear(1.5), EXP1)

    def test_poisson_encoding_needs_zero_impact(self):
        with pytest.raises(ErgodicityError):
            HawkesParams(1.0, 1.0, 0.0, ImpactSpec.linear(0.5), EXP1)

    def test_kappa(self):
        assert _ergodic_params().kappa == pytest.approx(1.5)


class TestPoissonDegeneration:
    def test_mean_count_is_rate_times_horizon(self):
        # Flat intensity 2 over T = 3: count mean 6.
        batch = simulate_batch(_poisson_params(2.0), 3.0, 100_000, seed=11)
        counts = batch.counts.astype(float)
        se = counts.std(ddof=1) / math.sqrt(len(counts))
        assert abs(counts.mean() - 6.0) <= 3.0 * se

    def test_intensity_stays_flat(self):
        path = simulate_path(_poisson_params(2.0), 3.0, seed=5)
        assert path.terminal_intensity == pytest.approx(2.0)


class TestReplay:
    def test_terminal_intensity_matches_replay(self):
        params = _ergodic_params()
        for seed in range(5):
            path = simulate_path(params, 5.0, seed=seed)
            assert intensity_at(path, params, path.horizon) == pytest.approx(
                path.terminal_intensity, rel=1e-9
            )

    def test_jump_size_is_impact_of_mark(self):
        params = _ergodic_params()
        path = simulate_path(params, 5.0, seed=3)
        assert len(path) > 0
        t1, z1 = path.times[0], path.marks[0]
        before = intensity_at(path, params, t1)
        just_after = intensity_at(path, params, min(t1 * (1 + 1e-12), path.horizon))
        assert just_after - before == pytest.approx(0.5 * z1, rel=1e-6)

    def test_intensity_never_below_long_run(self):
        params = _ergodic_params()
        path = simulate_path(params, 5.0, seed=9)
        grid = np.linspace(0.0, 5.0, 400)
        lam = np.array([intensity_at(path, params, t) for t in grid])
        assert np.all(lam >= params.lambda_bar - 1e-12)


class TestIntensityAt:
    def test_pure_decay(self):
        params = HawkesParams(3.0, 1.0, 1.0, ImpactSpec.constant(0.0), EXP1)
        empty = EventPath(horizon=2.0, times=np.array([]), marks=np.array([]),
                          terminal_intensity=1.0 + 2.0 * math.exp(-2.0))
        assert intensity_at(empty, params, math.log(2.0)) == pytest.approx(2.0)

    def test_at_zero_returns_initial(self):
        params = _ergodic_params()
        path = simulate_path(params, 1.0, seed=1)
        assert intensity_at(path, params, 0.0) == params.lambda0

    def test_outside_horizon_rejected(self):
        params = _ergodic_params()
        path = simulate_path(params, 1.0, seed=1)
        with pytest.raises(ValueError):
            intensity_at(path, params, 1.5)


class TestDeterminism:
    def test_same_seed_same_path(self):
        params = _ergodic_params()
        p1 = simulate_path(params, 5.0, seed=123)
        p2 = simulate_path(params, 5.0, seed=123)
        assert np.array_equal(p1.times, p2.times)
        assert np.array_equal(p1.marks, p2.marks)
        assert p1.terminal_intensity == p2.terminal_intensity

    def test_batch_paths_match_per_path_seeds(self):
        params = _ergodic_params()
        batch = simulate_batch(params, 5.0, 8, seed=77)
        for i in range(8):
            solo = simulate_path(params, 5.0, path_seed(77, i))
            lo, hi = batch.offsets[i], batch.offsets[i + 1]
            assert np.array_equal(batch.marks[lo:hi], solo.marks)
            assert batch.terminal_intensity[i] == solo.terminal_intensity


class TestMeanCount:
    def test_matches_closed_form(self):
        params = _ergodic_params()
        moments = compute_moments(params, 5.0)
        batch = simulate_batch(params, 5.0, 100_000, seed=2024)
        counts = batch.counts.astype(float)
        se = counts.std(ddof=1) / math.sqrt(len(counts))
        assert abs(counts.mean() - moments.M_T) <= 3.0 * se

    def test_mass_scales_event_rate(self):
        law = MarkLaw.exponential(1.0, total_mass=2.0)
        params = HawkesParams(1.0, 1.0, 0.0, ImpactSpec.constant(0.0), law)
        batch = simulate_batch(params, 2.0, 40_000, seed=5)
        counts = batch.counts.astype(float)
        se = counts.std(ddof=1) / math.sqrt(len(counts))
        assert abs(counts.mean() - 4.0) <= 3.0 * se  # rate = mass * lambda = 2


class TestGuards:
    def test_event_cap_raises(self):
        params = _ergodic_params()
        with pytest.raises(ClusterExplosionError):
            simulate_path(params, 50.0, seed=1, max_events=3)

    def test_event_path_validation(self):
        with pytest.raises(ValueError):
            EventPath(horizon=1.0, times=np.array([0.5, 0.4]),
                      marks=np.array([1.0, 1.0]), terminal_intensity=1.0)
        with pytest.raises(ValueError):
            EventPath(horizon=1.0, times=np.array([0.5]),
                      marks=np.array([-1.0]), terminal_intensity=1.0)
