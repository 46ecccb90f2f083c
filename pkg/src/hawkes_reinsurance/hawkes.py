"""Exact simulation of the self-exciting (marked Hawkes) loss process.

The loss intensity decays exponentially at speed ``beta`` toward the long-run
level ``lambda_bar`` between claims and jumps by ``f(Z)`` at each claim of
size ``Z``.  Sampling uses Ogata-style thinning with the current intensity as
majorant, which is valid because the intensity never goes below
``lambda_bar`` (start at or above it, non-negative jumps, decay toward it),
hence is non-increasing between events.  No time discretization is involved;
paths are exact and fully determined by the integer seed.

The degenerate encoding ``beta = 0`` with zero impact and
``lambda0 = lambda_bar`` yields a homogeneous Poisson process: the decay
factor is then identically 1 and the thinning step accepts every proposal.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .errors import ClusterExplosionError, ErgodicityError
from .marks import ImpactSpec, MarkLaw, ergodicity_margin

__all__ = [
    "HawkesParams",
    "EventPath",
    "BatchPaths",
    "simulate_path",
    "simulate_batch",
    "intensity_at",
    "path_seed",
]

DEFAULT_EVENT_CAP = 10_000_000


@dataclass(frozen=True)
class HawkesParams:
    """Parameters of the clustered loss process.

    Attributes:
        lambda0: initial intensity (events/year), >= lambda_bar.
        lambda_bar: long-run intensity level (events/year), > 0.
        beta: mean-reversion speed (1/year).
        impact: feedback f of a claim on the intensity.
        marks: claim-size measure.
    """

    lambda0: float
    lambda_bar: float
    beta: float
    impact: ImpactSpec
    marks: MarkLaw

    def __post_init__(self) -> None:
        if not (self.lambda_bar > 0.0 and math.isfinite(self.lambda_bar)):
            raise ValueError(f"lambda_bar must be positive, got {self.lambda_bar}")
        if not (self.lambda0 >= self.lambda_bar):
            raise ValueError(
                f"lambda0 must be >= lambda_bar, got {self.lambda0} < {self.lambda_bar}"
            )
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.beta == 0.0:
            # Degenerate Poisson encoding: no decay is only consistent with
            # no feedback and a flat initial condition.
            if self.impact.h_f(self.marks) != 0.0:
                raise ErgodicityError("beta = 0 requires zero impact (Poisson encoding)")
            if self.lambda0 != self.lambda_bar:
                raise ErgodicityError("beta = 0 requires lambda0 == lambda_bar")
        elif ergodicity_margin(self.marks, self.impact, self.beta) <= 0.0:
            raise ErgodicityError(
                f"mean-reversion margin beta - H[f] = "
                f"{ergodicity_margin(self.marks, self.impact, self.beta):.6g} must be > 0"
            )

    @property
    def kappa(self) -> float:
        """Effective decay rate beta - H[f]."""
        return self.beta - self.impact.h_f(self.marks)

    @property
    def is_poisson(self) -> bool:
        return self.beta == 0.0


@dataclass(frozen=True)
class EventPath:
    """One realized claim history on [0, horizon]."""

    horizon: float
    times: np.ndarray
    marks: np.ndarray
    terminal_intensity: float

    def __post_init__(self) -> None:
        if len(self.times) != len(self.marks):
            raise ValueError("times and marks must have equal length")
        if len(self.times):
            if self.times[0] <= 0.0 or self.times[-1] > self.horizon:
                raise ValueError("event times must lie in (0, horizon]")
            if np.any(np.diff(self.times) <= 0.0):
                raise ValueError("event times must be strictly increasing")
            if np.any(self.marks < 0.0):
                raise ValueError("marks must be >= 0")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class BatchPaths:
    """Flat storage for many simulated paths (marks concatenated, CSR-style)."""

    horizon: float
    n_paths: int
    marks: np.ndarray          # all marks, path-major
    offsets: np.ndarray        # len n_paths + 1; path i owns marks[offsets[i]:offsets[i+1]]
    terminal_intensity: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def path_sums(self, g) -> np.ndarray:
        """Per-path sums of g(mark): the jump functional X_T[g] for each path."""
        if len(self.marks) == 0:
            return np.zeros(self.n_paths)
        vals = g(self.marks)
        cum = np.concatenate(([0.0], np.cumsum(vals)))
        return cum[self.offsets[1:]] - cum[self.offsets[:-1]]


def path_seed(seed: int, index: int) -> int:
    """Per-path sub-seed; stable under any execution schedule."""
    state = np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def _draw_mark(rng: random.Random, law: MarkLaw, cumweights, atoms) -> float:
    if law.family == "exponential":
        return rng.expovariate(1.0 / law.mean)
    if law.family == "lognormal":
        return rng.lognormvariate(law.mu, law.sigma)
    u = rng.random() * law.total_mass
    from bisect import bisect_left

    return atoms[min(bisect_left(cumweights, u), len(atoms) - 1)]


def _simulate_core(params: HawkesParams, horizon: float, rng: random.Random,
                   max_events: int):
    """Thinning loop; returns (times, marks, terminal_intensity)."""
    law = params.marks
    mass = law.total_mass
    beta = params.beta
    lam_bar = params.lambda_bar
    impact = params.impact
    constant_impact = impact.kind == "constant"
    impact_value = impact.value
    cumweights = law._cumweights() if law.family == "discrete" else None
    atoms = law.atoms

    expovariate = rng.expovariate
    uniform = rng.random

    t = 0.0
    lam = params.lambda0  # right limit of the intensity at t
    times: list[float] = []
    marks: list[float] = []
    while True:
        wait = expovariate(lam * mass)
        t_cand = t + wait
        if t_cand >= horizon:
            lam_T = lam_bar + (lam - lam_bar) * math.exp(-beta * (horizon - t))
            return times, marks, lam_T
        lam_left = lam_bar + (lam - lam_bar) * math.exp(-beta * wait)
        if uniform() * lam <= lam_left:
            z = _draw_mark(rng, law, cumweights, atoms)
            times.append(t_cand)
            marks.append(z)
            lam = lam_left + (impact_value if constant_impact else impact_value * z)
            if len(times) > max_events:
                raise ClusterExplosionError(
                    f"path exceeded {max_events} events by t = {t_cand:.4g}; "
                    "check the mean-reversion margin"
                )
        else:
            lam = lam_left  # tighten the majorant to the decayed level
        t = t_cand


def simulate_path(params: HawkesParams, horizon: float, seed: int,
                  max_events: int = DEFAULT_EVENT_CAP) -> EventPath:
    """Exact sample of the loss process on [0, horizon], deterministic in seed."""
    if horizon <= 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    rng = random.Random(seed)
    times, marks, lam_T = _simulate_core(params, horizon, rng, max_events)
    return EventPath(
        horizon=horizon,
        times=np.asarray(times, dtype=float),
        marks=np.asarray(marks, dtype=float),
        terminal_intensity=lam_T,
    )


def simulate_batch(params: HawkesParams, horizon: float, n_paths: int, seed: int,
                   max_events: int = DEFAULT_EVENT_CAP) -> BatchPaths:
    """Simulate ``n_paths`` independent paths with per-path sub-seeds.

    Path ``i`` is identical to ``simulate_path(params, horizon,
    path_seed(seed, i))``, so results do not depend on batching or on any
    parallel execution order.
    """
    if horizon <= 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    all_marks: list[float] = []
    offsets = np.zeros(n_paths + 1, dtype=np.int64)
    lam_T = np.empty(n_paths)
    for i in range(n_paths):
        rng = random.Random(path_seed(seed, i))
        _, marks, lt = _simulate_core(params, horizon, rng, max_events)
        all_marks.extend(marks)
        offsets[i + 1] = len(all_marks)
        lam_T[i] = lt
    return BatchPaths(
        horizon=horizon,
        n_paths=n_paths,
        marks=np.asarray(all_marks, dtype=float),
        offsets=offsets,
        terminal_intensity=lam_T,
    )


def intensity_at(path: EventPath, params: HawkesParams, t: float) -> float:
    """Left limit of the intensity at time t, replayed from the event record."""
    if not 0.0 <= t <= path.horizon:
        raise ValueError(f"t must lie in [0, {path.horizon}], got {t}")
    lam = params.lambda0
    prev = 0.0
    for ti, zi in zip(path.times, path.marks):
        if ti >= t:
            break
        lam = params.lambda_bar + (lam - params.lambda_bar) * math.exp(-params.beta * (ti - prev))
        lam += float(params.impact(zi))
        prev = ti
    return params.lambda_bar + (lam - params.lambda_bar) * math.exp(-params.beta * (t - prev))
