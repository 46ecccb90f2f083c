"""Shared instances and the acceptance-criteria summary hook."""

from __future__ import annotations

import math
from dataclasses import dataclass

import pytest

from hawkes_reinsurance import (
    Contract,
    EconomicParams,
    HawkesParams,
    ImpactSpec,
    MarkLaw,
    compute_moments,
    simulate_batch,
)


@dataclass(frozen=True)
class Instance:
    """One fully specified model instance used across tests."""

    name: str
    params: HawkesParams
    econ: EconomicParams

    @property
    def law(self) -> MarkLaw:
        return self.params.marks

    @property
    def impact(self) -> ImpactSpec:
        return self.params.impact

    @property
    def moments(self):
        return compute_moments(self.params, self.econ.horizon)


def _exp_instance() -> Instance:
    law = MarkLaw.exponential(1.0)
    return Instance(
        name="exp-linear",
        params=HawkesParams(1.0, 1.0, 2.0, ImpactSpec.linear(0.5), law),
        econ=EconomicParams(r0=10.0, rho=1.2, c=2.0, gamma=0.8, horizon=5.0),
    )


def _lognormal_instance() -> Instance:
    law = MarkLaw.lognormal(-0.125, 0.5)
    return Instance(
        name="lognormal-linear",
        params=HawkesParams(1.5, 1.0, 3.0, ImpactSpec.linear(0.8), law),
        econ=EconomicParams(r0=8.0, rho=1.4, c=2.2, gamma=0.5, horizon=4.0),
    )


def _discrete_instance() -> Instance:
    law = MarkLaw.discrete([(0.5, 0.4), (2.0, 0.4), (5.0, 0.2)])
    return Instance(
        name="discrete-constant",
        params=HawkesParams(0.8, 0.8, 1.5, ImpactSpec.constant(0.6), law),
        econ=EconomicParams(r0=12.0, rho=1.1, c=1.5, gamma=0.4, horizon=3.0),
    )


def _exp_wide_instance() -> Instance:
    law = MarkLaw.exponential(2.0)
    return Instance(
        name="exp-wide-linear",
        params=HawkesParams(0.9, 0.9, 1.8, ImpactSpec.linear(0.3), law),
        econ=EconomicParams(r0=5.0, rho=1.3, c=2.5, gamma=0.6, horizon=4.0),
    )


def _lognormal_heavy_instance() -> Instance:
    law = MarkLaw.lognormal(0.0, 0.5)
    return Instance(
        name="lognormal-heavy-linear",
        params=HawkesParams(1.2, 1.0, 2.5, ImpactSpec.linear(0.7), law),
        econ=EconomicParams(r0=6.0, rho=1.5, c=2.0, gamma=1.0, horizon=5.0),
    )


@pytest.fixture(scope="session")
def exp_instance() -> Instance:
    return _exp_instance()


@pytest.fixture(scope="session")
def ergodic_instances() -> list[Instance]:
    """Three ergodic parameter sets spanning the mark families."""
    return [_exp_instance(), _lognormal_instance(), _discrete_instance()]


@pytest.fixture(scope="session")
def solver_instances() -> list[Instance]:
    """Unbounded-support, linear-feedback instances with c T > M(T)."""
    return [_exp_instance(), _exp_wide_instance(), _lognormal_heavy_instance()]


@pytest.fixture(scope="session")
def mc_batches(ergodic_instances):
    """One 1e5-path batch per ergodic instance, shared by the MC criteria."""
    return {
        inst.name: simulate_batch(inst.params, inst.econ.horizon, 100_000,
                                  seed=987_000 + i)
        for i, inst in enumerate(ergodic_instances)
    }


def contract_families(law: MarkLaw) -> dict[str, Contract]:
    """Three representative contract families scaled to the claim law."""
    z_ref = law.quantile(0.999)
    q50 = max(law.quantile(0.5), 1e-3 * z_ref)
    a = max(law.quantile(0.25), 1e-3 * z_ref)
    b = max(law.quantile(0.75), 2.0 * a)
    return {
        "deductible": Contract.deductible(q50),
        "proportional": Contract.proportional(0.5),
        "three_piece": Contract.three_piece(a, b),
    }


def three_se(samples) -> float:
    return 3.0 * samples.std(ddof=1) / math.sqrt(len(samples))


# -- acceptance summary -------------------------------------------------------

_CRITERIA: dict[str, tuple[str, str]] = {}
_OUTCOMES: dict[str, bool] = {}


def register_criterion(nodeid_substring: str, number: str, description: str) -> None:
    _CRITERIA[nodeid_substring] = (number, description)


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for key, (number, _) in _CRITERIA.items():
        if key in report.nodeid:
            _OUTCOMES[key] = _OUTCOMES.get(key, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for key, (number, desc) in sorted(_CRITERIA.items(), key=lambda kv: kv[1][0]):
        if key in _OUTCOMES:
            status = "PASS" if _OUTCOMES[key] else "FAIL"
            terminalreporter.write_line(f"  [{status}] criterion {number}: {desc}")
