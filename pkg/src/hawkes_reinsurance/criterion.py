"""Mean-variance criterion of the insurer over a fixed horizon.

The insurer collects premium at rate ``rho * mean_mark``, pays the retained
part ``Z - phi(Z)`` of each claim, and pays the reinsurer a running fee
``c H[phi]``.  Its horizon-T wealth is

    R_T(phi) = R0 + (rho - c) T mean_mark + X_T[phi - I] - c T H[phi - I],

with X_T[h] the marked-jump functional sum of h(Z_i).  Only X_T is random;
its first two moments are available in closed form through M(T), A(T) and
B(T), which yields the criterion

    U(phi) = E[R_T] - gamma Var[R_T]
           = R0 + (rho - c) mean_mark T
             + H[phi-I] (M - cT)
             - gamma H[(phi-I)^2] M
             - gamma H[phi-I]^2 A
             - gamma H[phi-I] H[f (phi-I)] B.

The functional derivative of U has density G(phi) against the claim
measure; its sign partitions the claim axis into no-cover / interior /
full-cover regions and drives the optimizer.  Monte Carlo estimators of
the same quantities provide the statistical cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contracts import Contract, ContractStats, stats
from .hawkes import BatchPaths, HawkesParams, simulate_batch
from .marks import ImpactSpec, MarkLaw
from .moments import MomentBundle

__all__ = [
    "EconomicParams",
    "CriterionReport",
    "utility_closed_form",
    "utility_poisson",
    "utility_constant_impact",
    "gradient",
    "gradient_inner_product",
    "mc_estimate",
    "wealth_samples",
]


@dataclass(frozen=True)
class EconomicParams:
    """Capital, pricing and risk-aversion inputs of the insurer program."""

    r0: float      # initial capital
    rho: float     # premium loading rate (per unit mean claim, per year)
    c: float       # reinsurance price (per unit of H[phi], per year)
    gamma: float   # risk aversion, > 0
    horizon: float  # program horizon in years, > 0

    def __post_init__(self) -> None:
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.c < 0.0:
            raise ValueError(f"reinsurance price must be >= 0, got {self.c}")

    def theorem_hypothesis_holds(self, moments: MomentBundle) -> bool:
        """True iff c T - M(T) > 0, the pricing condition for the three-piece optimum."""
        return self.c * self.horizon - moments.M_T > 0.0


@dataclass(frozen=True)
class CriterionReport:
    """Mean, variance and utility of terminal wealth, with the term split.

    ``terms`` carries the five summands of the closed-form criterion:
    base capital + net premium, the coverage-gap premium term, and the
    three variance contributions (per-claim quadratic, count
    overdispersion, feedback cross term).  For Monte Carlo reports the
    standard errors are filled in and ``terms`` is empty.
    """

    mean: float
    variance: float
    utility: float
    terms: dict[str, float]
    n_paths: int | None = None
    mean_se: float | None = None
    variance_se: float | None = None
    utility_se: float | None = None


def _check_bundle(econ: EconomicParams, moments: MomentBundle) -> None:
    if moments.horizon != econ.horizon:
        raise ValueError(
            f"moment bundle horizon {moments.horizon} != economic horizon {econ.horizon}"
        )


def _report_from_stats(cs: ContractStats, econ: EconomicParams,
                       M_T: float, A_T: float, B_T: float, mean_mark: float) -> CriterionReport:
    T, gamma = econ.horizon, econ.gamma
    base = econ.r0 + (econ.rho - econ.c) * mean_mark * T
    gap_term = cs.h_gap * (M_T - econ.c * T)
    quad_term = -gamma * cs.h_gap_sq * M_T
    count_term = -gamma * cs.h_gap**2 * A_T
    cross_term = -gamma * cs.h_gap * cs.h_f_gap * B_T
    mean = base + gap_term
    variance = cs.h_gap_sq * M_T + cs.h_gap**2 * A_T + cs.h_gap * cs.h_f_gap * B_T
    return CriterionReport(
        mean=mean,
        variance=variance,
        utility=mean - gamma * variance,
        terms={
            "base": base,
            "gap_premium": gap_term,
            "variance_quadratic": quad_term,
            "variance_count": count_term,
            "variance_cross": cross_term,
        },
    )


def utility_closed_form(contract: Contract, econ: EconomicParams, moments: MomentBundle,
                        law: MarkLaw, impact: ImpactSpec) -> CriterionReport:
    """Exact criterion evaluation from the moment bundle."""
    _check_bundle(econ, moments)
    cs = stats(contract, law, impact, econ.c)
    return _report_from_stats(cs, econ, moments.M_T, moments.A_T, moments.B_T, law.moment(1))


def utility_poisson(contract: Contract, econ: EconomicParams, lam0: float,
                    law: MarkLaw) -> CriterionReport:
    """Criterion under a homogeneous Poisson claim flow with intensity lam0.

    Independent specialization (M = lam0 T, no overdispersion, no feedback);
    must agree term by term with the general formula on the degenerate
    parameter branch.
    """
    T, gamma = econ.horizon, econ.gamma
    cs = stats(contract, law, ImpactSpec.constant(0.0), econ.c)
    base = econ.r0 + (econ.rho - econ.c) * law.moment(1) * T
    gap_term = cs.h_gap * (lam0 - econ.c) * T
    quad_term = -gamma * cs.h_gap_sq * lam0 * T
    mean = base + gap_term
    variance = cs.h_gap_sq * lam0 * T
    return CriterionReport(
        mean=mean,
        variance=variance,
        utility=mean - gamma * variance,
        terms={
            "base": base,
            "gap_premium": gap_term,
            "variance_quadratic": quad_term,
            "variance_count": 0.0,
            "variance_cross": 0.0,
        },
    )


def utility_constant_impact(contract: Contract, econ: EconomicParams, moments: MomentBundle,
                            law: MarkLaw, fbar: float) -> CriterionReport:
    """Criterion under constant feedback f = fbar, grouped as A + fbar B.

    With size-independent feedback the cross term collapses into the count
    term, so the optimum is driven by the same two functionals as in the
    Poisson case.
    """
    _check_bundle(econ, moments)
    T, gamma = econ.horizon, econ.gamma
    cs = stats(contract, law, ImpactSpec.constant(fbar), econ.c)
    base = econ.r0 + (econ.rho - econ.c) * law.moment(1) * T
    gap_term = cs.h_gap * (moments.M_T - econ.c * T)
    quad_term = -gamma * cs.h_gap_sq * moments.M_T
    grouped = -gamma * cs.h_gap**2 * (moments.A_T + fbar * moments.B_T)
    mean = base + gap_term
    variance = cs.h_gap_sq * moments.M_T + cs.h_gap**2 * (moments.A_T + fbar * moments.B_T)
    return CriterionReport(
        mean=mean,
        variance=variance,
        utility=mean - gamma * variance,
        terms={
            "base": base,
            "gap_premium": gap_term,
            "variance_quadratic": quad_term,
            "variance_count_grouped": grouped,
        },
    )


def gradient(contract: Contract, econ: EconomicParams, moments: MomentBundle,
             law: MarkLaw, impact: ImpactSpec):
    """Density G(phi) of the criterion's first variation, as a function of z.

    G(phi)(z) = (M - cT) - 2 gamma H[phi-I] A - gamma H[f(phi-I)] B
                - gamma H[phi-I] B f(z) - 2 gamma M (phi(z) - z).

    Affine in z under linear feedback.  The directional derivative of U at
    phi along g is the claim-measure integral of G * g.
    """
    _check_bundle(econ, moments)
    cs = stats(contract, law, impact, econ.c)
    T, gamma = econ.horizon, econ.gamma
    M_T, A_T, B_T = moments.M_T, moments.A_T, moments.B_T
    const = (M_T - econ.c * T) - 2.0 * gamma * cs.h_gap * A_T - gamma * cs.h_f_gap * B_T

    def G(z):
        zz = np.asarray(z, dtype=float)
        val = const - gamma * cs.h_gap * B_T * impact(zz) - 2.0 * gamma * M_T * (contract(zz) - zz)
        return float(val) if np.isscalar(z) else val

    return G


def gradient_inner_product(contract: Contract, direction, econ: EconomicParams,
                           moments: MomentBundle, law: MarkLaw, impact: ImpactSpec) -> float:
    """Integral of G(phi) * g against the claim measure (exact for discrete laws)."""
    G = gradient(contract, econ, moments, law, impact)
    if law.family != "discrete":
        raise ValueError("exact gradient pairing requires a discrete law")
    zs = np.asarray(law.atoms)
    ws = np.asarray(law.weights)
    return float(ws @ (G(zs) * direction(zs)))


# -- Monte Carlo route -------------------------------------------------------

def wealth_samples(batch: BatchPaths, contract: Contract, econ: EconomicParams,
                   law: MarkLaw, impact: ImpactSpec) -> np.ndarray:
    """Terminal wealth per simulated path."""
    cs = stats(contract, law, impact, econ.c)
    T = batch.horizon
    fixed = econ.r0 + (econ.rho - econ.c) * T * law.moment(1) - econ.c * T * cs.h_gap
    jump_part = batch.path_sums(lambda z: contract(z) - z)
    return fixed + jump_part


def _variance_se(x: np.ndarray) -> float:
    """Standard error of the unbiased sample variance (fourth-moment formula)."""
    n = len(x)
    xc = x - x.mean()
    m2 = float(np.mean(xc**2))
    m4 = float(np.mean(xc**4))
    s2 = m2 * n / (n - 1)
    var_of_s2 = (m4 - (n - 3) / (n - 1) * s2 * s2) / n
    return math.sqrt(max(var_of_s2, 0.0))


def mc_estimate(contract: Contract, econ: EconomicParams, params: HawkesParams,
                n_paths: int, seed: int) -> CriterionReport:
    """Monte Carlo criterion estimate with standard errors; deterministic in seed."""
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, got {n_paths}")
    batch = simulate_batch(params, econ.horizon, n_paths, seed)
    r = wealth_samples(batch, contract, econ, params.marks, params.impact)
    mean = float(r.mean())
    var = float(r.var(ddof=1))
    mean_se = float(r.std(ddof=1) / math.sqrt(n_paths))
    var_se = _variance_se(r)
    # Delta method for U = mean - gamma var, including the mean/variance
    # covariance (third central moment / n).
    rc = r - mean
    m3 = float(np.mean(rc**3))
    g = econ.gamma
    var_u = max(var / n_paths + g * g * var_se**2 - 2.0 * g * m3 / n_paths, 0.0)
    return CriterionReport(
        mean=mean,
        variance=var,
        utility=mean - g * var,
        terms={},
        n_paths=n_paths,
        mean_se=mean_se,
        variance_se=var_se,
        utility_se=math.sqrt(var_u),
    )
