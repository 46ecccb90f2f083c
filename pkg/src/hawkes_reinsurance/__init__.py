"""Optimal reinsurance under clustered losses.

Claim arrivals follow a self-exciting marked point process whose intensity
jumps with each claim (more for larger claims under linear feedback) and
decays back to a long-run level.  The package evaluates the insurer's
mean-variance criterion for arbitrary reinsurance contracts in closed form,
simulates the process exactly for Monte Carlo cross-checks, and computes
the optimal contract: a three-piece shape with no cover below a threshold,
super-linear cover in between, and full cover above a second threshold.
"""

from .contracts import Contract, ContractStats, evaluate, stats
from .criterion import (
    CriterionReport,
    EconomicParams,
    gradient,
    mc_estimate,
    utility_closed_form,
)
from .errors import (
    ClusterExplosionError,
    ConfigError,
    ErgodicityError,
    HypothesisViolationError,
    IntegrabilityError,
    ModelError,
    NoBracketError,
)
from .hawkes import EventPath, HawkesParams, intensity_at, simulate_batch, simulate_path
from .marks import ImpactSpec, MarkLaw, discretize_law, ergodicity_margin, h_integral, theta_bar
from .moments import MomentBundle, compute_moments, moments_by_quadrature
from .optimizer import (
    OptimalContractResult,
    QPOracleResult,
    poisson_limit_sweep,
    qp_oracle,
    solve_three_piece,
)

__version__ = "0.1.0"

__all__ = [
    "Contract",
    "ContractStats",
    "CriterionReport",
    "EconomicParams",
    "EventPath",
    "HawkesParams",
    "ImpactSpec",
    "MarkLaw",
    "MomentBundle",
    "OptimalContractResult",
    "QPOracleResult",
    "ModelError",
    "IntegrabilityError",
    "ErgodicityError",
    "ClusterExplosionError",
    "HypothesisViolationError",
    "NoBracketError",
    "ConfigError",
    "compute_moments",
    "moments_by_quadrature",
    "discretize_law",
    "ergodicity_margin",
    "evaluate",
    "gradient",
    "h_integral",
    "intensity_at",
    "mc_estimate",
    "poisson_limit_sweep",
    "qp_oracle",
    "simulate_batch",
    "simulate_path",
    "solve_three_piece",
    "stats",
    "theta_bar",
    "utility_closed_form",
]
