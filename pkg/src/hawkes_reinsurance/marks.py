"""Mark (claim-size) measures and the integral functionals built on them.

The claim-size measure ``Theta`` is a finite measure on [0, inf) with a
finite second moment.  Everything downstream consumes it through the
linear functional ``H[g] = integral of g dTheta``, so this module provides:

* exact closed-form partial moments ``int_lo^hi z^k dTheta`` for each
  supported family (the workhorse of contract statistics and the
  analytic optimizer),
* a general adaptive-quadrature ``h_integral`` for arbitrary integrands
  of at most quadratic growth (the independent cross-check route),
* the impact function ``f`` of the self-exciting feedback (constant or
  proportional to the claim size) and the mean-reversion margin
  ``beta - H[f]`` that keeps the intensity ergodic.

``total_mass`` need not be 1: with mass ``w`` the event rate of the
cluster process is ``w * lambda_t`` and marks are drawn from the
normalized law ``Theta / w``.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from .errors import IntegrabilityError

__all__ = [
    "MarkLaw",
    "ImpactSpec",
    "h_integral",
    "theta_bar",
    "ergodicity_margin",
    "discretize_law",
]

_WEIGHT_SUM_RTOL = 1e-12


@dataclass(frozen=True)
class MarkLaw:
    """A finite measure on [0, inf) from one of three families.

    Use the classmethod constructors; the raw constructor does no
    normalization beyond validation.

    Attributes:
        family: "exponential", "lognormal" or "discrete".
        total_mass: Theta([0, inf)), > 0. Defaults to a probability measure.
        mean: mean of the normalized exponential law (family-specific).
        mu, sigma: log-space location/scale of the lognormal law.
        atoms, weights: support points and masses of the discrete law
            (weights sum to total_mass).
    """

    family: str
    total_mass: float = 1.0
    mean: float | None = None
    mu: float | None = None
    sigma: float | None = None
    atoms: tuple[float, ...] | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not (self.total_mass > 0.0 and math.isfinite(self.total_mass)):
            raise ValueError(f"total_mass must be positive and finite, got {self.total_mass}")
        if self.family == "exponential":
            if self.mean is None or not (self.mean > 0.0 and math.isfinite(self.mean)):
                raise ValueError(f"exponential law needs a positive finite mean, got {self.mean}")
        elif self.family == "lognormal":
            if self.mu is None or not math.isfinite(self.mu):
                raise ValueError(f"lognormal law needs a finite mu, got {self.mu}")
            if self.sigma is None or not (self.sigma > 0.0 and math.isfinite(self.sigma)):
                raise ValueError(f"lognormal law needs a positive finite sigma, got {self.sigma}")
        elif self.family == "discrete":
            if not self.atoms:
                raise ValueError("discrete law needs at least one atom")
            if any(z < 0.0 or not math.isfinite(z) for z in self.atoms):
                raise ValueError("discrete atoms must be finite and >= 0")
            if any(w <= 0.0 or not math.isfinite(w) for w in self.weights):
                raise ValueError("discrete weights must be finite and > 0")
            if len(self.atoms) != len(self.weights):
                raise ValueError("atoms and weights must have equal length")
            s = math.fsum(self.weights)
            if abs(s - self.total_mass) > _WEIGHT_SUM_RTOL * max(s, self.total_mass):
                raise ValueError(
                    f"discrete weights sum to {s!r}, inconsistent with total_mass {self.total_mass!r}"
                )
        else:
            raise ValueError(f"unknown mark family {self.family!r}")

    # -- constructors -------------------------------------------------

    @classmethod
    def exponential(cls, mean: float, total_mass: float = 1.0) -> "MarkLaw":
        return cls(family="exponential", total_mass=total_mass, mean=mean)

    @classmethod
    def lognormal(cls, mu: float, sigma: float, total_mass: float = 1.0) -> "MarkLaw":
        return cls(family="lognormal", total_mass=total_mass, mu=mu, sigma=sigma)

    @classmethod
    def discrete(
        cls,
        atoms: "list[tuple[float, float]] | dict[float, float]",
        total_mass: float | None = None,
    ) -> "MarkLaw":
        """Discrete law from (atom, weight) pairs, sorted by atom."""
        pairs = sorted(atoms.items() if isinstance(atoms, dict) else atoms)
        zs = tuple(float(z) for z, _ in pairs)
        ws = tuple(float(w) for _, w in pairs)
        if total_mass is None:
            total_mass = math.fsum(ws)
        return cls(family="discrete", total_mass=total_mass, atoms=zs, weights=ws)

    # -- moments ------------------------------------------------------

    def partial_moment(self, k: int, lo: float = 0.0, hi: float = math.inf) -> float:
        """Exact ``int_lo^hi z^k dTheta`` (closed form; atoms on boundaries count once).

        For the discrete family the interval is treated as [lo, hi], with an
        atom exactly at ``hi`` excluded when a later segment starts there;
        callers that slice [0, inf) into segments should prefer direct atom
        sums (see ``contracts.stats``) to avoid boundary double counting.
        """
        if hi <= lo:
            return 0.0
        if self.family == "exponential":
            return self.total_mass * _exp_partial(k, self.mean, lo, hi)
        if self.family == "lognormal":
            return self.total_mass * _lognormal_partial(k, self.mu, self.sigma, lo, hi)
        out = 0.0
        for z, w in zip(self.atoms, self.weights):
            if lo <= z <= hi:
                out += w * z**k
        return out

    def moment(self, k: int) -> float:
        return self.partial_moment(k, 0.0, math.inf)

    @property
    def mean_mark(self) -> float:
        """Average claim size, ``int z dTheta``."""
        return self.moment(1)

    def quantile(self, p: float) -> float:
        """p-quantile of the normalized law."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), got {p}")
        if self.family == "exponential":
            return -self.mean * math.log1p(-p)
        if self.family == "lognormal":
            return math.exp(self.mu + self.sigma * ndtri(p))
        acc = 0.0
        target = p * self.total_mass
        for z, w in zip(self.atoms, self.weights):
            acc += w
            if acc >= target:
                return z
        return self.atoms[-1]

    def sample(self, rng: random.Random) -> float:
        """One draw from the normalized law (Theta / total_mass)."""
        if self.family == "exponential":
            return rng.expovariate(1.0 / self.mean)
        if self.family == "lognormal":
            return rng.lognormvariate(self.mu, self.sigma)
        u = rng.random() * self.total_mass
        cum = self._cumweights()
        return self.atoms[min(bisect_left(cum, u), len(self.atoms) - 1)]

    def _cumweights(self) -> tuple[float, ...]:
        cum = []
        acc = 0.0
        for w in self.weights:
            acc += w
            cum.append(acc)
        return tuple(cum)

    def density(self, z: np.ndarray | float):
        """Density of Theta (mass included) for the continuous families."""
        z = np.asarray(z, dtype=float)
        if self.family == "exponential":
            return self.total_mass * np.exp(-z / self.mean) / self.mean
        if self.family == "lognormal":
            out = np.zeros_like(z)
            pos = z > 0.0
            lz = np.log(z[pos])
            out[pos] = np.exp(-((lz - self.mu) ** 2) / (2.0 * self.sigma**2)) / (
                z[pos] * self.sigma * math.sqrt(2.0 * math.pi)
            )
            return self.total_mass * out
        raise ValueError("discrete law has no density")


def _exp_partial(k: int, mean: float, lo: float, hi: float) -> float:
    """int_lo^hi z^k exp(-z/mean)/mean dz for k in {0, 1, 2}."""

    def upper_tail(a: float) -> float:
        if a == math.inf:
            return 0.0
        e = math.exp(-a / mean)
        if k == 0:
            return e
        if k == 1:
            return (a + mean) * e
        if k == 2:
            return (a * a + 2.0 * mean * a + 2.0 * mean * mean) * e
        raise ValueError(f"partial moments implemented for k <= 2, got {k}")

    return upper_tail(lo) - upper_tail(hi)


def _lognormal_partial(k: int, mu: float, sigma: float, lo: float, hi: float) -> float:
    """int_lo^hi z^k dLogNormal(mu, sigma)."""
    if k > 2:
        raise ValueError(f"partial moments implemented for k <= 2, got {k}")
    scale = math.exp(k * mu + 0.5 * k * k * sigma * sigma)

    def cdf_arg(x: float) -> float:
        if x == math.inf:
            return 1.0
        if x <= 0.0:
            return 0.0
        return ndtr((math.log(x) - mu - k * sigma * sigma) / sigma)

    return scale * (cdf_arg(hi) - cdf_arg(lo))


@dataclass(frozen=True)
class ImpactSpec:
    """Feedback of a claim on the loss intensity: f(z) = fbar or f(z) = scale * z."""

    kind: str  # "constant" | "linear"
    value: float

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"impact kind must be 'constant' or 'linear', got {self.kind!r}")
        if self.value < 0.0 or not math.isfinite(self.value):
            raise ValueError(f"impact value must be finite and >= 0, got {self.value}")

    @classmethod
    def constant(cls, fbar: float) -> "ImpactSpec":
        return cls(kind="constant", value=fbar)

    @classmethod
    def linear(cls, scale: float) -> "ImpactSpec":
        return cls(kind="linear", value=scale)

    def __call__(self, z):
        if self.kind == "constant":
            return self.value if np.isscalar(z) else np.full_like(np.asarray(z, float), self.value)
        return self.value * (z if np.isscalar(z) else np.asarray(z, float))

    def h_f(self, law: MarkLaw) -> float:
        """H[f] = integral of f dTheta."""
        if self.kind == "constant":
            return self.value * law.total_mass
        return self.value * law.moment(1)

    def h_f_squared(self, law: MarkLaw) -> float:
        """H[f^2] = integral of f^2 dTheta."""
        if self.kind == "constant":
            return self.value**2 * law.total_mass
        return self.value**2 * law.moment(2)


def theta_bar(law: MarkLaw) -> float:
    """Average loss per claim under Theta (the identity integral)."""
    return law.moment(1)


def ergodicity_margin(law: MarkLaw, impact: ImpactSpec, beta: float) -> float:
    """beta - H[f]; the intensity is mean-reverting iff this is positive."""
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return beta - impact.h_f(law)


# -- general quadrature route ----------------------------------------------

def _integral_scale(law: MarkLaw) -> float:
    return max(1.0, law.total_mass, law.moment(1), law.moment(2))


def _truncation_point(law: MarkLaw, tol: float) -> float:
    """Smallest grid point with (1 + z^2)-weighted tail mass below tol."""
    z = max(law.quantile(0.999), 1.0)
    for _ in range(200):
        tail = law.partial_moment(0, z) + law.partial_moment(2, z)
        if tail <= tol:
            return z
        z *= 1.5
    return z


def h_integral(law: MarkLaw, g) -> float:
    """``H[g] = int g(z) Theta(dz)`` for measurable g with |g| <= C (1 + z^2).

    Discrete laws are summed exactly.  Continuous laws use adaptive
    quadrature on [0, z_max] where z_max is chosen so the quadratic tail
    envelope is negligible; growth faster than quadratic beyond z_max is
    detected and rejected.
    """
    if law.family == "discrete":
        return math.fsum(w * g(z) for z, w in zip(law.atoms, law.weights))

    scale = _integral_scale(law)
    z_max = _truncation_point(law, 1e-13 * scale)

    # Envelope constant on the integration window, then check that the
    # integrand does not outgrow (1 + z^2) past the window.
    grid = np.linspace(1e-9, z_max, 64)
    ratios = [abs(g(z)) / (1.0 + z * z) for z in grid]
    c_window = max(ratios)
    outer = [abs(g(z)) / (1.0 + z * z) for z in (2.0 * z_max, 4.0 * z_max, 8.0 * z_max)]
    c_outer = max(outer)
    tail_env = law.partial_moment(0, z_max) + law.partial_moment(2, z_max)
    if c_outer > 4.0 * max(c_window, 1e-300) and c_outer * tail_env > 1e-10 * scale:
        raise IntegrabilityError(
            "integrand grows faster than (1 + z^2) beyond the quadrature window; "
            f"envelope ratio {c_outer:.3g} vs {c_window:.3g} on the window"
        )

    val, _ = quad(
        lambda z: g(z) * float(law.density(z)),
        0.0,
        z_max,
        epsabs=1e-12 * scale,
        epsrel=1e-11,
        limit=400,
    )
    return val


def discretize_law(law: MarkLaw, n_atoms: int, z_hi: float | None = None) -> MarkLaw:
    """Uniform-bin discretization of a continuous law (plus one tail atom).

    Atoms sit at bin midpoints with exact bin masses; the mass beyond
    ``z_hi`` collapses to a single atom at the conditional tail mean, so the
    discrete law preserves total mass exactly and the first moment to the
    tail-truncation error.  Returns the law unchanged if already discrete.
    """
    if law.family == "discrete":
        return law
    if n_atoms < 2:
        raise ValueError("n_atoms must be >= 2")
    if z_hi is None:
        z_hi = law.quantile(1.0 - 1e-4)
    edges = np.linspace(0.0, z_hi, n_atoms + 1)
    pairs = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        w = law.partial_moment(0, lo, hi)
        if w > 0.0:
            pairs.append((0.5 * (lo + hi), w))
    tail_mass = law.partial_moment(0, z_hi)
    if tail_mass > 0.0:
        pairs.append((law.partial_moment(1, z_hi) / tail_mass, tail_mass))
    return MarkLaw.discrete(pairs, total_mass=law.total_mass)
