"""Reinsurance contracts: payment functions phi with 0 <= phi(z) <= z.

All supported shapes are continuous and piecewise affine, so every
statistic the criterion needs -- H[phi - I], H[(phi - I)^2] and
H[f (phi - I)] -- reduces to partial moments of the claim-size measure of
order at most two and is computed exactly, segment by segment.  Discrete
laws are summed atom by atom instead, which keeps those statistics exact
oracles for the optimizer.

Segments are stored in anchor-value form, phi(z) = v_j + s_j (z - z_j) on
[z_j, z_{j+1}), which stays numerically stable even for the near-vertical
middle pieces the optimizer probes while root finding.

The three-piece shape min{z, b/(b-a) (z-a)+} is the optimal form under
linear feedback: no cover below a, affine cover with slope above 1 on
[a, b], full cover above b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .marks import ImpactSpec, MarkLaw

__all__ = ["Contract", "ContractStats", "evaluate", "stats"]

_REL_TOL = 1e-9


@dataclass(frozen=True)
class Contract:
    """A continuous piecewise-affine function in the admissible class.

    Build via the classmethods (``zero``, ``full``, ``deductible``,
    ``proportional``, ``three_piece``, ``tabulated``).  Segment j is
    ``values[j] + slopes[j] * (z - breakpoints[j])`` on
    [breakpoints[j], breakpoints[j+1]), the last segment extending to
    infinity.
    """

    shape: str
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]   # phi at each breakpoint
    slopes: tuple[float, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.breakpoints)
        if len(self.values) != n or len(self.slopes) != n:
            raise ValueError("inconsistent piecewise description")
        if self.breakpoints[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        # Membership 0 <= phi <= z and continuity: affine pieces only need
        # endpoint checks; the unbounded tail also needs slope in [0, 1].
        for j in range(n):
            lo, v, s = self.breakpoints[j], self.values[j], self.slopes[j]
            tol = _REL_TOL * max(1.0, lo)
            if v < -tol or v > lo + tol:
                raise ValueError(f"contract leaves [0, z] at z = {lo}: phi = {v}")
            if j + 1 < n:
                hi = self.breakpoints[j + 1]
                end = v + s * (hi - lo)
                tol = _REL_TOL * max(1.0, hi, abs(s) * (hi - lo))
                if end < -tol or end > hi + tol:
                    raise ValueError(f"contract leaves [0, z] at z = {hi}: phi = {end}")
                if abs(end - self.values[j + 1]) > tol:
                    raise ValueError(f"contract is discontinuous at z = {hi}")
            elif not -_REL_TOL <= s <= 1.0 + _REL_TOL:
                raise ValueError(f"tail slope {s} must lie in [0, 1]")

    # -- constructors ---------------------------------------------------

    @classmethod
    def zero(cls) -> "Contract":
        return cls("zero", (0.0,), (0.0,), (0.0,))

    @classmethod
    def full(cls) -> "Contract":
        return cls("full", (0.0,), (0.0,), (1.0,))

    @classmethod
    def deductible(cls, a: float) -> "Contract":
        """Excess-of-loss: phi(z) = (z - a)+."""
        if a <= 0.0:
            raise ValueError(f"deductible threshold must be > 0, got {a}")
        return cls("deductible", (0.0, a), (0.0, 0.0), (0.0, 1.0), params=(a,))

    @classmethod
    def proportional(cls, k: float) -> "Contract":
        if not 0.0 <= k <= 1.0:
            raise ValueError(f"proportional share must be in [0, 1], got {k}")
        return cls("proportional", (0.0,), (0.0,), (k,), params=(k,))

    @classmethod
    def three_piece(cls, a: float, b: float) -> "Contract":
        """No cover below a, slope b/(b-a) > 1 on [a, b], full cover above b."""
        if not 0.0 < a < b:
            raise ValueError(f"need 0 < a < b, got a = {a}, b = {b}")
        s = b / (b - a)
        return cls("three_piece", (0.0, a, b), (0.0, 0.0, b), (0.0, s, 1.0), params=(a, b))

    @classmethod
    def tabulated(cls, knots: "list[tuple[float, float]]") -> "Contract":
        """Linear interpolation through (z, phi(z)) knots.

        A (0, 0) knot is implied.  Beyond the last knot the retained gap
        phi(z) - z is held at its last-knot value (so the tail is affine
        with slope one).
        """
        pts = sorted((float(z), float(v)) for z, v in knots)
        if not pts:
            raise ValueError("tabulated contract needs at least one knot")
        if pts[0][0] > 0.0:
            pts.insert(0, (0.0, 0.0))
        if pts[0] != (0.0, 0.0):
            raise ValueError("contract must pass through (0, 0)")
        zs = [z for z, _ in pts]
        if any(z2 <= z1 for z1, z2 in zip(zs, zs[1:])):
            raise ValueError("knot abscissae must be strictly increasing")
        for z, v in pts:
            if not 0.0 <= v <= z + _REL_TOL * max(1.0, z):
                raise ValueError(f"knot ({z}, {v}) violates 0 <= phi <= z")
        bps, vals, sl = [], [], []
        for (z1, v1), (z2, v2) in zip(pts, pts[1:]):
            bps.append(z1)
            vals.append(v1)
            sl.append((v2 - v1) / (z2 - z1))
        z_n, v_n = pts[-1]
        bps.append(z_n)
        vals.append(v_n)
        sl.append(1.0)  # constant retained gap past the last knot
        return cls("tabulated", tuple(bps), tuple(vals), tuple(sl))

    # -- evaluation -----------------------------------------------------

    def __call__(self, z):
        zz = np.asarray(z, dtype=float)
        idx = np.clip(np.searchsorted(self.breakpoints, zz, side="right") - 1, 0, None)
        z0 = np.asarray(self.breakpoints)[idx]
        v0 = np.asarray(self.values)[idx]
        s = np.asarray(self.slopes)[idx]
        val = np.clip(v0 + s * (zz - z0), 0.0, zz)  # clip guards rounding at breakpoints
        return float(val) if np.isscalar(z) else val

    def segments(self):
        """(lo, hi, slope, value_at_lo) tuples; last hi is inf."""
        out = []
        for j, (lo, v, s) in enumerate(zip(self.breakpoints, self.values, self.slopes)):
            hi = self.breakpoints[j + 1] if j + 1 < len(self.breakpoints) else math.inf
            out.append((lo, hi, s, v))
        return out


@dataclass(frozen=True)
class ContractStats:
    """The claim-size integrals the mean-variance criterion consumes."""

    h_gap: float      # H[phi - I]  in [-mean_mark, 0]
    h_gap_sq: float   # H[(phi - I)^2] >= 0
    h_f_gap: float    # H[f (phi - I)] <= 0
    cost_rate: float  # c H[phi]


def evaluate(contract: Contract, z) -> float:
    """phi(z); scalar in, scalar out."""
    if np.any(np.asarray(z) < 0.0):
        raise ValueError("claim size must be >= 0")
    return contract(z)


def _segment_stats(contract: Contract, law: MarkLaw):
    """Exact (H[phi], H[phi-I], H[I(phi-I)], H[(phi-I)^2]) via partial moments.

    On each segment the retained gap is phi(z) - z = d (z - z0) + e with
    d = slope - 1 and e = value - z0, which keeps the huge-slope pieces
    well conditioned (d multiplies centered moments of the segment).
    """
    h_phi = h_gap = h_i_gap = h_gap2 = 0.0
    for z0, hi, s, v in contract.segments():
        p0 = law.partial_moment(0, z0, hi)
        p1 = law.partial_moment(1, z0, hi)
        p2 = law.partial_moment(2, z0, hi)
        c1 = p1 - z0 * p0            # int (z - z0) dTheta over the segment
        c2 = p2 - 2.0 * z0 * p1 + z0 * z0 * p0
        d = s - 1.0
        e = v - z0
        h_gap += d * c1 + e * p0
        h_i_gap += d * (p2 - z0 * p1) + e * p1
        h_gap2 += d * d * c2 + 2.0 * d * e * c1 + e * e * p0
        h_phi += s * c1 + v * p0     # phi = v + s (z - z0)
    return h_phi, h_gap, h_i_gap, h_gap2


def _atom_stats(contract: Contract, law: MarkLaw):
    zs = np.asarray(law.atoms)
    ws = np.asarray(law.weights)
    phi = contract(zs)
    gap = phi - zs
    return (
        float(ws @ phi),
        float(ws @ gap),
        float(ws @ (zs * gap)),
        float(ws @ (gap * gap)),
    )


def stats(contract: Contract, law: MarkLaw, impact: ImpactSpec, c: float) -> ContractStats:
    """All criterion statistics of the contract under the given claim law.

    Exact in both branches: atom sums for discrete laws, closed-form
    partial moments per affine segment otherwise (the integrands are at
    most quadratic on each segment).
    """
    if law.family == "discrete":
        h_phi, h_gap, h_i_gap, h_gap2 = _atom_stats(contract, law)
    else:
        h_phi, h_gap, h_i_gap, h_gap2 = _segment_stats(contract, law)
    if impact.kind == "linear":
        h_f_gap = impact.value * h_i_gap
    else:
        h_f_gap = impact.value * h_gap
    return ContractStats(h_gap=h_gap, h_gap_sq=h_gap2, h_f_gap=h_f_gap, cost_rate=c * h_phi)
