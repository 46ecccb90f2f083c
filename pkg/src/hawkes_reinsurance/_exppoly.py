"""Exact algebra for sums of polynomial-times-exponential terms.

Every moment function of the clustered loss model lives in the family
``sum_j P_j(t) * exp(-r_j * t)`` with polynomial ``P_j`` and rates
``r_j in {0, kappa, 2 kappa}``.  This family is closed under addition,
antiderivatives and convolution against ``exp(-kappa (t - s))``, so the
criterion coefficients come out in closed form with no ODE stepper and no
discretization error.  Resonant convolutions (rate equal to kappa) produce
the expected ``t * exp(-kappa t)`` terms.
"""

from __future__ import annotations

import math

__all__ = ["ExpPoly"]

_RATE_TOL = 1e-12


def _find_rate(terms: dict, r: float):
    for k in terms:
        if abs(k - r) <= _RATE_TOL * max(1.0, abs(k), abs(r)):
            return k
    return None


def _accumulate(terms: dict, r: float, poly: list) -> None:
    key = _find_rate(terms, r)
    if key is None:
        terms[r] = list(poly)
        return
    cur = terms[key]
    if len(poly) > len(cur):
        cur.extend([0.0] * (len(poly) - len(cur)))
    for i, c in enumerate(poly):
        cur[i] += c


class ExpPoly:
    """Immutable value ``t -> sum_r poly_r(t) exp(-r t)``."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[float, list[float]] | None = None):
        self.terms = {r: list(p) for r, p in (terms or {}).items()}

    @classmethod
    def constant(cls, c: float) -> "ExpPoly":
        return cls({0.0: [c]})

    def __call__(self, t: float) -> float:
        total = 0.0
        for r, poly in self.terms.items():
            val = 0.0
            for c in reversed(poly):
                val = val * t + c
            total += val * math.exp(-r * t)
        return total

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        out: dict[float, list[float]] = {r: list(p) for r, p in self.terms.items()}
        for r, p in other.terms.items():
            _accumulate(out, r, p)
        return ExpPoly(out)

    def scaled(self, a: float) -> "ExpPoly":
        return ExpPoly({r: [a * c for c in p] for r, p in self.terms.items()})

    def antiderivative(self) -> "ExpPoly":
        """F with F' = self and F(0) = 0."""
        out: dict[float, list[float]] = {}
        const = 0.0
        for r, poly in self.terms.items():
            if abs(r) < _RATE_TOL:
                _accumulate(out, 0.0, [0.0] + [c / (i + 1) for i, c in enumerate(poly)])
            else:
                # Antiderivative of P(t) e^{-rt} is Q(t) e^{-rt} with
                # Q' - r Q = P, solved coefficientwise top-down.
                n = len(poly)
                q = [0.0] * n
                for k in range(n - 1, -1, -1):
                    upper = (k + 1) * q[k + 1] if k + 1 < n else 0.0
                    q[k] = (upper - poly[k]) / r
                _accumulate(out, r, q)
                const -= q[0]
        if const != 0.0:
            _accumulate(out, 0.0, [const])
        return ExpPoly(out)

    def convolve_exp(self, kappa: float) -> "ExpPoly":
        """``y(t) = int_0^t exp(-kappa (t - s)) self(s) ds``."""
        out: dict[float, list[float]] = {}
        for r, poly in self.terms.items():
            a = kappa - r
            if abs(a) <= _RATE_TOL * max(1.0, abs(kappa), abs(r)):
                # Resonance: int_0^t s^k ds under the common exponential.
                _accumulate(out, kappa, [0.0] + [c / (i + 1) for i, c in enumerate(poly)])
            else:
                # int_0^t P(s) e^{a s} ds = e^{a t} Q(t) - Q(0), Q' + a Q = P.
                n = len(poly)
                q = [0.0] * n
                for k in range(n - 1, -1, -1):
                    upper = (k + 1) * q[k + 1] if k + 1 < n else 0.0
                    q[k] = (poly[k] - upper) / a
                _accumulate(out, r, q)
                _accumulate(out, kappa, [-q[0]])
        return ExpPoly(out)
