"""Closed-form reflection-threshold candidate for the quadratic-cost GBM problem.

Setup: driftless GBM dX = sigma X dW on (0, inf), running cost f(x) = x^2 / 2,
discounting by an equal-weight two-rate mixture with rates q2 > q1 > sigma^2.
The candidate strategy reflects the process downward at a threshold b.

On the waiting region (0, b) each per-rate value function solves

    x^2/2 + (sigma^2/2) x^2 v''(x; q) - q v(x; q) = 0,   v(0+; q) = 0,

giving v(x; q) = A x^gamma(q) + x^2 / (2 (q - sigma^2)) with

    gamma(q) = (1 + sqrt(1 + 8 q / sigma^2)) / 2,

the positive root of (sigma^2/2) gamma (gamma - 1) = q.  Above b the value is
affine with slope one.  Matching v'(b-) = 1 fixes A, and requiring the
aggregate second derivative V''(b-) to vanish (twice continuous
differentiability of the aggregate across the threshold) pins the candidate
threshold:

    b* = (g1 + g2 - 2)(q1 - s)(q2 - s) / ((g1 - 2)(q2 - s) + (g2 - 2)(q1 - s)),

writing g_i = gamma(q_i) and s = sigma^2.  The sign of

    H = q1 + q2 - 2 b*

equals the sign of the third derivative of the aggregate at b- and separates
the regime where the candidate is an equilibrium (H < 0, aggregate slope
stays below one) from the regime where no reflection threshold works (H > 0,
the slope overshoots one just below b*).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DomainError, ParameterError

__all__ = [
    "gamma",
    "StrongCandidate",
    "build_strong",
    "v_strong_eval",
    "V_strong_eval",
    "regime_indicator",
    "condition_one_margin",
    "locate_regime_crossover",
]


def gamma(q: float, sigma2: float) -> float:
    """Positive root of (sigma2/2) g (g - 1) = q; exceeds 2 when q > sigma2."""
    if q <= 0.0 or sigma2 <= 0.0:
        raise DomainError(f"need q > 0 and sigma2 > 0, got q={q}, sigma2={sigma2}")
    return 0.5 * (1.0 + math.sqrt(1.0 + 8.0 * q / sigma2))


def _require_admissible(sigma2: float, q1: float, q2: float) -> None:
    if not (q2 > q1 > sigma2 > 0.0):
        raise ParameterError(
            "admissibility requires q2 > q1 > sigma^2 > 0 "
            f"(got sigma2={sigma2}, q1={q1}, q2={q2})"
        )


@dataclass(frozen=True)
class StrongCandidate:
    """Constants of the reflection-threshold candidate; see module docstring."""

    sigma2: float
    q1: float
    q2: float
    gamma1: float
    gamma2: float
    A1: float
    A2: float
    b_star: float

    def coeffs(self, i: int) -> tuple[float, float, float]:
        """(A_i, gamma_i, q_i) for atom index i in {1, 2}."""
        if i == 1:
            return self.A1, self.gamma1, self.q1
        if i == 2:
            return self.A2, self.gamma2, self.q2
        raise DomainError(f"atom index must be 1 or 2, got {i}")


def build_strong(sigma2: float, q1: float, q2: float) -> StrongCandidate:
    """Construct the reflection-threshold candidate constants."""
    _require_admissible(sigma2, q1, q2)
    g1 = gamma(q1, sigma2)
    g2 = gamma(q2, sigma2)
    num = (g1 + g2 - 2.0) * (q1 - sigma2) * (q2 - sigma2)
    den = (g1 - 2.0) * (q2 - sigma2) + (g2 - 2.0) * (q1 - sigma2)
    b_star = num / den
    A1 = _slope_match_coeff(b_star, q1, g1, sigma2)
    A2 = _slope_match_coeff(b_star, q2, g2, sigma2)
    return StrongCandidate(
        sigma2=sigma2, q1=q1, q2=q2,
        gamma1=g1, gamma2=g2, A1=A1, A2=A2, b_star=b_star,
    )


def _slope_match_coeff(b: float, q: float, g: float, sigma2: float) -> float:
    # A = (1 - b/(q - sigma^2)) g^{-1} b^{1-g}, from v'(b-) = 1.
    return (1.0 - b / (q - sigma2)) / g * b ** (1.0 - g)


def waiting_piece(cand: StrongCandidate, x, i: int, order: int = 0):
    """The waiting-region formula A x^g + x^2/(2(q - s)); valid analytically for x > 0."""
    A, g, q = cand.coeffs(i)
    s = cand.sigma2
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0.0):
        raise DomainError("state must be positive")
    if order == 0:
        out = A * xs ** g + xs * xs / (2.0 * (q - s))
    elif order == 1:
        out = A * g * xs ** (g - 1.0) + xs / (q - s)
    elif order == 2:
        out = A * g * (g - 1.0) * xs ** (g - 2.0) + 1.0 / (q - s)
    else:
        raise DomainError(f"derivative order must be 0, 1, or 2, got {order}")
    return float(out) if np.isscalar(x) else out


def v_strong_eval(cand: StrongCandidate, x, i: int, order: int = 0):
    """Per-rate value function of the candidate: waiting formula below b*, slope-one affine above."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0.0):
        raise DomainError("state must be positive")
    below = xs < cand.b_star
    v_b = waiting_piece(cand, cand.b_star, i, 0)
    if order == 0:
        out = np.where(below, waiting_piece(cand, np.maximum(xs, 1e-300), i, 0),
                       xs - cand.b_star + v_b)
    elif order == 1:
        out = np.where(below, waiting_piece(cand, np.maximum(xs, 1e-300), i, 1), 1.0)
    elif order == 2:
        out = np.where(below, waiting_piece(cand, np.maximum(xs, 1e-300), i, 2), 0.0)
    else:
        raise DomainError(f"derivative order must be 0, 1, or 2, got {order}")
    return float(out) if np.isscalar(x) else out


def V_strong_eval(cand: StrongCandidate, x, order: int = 0):
    """Aggregate value: equal-weight average of the two per-rate values."""
    return 0.5 * v_strong_eval(cand, x, 1, order) + 0.5 * v_strong_eval(cand, x, 2, order)


def regime_indicator(sigma2: float, q1: float, q2: float) -> float:
    """H = q1 + q2 - 2 b*; its sign equals the sign of the aggregate third derivative at b*-."""
    cand = build_strong(sigma2, q1, q2)
    return q1 + q2 - 2.0 * cand.b_star


# ---------------------------------------------------------------------------
# Empirical regime boundary
# ---------------------------------------------------------------------------


def waiting_grid(cand: StrongCandidate, n: int = 4096, guard: float = 1e-8):
    """Composite grid on (0, b*): geometric near 0, uniform near the threshold.

    Slope behaviour concentrates near the threshold, so half the points are
    spent on [b*/2, b* - guard] uniformly and half geometrically below.
    """
    b = cand.b_star
    n_geo = n // 2
    lo = b * 1e-6
    geo = np.geomspace(lo, b / 2.0, n_geo, endpoint=False)
    uni = np.linspace(b / 2.0, b * (1.0 - guard), n - n_geo)
    return np.concatenate([geo, uni])


def condition_one_margin(cand: StrongCandidate, n: int = 4096) -> float:
    """Grid maximum of V' - 1 over the waiting region (positive means violation)."""
    xs = waiting_grid(cand, n)
    return float(np.max(V_strong_eval(cand, xs, order=1) - 1.0))


def locate_regime_crossover(
    sigma2: float,
    q1: float,
    q2_lo: float,
    q2_hi: float,
    tol: float = 1e-6,
    n_grid: int = 4096,
) -> tuple[float, float]:
    """Bisect on q2 for the sign change of the grid-checked slope condition.

    Returns a bracket (lo, hi) with margin(lo) <= 0 < margin(hi).  This is an
    empirical regime boundary: the grid check certifies nothing between grid
    points, so the bracket is reported instead of a claimed sharp constant.
    """
    m_lo = condition_one_margin(build_strong(sigma2, q1, q2_lo), n_grid)
    m_hi = condition_one_margin(build_strong(sigma2, q1, q2_hi), n_grid)
    if m_lo > 0.0 or m_hi <= 0.0:
        raise ParameterError(
            "bracket does not straddle the regime boundary: "
            f"margin({q2_lo})={m_lo:.3e}, margin({q2_hi})={m_hi:.3e}"
        )
    lo, hi = q2_lo, q2_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if condition_one_margin(build_strong(sigma2, q1, mid), n_grid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return lo, hi
