"""Closed-form exploding-rate candidate for the quadratic-cost GBM problem.

Same setup as :mod:`thresheq.strong` (driftless GBM, f(x) = x^2/2, two-rate
equal-weight discounting with q2 > q1 > sigma^2), but now the candidate keeps
the process below an interior level beta by an absolutely continuous control
whose rate explodes as the state approaches beta from below.  The state space
splits into a waiting region (0, b_low), a mild action region [b_low, beta)
with positive rate, and [beta, inf) from which the process jumps to
beta - delta at time zero.

Writing d = q2 - q1, s = sigma^2 and g_i = gamma(q_i), the per-rate value
functions are

    v(x; q_i) = A_i x^{g_i} + x^2 / (2 (q_i - s))        on (0, b_low),
    v(x; q_i) = a_i x^2 / 2 + b_i x + c_i                on [b_low, beta),
    v(x; q_i) = x - beta + v(beta; q_i)                  on [beta, inf),

with
    a_1 = -2/d,  a_2 = +2/d,  b_1 = 2 q2 / d,  b_2 = -2 q1 / d,

so that the aggregate slope is identically one on the mild region
(a_1 + a_2 = 0, b_1 + b_2 = 2) and the rate-weighted slopes satisfy
q1 v'(x; q1) + q2 v'(x; q2) = 2x there (q1 a1 + q2 a2 = 2,
q1 b1 + q2 b2 = 0).  The explosion point and the lower edge of the mild
region come out as

    beta = (q1 + q2) / 2,
    b_low = ((g1-1) b1 + (g2-1) b2)
            / ((2-g1)(a1 - 1/(q1-s)) + (2-g2)(a2 - 1/(q2-s))),

and the control rate on [b_low, beta) is the rational function

    u(x) = ( (1 + (s - q1) a1) x^2 / 2 - q1 b1 x - q1 c1 ) / (a1 x + b1 - 1),

whose denominator equals -a1 (beta - x): positive on [b_low, beta) and
vanishing linearly at beta, which produces the explosion.  The candidate is
usable only when 0 < b_low < beta; otherwise construction returns a
structured invalidity report so parameter scans can traverse the bad region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DomainError, MildThreshold, ParameterError, RateFunction
from .strong import gamma

__all__ = [
    "MildCandidate",
    "MildInvalidity",
    "GrowthBoundReport",
    "build_mild",
    "u_star_eval",
    "v_mild_eval",
    "V_mild_eval",
    "mild_growth_bound",
    "threshold_strategy",
]


@dataclass(frozen=True)
class MildCandidate:
    """Constants of the exploding-rate candidate; see module docstring."""

    sigma2: float
    q1: float
    q2: float
    gamma1: float
    gamma2: float
    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    A1: float
    A2: float
    b_low: float
    beta_star: float

    def coeffs(self, i: int):
        if i == 1:
            return self.A1, self.gamma1, self.a1, self.b1, self.c1, self.q1
        if i == 2:
            return self.A2, self.gamma2, self.a2, self.b2, self.c2, self.q2
        raise DomainError(f"atom index must be 1 or 2, got {i}")

    def g_certificate(self, i: int, x):
        """g_i(x) = (g_i - 2)(1/(q_i - s) - a_i) x - (g_i - 1) b_i.

        Appears in the value of the rate at b_low: the construction gives
        u(b_low) = (s/2) b_low g_1(b_low) / (a1 b_low + b1 - 1) and the
        identity g_1(b_low) = -g_2(b_low).
        """
        A, g, a, b, c, q = self.coeffs(i)
        return (g - 2.0) * (1.0 / (q - self.sigma2) - a) * np.asarray(x, float) - (g - 1.0) * b

    def rate_numerator(self, x):
        """Numerator of the control rate: (1 + (s - q1) a1) x^2/2 - q1 b1 x - q1 c1."""
        xs = np.asarray(x, dtype=float)
        return (
            0.5 * (1.0 + (self.sigma2 - self.q1) * self.a1) * xs * xs
            - self.q1 * self.b1 * xs
            - self.q1 * self.c1
        )

    def rate_denominator(self, x):
        """Denominator a1 x + b1 - 1 = -a1 (beta - x); vanishes exactly at beta."""
        return self.a1 * np.asarray(x, dtype=float) + self.b1 - 1.0


@dataclass(frozen=True)
class MildInvalidity:
    """Construction report when the candidate ordering 0 < b_low < beta fails."""

    sigma2: float
    q1: float
    q2: float
    b_low: float
    beta_star: float
    reason: str


def build_mild(sigma2: float, q1: float, q2: float) -> MildCandidate | MildInvalidity:
    """Compute all candidate constants; invalid orderings yield a report, not an error."""
    if not (q2 > q1 > sigma2 > 0.0):
        raise ParameterError(
            "admissibility requires q2 > q1 > sigma^2 > 0 "
            f"(got sigma2={sigma2}, q1={q1}, q2={q2})"
        )
    s = sigma2
    d = q2 - q1
    g1 = gamma(q1, s)
    g2 = gamma(q2, s)
    a1, a2 = -2.0 / d, 2.0 / d
    b1, b2 = 2.0 * q2 / d, -2.0 * q1 / d
    beta_star = 0.5 * (q1 + q2)

    num = (g1 - 1.0) * b1 + (g2 - 1.0) * b2
    den = (2.0 - g1) * (a1 - 1.0 / (q1 - s)) + (2.0 - g2) * (a2 - 1.0 / (q2 - s))
    b_low = num / den

    if not 0.0 < b_low < beta_star:
        return MildInvalidity(
            sigma2=s, q1=q1, q2=q2, b_low=b_low, beta_star=beta_star,
            reason=f"mild-region lower edge {b_low:.6g} not inside (0, {beta_star:.6g})",
        )

    # Second-derivative balance at b_low, shared by both rates via index-1 data.
    kappa = s * (g1 - 2.0) * (a1 - 1.0 / (q1 - s))
    lam = 0.5 * s * (g1 - 1.0) * b1

    def c_i(i: int) -> float:
        sign = -1.0 if i == 1 else 1.0  # (-1)^i
        a = a1 if i == 1 else a2
        b = b1 if i == 1 else b2
        q = q1 if i == 1 else q2
        quad = 0.5 * b_low * b_low * (1.0 + (s - q) * a - sign * kappa)
        lin = b_low * (sign * lam + q * b)
        return (quad - lin) / q

    c1 = c_i(1)
    c2 = c_i(2)

    def A_i(i: int) -> float:
        a = a1 if i == 1 else a2
        b = b1 if i == 1 else b2
        q = q1 if i == 1 else q2
        g = g1 if i == 1 else g2
        return (a * b_low - b_low / (q - s) + b) / g * b_low ** (1.0 - g)

    return MildCandidate(
        sigma2=s, q1=q1, q2=q2, gamma1=g1, gamma2=g2,
        a1=a1, a2=a2, b1=b1, b2=b2, c1=c1, c2=c2,
        A1=A_i(1), A2=A_i(2), b_low=b_low, beta_star=beta_star,
    )


# ---------------------------------------------------------------------------
# Rate and value evaluation
# ---------------------------------------------------------------------------


def u_star_eval(cand: MildCandidate, x, cap: float = 1e15):
    """Control rate: zero below b_low, rational on [b_low, beta), exploding at beta.

    Within 1e-12 of beta the gap is floored and the value capped at ``cap`` so
    downstream quadrature stays finite; x >= beta is outside the domain.
    """
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0.0):
        raise DomainError("state must be positive")
    if np.any(xs >= cand.beta_star):
        raise DomainError("rate undefined at or beyond the inaccessible boundary")
    gap = np.maximum(cand.beta_star - xs, 1e-12)
    xe = cand.beta_star - gap
    val = cand.rate_numerator(xe) / (-cand.a1 * gap)
    out = np.where(xs < cand.b_low, 0.0, np.minimum(val, cap))
    return float(out) if np.isscalar(x) else out


def waiting_piece(cand: MildCandidate, x, i: int, order: int = 0):
    A, g, a, b, c, q = cand.coeffs(i)
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


def mild_piece(cand: MildCandidate, x, i: int, order: int = 0):
    A, g, a, b, c, q = cand.coeffs(i)
    xs = np.asarray(x, dtype=float)
    if order == 0:
        out = 0.5 * a * xs * xs + b * xs + c
    elif order == 1:
        out = a * xs + b
    elif order == 2:
        out = a * np.ones_like(xs)
    else:
        raise DomainError(f"derivative order must be 0, 1, or 2, got {order}")
    return float(out) if np.isscalar(x) else out


def v_mild_eval(cand: MildCandidate, x, i: int, order: int = 0):
    """Three-piece per-rate value; affine with slope one above beta."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0.0):
        raise DomainError("state must be positive")
    v_beta = mild_piece(cand, cand.beta_star, i, 0)
    safe = np.maximum(xs, 1e-300)
    if order == 0:
        out = np.where(
            xs < cand.b_low,
            waiting_piece(cand, safe, i, 0),
            np.where(xs < cand.beta_star, mild_piece(cand, xs, i, 0),
                     xs - cand.beta_star + v_beta),
        )
    elif order == 1:
        out = np.where(
            xs < cand.b_low,
            waiting_piece(cand, safe, i, 1),
            np.where(xs < cand.beta_star, mild_piece(cand, xs, i, 1), 1.0),
        )
    elif order == 2:
        out = np.where(
            xs < cand.b_low,
            waiting_piece(cand, safe, i, 2),
            np.where(xs < cand.beta_star, mild_piece(cand, xs, i, 2), 0.0),
        )
    else:
        raise DomainError(f"derivative order must be 0, 1, or 2, got {order}")
    return float(out) if np.isscalar(x) else out


def V_mild_eval(cand: MildCandidate, x, order: int = 0):
    return 0.5 * v_mild_eval(cand, x, 1, order) + 0.5 * v_mild_eval(cand, x, 2, order)


# ---------------------------------------------------------------------------
# Growth-bound diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GrowthBoundReport:
    """Grid diagnostics for the explosion lower bound u(x)/(s x^2) >= 1/(beta - x).

    ``m_min`` is the grid minimum of the quadratic certificate

        M(x) = (1/2 - (3 s - q1)/(q2 - q1)) x^2 - 2 q1 q2 x/(q2 - q1) - q1 c1,

    which is nonnegative exactly where the bound holds.  Both minima are
    reported unconditionally: for moderate rate gaps they can be negative near
    b_low without invalidating the candidate (the bound is only needed near
    beta, where it drives the scale-function blow-up).
    """

    grid_min_x: float
    grid_max_x: float
    m_min: float
    m_argmin: float
    bound_min: float
    bound_argmin: float


def growth_certificate(cand: MildCandidate, x):
    xs = np.asarray(x, dtype=float)
    d = cand.q2 - cand.q1
    return (
        (0.5 - (3.0 * cand.sigma2 - cand.q1) / d) * xs * xs
        - 2.0 * cand.q1 * cand.q2 / d * xs
        - cand.q1 * cand.c1
    )


def mild_growth_bound(cand: MildCandidate, grid) -> GrowthBoundReport:
    """Evaluate the certificate M and the raw bound u/(s x^2) - 1/(beta - x) on a grid."""
    xs = np.asarray(grid, dtype=float)
    if np.any((xs < cand.b_low) | (xs >= cand.beta_star)):
        raise DomainError("growth-bound grid must lie in [b_low, beta)")
    m = growth_certificate(cand, xs)
    u = u_star_eval(cand, xs)
    bound = u / (cand.sigma2 * xs * xs) - 1.0 / (cand.beta_star - xs)
    i_m = int(np.argmin(m))
    i_b = int(np.argmin(bound))
    return GrowthBoundReport(
        grid_min_x=float(xs[0]),
        grid_max_x=float(xs[-1]),
        m_min=float(m[i_m]),
        m_argmin=float(xs[i_m]),
        bound_min=float(bound[i_b]),
        bound_argmin=float(xs[i_b]),
    )


# ---------------------------------------------------------------------------
# Strategy wrapper
# ---------------------------------------------------------------------------


def threshold_strategy(cand: MildCandidate, delta: float, cap: float = 1e15) -> MildThreshold:
    """Package the candidate rate as a strategy with jump offset ``delta``.

    ``kernel_params`` carries (b_low, beta, numerator quad/lin/const, -a1)
    so simulation kernels can evaluate the rational rate without callbacks.
    """
    if not 0.0 < delta < cand.beta_star:
        raise ParameterError(f"delta must lie in (0, beta), got {delta}")
    rate = RateFunction(
        fn=lambda x: u_star_eval(cand, x, cap=cap),
        discontinuities=(cand.b_low,),
    )
    na = 0.5 * (1.0 + (cand.sigma2 - cand.q1) * cand.a1)
    nb = -cand.q1 * cand.b1
    nc = -cand.q1 * cand.c1
    return MildThreshold(
        rate=rate,
        beta=cand.beta_star,
        delta=delta,
        kernel_params=(cand.b_low, cand.beta_star, na, nb, nc, -cand.a1),
    )
