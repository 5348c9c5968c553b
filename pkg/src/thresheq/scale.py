"""Scale function of the controlled diffusion and boundary classification.

For a state-dependent control rate u on (l, beta) the controlled drift is
mu - u, and the scale function anchored at an interior base point c is

    s(x) = int_c^x exp( -2 int_c^y (mu(z) - u(z)) / sigma^2(z) dz ) dy.

Whether the level beta can be reached by the controlled process is read off
two integrals:

    T1(x) = int_c^x s'(y) int_c^y 2 / (s'(z) sigma^2(z)) dz dy,
    T2(x) = int_c^x 2 s(y) / (s'(y) sigma^2(y)) dy.

beta is an entrance-not-exit boundary when T1 diverges and T2 stays finite
as x increases to beta.  Divergence cannot be proven numerically, so the
classification is a declared protocol: evaluate both integrals on a ladder of
truncation points increasing to beta (default beta - 10^-k) and apply
ratio/Cauchy tests to the recorded sequences.  Every report carries the
protocol parameters; nothing is silently assumed.

Numerics: the integrands are smooth between declared rate discontinuities
but blow up polynomially at beta, so the quadrature mesh is graded
geometrically toward beta (four cells per decade down to a configurable
floor) and split at every declared discontinuity.  On each cell the
integrands are interpolated at Chebyshev-Lobatto nodes and integrated
exactly as polynomials, which yields cumulative values of the exponent,
s, the speed integral, T1, and T2 at all cell boundaries plus spectral
interpolants inside cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .model import (
    DiffusionModel,
    DomainError,
    InsufficientDataError,
    NumericalError,
    RegionPartition,
)

__all__ = [
    "ScaleFunction",
    "scale_eval",
    "Verdict",
    "BoundaryReport",
    "feller_classify_upper",
    "default_truncations",
    "default_base_point",
]

_EXP_LIMIT = 700.0  # exp overflow guard for the scale-density exponent


class Verdict(Enum):
    DIVERGENT = "divergent"
    CONVERGENT = "convergent"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class _Cell:
    a: float
    b: float
    # Antiderivative Chebyshev coefficients on the standard domain, anchored
    # so that the cumulative vanishes at the left cell edge.
    cg: np.ndarray    # exponent integrand -2 (mu - u)/sigma^2
    csp: np.ndarray   # scale density exp(E)
    cmd: np.ndarray   # speed density 2 exp(-E)/sigma^2
    ct1: np.ndarray   # s'(y) * m(y)
    ct2: np.ndarray   # 2 s(y) / (s'(y) sigma^2(y))
    E_a: float
    s_a: float
    m_a: float
    t1_a: float
    t2_a: float


def default_base_point(partition: RegionPartition, beta: float) -> float:
    """Midpoint of the largest waiting interval (clipped to (.., beta))."""
    best = None
    for lo, hi in partition.waiting:
        hi = min(hi, beta)
        if hi <= lo:
            continue
        if best is None or hi - lo > best[1] - best[0]:
            best = (lo, hi)
    if best is None:
        raise DomainError("partition has no waiting interval below beta")
    return 0.5 * (best[0] + best[1])


def default_truncations(beta: float, c: float, k_max: int = 8) -> list[float]:
    """The ladder beta - 10^-k, k = 1..k_max, restricted to points above c."""
    return [beta - 10.0 ** (-k) for k in range(1, k_max + 1) if beta - 10.0 ** (-k) > c]


class ScaleFunction:
    """Cumulative scale/speed machinery for one rate on (c, beta).

    All quadrature caches are built in the constructor; evaluation afterwards
    is read-only.  ``discontinuities`` must list the jump points of the rate
    so no cell straddles one.
    """

    def __init__(
        self,
        model: DiffusionModel,
        rate,
        beta: float,
        c: float,
        discontinuities: tuple[float, ...] = (),
        deg: int = 32,
        cells_per_decade: int = 4,
        tail_floor: float = 1e-13,
        n_base_cells: int = 16,
    ):
        if not model.lower < c < beta <= model.upper:
            raise DomainError(f"need lower < c < beta <= upper, got c={c}, beta={beta}")
        self.model = model
        self.rate = rate if rate is not None else (lambda x: 0.0)
        self.beta = beta
        self.c = c
        self.deg = deg
        self.tail_floor = tail_floor

        nodes_std = _cheb.chebpts2(deg + 1)
        self._nodes_std = nodes_std

        bounds = self._mesh(discontinuities, cells_per_decade, tail_floor, n_base_cells)
        self._cells: list[_Cell] = []
        E_a = s_a = m_a = t1_a = t2_a = 0.0
        for a, b in zip(bounds, bounds[1:]):
            cell, E_a, s_a, m_a, t1_a, t2_a = self._build_cell(
                a, b, E_a, s_a, m_a, t1_a, t2_a
            )
            self._cells.append(cell)
        self._bounds = np.array(bounds)

    # -- construction -----------------------------------------------------

    def _mesh(self, discontinuities, cells_per_decade, tail_floor, n_base_cells):
        span = self.beta - self.c
        k_min = math.ceil(-cells_per_decade * math.log10(span / 2.0))
        k_max = math.floor(-cells_per_decade * math.log10(tail_floor))
        offsets = [10.0 ** (-k / cells_per_decade) for k in range(k_min, k_max + 1)]
        pts = [self.c]
        first_tail = self.beta - offsets[0]
        base = np.linspace(self.c, first_tail, n_base_cells + 1)[1:]
        pts.extend(base.tolist())
        pts.extend(self.beta - off for off in offsets[1:])
        for d in discontinuities:
            if self.c < d < self.beta - tail_floor:
                pts.append(d)
        pts = sorted(set(pts))
        # drop near-duplicate points that would create degenerate cells
        out = [pts[0]]
        for p in pts[1:]:
            if p - out[-1] > 1e-15 * max(1.0, abs(p)):
                out.append(p)
        return out

    def _build_cell(self, a, b, E_a, s_a, m_a, t1_a, t2_a):
        h = b - a
        xs = a + 0.5 * h * (self._nodes_std + 1.0)
        g = np.array(
            [-2.0 * (self.model.mu(x) - self.rate(x)) / self.model.sigma2(x) for x in xs]
        )
        cg = self._cum_coeffs(g)
        E = E_a + 0.5 * h * self._cum_eval(cg, self._nodes_std)
        if np.max(np.abs(E)) > _EXP_LIMIT:
            raise NumericalError(
                "scale-density exponent exceeds the overflow guard "
                f"({np.max(np.abs(E)):.1f} > {_EXP_LIMIT}) on cell "
                f"[{a:.6g}, {b:.6g}]; shrink the evaluation window"
            )
        sp = np.exp(E)
        csp = self._cum_coeffs(sp)
        s = s_a + 0.5 * h * self._cum_eval(csp, self._nodes_std)
        s2 = np.array([self.model.sigma2(x) for x in xs])
        md = 2.0 * np.exp(-E) / s2
        cmd = self._cum_coeffs(md)
        m = m_a + 0.5 * h * self._cum_eval(cmd, self._nodes_std)
        ct1 = self._cum_coeffs(sp * m)
        ct2 = self._cum_coeffs(md * s)
        cell = _Cell(
            a=a, b=b, cg=cg, csp=csp, cmd=cmd, ct1=ct1, ct2=ct2,
            E_a=E_a, s_a=s_a, m_a=m_a, t1_a=t1_a, t2_a=t2_a,
        )
        t1_b = t1_a + 0.5 * h * self._cum_eval(ct1, 1.0)
        t2_b = t2_a + 0.5 * h * self._cum_eval(ct2, 1.0)
        return cell, float(E[-1]), float(s[-1]), float(m[-1]), float(t1_b), float(t2_b)

    def _cum_coeffs(self, vals: np.ndarray) -> np.ndarray:
        coeffs = _cheb.chebfit(self._nodes_std, vals, self.deg)
        return _cheb.chebint(coeffs)

    @staticmethod
    def _cum_eval(cint: np.ndarray, t):
        return _cheb.chebval(t, cint) - _cheb.chebval(-1.0, cint)

    # -- evaluation --------------------------------------------------------

    def _locate(self, x: float) -> _Cell:
        if x < self.c or x >= self.beta:
            raise DomainError(f"scale function defined on [c, beta) = [{self.c}, {self.beta})")
        if x > self._bounds[-1]:
            raise NumericalError(
                f"evaluation point {x} lies beyond the quadrature tail floor "
                f"(beta - {self.tail_floor:g}); rebuild with a smaller tail_floor"
            )
        idx = int(np.searchsorted(self._bounds, x, side="right")) - 1
        idx = min(max(idx, 0), len(self._cells) - 1)
        return self._cells[idx]

    def _std(self, cell: _Cell, x: float) -> float:
        return 2.0 * (x - cell.a) / (cell.b - cell.a) - 1.0

    def exponent(self, x: float) -> float:
        cell = self._locate(float(x))
        t = self._std(cell, float(x))
        return cell.E_a + 0.5 * (cell.b - cell.a) * self._cum_eval(cell.cg, t)

    def eval(self, x):
        """Return (s(x), s'(x)); accepts scalars or arrays."""
        if not np.isscalar(x):
            pairs = [self.eval(float(t)) for t in np.asarray(x, float)]
            return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])
        cell = self._locate(float(x))
        t = self._std(cell, float(x))
        E = cell.E_a + 0.5 * (cell.b - cell.a) * self._cum_eval(cell.cg, t)
        s = cell.s_a + 0.5 * (cell.b - cell.a) * self._cum_eval(cell.csp, t)
        return float(s), float(math.exp(E))

    def entrance_integral(self, x: float) -> float:
        """T1(x): scale-weighted cumulative speed; diverges at an entrance boundary."""
        cell = self._locate(float(x))
        t = self._std(cell, float(x))
        return cell.t1_a + 0.5 * (cell.b - cell.a) * self._cum_eval(cell.ct1, t)

    def speed_scale_integral(self, x: float) -> float:
        """T2(x): speed-weighted cumulative scale; finite at a non-exit boundary."""
        cell = self._locate(float(x))
        t = self._std(cell, float(x))
        return cell.t2_a + 0.5 * (cell.b - cell.a) * self._cum_eval(cell.ct2, t)


def scale_eval(sf: ScaleFunction, x):
    """(s(x), s'(x)) for c <= x < beta."""
    return sf.eval(x)


# ---------------------------------------------------------------------------
# Boundary classification protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryReport:
    """Truncation-ladder record of the two classification integrals.

    Verdicts are pure functions of the recorded sequences and the protocol
    parameters below; ``entrance_not_exit`` requires the entrance integral to
    test divergent and the speed-scale integral to test convergent.
    """

    truncations: tuple[float, ...]
    entrance_integral_estimates: tuple[float, ...]
    speed_scale_integral_estimates: tuple[float, ...]
    entrance_verdict: Verdict
    speed_scale_verdict: Verdict
    growth_ratio: float
    cauchy_rel_tol: float

    @property
    def entrance_not_exit(self) -> bool:
        return (
            self.entrance_verdict is Verdict.DIVERGENT
            and self.speed_scale_verdict is Verdict.CONVERGENT
        )


def _sequence_verdict(vals: np.ndarray, growth_ratio: float, cauchy_rel_tol: float) -> Verdict:
    d = np.diff(vals)
    if np.any(d <= 0.0):
        return Verdict.INCONCLUSIVE
    rel = d / vals[1:]
    ratios = d[1:] / d[:-1]
    tail = ratios[-3:]
    if np.all(tail >= growth_ratio) and vals[-1] >= 10.0 * max(vals[0], 1e-300):
        return Verdict.DIVERGENT
    if rel[-1] <= cauchy_rel_tol and d[-1] <= d[0]:
        return Verdict.CONVERGENT
    return Verdict.INCONCLUSIVE


def feller_classify_upper(
    sf: ScaleFunction,
    beta: float,
    truncations,
    growth_ratio: float = 2.0,
    cauchy_rel_tol: float = 1e-4,
) -> BoundaryReport:
    """Evaluate the classification integrals on a truncation ladder and test them.

    The ladder must be strictly increasing toward beta with at least four
    points (ratio and Cauchy tests need a usable tail).
    """
    xs = np.asarray(truncations, dtype=float)
    if xs.size < 4:
        raise InsufficientDataError("need at least 4 truncation points")
    if np.any(np.diff(xs) <= 0.0) or np.any(xs >= beta):
        raise DomainError("truncations must increase strictly toward beta")
    t1 = np.array([sf.entrance_integral(x) for x in xs])
    t2 = np.array([sf.speed_scale_integral(x) for x in xs])
    return BoundaryReport(
        truncations=tuple(float(x) for x in xs),
        entrance_integral_estimates=tuple(float(v) for v in t1),
        speed_scale_integral_estimates=tuple(float(v) for v in t2),
        entrance_verdict=_sequence_verdict(t1, growth_ratio, cauchy_rel_tol),
        speed_scale_verdict=_sequence_verdict(t2, growth_ratio, cauchy_rel_tol),
        growth_ratio=growth_ratio,
        cauchy_rel_tol=cauchy_rel_tol,
    )
