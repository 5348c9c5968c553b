"""Problem data for threshold control of one-dimensional diffusions.

This module holds the immutable building blocks shared by the rest of the
package:

* ``DiffusionModel`` -- drift/volatility coefficients of the uncontrolled
  state process on an interval (lower, upper),
* ``WeightedDiscount`` -- a finite mixture of exponential discount rates,
  i.e. a discount curve h(t) = sum_k p_k exp(-q_k t),
* threshold strategy descriptions (strong reflection threshold, mild
  threshold with an exploding control rate, and the generalised form that
  combines interval-valued singular action regions with a rate),
* ``RegionPartition`` -- the waiting / mild action / strong action split of
  the state space induced by a strategy.

Everything here is a plain frozen dataclass plus pure functions; no module
owns mutable state, so concurrent use needs no coordination.

Conventions
-----------
* State intervals are open: the model lives on (lower, upper); lower may be
  -inf and upper may be +inf.
* Rates are supplied as evaluable callables together with an explicit sorted
  tuple of discontinuity points.  Region detection evaluates the rate on a
  caller-supplied grid; the discontinuity list is consulted only to snap
  interval endpoints.
* The waiting region W collects points with zero rate outside the strong
  action region, the mild action region M the points with positive rate, and
  S the singular action intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ThreshEqError",
    "DomainError",
    "ParameterError",
    "InsufficientDataError",
    "NumericalError",
    "DiffusionModel",
    "WeightedDiscount",
    "RunningCost",
    "RateFunction",
    "StrongThreshold",
    "MildThreshold",
    "GeneralisedThreshold",
    "RegionPartition",
    "StrategyValidation",
    "wdf_eval",
    "wdf_moments",
    "regions_of_strategy",
    "validate_strategy",
]


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class ThreshEqError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ThreshEqError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ParameterError(ThreshEqError, ValueError):
    """Model or strategy parameters violate a structural assumption."""


class InsufficientDataError(ThreshEqError, ValueError):
    """Not enough data points to run the requested procedure."""


class NumericalError(ThreshEqError, ArithmeticError):
    """A numerical procedure failed to converge or produced garbage."""


# ---------------------------------------------------------------------------
# Diffusion model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffusionModel:
    """Coefficients of the uncontrolled SDE dX = mu(X) dt + sigma(X) dW.

    ``lower``/``upper`` bound the state interval; either may be infinite.
    ``sigma2_const`` is an optional marker: when the model is a driftless
    geometric Brownian motion with sigma(x) = sqrt(sigma2_const) * x, fast
    simulation kernels can specialise on it.
    """

    mu: Callable[[float], float]
    sigma: Callable[[float], float]
    lower: float
    upper: float
    sigma2_const: float | None = None

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise ParameterError(
                f"state interval is empty: lower={self.lower} >= upper={self.upper}"
            )

    @classmethod
    def gbm(cls, sigma2: float) -> "DiffusionModel":
        """Driftless geometric Brownian motion on (0, inf) with variance rate sigma2."""
        if sigma2 <= 0.0:
            raise ParameterError(f"variance rate must be positive, got {sigma2}")
        vol = math.sqrt(sigma2)
        return cls(
            mu=lambda x: 0.0,
            sigma=lambda x: vol * x,
            lower=0.0,
            upper=math.inf,
            sigma2_const=sigma2,
        )

    def contains(self, x: float) -> bool:
        return self.lower < x < self.upper

    def sigma2(self, x):
        s = self.sigma(x)
        return s * s


# ---------------------------------------------------------------------------
# Weighted discounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedDiscount:
    """Finite-atom mixture of exponential discount rates.

    ``atoms`` is a tuple of (rate, weight) pairs with positive rates,
    positive weights, and weights summing to one.  The induced discount
    curve is h(t) = sum_k p_k exp(-q_k t), strictly decreasing and
    log-convex with h(0) = 1.
    """

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.atoms) == 0:
            raise ParameterError("discount mixture needs at least one atom")
        total = 0.0
        for q, p in self.atoms:
            if q <= 0.0:
                raise ParameterError(f"discount rate must be positive, got {q}")
            if p <= 0.0:
                raise ParameterError(f"atom weight must be positive, got {p}")
            total += p
        if abs(total - 1.0) > 1e-12:
            raise ParameterError(f"atom weights must sum to 1, got {total!r}")

    @classmethod
    def two_point(cls, q1: float, q2: float) -> "WeightedDiscount":
        """Equal-weight two-rate mixture, the case-study discount curve."""
        if not 0.0 < q1 < q2:
            raise ParameterError(f"need 0 < q1 < q2, got q1={q1}, q2={q2}")
        return cls(atoms=((q1, 0.5), (q2, 0.5)))

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(q for q, _ in self.atoms)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.atoms)


def wdf_eval(disc: WeightedDiscount, t):
    """Discount curve h(t) = sum_k p_k exp(-q_k t); accepts scalars or arrays."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise DomainError("discount curve is defined for t >= 0")
    out = np.zeros_like(t_arr)
    for q, p in disc.atoms:
        out = out + p * np.exp(-q * t_arr)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def wdf_moments(disc: WeightedDiscount) -> tuple[float, float, float]:
    """Return (mean rate, second moment of the rate, mean of 1/rate)."""
    mean = sum(p * q for q, p in disc.atoms)
    second = sum(p * q * q for q, p in disc.atoms)
    inv = sum(p / q for q, p in disc.atoms)
    return mean, second, inv


# ---------------------------------------------------------------------------
# Running cost
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunningCost:
    """Nonnegative nondecreasing state cost f plus its value at the lower boundary.

    ``tag`` marks well-known cost shapes so specialised simulation kernels can
    recognise them; it carries no semantics beyond dispatch.
    """

    f: Callable[[float], float]
    f_at_lower: float = 0.0
    tag: str | None = None

    @classmethod
    def quadratic(cls) -> "RunningCost":
        return cls(f=lambda x: 0.5 * x * x, f_at_lower=0.0, tag="quadratic")

    def check_on_grid(self, grid: Sequence[float]) -> list[str]:
        """Sampled monotonicity/nonnegativity check; returns violation messages."""
        xs = np.asarray(grid, dtype=float)
        vals = np.array([self.f(x) for x in xs])
        out = []
        if np.any(vals < 0.0):
            out.append("running cost negative at a sampled point")
        if np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[:-1]))):
            out.append("running cost decreasing between sampled points")
        return out


# ---------------------------------------------------------------------------
# Control rates and strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFunction:
    """A cadlag control rate: evaluable function plus declared jump points.

    ``fn`` returns the right-continuous value; ``left`` approximates the left
    limit by stepping a small relative distance below declared jumps.
    """

    fn: Callable[[float], float]
    discontinuities: tuple[float, ...] = ()

    def __call__(self, x: float) -> float:
        return self.fn(x)

    def left(self, x: float, scale: float = 1.0) -> float:
        h = 1e-9 * max(abs(x), scale)
        for d in self.discontinuities:
            if abs(x - d) <= h:
                return self.fn(d - h)
        return self.fn(x)


ZERO_RATE = RateFunction(fn=lambda x: 0.0)


@dataclass(frozen=True)
class StrongThreshold:
    """Reflect the controlled process downward at level b (after an initial jump)."""

    b: float


@dataclass(frozen=True)
class MildThreshold:
    """Absolutely continuous control with a rate exploding at ``beta``.

    The rate makes ``beta`` inaccessible from below; an initial state at or
    above ``beta`` jumps to ``beta - delta``.  ``kernel_params`` optionally
    carries closed-form coefficients that fast simulation kernels understand;
    it does not affect semantics.
    """

    rate: RateFunction
    beta: float
    delta: float
    kernel_params: tuple[float, ...] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class GeneralisedThreshold:
    """Combination of singular action intervals with an absolutely continuous rate.

    ``intervals`` lists the strong action pieces [b_i, a_i] in increasing
    order; the last one extends to the upper state boundary.  When
    ``beta`` is interior, the last interval must start exactly at ``beta``.
    """

    rate: RateFunction
    beta: float
    intervals: tuple[tuple[float, float], ...]
    delta: float


ThresholdStrategy = StrongThreshold | MildThreshold | GeneralisedThreshold


@dataclass(frozen=True)
class RegionPartition:
    """Waiting / mild / strong intervals covering the state space.

    Intervals are stored as (lo, hi) pairs.  By convention waiting intervals
    are open, mild intervals are closed on the left, and strong intervals are
    closed on the left and open on the right; the tuples themselves carry no
    closure information.
    """

    waiting: tuple[tuple[float, float], ...]
    mild: tuple[tuple[float, float], ...]
    strong: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class StrategyValidation:
    """Outcome of structural strategy checks; violations, not exceptions."""

    kind: str
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


# -- region classification ---------------------------------------------------


def _strategy_breakpoints(strat: ThresholdStrategy) -> list[float]:
    if isinstance(strat, StrongThreshold):
        return [strat.b]
    if isinstance(strat, MildThreshold):
        return sorted({strat.beta, *strat.rate.discontinuities})
    pts = {strat.beta, *strat.rate.discontinuities}
    for lo, hi in strat.intervals:
        pts.add(lo)
        if math.isfinite(hi):
            pts.add(hi)
    return sorted(pts)


def _in_strong(strat: ThresholdStrategy, x: float) -> bool:
    if isinstance(strat, StrongThreshold):
        return x >= strat.b
    if isinstance(strat, MildThreshold):
        return x >= strat.beta
    return any(lo <= x <= hi for lo, hi in strat.intervals)


def _rate_at(strat: ThresholdStrategy, x: float) -> float:
    if isinstance(strat, StrongThreshold):
        return 0.0
    return strat.rate(x)


def regions_of_strategy(
    strat: ThresholdStrategy,
    grid: Sequence[float],
    model: DiffusionModel,
) -> RegionPartition:
    """Classify a sorted state grid into waiting/mild/strong intervals.

    Each grid point is labelled by the defining formulas (strong action
    membership first, then zero vs positive rate).  Maximal same-label runs
    become intervals; run boundaries snap to declared strategy breakpoints
    when one lies between the two adjacent grid points, and the outermost
    endpoints snap to the state boundaries.
    """
    xs = np.asarray(grid, dtype=float)
    if xs.size == 0:
        raise InsufficientDataError("empty grid")
    if np.any(np.diff(xs) <= 0.0):
        raise DomainError("grid must be strictly increasing")
    if xs[0] <= model.lower or xs[-1] >= model.upper:
        raise DomainError("grid points must lie strictly inside (lower, upper)")

    def label(x: float) -> str:
        if _in_strong(strat, x):
            return "S"
        return "W" if _rate_at(strat, x) == 0.0 else "M"

    labels = [label(float(x)) for x in xs]
    breaks = _strategy_breakpoints(strat)

    # Maximal runs; boundary between runs snaps to a declared breakpoint in
    # the straddled gap, otherwise to the gap midpoint.
    runs: list[tuple[str, float, float]] = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append((labels[start], float(xs[start]), float(xs[i - 1])))
            start = i

    def snap(lo_idx_gap: tuple[float, float]) -> float:
        gap_lo, gap_hi = lo_idx_gap
        hits = [p for p in breaks if gap_lo < p <= gap_hi]
        return hits[0] if len(hits) == 1 else 0.5 * (gap_lo + gap_hi)

    bounds = [model.lower]
    for (_, _, hi_prev), (_, lo_next, _) in zip(runs, runs[1:]):
        bounds.append(snap((hi_prev, lo_next)))
    bounds.append(model.upper)

    waiting, mild, strong = [], [], []
    for (lab, _, _), lo, hi in zip(runs, bounds, bounds[1:]):
        {"W": waiting, "M": mild, "S": strong}[lab].append((lo, hi))
    return RegionPartition(
        waiting=tuple(waiting), mild=tuple(mild), strong=tuple(strong)
    )


# -- structural validation ----------------------------------------------------


def validate_strategy(
    strat: ThresholdStrategy,
    model: DiffusionModel,
    grid: Sequence[float] | None = None,
) -> StrategyValidation:
    """Check every structural invariant of a strategy; violations become report entries."""
    v: list[str] = []
    l, r = model.lower, model.upper

    if isinstance(strat, StrongThreshold):
        if not l < strat.b < r:
            v.append(f"strong threshold b={strat.b} must lie strictly inside ({l}, {r})")
        return StrategyValidation(kind="strong", violations=tuple(v))

    if isinstance(strat, MildThreshold):
        if not l < strat.beta < r:
            v.append(f"explosion point beta={strat.beta} must lie strictly inside ({l}, {r})")
        if not 0.0 < strat.delta < strat.beta - l:
            v.append(
                f"jump offset delta={strat.delta} must satisfy 0 < delta < beta - lower"
                f" = {strat.beta - l}"
            )
        _check_rate(strat.rate, l, strat.beta, grid, v)
        return StrategyValidation(kind="mild", violations=tuple(v))

    # Generalised: interval ordering l <= b_1 <= a_1 < b_2 <= ... <= a_n = r.
    ivs = strat.intervals
    if not ivs:
        v.append("generalised strategy needs at least one strong action interval")
    else:
        flat = []
        for lo, hi in ivs:
            flat.extend((lo, hi))
        if flat[0] < l:
            v.append(f"first interval endpoint {flat[0]} lies below the lower boundary {l}")
        for a, b in zip(flat, flat[1:]):
            if a > b:
                v.append(f"interval endpoints out of order: {a} > {b}")
        for (_, hi_prev), (lo_next, _) in zip(ivs, ivs[1:]):
            if not hi_prev < lo_next:
                v.append(
                    f"consecutive strong intervals must be separated: "
                    f"{hi_prev} >= {lo_next}"
                )
        if ivs[-1][1] != r:
            v.append(f"last strong interval must extend to the upper boundary {r}")
        if strat.beta < r:
            if ivs[-1][0] != strat.beta:
                v.append(
                    f"interior explosion point requires the last interval to start at "
                    f"beta={strat.beta}, got {ivs[-1][0]}"
                )
            bound = strat.beta - (l if len(ivs) == 1 else ivs[-2][1])
            if not 0.0 < strat.delta < bound:
                v.append(
                    f"jump offset delta={strat.delta} must lie in (0, {bound})"
                )
        elif strat.delta != 0.0:
            v.append("jump offset must be zero when the rate does not explode (beta = upper)")
    _check_rate(strat.rate, l, min(strat.beta, r), grid, v)
    return StrategyValidation(kind="generalised", violations=tuple(v))


def _check_rate(rate, lower, beta, grid, violations) -> None:
    if grid is None:
        return
    for x in grid:
        if not lower < x < beta:
            continue
        if rate(x) < 0.0:
            violations.append(f"control rate negative at x={x}")
            break
