"""Numerical verification of threshold-control equilibrium candidates.

A candidate is packaged as a :class:`ValueBundle`: per-rate value functions
with two derivatives each (piecewise closed forms with explicit breakpoints),
their weighted aggregate V, the threshold b above which values are affine
with slope one, the candidate control rate, and the region partition.

The checks implemented here:

* ``bvp_residual`` -- plugs the values into the defining boundary value
  problem: on the waiting and mild regions

      f(x) + mu(x) v' + (sigma^2(x)/2) v'' - q v - u(x) (v' - 1) = 0,

  on the strong region the affine continuation, and at the lower boundary
  v(l+) = f(l)/q.

* ``verify_conditions`` -- the three equilibrium conditions:
  (I)  V' <= 1 on the interior of the waiting region,
  (II) V' = 1 on the closure of the mild region (minus endpoints),
  (III) f + mu - sum_k p_k q_k v(.; q_k) >= 0 on the strong region.

* ``smooth_fit_check`` -- |V''(b-) - V''(b+)|, zero at an equilibrium.

* ``deviation_gain_jump`` / ``deviation_gain_rate`` -- closed-form marginal
  gains of the two canonical deviation families (an immediate jump from the
  strong region; a locally constant extra control rate below the threshold).
  At an equilibrium both are <= 0 wherever defined.

* ``ode_oracle_solve`` -- an independent second-order finite-difference
  solution of the per-rate boundary value problem, used to cross-check the
  closed forms.  This oracle never evaluates the closed form being checked.

Grid policy: grids exclude a guard band around breakpoints so one-sided
derivatives are taken on their own pieces, and the strong-region grid is
truncated at a recorded multiple of the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .model import (
    DiffusionModel,
    DomainError,
    InsufficientDataError,
    NumericalError,
    RateFunction,
    RegionPartition,
    RunningCost,
    WeightedDiscount,
    ZERO_RATE,
)
from . import mild as _mild
from . import strong as _strong

__all__ = [
    "PiecewiseValue",
    "ValueBundle",
    "ConditionReport",
    "VerificationVerdict",
    "bundle_from_strong",
    "bundle_from_mild",
    "bvp_residual",
    "verify_conditions",
    "smooth_fit_check",
    "deviation_gain_jump",
    "deviation_gain_rate",
    "ode_oracle_solve",
    "DEFAULT_TOLERANCES",
]

#: Closed-form identities should hold to round-off; oracle comparisons carry
#: discretisation error.  Chosen to separate the two by orders of magnitude.
DEFAULT_TOLERANCES = {
    "condition_I": 1e-9,
    "condition_II": 1e-9,
    "condition_III": 1e-9,
    "smooth_fit": 1e-8,
    "bvp_residual": 1e-8,
    "oracle_rel": 1e-4,
}

GUARD = 1e-8  # relative width of the band excluded around breakpoints


@dataclass(frozen=True)
class PiecewiseValue:
    """One per-rate value function: pieces split at interior breakpoints.

    ``pieces[j]`` evaluates the closed form on the j-th interval and is
    analytic there, so one-sided derivatives at a breakpoint are obtained by
    evaluating the adjacent piece exactly at the breakpoint.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[Callable, ...]  # piece(x, order) -> value

    def __post_init__(self):
        if len(self.pieces) != len(self.breakpoints) + 1:
            raise DomainError("need exactly one more piece than breakpoints")

    def piece_index(self, x: float, side: str = "+") -> int:
        idx = 0
        for bp in self.breakpoints:
            if x > bp or (x == bp and side == "+"):
                idx += 1
        return idx

    def __call__(self, x, order: int = 0, side: str = "+"):
        if np.isscalar(x):
            return float(self.pieces[self.piece_index(float(x), side)](x, order))
        xs = np.asarray(x, dtype=float)
        out = np.empty_like(xs)
        idx = np.searchsorted(np.asarray(self.breakpoints), xs,
                              side="right" if side == "+" else "left")
        for j in range(len(self.pieces)):
            mask = idx == j
            if np.any(mask):
                out[mask] = self.pieces[j](xs[mask], order)
        return out


@dataclass(frozen=True)
class ValueBundle:
    """Candidate data the verifier consumes; see module docstring."""

    disc: WeightedDiscount
    model: DiffusionModel
    cost: RunningCost
    values: tuple[PiecewiseValue, ...]
    threshold: float
    rate: RateFunction
    partition: RegionPartition

    def v(self, x, k: int, order: int = 0, side: str = "+"):
        """Value (or derivative) of atom k, 0-indexed in discount order."""
        return self.values[k](x, order, side)

    def V(self, x, order: int = 0, side: str = "+"):
        """Weighted aggregate of the per-rate values."""
        ws = self.disc.weights
        out = ws[0] * self.values[0](x, order, side)
        for w, pv in zip(ws[1:], self.values[1:]):
            out = out + w * pv(x, order, side)
        return out

    def rate_weighted_value(self, x):
        """sum_k p_k q_k v(x; q_k), the discounting drag term."""
        out = 0.0
        for (q, p), pv in zip(self.disc.atoms, self.values):
            out = out + p * q * pv(x, 0)
        return out


def bundle_from_strong(cand: _strong.StrongCandidate) -> ValueBundle:
    model = DiffusionModel.gbm(cand.sigma2)
    disc = WeightedDiscount.two_point(cand.q1, cand.q2)
    b = cand.b_star

    def make_pieces(i):
        def waiting(x, order):
            return _strong.waiting_piece(cand, x, i, order)

        def affine(x, order):
            if order == 0:
                return np.asarray(x, float) - b + _strong.waiting_piece(cand, b, i, 0)
            return np.ones_like(np.asarray(x, float)) if order == 1 else np.zeros_like(np.asarray(x, float))

        return PiecewiseValue(breakpoints=(b,), pieces=(waiting, affine))

    part = RegionPartition(
        waiting=((0.0, b),), mild=(), strong=(((b, math.inf)),)
    )
    return ValueBundle(
        disc=disc, model=model, cost=RunningCost.quadratic(),
        values=(make_pieces(1), make_pieces(2)),
        threshold=b, rate=ZERO_RATE, partition=part,
    )


def bundle_from_mild(cand: _mild.MildCandidate, delta: float = 0.1) -> ValueBundle:
    model = DiffusionModel.gbm(cand.sigma2)
    disc = WeightedDiscount.two_point(cand.q1, cand.q2)
    beta = cand.beta_star

    def make_pieces(i):
        def waiting(x, order):
            return _mild.waiting_piece(cand, x, i, order)

        def middle(x, order):
            return _mild.mild_piece(cand, x, i, order)

        def affine(x, order):
            if order == 0:
                return np.asarray(x, float) - beta + _mild.mild_piece(cand, beta, i, 0)
            return np.ones_like(np.asarray(x, float)) if order == 1 else np.zeros_like(np.asarray(x, float))

        return PiecewiseValue(breakpoints=(cand.b_low, beta), pieces=(waiting, middle, affine))

    strat = _mild.threshold_strategy(cand, delta)
    part = RegionPartition(
        waiting=((0.0, cand.b_low),),
        mild=((cand.b_low, beta),),
        strong=((beta, math.inf),),
    )
    return ValueBundle(
        disc=disc, model=model, cost=RunningCost.quadratic(),
        values=(make_pieces(1), make_pieces(2)),
        threshold=beta, rate=strat.rate, partition=part,
    )


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


def _interval_grid(lo: float, hi: float, n: int, model: DiffusionModel, guard: float):
    """Grid on (lo, hi) with guard bands; geometric+uniform composite when lo is the lower boundary."""
    width = hi - lo
    pad = guard * max(1.0, abs(hi))
    a, b = lo + pad, hi - pad
    if b <= a:
        return np.empty(0)
    if lo == model.lower:
        # geometric refinement toward the lower boundary, uniform near hi
        n_geo = n // 2
        mid = lo + 0.5 * width
        geo = np.geomspace(max(a, hi * 1e-6), mid, n_geo, endpoint=False)
        uni = np.linspace(mid, b, n - n_geo)
        return np.concatenate([geo, uni])
    return np.linspace(a, b, n)


def region_grids(
    bundle: ValueBundle, n: int = 10_000, s_truncation: float = 10.0, guard: float = GUARD
):
    """(waiting grid, mild grid, strong grid, metadata) used by the condition checks."""
    part = bundle.partition
    model = bundle.model
    waiting = [
        _interval_grid(lo, min(hi, model.upper), n, model, guard)
        for lo, hi in part.waiting
    ]
    mild = [
        _interval_grid(lo, hi, n, model, guard) for lo, hi in part.mild
    ]
    b = bundle.threshold
    s_hi = b * s_truncation if math.isinf(model.upper) else min(b * s_truncation, model.upper)
    strong = np.linspace(b, s_hi, n)  # includes the threshold itself: (III) needs no derivative there
    meta = {
        "n_per_region": n,
        "guard_band": guard,
        "strong_truncation": s_hi,
    }
    w = np.concatenate(waiting) if waiting else np.empty(0)
    m = np.concatenate(mild) if mild else np.empty(0)
    return w, m, strong, meta


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    passed: bool
    margin: float
    arg_worst: float
    n_points: int
    note: str = ""


@dataclass(frozen=True)
class VerificationVerdict:
    condition_I: ConditionReport
    condition_II: ConditionReport
    condition_III: ConditionReport
    smooth_fit: float
    smooth_fit_passed: bool
    bvp_residual_max: tuple[float, ...]
    sup_norms: tuple[tuple[float, float, float], ...]
    tolerances: dict
    grid_meta: dict

    @property
    def passed(self) -> bool:
        return (
            self.condition_I.passed
            and self.condition_II.passed
            and self.condition_III.passed
            and self.smooth_fit_passed
        )


def _phi(bundle: ValueBundle, x):
    """Left side of condition (III): f + mu - sum p_k q_k v."""
    xs = np.asarray(x, dtype=float)
    f = np.array([bundle.cost.f(t) for t in np.atleast_1d(xs)])
    mu = np.array([bundle.model.mu(t) for t in np.atleast_1d(xs)])
    drag = bundle.rate_weighted_value(np.atleast_1d(xs))
    out = f + mu - drag
    return float(out[0]) if np.isscalar(x) else out


def verify_conditions(
    bundle: ValueBundle,
    n_grid: int = 10_000,
    s_truncation: float = 10.0,
    tolerances: dict | None = None,
) -> VerificationVerdict:
    """Run the three equilibrium conditions plus smooth fit on standard grids."""
    tol = dict(DEFAULT_TOLERANCES)
    if tolerances:
        tol.update(tolerances)
    wg, mg, sg, meta = region_grids(bundle, n_grid, s_truncation)

    if wg.size == 0:
        raise InsufficientDataError("empty waiting-region grid")
    slope_w = bundle.V(wg, order=1) - 1.0
    i_w = int(np.argmax(slope_w))
    rep_I = ConditionReport(
        passed=bool(slope_w[i_w] <= tol["condition_I"]),
        margin=float(slope_w[i_w]),
        arg_worst=float(wg[i_w]),
        n_points=wg.size,
    )

    if mg.size:
        slope_m = np.abs(bundle.V(mg, order=1) - 1.0)
        i_m = int(np.argmax(slope_m))
        rep_II = ConditionReport(
            passed=bool(slope_m[i_m] <= tol["condition_II"]),
            margin=float(slope_m[i_m]),
            arg_worst=float(mg[i_m]),
            n_points=mg.size,
        )
    else:
        rep_II = ConditionReport(
            passed=True, margin=0.0, arg_worst=math.nan, n_points=0,
            note="mild region empty; condition holds vacuously",
        )

    phi = _phi(bundle, sg)
    i_s = int(np.argmin(phi))
    rep_III = ConditionReport(
        passed=bool(phi[i_s] >= -tol["condition_III"]),
        margin=float(phi[i_s]),
        arg_worst=float(sg[i_s]),
        n_points=sg.size,
    )

    sf = smooth_fit_check(bundle)
    res = bvp_residual(bundle, np.concatenate([wg, mg]) if mg.size else wg)
    res_max = tuple(float(np.max(np.abs(r["interior_rel"]))) for r in res)

    sup = []
    work = np.concatenate([wg, mg, sg]) if mg.size else np.concatenate([wg, sg])
    for k in range(len(bundle.values)):
        sup.append(tuple(
            float(np.max(np.abs(bundle.v(work, k, order=o)))) for o in (0, 1, 2)
        ))

    return VerificationVerdict(
        condition_I=rep_I,
        condition_II=rep_II,
        condition_III=rep_III,
        smooth_fit=sf,
        smooth_fit_passed=bool(sf <= tol["smooth_fit"]),
        bvp_residual_max=res_max,
        sup_norms=tuple(sup),
        tolerances=tol,
        grid_meta=meta,
    )


def bvp_residual(bundle: ValueBundle, grid) -> list[dict]:
    """Per-atom residual profiles of the defining boundary value problem.

    ``grid`` must avoid the threshold and declared rate discontinuities (the
    standard grids do).  Returns one dict per atom with the interior residual
    profile, the strong-region affine residual, and the lower-boundary
    residual.
    """
    xs = np.asarray(grid, dtype=float)
    b = bundle.threshold
    bad = set(bundle.rate.discontinuities) | {b}
    for p in bad:
        if np.any(np.abs(xs - p) < GUARD * max(1.0, abs(p)) * 0.5):
            raise DomainError(f"grid point too close to excluded point {p}")
    mu = np.array([bundle.model.mu(t) for t in xs])
    s2 = np.array([bundle.model.sigma2(t) for t in xs])
    f = np.array([bundle.cost.f(t) for t in xs])
    u = np.array([bundle.rate(t) for t in xs])

    s_lo = b * (1.0 + 1e-6)
    s_hi = b * 10.0 if math.isinf(bundle.model.upper) else bundle.model.upper
    s_grid = np.linspace(s_lo, s_hi, 64)
    eps = 1e-10 * max(1.0, b)
    x_low = bundle.model.lower + eps

    out = []
    for k, (q, p) in enumerate(bundle.disc.atoms):
        v0 = bundle.v(xs, k, 0)
        v1 = bundle.v(xs, k, 1)
        v2 = bundle.v(xs, k, 2)
        interior = f + mu * v1 + 0.5 * s2 * v2 - q * v0 - u * (v1 - 1.0)
        # Individual terms grow without bound near an exploding rate, so the
        # meaningful accuracy measure is relative to the largest term.
        scale = np.maximum.reduce([
            np.ones_like(xs), np.abs(f), np.abs(mu * v1),
            np.abs(0.5 * s2 * v2), np.abs(q * v0), np.abs(u * v1), np.abs(u),
        ])
        v_b = bundle.v(b, k, 0, side="+")
        affine = bundle.v(s_grid, k, 0) - (s_grid - b + v_b)
        f_l = bundle.cost.f_at_lower
        boundary = abs(bundle.v(x_low, k, 0) - f_l / q)
        out.append({
            "rate": q,
            "interior": interior,
            "interior_rel": interior / scale,
            "affine": affine,
            "boundary": boundary,
        })
    return out


def smooth_fit_check(bundle: ValueBundle) -> float:
    """|V''(b-) - V''(b+)|; the right piece is affine so V''(b+) = 0."""
    b = bundle.threshold
    left = bundle.V(b, order=2, side="-")
    right = bundle.V(b, order=2, side="+")
    return abs(float(left) - float(right))


def deviation_gain_jump(bundle: ValueBundle, x: float) -> float:
    """Marginal gain of deviating by an immediate jump at x in the strong region.

    Equals -(f + mu - sum p_k q_k v)(x); at an equilibrium it is <= 0 on
    [b, r) and exactly 0 at the threshold.
    """
    if x < bundle.threshold:
        raise DomainError(f"jump deviation gain needs x >= threshold {bundle.threshold}")
    return -float(_phi(bundle, x))


def deviation_gain_rate(bundle: ValueBundle, dev_rate, x: float) -> float:
    """Marginal gain of a locally applied extra control rate at x below the threshold.

    ``dev_rate`` may be a number (constant rate) or a :class:`RateFunction`.
    The gain is (u(x-) + u(x) - u*(x-) - u*(x)) (V'(x) - 1) / 2; at an
    equilibrium it is <= 0 for every nonnegative deviation rate.
    """
    if not bundle.model.lower < x < bundle.threshold:
        raise DomainError("rate deviation gain is defined strictly below the threshold")
    if isinstance(dev_rate, RateFunction):
        u_l, u_r = dev_rate.left(x), dev_rate(x)
    else:
        u_l = u_r = float(dev_rate)
    ustar_l = bundle.rate.left(x, scale=bundle.threshold)
    ustar_r = bundle.rate(x)
    vp = float(bundle.V(x, order=1))
    return 0.5 * (u_l + u_r - ustar_l - ustar_r) * (vp - 1.0)


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def ode_oracle_solve(
    model: DiffusionModel,
    q: float,
    rate,
    cost: RunningCost,
    mesh,
    left_value: float,
    right_bc: tuple[str, float],
) -> np.ndarray:
    """Second-order finite-difference solve of the per-rate boundary value problem.

    Solves (sigma^2(x)/2) v'' + (mu(x) - u(x)) v' - q v = -f(x) - u(x) on a
    uniform mesh, with a Dirichlet value on the left and either a Dirichlet
    value or a Neumann slope (one-sided, second order) on the right.
    Independent of every closed form in this package: only model
    coefficients, the rate, and the cost enter.
    """
    xs = np.asarray(mesh, dtype=float)
    n = xs.size
    if n < 4:
        raise InsufficientDataError("mesh needs at least 4 points")
    h = xs[1] - xs[0]
    if np.max(np.abs(np.diff(xs) - h)) > 1e-9 * h:
        raise DomainError("oracle mesh must be uniform")

    u = np.array([float(rate(t)) for t in xs]) if rate is not None else np.zeros(n)
    s2 = np.array([model.sigma2(t) for t in xs])
    mu = np.array([model.mu(t) for t in xs])
    f = np.array([cost.f(t) for t in xs])

    A = scipy.sparse.lil_matrix((n, n))
    rhs = np.empty(n)

    A[0, 0] = 1.0
    rhs[0] = left_value

    drift = mu - u
    diag = -s2[1:-1] / h**2 - q
    off = 0.5 * s2[1:-1] / h**2
    adv = drift[1:-1] / (2.0 * h)
    idx = np.arange(1, n - 1)
    A[idx, idx] = diag
    A[idx, idx - 1] = off - adv
    A[idx, idx + 1] = off + adv
    rhs[1:-1] = -f[1:-1] - u[1:-1]

    kind, val = right_bc
    if kind == "dirichlet":
        A[n - 1, n - 1] = 1.0
        rhs[n - 1] = val
    elif kind == "neumann":
        A[n - 1, n - 1] = 3.0 / (2.0 * h)
        A[n - 1, n - 2] = -4.0 / (2.0 * h)
        A[n - 1, n - 3] = 1.0 / (2.0 * h)
        rhs[n - 1] = val
    else:
        raise DomainError(f"unknown right boundary kind {kind!r}")

    sol = scipy.sparse.linalg.spsolve(A.tocsr(), rhs)
    if not np.all(np.isfinite(sol)):
        raise NumericalError("finite-difference system produced non-finite values")
    return sol
