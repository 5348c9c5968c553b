"""Euler-Maruyama simulation of the controlled state process and cost estimation.

Three strategy mechanics are simulated:

* reflection threshold: after a potential initial downward jump to b, each
  Euler step is projected back to b from above; the projection deficit is the
  discretised local-time increment and enters the control total,
* exploding rate: drift -u(x) with adaptive step subdivision near the
  inaccessible boundary (drift displacement per substep capped at a fraction
  of the remaining gap) and a hard rate cap,
* absorption: paths stopping at (a small cutoff above) the lower boundary
  collect the perpetual terminal cost f(l)/q there.

Cost estimates accumulate, per path,

    I(q) = sum_k e^{-q t_k} f(X_{t_k}) dt  +  sum_j e^{-q t_j} dD_j
           +  e^{-q tau} f(l)/q  on absorption,

by the left-endpoint rule (trapezoid available as a config toggle for
dt-sensitivity studies).  The tail beyond the horizon is not added; its bound
e^{-q t_max} f_bound / q is reported alongside the standard error.

Estimators for all discount atoms reuse the same path ensemble (common random
numbers), so mixture estimates are coherent with per-atom estimates.  Path
randomness is keyed by (seed, path index), making every estimate and every
:class:`PathRecord` bit-reproducible for fixed inputs.

Fast numba kernels cover the case-study family (driftless GBM, quadratic
cost, reflection or rational exploding rate); anything else runs through a
generic pure-Python path loop, which is exact but slow and meant for small
ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .model import (
    DiffusionModel,
    DomainError,
    InsufficientDataError,
    MildThreshold,
    ParameterError,
    RunningCost,
    StrongThreshold,
    ThresholdStrategy,
    WeightedDiscount,
)

__all__ = [
    "SimConfig",
    "PathRecord",
    "CostEstimate",
    "simulate_path",
    "estimate_w",
    "estimate_J",
    "delta_limit_probe",
    "mc_comparison_table",
]

#: Horizon rule: e^{-q t_max} <= HORIZON_DISCOUNT_FLOOR for the slowest rate.
HORIZON_DISCOUNT_FLOOR = 1e-6


@dataclass(frozen=True)
class SimConfig:
    """Simulation knobs.  All defaults are recorded in outputs that use them.

    ``beta_guard`` is the distance below the exploding boundary inside which
    step subdivision is monitored (the subdivision criterion
    u * h <= guard_fraction * (beta - x) is enforced whenever it binds, so the
    guard only caps bookkeeping); ``None`` resolves to a quarter of beta.
    """

    dt: float = 1e-3
    t_max: float | None = None
    n_paths: int = 10_000
    seed: int = 1
    beta_guard: float | None = None
    guard_fraction: float = 0.25
    rate_cap: float = 1e12
    absorb_cutoff_rel: float = 1e-8
    max_substeps: int = 1 << 14
    time_rule: str = "left"

    def __post_init__(self):
        if self.dt <= 0.0 or self.n_paths < 1:
            raise ParameterError("need dt > 0 and n_paths >= 1")
        if self.t_max is not None and self.t_max <= 0.0:
            raise ParameterError("t_max must be positive")
        if self.time_rule not in ("left", "trapezoid"):
            raise ParameterError(f"unknown time rule {self.time_rule!r}")
        if not 0.0 < self.guard_fraction < 1.0:
            raise ParameterError("guard_fraction must lie in (0, 1)")

    def horizon(self, q_min: float) -> float:
        if self.t_max is not None:
            return self.t_max
        return math.log(1.0 / HORIZON_DISCOUNT_FLOOR) / q_min

    def n_steps(self, q_min: float) -> int:
        return int(math.ceil(self.horizon(q_min) / self.dt))


@dataclass(frozen=True)
class PathRecord:
    """One simulated trajectory at macro-step resolution."""

    times: np.ndarray
    states: np.ndarray
    control: np.ndarray           # cumulative D_t, nondecreasing
    reflection: np.ndarray        # per-step projection deficits (local-time proxy)
    jumps: tuple[tuple[float, float], ...]
    absorbed: bool
    absorption_time: float | None
    max_state: float
    metadata: dict = field(compare=False)


@dataclass(frozen=True)
class CostEstimate:
    estimate: float
    std_error: float
    n_paths: int
    censored_fraction: float
    censor_bound: float
    dt: float
    t_max: float


# ---------------------------------------------------------------------------
# Pure-Python path simulation (generic, exact semantics, slow)
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


class _Stream:
    """splitmix64 + Box-Muller; mirrors the kernel stream layout."""

    def __init__(self, seed: int, salt: int, idx: int):
        s = (seed * 0xBF58476D1CE4E5B9 + salt) & _MASK
        s = (s ^ ((idx + 1) * 0xD1342543DE82EF95)) & _MASK
        self.state = s
        self._next_u64()  # warmup, matches kernels
        self._cached: float | None = None

    def _next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return (z ^ (z >> 31)) & _MASK

    def uniform(self) -> float:
        return (self._next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        if self._cached is not None:
            z, self._cached = self._cached, None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        c = math.cos(2.0 * math.pi * u2)
        s = math.sqrt(max(1.0 - c * c, 0.0))
        if u2 > 0.5:
            s = -s
        self._cached = r * s
        return r * c


def _strategy_rate(strat: ThresholdStrategy):
    if isinstance(strat, StrongThreshold):
        return lambda x: 0.0
    return strat.rate


def simulate_path(
    model: DiffusionModel,
    strat: ThresholdStrategy,
    x0: float,
    cfg: SimConfig,
    q_min: float = 0.2,
    path_index: int = 0,
) -> PathRecord:
    """Simulate one controlled path and record it at macro-step resolution.

    ``q_min`` only sets the default horizon; it does not enter the dynamics.
    Supports reflection and exploding-rate strategies on any model; the
    generalised multi-interval form is limited to its single-interval
    reductions here.
    """
    if not model.contains(x0):
        raise DomainError(f"x0={x0} outside state interval")
    if isinstance(strat, StrongThreshold):
        b, beta, delta = strat.b, math.inf, 0.0
    elif isinstance(strat, MildThreshold):
        b, beta, delta = math.inf, strat.beta, strat.delta
    else:
        raise ParameterError(
            "path simulation supports reflection and exploding-rate strategies "
            "(reduce generalised strategies to those forms)"
        )
    rate = _strategy_rate(strat)
    n_steps = cfg.n_steps(q_min)
    dt = cfg.dt
    gf = cfg.guard_fraction
    cutoff = model.lower + cfg.absorb_cutoff_rel * max(1.0, x0)
    rng = _Stream(cfg.seed, 0, path_index)

    times = np.empty(n_steps + 1)
    states = np.empty(n_steps + 1)
    control = np.empty(n_steps + 1)
    refl = np.zeros(n_steps + 1)

    x = x0
    d_total = 0.0
    jumps: list[tuple[float, float]] = []
    if isinstance(strat, StrongThreshold) and x > b:
        jumps.append((0.0, x - b))
        d_total += x - b
        x = b
    if isinstance(strat, MildThreshold) and x >= beta:
        jumps.append((0.0, x - beta + delta))
        d_total += x - beta + delta
        x = beta - delta

    times[0], states[0], control[0] = 0.0, x, d_total
    absorbed = False
    tau = None
    mx = x
    substep_total = 0
    cross_total = 0

    n_rec = 0
    for k in range(n_steps):
        sig = model.sigma(x)
        mu = model.mu(x)
        if isinstance(strat, StrongThreshold):
            xn = x + mu * dt + sig * math.sqrt(dt) * rng.normal()
            dd = 0.0
            if xn > b:
                dd = xn - b
                xn = b
            refl[k + 1] = dd
            d_total += dd
        else:
            h = dt
            xn = x
            subs = 0
            while h > 0.0:
                u = min(rate(xn) if xn < beta else cfg.rate_cap, cfg.rate_cap)
                gap = max(beta - xn, 1e-12)
                hs = h
                if u > 0.0 and u * hs > gf * gap:
                    hs = gf * gap / u
                subs += 1
                if subs >= cfg.max_substeps:
                    hs = h
                drift = min(u * hs, gf * gap)
                sig_s = model.sigma(xn)
                mu_s = model.mu(xn)
                xn = xn + (mu_s - 0.0) * hs - drift + sig_s * math.sqrt(hs) * rng.normal()
                d_total += drift
                if xn >= beta:
                    cross_total += 1
                    xn = beta * (1.0 - 1e-12)
                h -= hs
            substep_total += subs
        mx = max(mx, xn)
        x = xn
        times[k + 1] = (k + 1) * dt
        states[k + 1] = x
        control[k + 1] = d_total
        n_rec = k + 1
        if x <= cutoff:
            absorbed = True
            tau = (k + 1) * dt
            break

    end = n_rec + 1
    return PathRecord(
        times=times[:end],
        states=states[:end],
        control=control[:end],
        reflection=refl[:end],
        jumps=tuple(jumps),
        absorbed=absorbed,
        absorption_time=tau,
        max_state=mx,
        metadata={
            "dt": dt,
            "t_max": cfg.horizon(q_min),
            "seed": cfg.seed,
            "path_index": path_index,
            "guard_fraction": gf,
            "rate_cap": cfg.rate_cap,
            "max_substeps": cfg.max_substeps,
            "substeps_taken": substep_total,
            "boundary_crossings": cross_total,
        },
    )


# ---------------------------------------------------------------------------
# Ensemble cost estimation
# ---------------------------------------------------------------------------


def _kernel_kind(model: DiffusionModel, strat: ThresholdStrategy, cost: RunningCost):
    if model.sigma2_const is None or cost.tag != "quadratic":
        return None
    if isinstance(strat, StrongThreshold):
        return "strong"
    if isinstance(strat, MildThreshold) and strat.kernel_params is not None:
        return "mild"
    return None


def _weights(rates: Sequence[float], dt: float, n_steps: int) -> np.ndarray:
    t = np.arange(n_steps) * dt
    return np.exp(-np.multiply.outer(np.asarray(rates, float), t))


def _run_ensemble(model, strat, x0s, rates, cost, cfg, salt=0):
    """Per-path discounted totals, shape (n_paths, len(x0s), len(rates)), plus diagnostics."""
    kind = _kernel_kind(model, strat, cost)
    q_min = min(rates)
    n_steps = cfg.n_steps(q_min)
    w = _weights(rates, cfg.dt, n_steps)
    flq = np.array([cost.f_at_lower / q for q in rates])
    cutoff = model.lower + cfg.absorb_cutoff_rel * max(1.0, float(min(x0s)))
    trap = 1 if cfg.time_rule == "trapezoid" else 0
    x0arr = np.asarray(x0s, dtype=float)
    diag = {}

    if kind is not None and len(rates) > 2:
        kind = None  # kernels are specialised to two discount atoms
    if kind is not None:
        # Two-atom kernel layer; single-rate calls duplicate the atom.
        d1 = math.exp(-rates[0] * cfg.dt)
        d2 = math.exp(-rates[1] * cfg.dt) if len(rates) == 2 else d1
        flq1 = float(flq[0])
        flq2 = float(flq[1]) if len(rates) == 2 else flq1
        kcosts = np.empty((cfg.n_paths, x0arr.size, 2))
        alive = np.empty((cfg.n_paths, x0arr.size), dtype=np.uint8)
        sig = math.sqrt(model.sigma2_const)
        if kind == "strong":
            _kernels.strong_ensemble(
                x0arr, strat.b, sig, cfg.dt, n_steps, cfg.n_paths, cfg.seed,
                salt, d1, d2, flq1, flq2, cutoff, trap, kcosts, alive,
            )
        else:
            b_low, beta, na, nb, nc, neg_a1 = strat.kernel_params
            crossings = np.zeros((cfg.n_paths, x0arr.size), dtype=np.int64)
            clamps = np.zeros((cfg.n_paths, x0arr.size), dtype=np.int64)
            mx = np.zeros((cfg.n_paths, x0arr.size))
            _kernels.mild_ensemble(
                x0arr, b_low, beta, na, nb, nc, neg_a1, strat.delta, sig,
                cfg.dt, n_steps, cfg.n_paths, cfg.seed, salt, d1, d2, flq1,
                flq2, cutoff, trap, cfg.guard_fraction, cfg.rate_cap,
                cfg.max_substeps, kcosts, alive, crossings, clamps, mx,
            )
            diag = {"crossings": crossings, "clamps": clamps, "max_state": mx}
        costs = kcosts[:, :, : len(rates)]
        return costs, alive, diag

    costs = np.empty((cfg.n_paths, x0arr.size, len(rates)))
    alive = np.empty((cfg.n_paths, x0arr.size), dtype=np.uint8)
    _generic_ensemble(model, strat, x0arr, rates, cost, cfg, n_steps, w,
                      flq, cutoff, costs, alive)
    return costs, alive, diag


def _generic_ensemble(model, strat, x0s, rates, cost, cfg, n_steps, w, flq,
                      cutoff, costs, alive):
    # Reference implementation for arbitrary coefficients; one python loop
    # over steps, vectorised over paths.  Small ensembles only.
    if isinstance(strat, StrongThreshold):
        b, beta, delta = strat.b, math.inf, 0.0
        rate = None
    elif isinstance(strat, MildThreshold):
        b, beta, delta = math.inf, strat.beta, strat.delta
        rate = strat.rate
    else:
        raise ParameterError("generic ensemble supports reflection and exploding-rate strategies")
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    dt = cfg.dt
    for j, x0 in enumerate(x0s):
        x = np.full(cfg.n_paths, float(x0))
        acc = np.zeros((cfg.n_paths, len(rates)))
        live = np.ones(cfg.n_paths, dtype=bool)
        if x0 > b:
            acc += x0 - b
            x[:] = b
        if x0 >= beta:
            acc += x0 - beta + delta
            x[:] = beta - delta
        for k in range(n_steps):
            if not live.any():
                break
            z = rng.standard_normal(cfg.n_paths)
            mu = np.array([model.mu(t) for t in x])
            sg = np.array([model.sigma(t) for t in x])
            u = np.zeros_like(x)
            if rate is not None:
                u = np.minimum(
                    np.array([rate(t) if t < beta else cfg.rate_cap for t in x]),
                    cfg.rate_cap,
                )
            xn = x + (mu - u) * dt + sg * math.sqrt(dt) * z
            dd = np.zeros_like(x)
            over = xn > b
            dd[over] = xn[over] - b
            xn[over] = b
            if rate is not None:
                xn = np.minimum(xn, beta * (1.0 - 1e-12))
            fk = np.array([cost.f(t) for t in x])
            if cfg.time_rule == "trapezoid":
                fk = 0.5 * (fk + np.array([cost.f(t) for t in xn]))
            g = np.where(live, fk * dt + u * dt + dd, 0.0)
            for a in range(len(rates)):
                acc[:, a] += w[a, k] * g
            dying = live & (xn <= cutoff)
            for a in range(len(rates)):
                acc[dying, a] += w[a, k] * flq[a]
            live = live & ~dying
            x = np.where(live, xn, x)
        costs[:, j, :] = acc
        alive[:, j] = live.astype(np.uint8)


def _estimate_from_totals(totals: np.ndarray, alive, q: float, cost, cfg,
                          f_bound: float, t_max: float) -> CostEstimate:
    n = totals.shape[0]
    est = float(np.mean(totals))
    se = float(np.std(totals, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return CostEstimate(
        estimate=est,
        std_error=se,
        n_paths=n,
        censored_fraction=float(np.mean(alive)),
        censor_bound=math.exp(-q * t_max) * f_bound / q,
        dt=cfg.dt,
        t_max=t_max,
    )


def _f_bound(strat: ThresholdStrategy, cost: RunningCost, x0: float) -> float:
    if isinstance(strat, StrongThreshold):
        return cost.f(max(strat.b, x0))
    if isinstance(strat, MildThreshold):
        return cost.f(max(strat.beta, x0))
    return cost.f(x0)


def estimate_w(
    model: DiffusionModel,
    strat: ThresholdStrategy,
    x0: float,
    q: float,
    cost: RunningCost,
    cfg: SimConfig,
) -> CostEstimate:
    """Monte Carlo estimate of the single-rate discounted cost from x0."""
    if q <= 0.0:
        raise DomainError("discount rate must be positive")
    if not model.contains(x0):
        raise DomainError(f"x0={x0} outside state interval")
    totals, alive, _ = _run_ensemble(model, strat, [x0], [q], cost, cfg)
    return _estimate_from_totals(
        totals[:, 0, 0], alive[:, 0], q, cost, cfg,
        _f_bound(strat, cost, x0), cfg.horizon(q),
    )


def estimate_J(
    model: DiffusionModel,
    strat: ThresholdStrategy,
    x0: float,
    disc: WeightedDiscount,
    cost: RunningCost,
    cfg: SimConfig,
) -> tuple[CostEstimate, dict[float, CostEstimate]]:
    """Mixture-discount cost estimate plus coherent per-atom estimates.

    All atoms share one path ensemble, so the mixture estimate is exactly the
    weighted combination of the per-atom estimates path by path.
    """
    if not model.contains(x0):
        raise DomainError(f"x0={x0} outside state interval")
    rates = list(disc.rates)
    weights = np.asarray(disc.weights)
    totals, alive, _ = _run_ensemble(model, strat, [x0], rates, cost, cfg)
    t_max = cfg.horizon(min(rates))
    fb = _f_bound(strat, cost, x0)
    per_atom = {
        q: _estimate_from_totals(totals[:, 0, a], alive[:, 0], q, cost, cfg, fb, t_max)
        for a, q in enumerate(rates)
    }
    mix = totals[:, 0, :] @ weights
    agg_bound = sum(p * math.exp(-q * t_max) * fb / q for q, p in disc.atoms)
    agg = CostEstimate(
        estimate=float(np.mean(mix)),
        std_error=float(np.std(mix, ddof=1) / math.sqrt(len(mix))),
        n_paths=len(mix),
        censored_fraction=float(np.mean(alive)),
        censor_bound=agg_bound,
        dt=cfg.dt,
        t_max=t_max,
    )
    return agg, per_atom


def delta_limit_probe(
    model: DiffusionModel,
    strat: MildThreshold,
    deltas: Sequence[float],
    x0: float,
    q: float,
    cost: RunningCost,
    cfg: SimConfig,
) -> dict:
    """Estimate the cost from x0 >= beta along a decreasing ladder of jump offsets.

    Fits a straight line in delta and reports the extrapolated delta -> 0
    value; a finite, stable intercept is the numerical signature that the
    vanishing-offset limit of the cost exists.
    """
    ds = list(deltas)
    if any(d2 >= d1 for d1, d2 in zip(ds, ds[1:])):
        raise DomainError("delta ladder must be strictly decreasing")
    if x0 < strat.beta:
        raise DomainError("the offset only matters from x0 >= beta")
    estimates = []
    for d in ds:
        s = MildThreshold(rate=strat.rate, beta=strat.beta, delta=d,
                          kernel_params=strat.kernel_params)
        estimates.append(estimate_w(model, s, x0, q, cost, cfg))
    ys = np.array([e.estimate for e in estimates])
    coef = np.polyfit(np.array(ds), ys, 1)
    return {
        "deltas": tuple(ds),
        "estimates": estimates,
        "slope": float(coef[0]),
        "extrapolated": float(coef[1]),
    }


# ---------------------------------------------------------------------------
# Cross-validation table (closed form vs Monte Carlo, with dt-halving)
# ---------------------------------------------------------------------------


def mc_comparison_table(
    model: DiffusionModel,
    strat: ThresholdStrategy,
    x0s: Sequence[float],
    disc: WeightedDiscount,
    cost: RunningCost,
    closed_form,
    cfg: SimConfig,
    halving_paths: int | None = None,
) -> list[dict]:
    """Rows of (x0, q, closed form, MC, SE, z, dt-halving shift) for each atom.

    ``closed_form(x0, q)`` supplies the reference value.  The dt-halving shift
    is measured on coupled fine/coarse ensembles driven by the same Brownian
    increments (default ensemble size: n_paths / 5), which isolates the
    discretisation effect from Monte Carlo noise.
    """
    rates = list(disc.rates)
    x0arr = [float(x) for x in x0s]
    totals, alive, _ = _run_ensemble(model, strat, x0arr, rates, cost, cfg)

    n_half = halving_paths if halving_paths is not None else max(cfg.n_paths // 5, 1000)
    n_half = min(n_half, cfg.n_paths)
    shift = _halving_shift(model, strat, x0arr, rates, cost, cfg, n_half)

    t_max = cfg.horizon(min(rates))
    rows = []
    for j, x0 in enumerate(x0arr):
        fb = _f_bound(strat, cost, x0)
        for a, q in enumerate(rates):
            est = _estimate_from_totals(totals[:, j, a], alive[:, j], q, cost, cfg, fb, t_max)
            ref = float(closed_form(x0, q))
            z = (est.estimate - ref) / est.std_error if est.std_error > 0 else math.inf
            rows.append({
                "x0": x0,
                "q": q,
                "closed_form": ref,
                "mc": est.estimate,
                "se": est.std_error,
                "z": z,
                "censor_bound": est.censor_bound,
                "halving_shift": shift[j][a],
                "halving_ok": abs(shift[j][a]) < est.std_error,
            })
    return rows


def _halving_shift(model, strat, x0s, rates, cost, cfg, n_paths):
    kind = _kernel_kind(model, strat, cost)
    q_min = min(rates)
    n_steps = cfg.n_steps(q_min)
    w_coarse = _weights(rates, cfg.dt, n_steps)
    w_fine = _weights(rates, 0.5 * cfg.dt, 2 * n_steps)
    flq = np.array([cost.f_at_lower / q for q in rates])
    cutoff = model.lower + cfg.absorb_cutoff_rel * max(1.0, float(min(x0s)))
    trap = 1 if cfg.time_rule == "trapezoid" else 0
    x0arr = np.asarray(x0s, dtype=float)
    salt = 0x7E1F
    if kind is not None and len(rates) > 2:
        kind = None  # kernels are specialised to two discount atoms
    if kind is not None:
        d1f = math.exp(-rates[0] * 0.5 * cfg.dt)
        d2f = math.exp(-rates[1] * 0.5 * cfg.dt) if len(rates) == 2 else d1f
        d1c = math.exp(-rates[0] * cfg.dt)
        d2c = math.exp(-rates[1] * cfg.dt) if len(rates) == 2 else d1c
        flq1 = float(flq[0])
        flq2 = float(flq[1]) if len(rates) == 2 else flq1
        fine = np.empty((n_paths, x0arr.size, 2))
        coarse = np.empty((n_paths, x0arr.size, 2))
        sig = math.sqrt(model.sigma2_const)
        if kind == "strong":
            _kernels.strong_ensemble_coupled(
                x0arr, strat.b, sig, cfg.dt, n_steps, n_paths, cfg.seed, salt,
                d1f, d2f, d1c, d2c, flq1, flq2, cutoff, trap, fine, coarse,
            )
        else:
            b_low, beta, na, nb, nc, neg_a1 = strat.kernel_params
            _kernels.mild_ensemble_coupled(
                x0arr, b_low, beta, na, nb, nc, neg_a1, strat.delta, sig,
                cfg.dt, n_steps, n_paths, cfg.seed, salt, d1f, d2f, d1c, d2c,
                flq1, flq2, cutoff, trap, cfg.guard_fraction, cfg.rate_cap,
                cfg.max_substeps, fine, coarse,
            )
        fine = fine[:, :, : len(rates)]
        coarse = coarse[:, :, : len(rates)]
    else:
        # Generic fallback: independent ensembles at the two resolutions.
        half_cfg = SimConfig(dt=0.5 * cfg.dt, t_max=cfg.t_max, n_paths=n_paths,
                             seed=cfg.seed, guard_fraction=cfg.guard_fraction,
                             rate_cap=cfg.rate_cap,
                             absorb_cutoff_rel=cfg.absorb_cutoff_rel,
                             max_substeps=cfg.max_substeps,
                             time_rule=cfg.time_rule)
        base_cfg = SimConfig(dt=cfg.dt, t_max=cfg.t_max, n_paths=n_paths,
                             seed=cfg.seed, guard_fraction=cfg.guard_fraction,
                             rate_cap=cfg.rate_cap,
                             absorb_cutoff_rel=cfg.absorb_cutoff_rel,
                             max_substeps=cfg.max_substeps,
                             time_rule=cfg.time_rule)
        fine, _, _ = _run_ensemble(model, strat, x0arr, rates, cost, half_cfg, salt)
        coarse, _, _ = _run_ensemble(model, strat, x0arr, rates, cost, base_cfg, salt)
    d = fine.mean(axis=0) - coarse.mean(axis=0)
    return [[float(d[j, a]) for a in range(d.shape[1])] for j in range(d.shape[0])]
