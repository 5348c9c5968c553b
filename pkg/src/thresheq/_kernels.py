"""Numba kernels for the Monte Carlo estimators.

Everything here is specialised to the case-study form: driftless GBM state,
quadratic running cost x^2/2, a two-atom discount mixture, and either a
reflection threshold or the rational exploding rate.  The public simulator
dispatches to these kernels when the inputs match and falls back to a
generic pure-Python path otherwise.

Randomness: each path owns a splitmix64 stream seeded from (seed, salt,
stream index); normals come from Box-Muller pairs (the second component is
recovered from the first via sqrt(1 - c^2) with the sign bit of the angle,
which avoids a second trig call).  Within a kernel call the per-step normal
is drawn once per path and shared by all lanes (starting points), so lanes
see a common Brownian path; lanes that subdivide a step near the exploding
boundary switch to a private per-lane stream for that step, which keeps
every other lane aligned.

Coupled kernels run a fine lane (dt/2) and a coarse lane (dt) on the same
Brownian increments: the coarse step consumes (z1 + z2)/sqrt(2).  The
difference of the two estimates isolates the time-discretisation shift,
which is what the dt-halving acceptance check measures.

Accumulation: running cost by the left-endpoint rule (state and discount
factor at the step start); control increments are booked at the step end,
where the Euler scheme realises them, so they carry one extra decay factor;
the initial jump is booked at weight one.  Booking the two flows at opposite
ends of the step cancels most of the O(q dt) discount-sampling bias, which
matters for fast discount atoms.  Discount weights are carried as a
multiplicative recurrence w *= exp(-q dt) per step (drift ~ n_steps * eps,
far below Monte Carlo noise) instead of a table, to keep the inner loop out
of memory.  Per-path totals land in the output array indexed by path, so
the reduction order outside is fixed and results are bit-reproducible for a
given (seed, config).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

# splitmix64 in pure uint64 arithmetic; mixing uint64 with int64 would
# silently promote to float64 under numba and destroy the bit patterns.
_U = np.uint64
_MIX1 = _U(0x9E3779B97F4A7C15)
_MIX2 = _U(0xBF58476D1CE4E5B9)
_MIX3 = _U(0x94D049BB133111EB)
_PATH_SALT = _U(0xD1342543DE82EF95)
_SH30 = _U(30)
_SH27 = _U(27)
_SH31 = _U(31)
_SH11 = _U(11)
_TWO_PI = 6.283185307179586
_INV_SQRT2 = 0.7071067811865476
_SUB_SALT = 0x5851F42D4C957F2D
_SUB_SALT2 = 0x2545F4914F6CDD1D


@njit(inline="always")
def _next_u64(state):
    state = state + _MIX1
    z = state
    z = (z ^ (z >> _SH30)) * _MIX2
    z = (z ^ (z >> _SH27)) * _MIX3
    return state, z ^ (z >> _SH31)


@njit(inline="always")
def _u01(state):
    state, z = _next_u64(state)
    return state, (z >> _SH11) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def _normal_pair(state):
    state, u1 = _u01(state)
    state, u2 = _u01(state)
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    c = np.cos(_TWO_PI * u2)
    s = np.sqrt(max(1.0 - c * c, 0.0))
    if u2 > 0.5:
        s = -s
    return state, r * c, r * s


# Ziggurat tables (256 layers).  X is decreasing with X[1] = R; X[0] is the
# oversized base layer V/f(R); Y[i] = exp(-X[i]^2/2).  The common path costs
# one u64 draw, a table compare, and a multiply; wedges and the tail fall
# back to exact rejection, so samples are exactly standard normal.
_ZIG_C = 256
_ZIG_R = 3.6541528853610088
_ZIG_V = 0.00492867323399


def _build_ziggurat():
    import math as _m

    X = np.empty(_ZIG_C + 1)
    f = _m.exp(-0.5 * _ZIG_R * _ZIG_R)
    X[0] = _ZIG_V / f
    X[1] = _ZIG_R
    for i in range(2, _ZIG_C):
        arg = _ZIG_V / X[i - 1] + _m.exp(-0.5 * X[i - 1] * X[i - 1])
        X[i] = _m.sqrt(-2.0 * _m.log(arg))
    X[_ZIG_C] = 0.0
    if np.any(np.diff(X) >= 0.0):
        raise RuntimeError("ziggurat table construction failed")
    Y = np.exp(-0.5 * X * X)
    ratio = X[1:] / X[:-1]
    return X, Y, np.ascontiguousarray(ratio)


_ZX, _ZY, _ZRATIO = _build_ziggurat()
_SH10 = _U(10)
_INV54 = 1.0 / 18014398509481984.0  # 2^-54
_INV_R = 1.0 / _ZIG_R


@njit(inline="always")
def _normal(state):
    while True:
        state, b = _next_u64(state)
        i = int(b & _U(0xFF))
        u = (b >> _SH10) * _INV54 * 2.0 - 1.0
        if abs(u) < _ZRATIO[i]:
            return state, u * _ZX[i]
        if i == 0:
            while True:
                state, u1 = _u01(state)
                state, u2 = _u01(state)
                xx = -np.log(1.0 - u1) * _INV_R
                yy = -np.log(1.0 - u2)
                if yy + yy >= xx * xx:
                    break
            return state, (_ZIG_R + xx) if u >= 0.0 else -(_ZIG_R + xx)
        x = u * _ZX[i]
        state, u3 = _u01(state)
        if _ZY[i + 1] + u3 * (_ZY[i] - _ZY[i + 1]) < np.exp(-0.5 * x * x):
            return state, x


@njit(inline="always")
def _stream_init(seed, salt, idx):
    s = _U(seed) * _MIX2 + _U(salt)
    s = s ^ (_U(idx + 1) * _PATH_SALT)
    s, _ = _next_u64(s)
    return s


@njit(inline="always")
def _mild_rate(x, b_low, beta, na, nb, nc, neg_a1, cap):
    if x < b_low:
        return 0.0
    gap = beta - x
    if gap < 1e-12:
        gap = 1e-12
    xe = beta - gap
    u = (na * xe * xe + nb * xe + nc) / (neg_a1 * gap)
    if u > cap:
        return cap
    if u < 0.0:
        return 0.0
    return u


# ---------------------------------------------------------------------------
# Reflection threshold
# ---------------------------------------------------------------------------


@njit(parallel=True, fastmath=True, cache=True)
def strong_ensemble(
    x0s, b, sig, dt, n_steps, n_paths, seed, salt, d1, d2, flq1, flq2,
    cutoff, trap, costs, alive,
):
    m = x0s.shape[0]
    sq = sig * np.sqrt(dt)
    half_dt = 0.5 * dt
    for p in prange(n_paths):
        state = _stream_init(seed, salt, p)
        x = np.empty(m)
        dead = np.zeros(m, np.uint8)
        acc1 = np.zeros(m)
        acc2 = np.zeros(m)
        for j in range(m):
            xj = x0s[j]
            if xj > b:
                acc1[j] += xj - b
                acc2[j] += xj - b
                xj = b
            x[j] = xj
        n_dead = 0
        wk1 = 1.0
        wk2 = 1.0
        for k in range(n_steps):
            if n_dead == m:
                break
            state, z = _normal(state)
            wd1 = wk1 * d1
            wd2 = wk2 * d2
            for j in range(m):
                if dead[j]:
                    continue
                xj = x[j]
                xn = xj + sq * xj * z
                fk = half_dt * xj * xj
                if xn > b:
                    dd = xn - b
                    xn = b
                    acc1[j] += wd1 * dd
                    acc2[j] += wd2 * dd
                if trap:
                    fk = 0.5 * (fk + half_dt * xn * xn)
                acc1[j] += wk1 * fk
                acc2[j] += wk2 * fk
                if xn <= cutoff:
                    dead[j] = 1
                    n_dead += 1
                    acc1[j] += wd1 * flq1
                    acc2[j] += wd2 * flq2
                x[j] = xn
            wk1 = wd1
            wk2 = wd2
        for j in range(m):
            alive[p, j] = 0 if dead[j] else 1
            costs[p, j, 0] = acc1[j]
            costs[p, j, 1] = acc2[j]


@njit(parallel=True, fastmath=True, cache=True)
def strong_ensemble_coupled(
    x0s, b, sig, dt, n_steps, n_paths, seed, salt, d1f, d2f, d1c, d2c,
    flq1, flq2, cutoff, trap, costs_fine, costs_coarse,
):
    # Fine lane at dt/2, coarse lane at dt, same Brownian increments.
    m = x0s.shape[0]
    dtf = 0.5 * dt
    sqf = sig * np.sqrt(dtf)
    sqc = sig * np.sqrt(dt)
    half_f = 0.5 * dtf
    half_c = 0.5 * dt
    for p in prange(n_paths):
        state = _stream_init(seed, salt, p)
        xf = np.empty(m)
        xc = np.empty(m)
        deadf = np.zeros(m, np.uint8)
        deadc = np.zeros(m, np.uint8)
        af1 = np.zeros(m)
        af2 = np.zeros(m)
        ac1 = np.zeros(m)
        ac2 = np.zeros(m)
        for j in range(m):
            xj = x0s[j]
            if xj > b:
                d0 = xj - b
                af1[j] += d0
                af2[j] += d0
                ac1[j] += d0
                ac2[j] += d0
                xj = b
            xf[j] = xj
            xc[j] = xj
        wf1 = 1.0
        wf2 = 1.0
        wc1 = 1.0
        wc2 = 1.0
        for k in range(n_steps):
            state, z1 = _normal(state)
            state, z2 = _normal(state)
            zc = (z1 + z2) * _INV_SQRT2
            # fine: two substeps at dt/2
            v1 = wf1 * d1f
            v2 = wf2 * d2f
            u1 = v1 * d1f
            u2 = v2 * d2f
            for j in range(m):
                if deadf[j]:
                    continue
                xj = xf[j]
                xn = xj + sqf * xj * z1
                fk = half_f * xj * xj
                if xn > b:
                    dd = xn - b
                    xn = b
                    af1[j] += v1 * dd
                    af2[j] += v2 * dd
                if trap:
                    fk = 0.5 * (fk + half_f * xn * xn)
                af1[j] += wf1 * fk
                af2[j] += wf2 * fk
                if xn <= cutoff:
                    deadf[j] = 1
                    af1[j] += v1 * flq1
                    af2[j] += v2 * flq2
                    xf[j] = xn
                    continue
                xn2 = xn + sqf * xn * z2
                fk = half_f * xn * xn
                if xn2 > b:
                    dd = xn2 - b
                    xn2 = b
                    af1[j] += u1 * dd
                    af2[j] += u2 * dd
                if trap:
                    fk = 0.5 * (fk + half_f * xn2 * xn2)
                af1[j] += v1 * fk
                af2[j] += v2 * fk
                if xn2 <= cutoff:
                    deadf[j] = 1
                    af1[j] += u1 * flq1
                    af2[j] += u2 * flq2
                xf[j] = xn2
            wf1 = u1
            wf2 = u2
            # coarse: one step on the combined increment
            vc1 = wc1 * d1c
            vc2 = wc2 * d2c
            for j in range(m):
                if deadc[j]:
                    continue
                xj = xc[j]
                xn = xj + sqc * xj * zc
                fk = half_c * xj * xj
                if xn > b:
                    dd = xn - b
                    xn = b
                    ac1[j] += vc1 * dd
                    ac2[j] += vc2 * dd
                if trap:
                    fk = 0.5 * (fk + half_c * xn * xn)
                ac1[j] += wc1 * fk
                ac2[j] += wc2 * fk
                if xn <= cutoff:
                    deadc[j] = 1
                    ac1[j] += vc1 * flq1
                    ac2[j] += vc2 * flq2
                xc[j] = xn
            wc1 = vc1
            wc2 = vc2
        for j in range(m):
            costs_fine[p, j, 0] = af1[j]
            costs_fine[p, j, 1] = af2[j]
            costs_coarse[p, j, 0] = ac1[j]
            costs_coarse[p, j, 1] = ac2[j]


# ---------------------------------------------------------------------------
# Exploding rate
# ---------------------------------------------------------------------------


@njit(inline="always")
def _mild_macro_step(
    x, h_macro, state_sub, b_low, beta, na, nb, nc, neg_a1, cap, sig, gf,
    max_sub,
):
    # Adaptive subdivision: drift displacement per substep capped at
    # gf * (beta - x); the final forced substep (work bound) clamps the
    # displacement instead of shrinking the step.  The running cost is
    # sampled at each substep's starting state.
    h = h_macro
    dD = 0.0
    fsum = 0.0
    crossings = 0
    clamped = 0
    subs = 0
    while h > 0.0:
        u = _mild_rate(x, b_low, beta, na, nb, nc, neg_a1, cap)
        gap = beta - x
        if gap < 1e-12:
            gap = 1e-12
        hs = h
        if u > 0.0:
            hmax = gf * gap / u
            if hmax < hs:
                hs = hmax
        subs += 1
        if subs >= max_sub:
            hs = h
        drift = u * hs
        if drift > gf * gap:
            drift = gf * gap
            clamped += 1
        fsum += 0.5 * x * x * hs
        state_sub, z = _normal(state_sub)
        x = x - drift + sig * x * np.sqrt(hs) * z
        dD += drift
        if x >= beta:
            crossings += 1
            x = beta * (1.0 - 1e-12)
        h -= hs
    return x, dD, fsum, state_sub, crossings, clamped


@njit(inline="always")
def _mild_lane_step(
    xj, z, dt, sq, gf_over_dt, state_sub, b_low, beta, na, nb, nc, neg_a1,
    cap, sig, gf, max_sub, half_dt, trap,
):
    """One macro step of one lane; returns (new x, f part, control part, substream, crossings, clamps)."""
    if xj < b_low:
        xn = xj + sq * xj * z
        fk = half_dt * xj * xj
        if trap:
            fk = 0.5 * (fk + half_dt * xn * xn)
        return xn, fk, 0.0, state_sub, 0, 0
    u = _mild_rate(xj, b_low, beta, na, nb, nc, neg_a1, cap)
    gap = beta - xj
    if gap < 1e-12:
        gap = 1e-12
    if u <= gf_over_dt * gap:
        xn = xj - u * dt + sq * xj * z
        ncross = 0
        if xn >= beta:
            ncross = 1
            xn = beta * (1.0 - 1e-12)
        fk = half_dt * xj * xj
        if trap:
            fk = 0.5 * (fk + half_dt * xn * xn)
        return xn, fk, u * dt, state_sub, ncross, 0
    xn, dd, fsum, state_sub, ncross, nclamp = _mild_macro_step(
        xj, dt, state_sub, b_low, beta, na, nb, nc, neg_a1, cap, sig, gf,
        max_sub,
    )
    return xn, fsum, dd, state_sub, ncross, nclamp


@njit(parallel=True, fastmath=True, cache=True)
def mild_ensemble(
    x0s, b_low, beta, na, nb, nc, neg_a1, delta, sig, dt, n_steps, n_paths,
    seed, salt, d1, d2, flq1, flq2, cutoff, trap, gf, cap, max_sub,
    costs, alive, crossings, clamps, max_state,
):
    m = x0s.shape[0]
    sq = sig * np.sqrt(dt)
    half_dt = 0.5 * dt
    gf_dt = gf / dt
    for p in prange(n_paths):
        state = _stream_init(seed, salt, p)
        x = np.empty(m)
        dead = np.zeros(m, np.uint8)
        acc1 = np.zeros(m)
        acc2 = np.zeros(m)
        subst = np.empty(m, np.uint64)
        mx = np.empty(m)
        ncross = np.zeros(m, np.int64)
        nclamp = np.zeros(m, np.int64)
        for j in range(m):
            xj = x0s[j]
            if xj >= beta:
                d0 = xj - beta + delta
                acc1[j] += d0
                acc2[j] += d0
                xj = beta - delta
            x[j] = xj
            mx[j] = xj
            subst[j] = _stream_init(seed, salt ^ _SUB_SALT, p * m + j)
        n_dead = 0
        wk1 = 1.0
        wk2 = 1.0
        k = 0
        while k < n_steps and n_dead < m:
            state, z1, z2 = _normal_pair(state)
            wd1 = wk1 * d1
            wd2 = wk2 * d2
            for j in range(m):
                if dead[j]:
                    continue
                xn, fk, dd, subst[j], nc_, ncl_ = _mild_lane_step(
                    x[j], z1, dt, sq, gf_dt, subst[j], b_low, beta, na, nb,
                    nc, neg_a1, cap, sig, gf, max_sub, half_dt, trap,
                )
                acc1[j] += wk1 * fk
                acc2[j] += wk2 * fk
                if dd > 0.0:
                    acc1[j] += wd1 * dd
                    acc2[j] += wd2 * dd
                    ncross[j] += nc_
                    nclamp[j] += ncl_
                if xn > mx[j]:
                    mx[j] = xn
                if xn <= cutoff:
                    dead[j] = 1
                    n_dead += 1
                    acc1[j] += wd1 * flq1
                    acc2[j] += wd2 * flq2
                x[j] = xn
            wk1 = wd1
            wk2 = wd2
            k += 1
            if k >= n_steps or n_dead == m:
                break
            wd1 = wk1 * d1
            wd2 = wk2 * d2
            for j in range(m):
                if dead[j]:
                    continue
                xn, fk, dd, subst[j], nc_, ncl_ = _mild_lane_step(
                    x[j], z2, dt, sq, gf_dt, subst[j], b_low, beta, na, nb,
                    nc, neg_a1, cap, sig, gf, max_sub, half_dt, trap,
                )
                acc1[j] += wk1 * fk
                acc2[j] += wk2 * fk
                if dd > 0.0:
                    acc1[j] += wd1 * dd
                    acc2[j] += wd2 * dd
                    ncross[j] += nc_
                    nclamp[j] += ncl_
                if xn > mx[j]:
                    mx[j] = xn
                if xn <= cutoff:
                    dead[j] = 1
                    n_dead += 1
                    acc1[j] += wd1 * flq1
                    acc2[j] += wd2 * flq2
                x[j] = xn
            wk1 = wd1
            wk2 = wd2
            k += 1
        for j in range(m):
            alive[p, j] = 0 if dead[j] else 1
            crossings[p, j] = ncross[j]
            clamps[p, j] = nclamp[j]
            max_state[p, j] = mx[j]
            costs[p, j, 0] = acc1[j]
            costs[p, j, 1] = acc2[j]


@njit(parallel=True, fastmath=True, cache=True)
def mild_ensemble_coupled(
    x0s, b_low, beta, na, nb, nc, neg_a1, delta, sig, dt, n_steps, n_paths,
    seed, salt, d1f, d2f, d1c, d2c, flq1, flq2, cutoff, trap, gf, cap,
    max_sub, costs_fine, costs_coarse,
):
    m = x0s.shape[0]
    dtf = 0.5 * dt
    sqf = sig * np.sqrt(dtf)
    sqc = sig * np.sqrt(dt)
    half_f = 0.5 * dtf
    half_c = 0.5 * dt
    gf_f = gf / dtf
    gf_c = gf / dt
    for p in prange(n_paths):
        state = _stream_init(seed, salt, p)
        xf = np.empty(m)
        xc = np.empty(m)
        deadf = np.zeros(m, np.uint8)
        deadc = np.zeros(m, np.uint8)
        af1 = np.zeros(m)
        af2 = np.zeros(m)
        ac1 = np.zeros(m)
        ac2 = np.zeros(m)
        subf = np.empty(m, np.uint64)
        subc = np.empty(m, np.uint64)
        for j in range(m):
            xj = x0s[j]
            if xj >= beta:
                d0 = xj - beta + delta
                af1[j] += d0
                af2[j] += d0
                ac1[j] += d0
                ac2[j] += d0
                xj = beta - delta
            xf[j] = xj
            xc[j] = xj
            subf[j] = _stream_init(seed, salt ^ _SUB_SALT, p * m + j)
            subc[j] = _stream_init(seed, salt ^ _SUB_SALT2, p * m + j)
        wf1 = 1.0
        wf2 = 1.0
        wc1 = 1.0
        wc2 = 1.0
        for k in range(n_steps):
            state, z1, z2 = _normal_pair(state)
            zc = (z1 + z2) * _INV_SQRT2
            v1 = wf1 * d1f
            v2 = wf2 * d2f
            u1 = v1 * d1f
            u2 = v2 * d2f
            for j in range(m):
                if deadf[j]:
                    continue
                xj = xf[j]
                xn, fk, dd, subf[j], _, _ = _mild_lane_step(
                    xj, z1, dtf, sqf, gf_f, subf[j], b_low, beta, na, nb, nc,
                    neg_a1, cap, sig, gf, max_sub, half_f, trap,
                )
                af1[j] += wf1 * fk
                af2[j] += wf2 * fk
                if dd > 0.0:
                    af1[j] += v1 * dd
                    af2[j] += v2 * dd
                if xn <= cutoff:
                    deadf[j] = 1
                    af1[j] += v1 * flq1
                    af2[j] += v2 * flq2
                    xf[j] = xn
                    continue
                xn2, fk, dd, subf[j], _, _ = _mild_lane_step(
                    xn, z2, dtf, sqf, gf_f, subf[j], b_low, beta, na, nb, nc,
                    neg_a1, cap, sig, gf, max_sub, half_f, trap,
                )
                af1[j] += v1 * fk
                af2[j] += v2 * fk
                if dd > 0.0:
                    af1[j] += u1 * dd
                    af2[j] += u2 * dd
                if xn2 <= cutoff:
                    deadf[j] = 1
                    af1[j] += u1 * flq1
                    af2[j] += u2 * flq2
                xf[j] = xn2
            wf1 = u1
            wf2 = u2
            vc1 = wc1 * d1c
            vc2 = wc2 * d2c
            for j in range(m):
                if deadc[j]:
                    continue
                xn, fk, dd, subc[j], _, _ = _mild_lane_step(
                    xc[j], zc, dt, sqc, gf_c, subc[j], b_low, beta, na, nb,
                    nc, neg_a1, cap, sig, gf, max_sub, half_c, trap,
                )
                ac1[j] += wc1 * fk
                ac2[j] += wc2 * fk
                if dd > 0.0:
                    ac1[j] += vc1 * dd
                    ac2[j] += vc2 * dd
                if xn <= cutoff:
                    deadc[j] = 1
                    ac1[j] += vc1 * flq1
                    ac2[j] += vc2 * flq2
                xc[j] = xn
            wc1 = vc1
            wc2 = vc2
        for j in range(m):
            costs_fine[p, j, 0] = af1[j]
            costs_fine[p, j, 1] = af2[j]
            costs_coarse[p, j, 0] = ac1[j]
            costs_coarse[p, j, 1] = ac2[j]
