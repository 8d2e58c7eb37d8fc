"""Monte-Carlo kernels, numba-accelerated with a pure-numpy fallback.

Two kernel families cover every sampler in the package:

* event kernel — no Gaussian part; between jump/kill events the log-process
  is linear, so every piece of the clock integral int e^{xi(s)} ds has a
  closed form and the only approximation is the caller's jump-size cutoff.
* grid kernel — sigma > 0; exact Gaussian skeleton increments at step dt,
  trapezoid quadrature for the clock integral, optional compound-Poisson
  events on top, and adaptive coarse steps deep below the running target
  where a whole step provably contributes a negligible fraction.

Stopping policies (shared by both kernels):
  HORIZON    run to a fixed xi-time horizon, return (A(T), xi(T)),
  KILLED     run to the exponential kill time (exact lifetime functional),
  CONVERGED  stop once e^{xi} * Q <= rel_tol * A, Q a remainder-scale bound,
  TARGET     conditioned sampling: stop at the clock crossing A = target
             (status CROSSED, xi at the crossing returned) or once death is
             certain/certified: e^{xi} * q_cert < target - A (status DEAD).

The backend is picked by PSSMP_BACKEND ("numba" | "numpy"), defaulting to
numba when importable.  Every replica owns a counter-based stream keyed by
(seed, replica) and outputs land at the replica's index, so results are
bit-identical across runs and thread counts within a backend.  The two
backends implement the same arithmetic but may differ in the last ulp of
libm calls, so cross-backend agreement is near-exact rather than bitwise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

try:  # pragma: no cover - import guard
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

from . import rng
from .measures import K_EXP, K_GRID, K_LAMPERTI_NEG, K_LAMPERTI_POS, K_NONE, K_STABLE, K_TABLE

POLICY_HORIZON, POLICY_KILLED, POLICY_CONVERGED, POLICY_TARGET = 0, 1, 2, 3
ST_DONE, ST_KILLED, ST_CROSSED, ST_DEAD, ST_MAXED, ST_DIVERGED = 0, 1, 2, 3, 4, 5

_GOLD = np.uint64(rng.GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 2.0**-53
_TWO_PI = 2.0 * math.pi
_EMPTY = np.empty(0, dtype=np.float64)


def backend() -> str:
    env = os.environ.get("PSSMP_BACKEND", "").strip().lower()
    if env in ("numba", "numpy"):
        if env == "numba" and not HAS_NUMBA:
            raise RuntimeError("PSSMP_BACKEND=numba requested but numba is unavailable")
        return env
    return "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# scalar kernels; these exact functions are recompiled under numba below
# ---------------------------------------------------------------------------

def _u01(origin, ctr):
    z = origin + (np.uint64(ctr) + _ONE) * _GOLD
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    z = z ^ (z >> _S31)
    return (np.float64(z >> _S11) + 1.0) * _INV53


def _lint(b, s):
    # int_0^s e^{b u} du, stable near b = 0
    if abs(b * s) < 1e-12:
        return s * (1.0 + 0.5 * b * s)
    return math.expm1(b * s) / b


def _sample_size(kind, p0, p1, p2, rate, ta, tb, u):
    """One jump size conditioned on exceeding the cutoff; u ~ U(0,1]."""
    if kind == 1:  # stable tail: p0=alpha, p1=eps
        return p1 * u ** (-1.0 / p0)
    if kind == 2:  # exponential tail: p0=rho, p1=eps (memoryless above eps)
        return p1 - math.log(u) / p0
    if kind == 3:  # lamperti neg branch: p0=alpha, p1=c
        v = u * rate
        return -math.log1p(-((1.0 + p0 * v / p1) ** (-1.0 / p0)))
    if kind == 5:  # lamperti pos branch
        v = u * rate
        return math.log1p((p0 * v / p1) ** (-1.0 / p0))
    if kind == 4:  # atom table: ta=sizes, tb=cumulative probabilities
        idx = np.searchsorted(tb, u)
        if idx >= ta.shape[0]:
            idx = ta.shape[0] - 1
        return ta[idx]
    # tabulated inverse tail: ta = log v ascending, tb = log x
    lv = math.log(u * rate)
    if lv <= ta[0]:
        return math.exp(tb[0])
    if lv >= ta[-1]:
        return math.exp(tb[-1])
    idx = np.searchsorted(ta, lv)
    frac = (lv - ta[idx - 1]) / (ta[idx] - ta[idx - 1])
    return math.exp(tb[idx - 1] + frac * (tb[idx] - tb[idx - 1]))


def _event_path(
    origin,
    b, q,
    rate0, kind0, a0, b0, c0, t0a, t0b,
    rate1, kind1, a1, b1, c1, t1a, t1b,
    policy, arg, rel_tol, qbound, q_cert, max_steps,
):
    """One event-driven path.  Returns (A, xi_out, status, tail_bound)."""
    xi = 0.0
    acc = 0.0
    t = 0.0
    ctr = 0
    kill = math.inf
    if q > 0.0:
        kill = -math.log(_u01(origin, ctr)) / q
        ctr += 1
    total_rate = rate0 + rate1
    steps = 0
    while steps < max_steps:
        steps += 1
        if total_rate > 0.0:
            dt = -math.log(_u01(origin, ctr)) / total_rate
            ctr += 1
        else:
            dt = math.inf
        seg = dt
        event = 0  # 0 jump, 1 kill, 2 horizon, 3 open-ended drift
        if policy == 0 and t + seg >= arg:
            seg = arg - t
            event = 2
        if kill - t < seg:
            seg = kill - t
            event = 1
        if seg == math.inf:
            event = 3
        ex = math.exp(xi)
        if event == 3:
            seg_int = ex / (-b) if b < 0.0 else math.inf
        else:
            seg_int = ex * _lint(b, seg)
        if policy == 3:
            gap = arg - acc
            if seg_int >= gap:
                # crossing inside this linear piece: invert the segment integral
                u_star = gap / ex if b == 0.0 else math.log1p(b * gap / ex) / b
                return arg, xi + b * u_star, ST_CROSSED, 0.0
            if event == 3:
                return acc + seg_int, xi, ST_DEAD, 0.0
        elif event == 3:
            if b >= 0.0:
                return acc, xi, ST_DIVERGED, math.inf
            return acc + seg_int, xi, ST_DONE, 0.0
        acc += seg_int
        t += seg
        xi += b * seg
        if event == 1:
            return acc, xi, (ST_DEAD if policy == 3 else ST_KILLED), 0.0
        if event == 2:
            return acc, xi, ST_DONE, 0.0
        # jump event
        side = 0
        if rate0 > 0.0 and rate1 > 0.0:
            if _u01(origin, ctr) > rate0 / total_rate:
                side = 1
            ctr += 1
        elif rate1 > 0.0:
            side = 1
        u = _u01(origin, ctr)
        ctr += 1
        if side == 0:
            xi -= _sample_size(kind0, a0, b0, c0, rate0, t0a, t0b, u)
        else:
            xi += _sample_size(kind1, a1, b1, c1, rate1, t1a, t1b, u)
        ex = math.exp(xi)
        if policy == 2 and qbound > 0.0 and acc > 0.0 and ex * qbound <= rel_tol * acc:
            return acc, xi, ST_DONE, ex * qbound
        if policy == 3 and q_cert > 0.0 and ex * q_cert < arg - acc:
            return acc, xi, ST_DEAD, ex * q_cert
    return acc, xi, ST_MAXED, math.inf


def _event_batch(
    origins,
    b, q,
    rate0, kind0, a0, b0, c0, t0a, t0b,
    rate1, kind1, a1, b1, c1, t1a, t1b,
    policy, arg, rel_tol, qbound, q_cert, max_steps,
    out_val, out_xi, out_status, out_bound,
):
    for i in range(origins.shape[0]):
        v, x, s, bd = _event_path(
            origins[i], b, q,
            rate0, kind0, a0, b0, c0, t0a, t0b,
            rate1, kind1, a1, b1, c1, t1a, t1b,
            policy, arg, rel_tol, qbound, q_cert, max_steps,
        )
        out_val[i] = v
        out_xi[i] = x
        out_status[i] = s
        out_bound[i] = bd


def _grid_path(
    origin,
    b, sigma, q,
    rate0, kind0, a0, b0, c0, t0a, t0b,
    rate1, kind1, a1, b1, c1, t1a, t1b,
    dt_fine, coarse_factor, coarse_frac,
    policy, arg, rel_tol, qbound, q_cert, max_steps,
):
    """One Gaussian-grid path.  Returns (A, xi_out, status, tail_bound)."""
    xi = 0.0
    acc = 0.0
    t = 0.0
    ctr = 0
    kill = math.inf
    if q > 0.0:
        kill = -math.log(_u01(origin, ctr)) / q
        ctr += 1
    total_rate = rate0 + rate1
    next_jump = math.inf
    if total_rate > 0.0:
        next_jump = t - math.log(_u01(origin, ctr)) / total_rate
        ctr += 1
    f_old = 1.0
    dt_coarse = coarse_factor * dt_fine
    # e^{xi} * head bounds a coarse step's plausible contribution (~3 sigma)
    head = math.exp(3.0 * sigma * math.sqrt(dt_coarse) + max(b, 0.0) * dt_coarse) * dt_coarse
    steps = 0
    while steps < max_steps:
        steps += 1
        dt = dt_fine
        if policy == 3:
            if math.exp(xi) * head < coarse_frac * (arg - acc):
                dt = dt_coarse
        elif policy == 2 and acc > 0.0:
            if math.exp(xi) * head < coarse_frac * rel_tol * acc:
                dt = dt_coarse
        hit = 0  # 1 kill, 2 horizon, 3 jump
        if policy == 0 and t + dt >= arg:
            dt = arg - t
            hit = 2
        if next_jump - t < dt:
            dt = next_jump - t
            hit = 3
        if kill - t < dt:
            dt = kill - t
            hit = 1
        u1 = _u01(origin, ctr)
        u2 = _u01(origin, ctr + 1)
        ctr += 2
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)
        dxi = b * dt + sigma * math.sqrt(dt) * z
        f_new = math.exp(xi + dxi)
        d_acc = 0.5 * dt * (f_old + f_new)
        if policy == 3 and acc + d_acc >= arg:
            # crossing inside the step: f interpolated linearly in clock time
            gap = arg - acc
            aq = 0.5 * (f_new - f_old) / dt
            disc = f_old * f_old + 4.0 * aq * gap
            if disc < 0.0:
                disc = 0.0
            u_star = 2.0 * gap / (f_old + math.sqrt(disc))
            if u_star > dt:
                u_star = dt
            return arg, xi + dxi * (u_star / dt), ST_CROSSED, 0.0
        acc += d_acc
        xi += dxi
        t += dt
        f_old = f_new
        if hit == 1:
            return acc, xi, (ST_DEAD if policy == 3 else ST_KILLED), 0.0
        if hit == 2:
            return acc, xi, ST_DONE, 0.0
        if hit == 3:
            side = 0
            if rate0 > 0.0 and rate1 > 0.0:
                if _u01(origin, ctr) > rate0 / total_rate:
                    side = 1
                ctr += 1
            elif rate1 > 0.0:
                side = 1
            u = _u01(origin, ctr)
            ctr += 1
            if side == 0:
                xi -= _sample_size(kind0, a0, b0, c0, rate0, t0a, t0b, u)
            else:
                xi += _sample_size(kind1, a1, b1, c1, rate1, t1a, t1b, u)
            f_old = math.exp(xi)
            next_jump = t - math.log(_u01(origin, ctr)) / total_rate
            ctr += 1
        ex = math.exp(xi)
        if policy == 2 and qbound > 0.0 and acc > 0.0 and ex * qbound <= rel_tol * acc:
            return acc, xi, ST_DONE, ex * qbound
        if policy == 3 and q_cert > 0.0 and ex * q_cert < arg - acc:
            return acc, xi, ST_DEAD, ex * q_cert
    return acc, xi, ST_MAXED, math.inf


def _grid_batch(
    origins,
    b, sigma, q,
    rate0, kind0, a0, b0, c0, t0a, t0b,
    rate1, kind1, a1, b1, c1, t1a, t1b,
    dt_fine, coarse_factor, coarse_frac,
    policy, arg, rel_tol, qbound, q_cert, max_steps,
    out_val, out_xi, out_status, out_bound,
):
    for i in range(origins.shape[0]):
        v, x, s, bd = _grid_path(
            origins[i],
            b, sigma, q,
            rate0, kind0, a0, b0, c0, t0a, t0b,
            rate1, kind1, a1, b1, c1, t1a, t1b,
            dt_fine, coarse_factor, coarse_frac,
            policy, arg, rel_tol, qbound, q_cert, max_steps,
        )
        out_val[i] = v
        out_xi[i] = x
        out_status[i] = s
        out_bound[i] = bd


_py_event_batch = _event_batch
_py_grid_batch = _grid_batch

if HAS_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    # rebind in dependency order; callers resolve these globals at compile time
    _u01 = _jit(_u01)
    _lint = _jit(_lint)
    _sample_size = _jit(_sample_size)
    _event_path = _jit(_event_path)
    _event_batch = _jit(_event_batch)
    _grid_path = _jit(_grid_path)
    _grid_batch = _jit(_grid_batch)


# ---------------------------------------------------------------------------
# vectorized numpy backend (lockstep: identical per-path draw sequence)
# ---------------------------------------------------------------------------

def _np_sizes(kind, p0, p1, p2, rate, ta, tb, u):
    if kind == K_STABLE:
        return p1 * u ** (-1.0 / p0)
    if kind == K_EXP:
        return p1 - np.log(u) / p0
    if kind == K_LAMPERTI_NEG:
        v = u * rate
        return -np.log1p(-((1.0 + p0 * v / p1) ** (-1.0 / p0)))
    if kind == K_LAMPERTI_POS:
        v = u * rate
        return np.log1p((p0 * v / p1) ** (-1.0 / p0))
    if kind == K_TABLE:
        idx = np.minimum(np.searchsorted(tb, u), len(ta) - 1)
        return ta[idx]
    lv = np.clip(np.log(u * rate), ta[0], ta[-1])
    return np.exp(np.interp(lv, ta, tb))


def _np_draw(origins, ctr):
    return rng.vec_u01(rng.vec_raw(origins, ctr))


def _np_event_batch(
    origins,
    b, q,
    rate0, kind0, a0, b0, c0, t0a, t0b,
    rate1, kind1, a1, b1, c1, t1a, t1b,
    policy, arg, rel_tol, qbound, q_cert, max_steps,
    out_val, out_xi, out_status, out_bound,
):
    n = origins.shape[0]
    xi = np.zeros(n)
    acc = np.zeros(n)
    t = np.zeros(n)
    ctr = np.zeros(n, dtype=np.uint64)
    kill = np.full(n, np.inf)
    if q > 0.0:
        kill = -np.log(_np_draw(origins, ctr)) / q
        ctr += 1
    total_rate = rate0 + rate1
    out_bound[:] = 0.0
    al = np.arange(n)
    steps = 0
    while al.size and steps < max_steps:
        steps += 1
        if total_rate > 0.0:
            dt = -np.log(_np_draw(origins[al], ctr[al])) / total_rate
            ctr[al] += 1
        else:
            dt = np.full(al.size, np.inf)
        seg = dt
        event = np.zeros(al.size, dtype=np.int64)
        if policy == 0:
            m = t[al] + seg >= arg
            seg = np.where(m, arg - t[al], seg)
            event[m] = 2
        m = kill[al] - t[al] < seg
        seg = np.where(m, kill[al] - t[al], seg)
        event[m] = 1
        open_ended = np.isinf(seg)
        event[open_ended] = 3
        ex = np.exp(xi[al])
        bseg = np.where(open_ended, 0.0, b * seg)
        if b != 0.0:
            with np.errstate(over="ignore"):
                fin_int = np.where(
                    np.abs(bseg) < 1e-12,
                    seg * (1.0 + 0.5 * bseg),
                    np.expm1(bseg) / b,
                )
        else:
            fin_int = np.where(open_ended, 0.0, seg)
        seg_int = np.where(open_ended, np.inf if b >= 0.0 else 1.0 / -b, fin_int) * ex
        done = np.zeros(al.size, dtype=bool)
        if policy == 3:
            gap = arg - acc[al]
            cross = seg_int >= gap
            if cross.any():
                with np.errstate(divide="ignore", invalid="ignore"):
                    u_star = gap / ex if b == 0.0 else np.log1p(b * gap / ex) / b
                sub = al[cross]
                out_val[sub] = arg
                out_xi[sub] = xi[sub] + b * u_star[cross]
                out_status[sub] = ST_CROSSED
                done |= cross
            m = open_ended & ~done
            if m.any():
                sub = al[m]
                out_val[sub] = acc[sub] + seg_int[m]
                out_xi[sub] = xi[sub]
                out_status[sub] = ST_DEAD
                done |= m
        else:
            m = open_ended
            if m.any():
                sub = al[m]
                if b >= 0.0:
                    out_val[sub] = acc[sub]
                    out_status[sub] = ST_DIVERGED
                    out_bound[sub] = np.inf
                else:
                    out_val[sub] = acc[sub] + seg_int[m]
                    out_status[sub] = ST_DONE
                out_xi[sub] = xi[sub]
                done |= m
        keep = ~done
        idx = al[keep]
        acc[idx] += seg_int[keep]
        t[idx] += seg[keep]
        xi[idx] += b * seg[keep]
        ev = event[keep]
        m = ev == 1
        if m.any():
            sub = idx[m]
            out_val[sub] = acc[sub]
            out_xi[sub] = xi[sub]
            out_status[sub] = ST_DEAD if policy == 3 else ST_KILLED
        m = ev == 2
        if m.any():
            sub = idx[m]
            out_val[sub] = acc[sub]
            out_xi[sub] = xi[sub]
            out_status[sub] = ST_DONE
        al = idx[ev == 0]
        if al.size == 0:
            continue
        # jump sizes, matching the scalar counter order: optional side, then size
        if rate0 > 0.0 and rate1 > 0.0:
            side = _np_draw(origins[al], ctr[al]) > rate0 / total_rate
            ctr[al] += 1
        else:
            side = np.full(al.size, rate1 > 0.0)
        u = _np_draw(origins[al], ctr[al])
        ctr[al] += 1
        dn = ~side
        if dn.any():
            xi[al[dn]] -= _np_sizes(kind0, a0, b0, c0, rate0, t0a, t0b, u[dn])
        if side.any():
            xi[al[side]] += _np_sizes(kind1, a1, b1, c1, rate1, t1a, t1b, u[side])
        ex = np.exp(xi[al])
        if policy == 2 and qbound > 0.0:
            m = (acc[al] > 0.0) & (ex * qbound <= rel_tol * acc[al])
            if m.any():
                sub = al[m]
                out_val[sub] = acc[sub]
                out_xi[sub] = xi[sub]
                out_status[sub] = ST_DONE
                out_bound[sub] = ex[m] * qbound
                al = al[~m]
        elif policy == 3 and q_cert > 0.0:
            m = ex * q_cert < arg - acc[al]
            if m.any():
                sub = al[m]
                out_val[sub] = acc[sub]
                out_xi[sub] = xi[sub]
                out_status[sub] = ST_DEAD
                out_bound[sub] = ex[m] * q_cert
                al = al[~m]
    if al.size:
        out_val[al] = acc[al]
        out_xi[al] = xi[al]
        out_status[al] = ST_MAXED
        out_bound[al] = np.inf


def _np_grid_batch(
    origins,
    b, sigma, q,
    rate0, kind0, a0, b0, c0, t0a, t0b,
    rate1, kind1, a1, b1, c1, t1a, t1b,
    dt_fine, coarse_factor, coarse_frac,
    policy, arg, rel_tol, qbound, q_cert, max_steps,
    out_val, out_xi, out_status, out_bound,
):
    n = origins.shape[0]
    xi = np.zeros(n)
    acc = np.zeros(n)
    t = np.zeros(n)
    f_old = np.ones(n)
    ctr = np.zeros(n, dtype=np.uint64)
    kill = np.full(n, np.inf)
    if q > 0.0:
        kill = -np.log(_np_draw(origins, ctr)) / q
        ctr += 1
    total_rate = rate0 + rate1
    next_jump = np.full(n, np.inf)
    if total_rate > 0.0:
        next_jump = -np.log(_np_draw(origins, ctr)) / total_rate
        ctr += 1
    dt_coarse = coarse_factor * dt_fine
    head = math.exp(3.0 * sigma * math.sqrt(dt_coarse) + max(b, 0.0) * dt_coarse) * dt_coarse
    out_bound[:] = 0.0
    al = np.arange(n)
    steps = 0
    while al.size and steps < max_steps:
        steps += 1
        dt = np.full(al.size, dt_fine)
        if policy == 3:
            dt[np.exp(xi[al]) * head < coarse_frac * (arg - acc[al])] = dt_coarse
        elif policy == 2:
            m = (acc[al] > 0.0) & (np.exp(xi[al]) * head < coarse_frac * rel_tol * acc[al])
            dt[m] = dt_coarse
        hit = np.zeros(al.size, dtype=np.int64)
        if policy == 0:
            m = t[al] + dt >= arg
            dt = np.where(m, arg - t[al], dt)
            hit[m] = 2
        m = next_jump[al] - t[al] < dt
        dt = np.where(m, next_jump[al] - t[al], dt)
        hit[m] = 3
        m = kill[al] - t[al] < dt
        dt = np.where(m, kill[al] - t[al], dt)
        hit[m] = 1
        u1 = _np_draw(origins[al], ctr[al])
        u2 = _np_draw(origins[al], ctr[al] + np.uint64(1))
        ctr[al] += 2
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)
        dxi = b * dt + sigma * np.sqrt(dt) * z
        f_new = np.exp(xi[al] + dxi)
        d_acc = 0.5 * dt * (f_old[al] + f_new)
        done = np.zeros(al.size, dtype=bool)
        if policy == 3:
            cross = acc[al] + d_acc >= arg
            if cross.any():
                gap = arg - acc[al]
                with np.errstate(divide="ignore", invalid="ignore"):
                    aq = 0.5 * (f_new - f_old[al]) / dt
                    disc = np.maximum(f_old[al] ** 2 + 4.0 * aq * gap, 0.0)
                    u_star = np.minimum(2.0 * gap / (f_old[al] + np.sqrt(disc)), dt)
                    xi_star = xi[al] + dxi * (u_star / dt)
                sub = al[cross]
                out_val[sub] = arg
                out_xi[sub] = xi_star[cross]
                out_status[sub] = ST_CROSSED
                done |= cross
        keep = ~done
        idx = al[keep]
        acc[idx] += d_acc[keep]
        xi[idx] += dxi[keep]
        t[idx] += dt[keep]
        f_old[idx] = f_new[keep]
        hv = hit[keep]
        m = hv == 1
        if m.any():
            sub = idx[m]
            out_val[sub] = acc[sub]
            out_xi[sub] = xi[sub]
            out_status[sub] = ST_DEAD if policy == 3 else ST_KILLED
        m = hv == 2
        if m.any():
            sub = idx[m]
            out_val[sub] = acc[sub]
            out_xi[sub] = xi[sub]
            out_status[sub] = ST_DONE
        live = hv == 0
        jmp = hv == 3
        if jmp.any():
            J = idx[jmp]
            if rate0 > 0.0 and rate1 > 0.0:
                side = _np_draw(origins[J], ctr[J]) > rate0 / total_rate
                ctr[J] += 1
            else:
                side = np.full(J.size, rate1 > 0.0)
            u = _np_draw(origins[J], ctr[J])
            ctr[J] += 1
            dn = ~side
            if dn.any():
                xi[J[dn]] -= _np_sizes(kind0, a0, b0, c0, rate0, t0a, t0b, u[dn])
            if side.any():
                xi[J[side]] += _np_sizes(kind1, a1, b1, c1, rate1, t1a, t1b, u[side])
            f_old[J] = np.exp(xi[J])
            next_jump[J] = t[J] - np.log(_np_draw(origins[J], ctr[J])) / total_rate
            ctr[J] += 1
        al = idx[live | jmp]
        if al.size == 0:
            continue
        ex = np.exp(xi[al])
        if policy == 2 and qbound > 0.0:
            m = (acc[al] > 0.0) & (ex * qbound <= rel_tol * acc[al])
            if m.any():
                sub = al[m]
                out_val[sub] = acc[sub]
                out_xi[sub] = xi[sub]
                out_status[sub] = ST_DONE
                out_bound[sub] = ex[m] * qbound
                al = al[~m]
        elif policy == 3 and q_cert > 0.0:
            m = ex * q_cert < arg - acc[al]
            if m.any():
                sub = al[m]
                out_val[sub] = acc[sub]
                out_xi[sub] = xi[sub]
                out_status[sub] = ST_DEAD
                out_bound[sub] = ex[m] * q_cert
                al = al[~m]
    if al.size:
        out_val[al] = acc[al]
        out_xi[al] = xi[al]
        out_status[al] = ST_MAXED
        out_bound[al] = np.inf


# ---------------------------------------------------------------------------
# packing and dispatch
# ---------------------------------------------------------------------------

NULL_CHANNEL = (0.0, K_NONE, 0.0, 0.0, 0.0, _EMPTY, _EMPTY)


def pack_channel(measure, eps: float):
    """(rate, kind, p0, p1, p2, ta, tb) for one jump direction."""
    if measure is None:
        return NULL_CHANNEL
    code, p0, p1, p2, ta, tb = measure.kernel_pack(eps)
    if code == K_NONE:
        return NULL_CHANNEL
    if code in (K_TABLE, K_GRID):
        rate = float(p0)
        if code == K_GRID:  # stored descending in v; kernels want ascending
            ta, tb = ta[::-1].copy(), tb[::-1].copy()
    else:
        rate = float(measure.tail(eps))
    if rate <= 0.0:
        return NULL_CHANNEL
    return (rate, code, float(p0), float(p1), float(p2), ta, tb)


def event_args(
    b, q, ch_neg, ch_pos, policy, arg,
    rel_tol=1e-6, qbound=0.0, q_cert=0.0, max_steps=1 << 62,
):
    return (
        float(b), float(q), *ch_neg, *ch_pos,
        int(policy), float(arg), float(rel_tol), float(qbound), float(q_cert),
        int(max_steps),
    )


def grid_args(
    b, sigma, q, ch_neg, ch_pos, dt_fine, policy, arg,
    rel_tol=1e-6, qbound=0.0, q_cert=0.0, max_steps=1 << 62,
    coarse_factor=32.0, coarse_frac=1e-3,
):
    return (
        float(b), float(sigma), float(q), *ch_neg, *ch_pos,
        float(dt_fine), float(coarse_factor), float(coarse_frac),
        int(policy), float(arg), float(rel_tol), float(qbound), float(q_cert),
        int(max_steps),
    )


def run_batch(
    seed: int,
    n: int,
    args: tuple,
    grid: bool = False,
    threads: int = 1,
    offset: int = 0,
    which: str | None = None,
):
    """Run n replicas (indices offset..offset+n-1) and collect the outputs.

    Returns (values, xi_out, status, tail_bound).  Chunking across threads
    never changes results: replica i always consumes stream (seed, i).
    """
    be = which or backend()
    if be == "numba":
        fn = _grid_batch if grid else _event_batch
    else:
        fn = _np_grid_batch if grid else _np_event_batch
    replicas = np.arange(offset, offset + n, dtype=np.uint64)
    origins = rng.vec_origins(seed, replicas)
    out_val = np.empty(n)
    out_xi = np.empty(n)
    out_status = np.empty(n, dtype=np.int64)
    out_bound = np.empty(n)
    if threads <= 1 or n < 2 * threads:
        fn(origins, *args, out_val, out_xi, out_status, out_bound)
    else:
        cuts = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [
                pool.submit(
                    fn, origins[lo:hi], *args,
                    out_val[lo:hi], out_xi[lo:hi], out_status[lo:hi], out_bound[lo:hi],
                )
                for lo, hi in zip(cuts[:-1], cuts[1:])
                if hi > lo
            ]
            for f in futs:
                f.result()
    return out_val, out_xi, out_status, out_bound


def warm_up() -> None:
    """Trigger numba compilation of both kernels on a tiny batch."""
    if not HAS_NUMBA:
        return
    ch = NULL_CHANNEL
    run_batch(0, 2, event_args(-1.0, 0.5, ch, ch, POLICY_KILLED, 0.0), which="numba")
    run_batch(0, 2, grid_args(-1.0, 1.0, 0.5, ch, ch, 0.05, POLICY_KILLED, 0.0), which="numba")
