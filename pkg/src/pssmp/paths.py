"""Recording path sampler for the log-process with controlled truncation.

This is the inspectable counterpart of the batch kernels: one replica per
call, full skeleton recorded (grid nodes, exact jump times with pre/post
values, kill time).  Hot Monte-Carlo loops should use pssmp.kernels; this
module favours clarity and exact bookkeeping over speed.

Small jumps below the cutoff are never discarded silently: their mean goes
into the drift (subordinators keep exact pathwise monotonicity that way) and,
for two-sided specs, their variance can be folded into the Gaussian part.
The omitted first moment per unit time is reported as truncation_bound.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTail, InvalidMeasure, MayDiverge
from .levyspec import LevySpec, mean_log
from .measures import Measure
from .rng import ScalarStream

FIXED_HORIZON = "fixed-horizon"
UNTIL_KILLED = "until-killed"
UNTIL_CONVERGED = "until-integral-converged"


@dataclass(frozen=True)
class SimConfig:
    """Knobs for one path draw; everything has a reproducible default."""

    step: float | None = None          # grid spacing; default horizon * 1e-3
    jump_cutoff: float | None = None   # eps; default via the 1e-4 mass rule
    horizon_policy: str = FIXED_HORIZON
    seed: int = 0
    replica_index: int = 0
    rel_tol: float = 1e-6              # until-integral-converged stop level
    gaussian_substitution: bool = True  # fold sub-cutoff variance into sigma

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.jump_cutoff is not None and not self.jump_cutoff > 0:
            raise ValueError("jump_cutoff must be positive")
        if self.horizon_policy not in (FIXED_HORIZON, UNTIL_KILLED, UNTIL_CONVERGED):
            raise ValueError(f"unknown horizon policy {self.horizon_policy!r}")


@dataclass
class PathSample:
    times: np.ndarray          # nondecreasing; jump times appear twice
    values: np.ndarray         # xi at the nodes (landing value on the 2nd copy)
    is_jump: np.ndarray        # marks the landing node of each jump
    killed: bool
    kill_time: float | None
    truncation_bound: float    # omitted small-jump mean, per unit time

    def value_at(self, t):
        """xi(t) (right-continuous), vectorized over t."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.maximum(idx, 0)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,value,is_jump\r\n")
        for t, v, j in zip(self.times, self.values, self.is_jump):
            buf.write(f"{float(t)!r},{float(v)!r},{int(j)}\r\n")
        return buf.getvalue()


def sample_jump(measure: Measure, min_size: float, stream: ScalarStream) -> float:
    """One draw from Pi restricted to (min_size, inf), inverse-transform."""
    rate = float(measure.tail(min_size))
    if rate == 0.0:
        raise EmptyTail(f"no jump mass above {min_size}")
    if not np.isfinite(rate):
        raise InvalidMeasure("jump rate above the cutoff must be finite")
    return measure.inverse_tail(stream.uniform() * rate)


def auto_cutoff(spec: LevySpec, horizon: float, target: float = 1e-4) -> float:
    """Largest decade cutoff whose omitted mean stays below `target` per unit time.

    The expected clock-integral scale is of order the horizon (xi starts at
    0), so keeping the omitted first moment below target/unit keeps the bound
    times the horizon below `target` of that scale.  Order-2 measures have no
    one-sided mean to bound (the fold is exponent-centered and exact); there
    the omitted third moment eps * var_below rules the cutoff, matching the
    Gaussian-substitution error of the centered remainder.
    """
    heavy = any(m is not None and m.integrability_order() > 1
                for m in (spec.jumps_neg, spec.jumps_pos))
    eps = 1e-3
    while eps > 1e-12:
        bound = 0.0
        for m in (spec.jumps_neg, spec.jumps_pos):
            if m is not None:
                bound += eps * m.var_below(eps) if heavy else m.mean_below(eps)
        if bound < target:
            return eps
        eps /= 10.0
    return eps


def _effective_coefficients(spec: LevySpec, eps: float, gaussian_substitution: bool):
    """Drift/sigma after mean compensation (and optional variance folding).

    Mirrors lifetime.kernel_inputs: order-1 measures fold their sub-cutoff
    mean per side; order-2 measures center the retained-jump mean through the
    spec's closed-form exponent (exact, zero mean bound).
    """
    b = spec.drift
    sigma = spec.sigma
    bound = 0.0
    heavy = any(m is not None and m.integrability_order() > 1
                for m in (spec.jumps_neg, spec.jumps_pos))
    if heavy:
        if spec.mgf_override is None:
            raise InvalidMeasure(
                "small jumps of integrability order 2 cannot be mean-folded "
                "side by side; the spec needs its closed-form exponent "
                "(mgf_override) to center the compensation")
        b = mean_log(spec)
        if spec.jumps_neg is not None:
            b += spec.jumps_neg.mean_above(eps)
        if spec.jumps_pos is not None:
            b -= spec.jumps_pos.mean_above(eps)
    else:
        if spec.jumps_neg is not None:
            mb = spec.jumps_neg.mean_below(eps)
            b -= mb
            bound += mb
        if spec.jumps_pos is not None:
            mb = spec.jumps_pos.mean_below(eps)
            b += mb
            bound += mb
    two_sided = not spec.is_subordinator_neg()
    if two_sided and gaussian_substitution:
        var = 0.0
        for m in (spec.jumps_neg, spec.jumps_pos):
            if m is not None:
                var += m.var_below(eps)
        sigma = float(np.hypot(sigma, np.sqrt(var)))
    return b, sigma, bound


def sample_path(spec: LevySpec, cfg: SimConfig, horizon: float | None = None) -> PathSample:
    """Simulate one skeleton path of xi under the given stopping policy.

    Draw order on the replica stream is fixed (kill clock, jump clock/side/
    size interleaved in time, then Gaussian refinements segment by segment),
    so a (seed, replica_index) pair fully determines the sample.
    """
    policy = cfg.horizon_policy
    if policy == FIXED_HORIZON:
        if horizon is None or not horizon > 0 or not np.isfinite(horizon):
            raise ValueError("fixed-horizon policy needs a finite positive horizon")
    if policy == UNTIL_KILLED and not spec.killing > 0:
        raise MayDiverge("until-killed policy needs a positive killing rate")

    stream = ScalarStream(cfg.seed, cfg.replica_index)
    kill_time = np.inf
    if spec.killing > 0:
        kill_time = stream.exponential() / spec.killing

    eps = cfg.jump_cutoff
    if eps is None:
        ref = horizon if horizon is not None else (
            kill_time if np.isfinite(kill_time) else 1.0)
        eps = auto_cutoff(spec, max(ref, 1e-6))
    b, sigma, bound = _effective_coefficients(spec, eps, cfg.gaussian_substitution)

    channels = []
    for m, sign in ((spec.jumps_neg, -1.0), (spec.jumps_pos, +1.0)):
        if m is None:
            continue
        rate = float(m.tail(eps))
        if not np.isfinite(rate):
            raise InvalidMeasure("jump intensity above the cutoff must be finite")
        if rate > 0:
            channels.append((rate, sign, m))
    total_rate = sum(rate for rate, _, _ in channels)

    if policy == UNTIL_CONVERGED:
        # the remainder bound e^{xi}/(-b) is only valid on monotone paths
        if not spec.is_subordinator_neg() or b >= 0:
            raise MayDiverge(
                "until-integral-converged needs a subordinator spec with "
                "negative effective drift (monotone remainder bound)")

    if policy == UNTIL_KILLED:
        end = kill_time
    elif policy == FIXED_HORIZON:
        end = float(horizon)
    else:
        end = np.inf

    # --- event skeleton: jump times, sides, sizes, interleaved with the kill
    jump_times, jump_moves = [], []
    t = 0.0
    xi_jump_free = 0.0  # value used only for the convergence test below
    acc = 0.0
    qbound = 1.0 / (-b) if b < 0 else np.inf
    while True:
        gap = stream.exponential() / total_rate if total_rate > 0 else np.inf
        t_next = t + gap
        stop_at = min(end, kill_time)
        if policy == UNTIL_CONVERGED:
            # closed-form drift integral between events (no sigma here)
            seg = min(t_next, kill_time) - t
            if np.isfinite(seg):
                acc += np.exp(xi_jump_free) * -np.expm1(b * seg) / -b
            else:
                acc += np.exp(xi_jump_free) * qbound
                end = t
                break
            if t_next >= kill_time:
                end = kill_time
                break
        elif t_next >= stop_at:
            break
        # jump executes: pick the channel, then the size
        if len(channels) == 2:
            side = 1 if stream.uniform() > channels[0][0] / total_rate else 0
        else:
            side = 0
        rate, sign, m = channels[side]
        size = m.inverse_tail(stream.uniform() * rate)
        t = t_next
        jump_times.append(t)
        jump_moves.append(sign * size)
        if policy == UNTIL_CONVERGED:
            xi_jump_free += b * (seg) + sign * size
            if acc > 0 and np.exp(xi_jump_free) * qbound <= cfg.rel_tol * acc:
                end = t
                break

    killed = kill_time <= end
    end = min(end, kill_time)

    # --- node list: regular grid + exact jump nodes (pre and landing)
    step = cfg.step if cfg.step is not None else max(end, 1e-12) * 1e-3
    n_grid = int(np.ceil(end / step))
    grid = np.minimum(np.arange(n_grid + 1) * step, end)
    times = [0.0]
    moves = [0.0]  # jump displacement applied AT the node (0 for grid nodes)
    flags = [False]
    ji = 0
    for g in grid[1:]:
        while ji < len(jump_times) and jump_times[ji] <= g:
            tj = jump_times[ji]
            times.extend([tj, tj])
            moves.extend([0.0, jump_moves[ji]])
            flags.extend([False, True])
            ji += 1
        if not times[-1] == g or flags[-1]:
            times.append(float(g))
            moves.append(0.0)
            flags.append(False)
    times = np.asarray(times)
    moves = np.asarray(moves)
    flags = np.asarray(flags, dtype=bool)

    # --- fill values: drift (+ Gaussian refinement) across segments, jumps at nodes
    values = np.empty_like(times)
    values[0] = 0.0
    dts = np.diff(times)
    if sigma > 0:
        incs = np.array([
            b * dt + sigma * np.sqrt(dt) * stream.normal() if dt > 0 else 0.0
            for dt in dts
        ])
    else:
        incs = b * dts
    values[1:] = np.cumsum(incs + moves[1:])

    return PathSample(
        times=times,
        values=values,
        is_jump=flags,
        killed=bool(killed),
        kill_time=float(kill_time) if killed else None,
        truncation_bound=float(bound),
    )
