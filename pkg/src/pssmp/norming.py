"""Scale solver and regime normalizers for the conditioned-limit laws.

solve_scale inverts the increasing map u -> u / (q + int (1-e^{-ux}) Pi(dx)):
the returned u(t) sets the scale on which the log-process fluctuations matter
by time t, and each limit regime turns it into a deterministic normalizer:

  gumbel (no drift)        g(t) = t / u(t)
  gumbel (drift d > 0)     g(t) = 1 / (d * u_{q=0}(t / (1 - d t)))
  weibull (drift, finite)  g(t) = 1/d - t
  frechet (heavy tail)     g(t) = t

The positive-drift normalizer deliberately drops the killing rate: the limit
does not depend on it, so the scale always solves against q = 0 there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from scipy.optimize import brentq

from .errors import NoYaglomRegime, OutOfDomain
from .levyspec import LevySpec
from .measures import ExpTail, Measure


def _forward(measure: Measure | None, q: float, u: float) -> float:
    lam = q + (measure.lap_integral(u) if measure is not None else 0.0)
    return u / lam if lam > 0 else math.inf


def solve_scale(measure: Measure | None, q: float, t: float) -> float:
    """u with u / (q + int(1-e^{-ux}) Pi(dx)) = t, residual < 1e-12 * t.

    For q = 0 the map's range starts at 1/int x Pi(dx); t at or below that
    endpoint raises OutOfDomain (no root exists, the CLI refuses rather than
    extrapolates).
    """
    if t <= 0:
        raise OutOfDomain("scale solver needs t > 0")
    if q < 0:
        raise ValueError("killing rate must be nonnegative")
    if measure is None:
        if q == 0:
            raise OutOfDomain("empty measure with no killing has no scale")
        return q * t  # map is u/q
    if isinstance(measure, ExpTail) and getattr(measure, "cutoff", 0.0) == 0.0:
        # u = t(q + m u/(u+rho)): one positive quadratic root
        m, rho = measure.q, measure.rho
        bcoef = rho - t * q - t * m
        disc = bcoef * bcoef + 4.0 * t * q * rho
        u = (-bcoef + math.sqrt(disc)) / 2.0
        if u <= 0:
            raise OutOfDomain(f"t={t:g} below the q=0 domain endpoint {rho / m:g}")
        return u

    def h(u: float) -> float:
        return _forward(measure, q, u) - t

    u0 = t * (float(measure.tail(1.0 / t)) + q)
    u0 = max(u0, 1e-12 / t)
    lo = hi = u0
    # forward map is continuous increasing: double/halve into a bracket
    while h(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise OutOfDomain("forward map never reaches t")
    while h(lo) > 0:
        lo /= 2.0
        if lo < 1e-300:
            raise OutOfDomain(
                f"t={t:g} at or below the q=0 domain endpoint (no root)")
    if lo == hi:
        return lo
    u = brentq(h, lo, hi, xtol=1e-300, rtol=8.9e-16)
    resid = abs(_forward(measure, q, u) - t)
    if not resid < 1e-12 * t:
        raise OutOfDomain(f"scale solve stalled: residual {resid:.2e} at t={t:g}")
    return u


@dataclass(frozen=True)
class NormalizerFn:
    regime: str
    fn: Callable[[float], float]
    t_lo: float
    t_hi: float  # open upper endpoint (inf unless the support is bounded)

    def __call__(self, t: float) -> float:
        if not (self.t_lo < t < self.t_hi):
            raise OutOfDomain(
                f"normalizer domain is ({self.t_lo:g}, {self.t_hi:g}), got {t:g}")
        g = self.fn(t)
        if not g > 0:
            raise OutOfDomain(f"normalizer not positive at t={t:g}")
        return g


def _q0_lower_endpoint(measure: Measure | None) -> float:
    """1 / int x Pi(dx): the q=0 domain's lower edge (0 when the mean diverges).

    By parts, int_{(1,inf)} x Pi(dx) = tail(1) + int_1^inf tail(x) dx; the
    integral runs on a log grid to x = e^30 and the remainder uses the local
    decay index (index <= 1 means an infinite mean, endpoint 0).
    """
    if measure is None:
        return math.inf
    import numpy as np

    s = np.linspace(0.0, 30.0, 1201)
    x = np.exp(s)
    v = np.asarray(measure.tail(x), dtype=float)
    body = float(np.trapezoid(v * x, s))
    if v[-1] > 0:
        beta = (math.log(v[-3]) - math.log(v[-1])) / (s[-1] - s[-3])
        if beta <= 1.02:
            return 0.0
        body += x[-1] * v[-1] / (beta - 1.0)
    total = measure.mean_below(1.0) + float(measure.tail(1.0)) + body
    return 1.0 / total


def normalizer(classification) -> NormalizerFn:
    """The regime normalizer g for a classified spec (duck-typed input:
    anything with .regime and .spec works, so the classifier stays upstream)."""
    regime = classification.regime
    spec: LevySpec = classification.spec
    d = spec.d
    if regime == "gumbel-drift-free":
        measure, q = spec.jumps_neg, spec.killing
        t_lo = 0.0 if q > 0 else _q0_lower_endpoint(measure)
        return NormalizerFn(
            regime, lambda t: t / solve_scale(measure, q, t), t_lo, math.inf)
    if regime == "gumbel-positive-drift":
        measure = spec.jumps_neg
        t_f = 1.0 / d
        t_lo0 = _q0_lower_endpoint(measure)
        # t/(1-dt) must clear the q=0 endpoint
        t_lo = t_lo0 / (1.0 + d * t_lo0) if math.isfinite(t_lo0) else t_f

        def g(t: float, _m=measure, _d=d) -> float:
            return 1.0 / (_d * solve_scale(_m, 0.0, t / (1.0 - _d * t)))

        return NormalizerFn(regime, g, t_lo, t_f)
    if regime == "weibull":
        t_f = 1.0 / d
        return NormalizerFn(regime, lambda t: t_f - t, 0.0, t_f)
    if regime == "frechet":
        return NormalizerFn(regime, lambda t: t, 0.0, math.inf)
    raise NoYaglomRegime(f"no normalizer for regime {regime!r}")
