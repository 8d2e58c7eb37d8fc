"""Lévy-process specifications and their exponent-level operations.

A spec records the generating triplet of the log-process xi: drift b, Gaussian
coefficient sigma, a jump measure for each sign (sizes always positive, the
slot carries the sign) and a killing rate q.  The self-similarity index alpha
of the process built from xi is carried alongside and is folded into the spec
with :func:`rescale` before any functional of ``int e^{xi}`` is touched, so
all downstream code runs at the index-1 convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import (
    InvalidMeasure,
    MalformedSpec,
    NonConvergence,
    NotASubordinator,
    TiltDiverges,
)
from .measures import Measure, measure_from_json

LAMBDA_MAX = 128.0


@dataclass(frozen=True)
class LevySpec:
    drift: float = 0.0
    sigma: float = 0.0
    jumps_pos: Measure | None = None
    jumps_neg: Measure | None = None
    killing: float = 0.0
    alpha: float = 1.0
    # Closed-form exponent attached by gallery entries whose measure-level
    # integrals do not converge without compensation (never serialized).
    mgf_override: Callable[[float], float] | None = field(
        default=None, compare=False, repr=False
    )
    mgf_domain: float = field(default=math.inf, compare=False, repr=False)

    def __post_init__(self):
        if self.sigma < 0 or self.killing < 0 or self.alpha <= 0:
            raise MalformedSpec("sigma, killing must be >= 0 and alpha > 0")
        for m in (self.jumps_pos, self.jumps_neg):
            if m is not None and m.mass() == 0.0:
                object.__setattr__(
                    self, "jumps_pos" if m is self.jumps_pos else "jumps_neg", None
                )
        if self.is_subordinator_neg():
            m = self.jumps_neg
            if m is not None and m.integrability_order() > 1:
                raise InvalidMeasure(
                    "subordinator jump measure must satisfy int (1 ^ x) Pi(dx) < inf"
                )

    def is_subordinator_neg(self) -> bool:
        """True when -xi is a subordinator: no Gaussian, no up jumps, b <= 0."""
        return self.sigma == 0.0 and self.jumps_pos is None and self.drift <= 0.0

    @property
    def d(self) -> float:
        """Subordinator drift of -xi."""
        return -self.drift


def laplace_exponent(spec: LevySpec, lam: float) -> float:
    """phi(lam) = q + d*lam + int (1 - e^{-lam x}) Pi(dx) of the subordinator -xi."""
    if not spec.is_subordinator_neg():
        raise NotASubordinator(
            "laplace_exponent needs -xi to be a subordinator "
            "(no positive jumps, no Gaussian part, nonpositive drift)"
        )
    if lam < 0:
        raise NotASubordinator("phi is defined on lam >= 0")
    jump = spec.jumps_neg.lap_integral(lam) if spec.jumps_neg is not None else 0.0
    return spec.killing + spec.d * lam + jump


def mgf_exponent(spec: LevySpec, gamma: float) -> float:
    """psi(gamma) = ln E[e^{gamma xi_1}; alive at 1]; +inf when divergent."""
    if spec.mgf_override is not None:
        if gamma >= spec.mgf_domain:
            return math.inf
        return spec.mgf_override(gamma)
    val = spec.drift * gamma + 0.5 * spec.sigma**2 * gamma**2 - spec.killing
    if spec.jumps_pos is not None:
        up = spec.jumps_pos.exp_integral(gamma)
        if up == math.inf:
            return math.inf
        val += up
    if spec.jumps_neg is not None:
        down = spec.jumps_neg.exp_integral(-gamma)
        if down == math.inf:
            return math.inf
        val += down
    return val


def mean_log(spec: LevySpec) -> float:
    """E[xi_1] (ignoring killing), numerically as psi'(0) of the unkilled spec."""
    h = 1e-6
    base = replace(spec, killing=0.0)
    return (mgf_exponent(base, h) - mgf_exponent(base, -h)) / (2 * h)


def cramer_root(spec: LevySpec, lam_max: float = LAMBDA_MAX) -> float | None:
    """Positive root of psi, or None when monotone paths rule Fréchet out.

    psi is convex; bracket by doubling from 1 until a sign change appears
    (treating +inf as positive), then solve to |psi(gamma)| < 1e-12.
    """
    if spec.is_subordinator_neg():
        return None
    lo = 0.0
    hi = 1.0
    # shrink below 1 first in case the finiteness domain is tiny
    while mgf_exponent(spec, hi) == math.inf and hi > 1e-8:
        hi /= 2.0
    if mgf_exponent(spec, hi) == math.inf:
        raise NonConvergence("psi is infinite arbitrarily close to 0")
    while mgf_exponent(spec, hi) < 0.0:
        lo = hi
        hi *= 2.0
        if hi > lam_max:
            raise NonConvergence(f"no sign change of psi up to lam_max={lam_max}")
        while mgf_exponent(spec, hi) == math.inf:
            hi = 0.5 * (lo + hi)  # domain edge: psi -> +inf, root is below
            if hi - lo < 1e-14:
                raise NonConvergence("psi jumps to +inf without crossing zero")
    if mgf_exponent(spec, hi) == 0.0:
        return hi
    if lo == 0.0:
        # psi(hi) >= 0 already; the root may sit below hi
        f_hi = mgf_exponent(spec, hi)
        if f_hi == 0.0:
            return hi
        lo = hi / 2.0
        while mgf_exponent(spec, lo) > 0.0:
            hi, lo = lo, lo / 2.0
            if lo < 1e-12:
                return None  # psi > 0 on (0, ...): no positive root (e.g. q = 0)
    gamma = brentq(
        lambda u: mgf_exponent(spec, u), lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200
    )
    if abs(mgf_exponent(spec, gamma)) > 1e-12:
        raise NonConvergence("root polish did not reach |psi| < 1e-12")
    return float(gamma)


def esscher_tilt(spec: LevySpec, gamma: float) -> LevySpec:
    """Spec of xi under the exponential change of measure e^{gamma xi}.

    The returned spec has psi*(lam) = psi(lam + gamma): drift gains gamma
    sigma^2, jump measures gain a density factor e^{gamma x} (sign-resolved
    per slot), and the killing rate becomes -psi(gamma), which must be >= 0.
    """
    if gamma <= 0:
        raise TiltDiverges("tilt parameter must be positive")
    psi_g = mgf_exponent(spec, gamma)
    if psi_g == math.inf:
        raise TiltDiverges("psi(gamma) is infinite: e^{gamma x} Pi(dx) diverges")
    if psi_g > 1e-12:
        raise TiltDiverges("psi(gamma) > 0 would need a negative killing rate")
    new_pos = spec.jumps_pos.tilt(gamma) if spec.jumps_pos is not None else None
    new_neg = spec.jumps_neg.tilt(-gamma) if spec.jumps_neg is not None else None
    return LevySpec(
        drift=spec.drift + gamma * spec.sigma**2,
        sigma=spec.sigma,
        jumps_pos=new_pos,
        jumps_neg=new_neg,
        killing=max(-psi_g, 0.0),
        alpha=spec.alpha,
    )


def rescale(spec: LevySpec, a: float) -> LevySpec:
    """Spec of a*xi (drift, sigma, jump sizes scaled; killing unchanged).

    The carried self-similarity index divides by a, so rescale(spec,
    spec.alpha) moves any spec to the index-1 convention.
    """
    if a <= 0:
        raise MalformedSpec("rescale factor must be positive")
    if a == 1.0:
        return spec
    override = None
    if spec.mgf_override is not None:
        inner = spec.mgf_override
        override = lambda lam, _f=inner, _a=a: _f(lam * _a)  # noqa: E731
    return LevySpec(
        drift=spec.drift * a,
        sigma=spec.sigma * a,
        jumps_pos=spec.jumps_pos.rescale(a) if spec.jumps_pos is not None else None,
        jumps_neg=spec.jumps_neg.rescale(a) if spec.jumps_neg is not None else None,
        killing=spec.killing,
        alpha=spec.alpha / a,
        mgf_override=override,
        mgf_domain=spec.mgf_domain / a,
    )


def to_unit_index(spec: LevySpec) -> LevySpec:
    """Fold the self-similarity index into xi (alpha -> 1)."""
    return rescale(spec, spec.alpha)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------

def spec_to_json(spec: LevySpec) -> dict:
    return {
        "drift": spec.drift,
        "sigma": spec.sigma,
        "killing": spec.killing,
        "jumps_pos": spec.jumps_pos.to_json() if spec.jumps_pos is not None else None,
        "jumps_neg": spec.jumps_neg.to_json() if spec.jumps_neg is not None else None,
        "alpha": spec.alpha,
    }


def spec_from_json(obj) -> LevySpec:
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise MalformedSpec(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedSpec("spec JSON must be an object")
    unknown = set(obj) - {"drift", "sigma", "killing", "jumps_pos", "jumps_neg", "alpha"}
    if unknown:
        raise MalformedSpec(f"unknown spec fields: {sorted(unknown)}")
    try:
        drift = float(obj.get("drift", 0.0))
        sigma = float(obj.get("sigma", 0.0))
        killing = float(obj.get("killing", 0.0))
        alpha = float(obj.get("alpha", 1.0))
    except (TypeError, ValueError) as exc:
        raise MalformedSpec(f"non-numeric scalar field: {exc}") from exc
    jp = obj.get("jumps_pos")
    jn = obj.get("jumps_neg")
    return LevySpec(
        drift=drift,
        sigma=sigma,
        jumps_pos=measure_from_json(jp, side="pos") if jp is not None else None,
        jumps_neg=measure_from_json(jn, side="neg") if jn is not None else None,
        killing=killing,
        alpha=alpha,
    )


def spec_json_dumps(spec: LevySpec) -> str:
    """Stable-key-order serialization (UTF-8, sorted keys)."""
    return json.dumps(spec_to_json(spec), sort_keys=True)
