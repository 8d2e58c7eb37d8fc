"""Regime classification for the lifetime law, plus its factor laws.

A spec lands in exactly one of five regimes:

* ``weibull``               monotone, positive drift, finite jump activity;
* ``gumbel-positive-drift`` monotone, positive drift, infinite activity whose
                            small-jump ratio stays inside (0, 1);
* ``gumbel-drift-free``     monotone, no drift, small-jump ratio bounded away
                            from 0;
* ``frechet``               non-monotone with a positive root of the log-mgf
                            exponent (or a user-asserted power-tail index);
* ``none-known``            non-monotone with no root: the necessary moment
                            condition report says why.

A quasi-stationary law exists exactly for the monotone (subordinator) specs;
the Fréchet regime still has a Yaglom limit under linear normalization, built
from the Pareto factor below.

The small-jump conditions are limit statements, so they are decided on a
decade grid with explicit margins and an ``Inconclusive`` error inside the
band — honesty over guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels as K
from .errors import (
    Inconclusive,
    InvalidMeasure,
    NonConvergence,
    NotASubordinator,
    NotFactorizableError,
    RareEvent,
)
from .levyspec import (
    LevySpec,
    cramer_root,
    esscher_tilt,
    laplace_exponent,
    mean_log,
    mgf_exponent,
    to_unit_index,
)
from .lifetime import (
    MomentSequence,
    _time_scale,
    check_finiteness,
    kernel_inputs,
    sample_functional,
    support_bound,
)
from .measures import Measure
from .paths import auto_cutoff
from .stats import WeightedSample

_MIXTURE_OFFSET = 1 << 42  # replica range for the level-mixture sampler


@dataclass(frozen=True)
class ConditionReport:
    """One named numeric verdict feeding the classification."""

    name: str
    verdict: str  # "holds" | "fails" | "inconclusive" | "info"
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "verdict": self.verdict,
                "detail": {k: self.detail[k] for k in sorted(self.detail)}}


@dataclass(frozen=True)
class YaglomClassification:
    regime: str
    qs_exists: bool
    t_f: float
    spec: LevySpec  # unit-index spec, the one every downstream formula uses
    gamma: float | None = None
    gamma0: float | None = None
    via: str | None = None
    reports: tuple = ()

    def to_json(self) -> dict:
        out = {"regime": self.regime}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        if self.gamma0 is not None:
            out["gamma0"] = self.gamma0
        out["t_F"] = self.t_f if math.isfinite(self.t_f) else None
        out["qs_exists"] = self.qs_exists
        out["condition_reports"] = [r.to_json() for r in self.reports]
        return out


def small_jump_ratio_profile(measure: Measure, x_lo: float = 1e-8,
                             x_hi: float = 1e-2, per_decade: int = 4):
    """The ratio x*tail(x) / int_0^x tail(u) du on a log grid.

    The denominator comes from integration by parts as x*tail(x) +
    mean_below(x), so the ratio always lands in (0, 1].  A power tail of
    index -beta gives the constant 1 - beta; the small-x liminf/limsup of
    this ratio are what the drift-free and positive-drift Gumbel regimes
    require (bounded below away from 0, and for the drift case also above
    away from 1).
    """
    decades = math.log10(x_hi / x_lo)
    xs = np.geomspace(x_lo, x_hi, int(round(decades * per_decade)) + 1)
    tails = np.array([float(measure.tail(x)) for x in xs])
    below = np.array([float(measure.mean_below(x)) for x in xs])
    with np.errstate(invalid="ignore"):
        ratios = xs * tails / (xs * tails + below)
    return xs, ratios


def _ratio_reports(measure: Measure, need_upper: bool, margins, grid):
    xs, ratios = small_jump_ratio_profile(measure, grid[0], grid[1])
    lo, hi = float(np.min(ratios)), float(np.max(ratios))
    detail = {"x_lo": grid[0], "x_hi": grid[1], "ratio_min": lo,
              "ratio_max": hi, "margin": margins[0]}
    floor = ConditionReport(
        "small-jump-ratio-floor",
        "holds" if lo > margins[0] else "inconclusive",
        detail,
    )
    reports = [floor]
    if need_upper:
        detail_up = dict(detail, margin=margins[1])
        reports.append(ConditionReport(
            "small-jump-ratio-ceiling",
            "holds" if hi < margins[1] else "inconclusive",
            detail_up,
        ))
    return reports


def _necessary_reports(unit: LevySpec):
    """Why no Fréchet regime: the moment condition E[e^{g xi_1}] <= 1 status."""
    name = "power-tail-moment-condition"
    try:
        psi1 = mgf_exponent(unit, 1e-6)
    except Exception as exc:  # measure-level transforms may refuse outright
        return [ConditionReport(name, "inconclusive",
                                {"note": f"exponent unavailable: {exc}"})]
    if psi1 > 0:
        return [ConditionReport(
            name, "fails",
            {"note": "exponent positive arbitrarily close to 0: "
                     "E[e^{g xi_1}] > 1 for every g > 0"})]
    # scan for the supremum of {g : psi(g) <= 0}
    lo, hi = 0.0, 1.0
    while mgf_exponent(unit, hi) == math.inf and hi > 1e-8:
        hi /= 2.0
    while mgf_exponent(unit, hi) <= 0.0:
        lo = hi
        hi *= 2.0
        if hi > 1e6:
            return [ConditionReport(
                name, "inconclusive",
                {"sup_gamma": lo,
                 "note": "exponent stays nonpositive past 1e6; no root"})]
        while mgf_exponent(unit, hi) == math.inf:
            hi = 0.5 * (lo + hi)
            if hi - lo < 1e-12 * max(1.0, lo):
                return [ConditionReport(
                    name, "inconclusive",
                    {"sup_gamma": lo,
                     "note": "exponent jumps to +inf at the domain edge "
                             "without crossing zero; a power-tail entry "
                             "needs an asserted index"})]
    return [ConditionReport(
        name, "inconclusive",
        {"sup_gamma": hi, "note": "no exact root located"})]


def classify(spec: LevySpec, *, assume_tail_index: float | None = None,
             ratio_margins=(0.05, 0.95),
             ratio_grid=(1e-8, 1e-2)) -> YaglomClassification:
    """Decide the regime of the lifetime law of the associated process.

    Works on the unit-index rescaling throughout (every downstream formula
    does too).  Raises Inconclusive when a small-jump ratio verdict lands
    inside the margin band, and MayDiverge when the lifetime integral is not
    guaranteed finite.  `assume_tail_index` opts a non-monotone spec into the
    Fréchet regime by asserting the power-tail index directly; no factor
    sampler exists down that route, only empirical validation.
    """
    unit = to_unit_index(spec)
    check_finiteness(unit)
    monotone = unit.is_subordinator_neg()

    if monotone:
        measure, q, d = unit.jumps_neg, unit.killing, unit.d
        mass = float(measure.mass()) if measure is not None else 0.0
        if d > 0 and math.isfinite(mass):
            rep = ConditionReport(
                "finite-activity-with-drift", "holds",
                {"drift": d, "jump_mass": mass, "killing": q})
            return YaglomClassification(
                regime="weibull", qs_exists=True, t_f=1.0 / d, spec=unit,
                gamma0=(mass + q) / d, reports=(rep,))
        if d > 0:
            reports = _ratio_reports(measure, True, ratio_margins, ratio_grid)
            if all(r.verdict == "holds" for r in reports):
                return YaglomClassification(
                    regime="gumbel-positive-drift", qs_exists=True,
                    t_f=1.0 / d, spec=unit, reports=tuple(reports))
            raise Inconclusive(
                "small-jump ratio verdict inside the margin band for the "
                "positive-drift regime", report=tuple(reports))
        # drift-free
        if measure is None:
            rep = ConditionReport(
                "small-jump-ratio-floor", "holds",
                {"note": "no jump measure: the lifetime is the kill clock"})
            reports = [rep]
        else:
            reports = _ratio_reports(measure, False, ratio_margins, ratio_grid)
        if all(r.verdict == "holds" for r in reports):
            return YaglomClassification(
                regime="gumbel-drift-free", qs_exists=True, t_f=math.inf,
                spec=unit, reports=tuple(reports))
        raise Inconclusive(
            "small-jump ratio verdict inside the margin band for the "
            "drift-free regime", report=tuple(reports))

    # --- non-monotone ------------------------------------------------------
    if assume_tail_index is not None:
        if not assume_tail_index > 0:
            raise ValueError("asserted tail index must be positive")
        rep = ConditionReport(
            "asserted-regular-variation", "info",
            {"gamma": assume_tail_index,
             "note": "user-asserted power tail; no factor sampler attached"})
        return YaglomClassification(
            regime="frechet", qs_exists=False, t_f=math.inf, spec=unit,
            gamma=float(assume_tail_index), via="asserted-regular-variation",
            reports=(rep,))
    try:
        root = cramer_root(unit)
    except (NonConvergence, InvalidMeasure):
        root = None
    if root is not None:
        delta = 1e-6 * max(root, 1.0)
        above = mgf_exponent(unit, root + delta)
        reports = [
            ConditionReport(
                "exponent-root", "holds",
                {"gamma": root, "residual": mgf_exponent(unit, root)}),
            ConditionReport(
                "strict-increase-past-root",
                "holds" if above > 0 else "inconclusive",
                {"probe": root + delta, "value": above}),
        ]
        return YaglomClassification(
            regime="frechet", qs_exists=False, t_f=math.inf, spec=unit,
            gamma=root, via="exponent-root", reports=tuple(reports))
    reports = _necessary_reports(unit)
    return YaglomClassification(
        regime="none-known", qs_exists=False, t_f=math.inf, spec=unit,
        reports=tuple(reports))


# ---------------------------------------------------------------------------
# factor laws
# ---------------------------------------------------------------------------

@dataclass
class FactorLaw:
    """A regime factor, represented by exact moments plus optional samplers.

    The product of the factor with an independent copy of the lifetime
    integral is Exp(1) ("exp"), Beta(1, gamma) ("beta") or Pareto(gamma)
    ("pareto").  Densities are never reconstructed from the moments.
    """

    kind: str
    moments: MomentSequence
    gamma: float | None = None
    support_sup: float | None = None
    sample: WeightedSample | None = None
    sampler: Callable[[int, int], WeightedSample] | None = None
    closed_form: str | None = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NotFactorizable:
    """Verdict value: the requested factor does not exist, and why."""

    condition: str
    detail: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return False


def exp_factor_moments(spec: LevySpec, n: int) -> FactorLaw:
    """Moments prod_{i<=n} phi(i) of the exponential-product factor R.

    R times an independent lifetime integral is exactly Exp(1); phi is the
    unit-index Laplace exponent.
    """
    unit = to_unit_index(spec)
    if not unit.is_subordinator_neg():
        raise NotASubordinator("the exponential factor needs a monotone spec")
    if n < 1:
        raise ValueError("need at least one moment")
    phis = np.array([laplace_exponent(unit, float(i)) for i in range(1, n + 1)])
    return FactorLaw(
        kind="exp",
        moments=MomentSequence(moments=np.cumprod(phis),
                               infinite=np.zeros(n, dtype=bool),
                               source="recursion"),
    )


def beta_factor(spec: LevySpec, gamma: float, n: int = 8):
    """The Beta(1, gamma) complement factor J, when it exists.

    Existence needs a monotone spec with positive drift, finite jump
    activity and (mass + killing) <= drift * gamma; the verdict is returned
    as a value, never raised.  Moments are prod phi(i)/(i + gamma) and the
    law is supported on (0, d].
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    unit = to_unit_index(spec)
    if not unit.is_subordinator_neg():
        return NotFactorizable("monotone", {"note": "spec is not monotone"})
    d = unit.d
    if not d > 0:
        return NotFactorizable("positive-drift", {"drift": d})
    mass = float(unit.jumps_neg.mass()) if unit.jumps_neg is not None else 0.0
    if not math.isfinite(mass):
        return NotFactorizable("finite-activity", {"jump_mass": mass})
    budget = d * gamma
    if mass + unit.killing > budget * (1.0 + 1e-12):
        return NotFactorizable(
            "mass-condition",
            {"jump_mass": mass, "killing": unit.killing, "drift": d,
             "gamma": gamma, "required": (mass + unit.killing) / d})
    phis = np.array([laplace_exponent(unit, float(i)) for i in range(1, n + 1)])
    mom = np.cumprod(phis / (np.arange(1, n + 1) + gamma))
    return FactorLaw(
        kind="beta", gamma=float(gamma), support_sup=d,
        moments=MomentSequence(moments=mom, infinite=np.zeros(n, dtype=bool),
                               source="recursion"),
    )


def negate(spec: LevySpec) -> LevySpec:
    """The spec of -xi (jump directions swapped, drift reversed)."""
    if spec.mgf_override is not None:
        raise ValueError("cannot negate a closed-form exponent spec")
    return LevySpec(
        drift=-spec.drift, sigma=spec.sigma,
        jumps_pos=spec.jumps_neg, jumps_neg=spec.jumps_pos,
        killing=spec.killing, alpha=spec.alpha,
    )


def _pareto_moments(unit: LevySpec, gamma: float, n: int) -> MomentSequence:
    """E[J^k] = prod_{j<=k} (-psi(j)) / (gamma - j), valid only for k < gamma.

    This is the moment transfer of J * I = Pareto(gamma): Pareto moments are
    prod j/(gamma - j) and the lifetime moments divide out as k!/prod(-psi).
    Pareto moments of order k >= gamma diverge, so the transfer says nothing
    about the factor's own moments there — the sequence is truncated, not
    flagged divergent.
    """
    mom = []
    cur = 1.0
    for k in range(1, n + 1):
        if not k < gamma:
            break
        psi_k = mgf_exponent(unit, float(k))
        if not psi_k < 0:
            break
        cur *= -psi_k / (gamma - k)
        mom.append(cur)
    m = len(mom)
    return MomentSequence(moments=np.array(mom),
                          infinite=np.zeros(m, dtype=bool),
                          source="recursion")


def _level_mixture_sample(unit: LevySpec, gamma: float, n: int, seed: int, *,
                          levels: int, x_min: float | None,
                          x_max: float | None, threads: int,
                          meta: dict) -> WeightedSample:
    """Importance sample of the Pareto factor below the exponent root.

    The target is the start-level mixture gamma x^{-1-gamma} P_x(X_1 in dy,
    survival past 1) dx; the proposal stratifies log-uniformly over
    [x_min, x_max] (equal log cells, so the cell weight is x^{-gamma}), and
    each level runs the clock-crossing kernel at target 1/x, emitting
    x * e^{xi} on the replicas that cross.  The truncated mixture mass on
    both sides is bounded from a pilot lifetime sample and reported.
    """
    pilot = sample_functional(unit, 4096, seed, threads=threads,
                              offset=_MIXTURE_OFFSET - 4096)
    pv = pilot.values
    i_gamma = float(np.mean(pv**gamma))
    if x_max is None:
        x_max = (1e3 / i_gamma) ** (1.0 / gamma)
    if x_min is None:
        # Levels below x_min are dropped, losing the mixture mass carried by
        # lifetimes beyond 1/x_min.  That mass is gamma-weighted, so pick the
        # cutoff from the weighted pilot tail, not the plain quantile.
        srt = np.sort(pv)[::-1]
        frac = np.cumsum(srt**gamma) / (pv.size * i_gamma)
        x_min = 1.0 / float(srt[min(int(np.searchsorted(frac, 5e-3)),
                                    pv.size - 1)])
    if not 0 < x_min < x_max:
        raise ValueError("need 0 < x_min < x_max for the level mixture")
    rel_above = x_max ** (-gamma) / i_gamma
    rel_below = float(np.mean(pv**gamma * (pv >= 1.0 / x_min))) / i_gamma
    meta.update(i_gamma=i_gamma, x_min=x_min, x_max=x_max,
                truncated_above=rel_above, truncated_below=rel_below)

    tscale = _time_scale(unit)
    eps = auto_cutoff(unit, tscale)
    b, sigma, ch_neg, ch_pos, _ = kernel_inputs(unit, eps,
                                                gaussian_substitution=True)
    grid = sigma > 0
    q_cert = 0.0
    if unit.killing == 0:
        q_cert = 4.0 * float(np.quantile(pv, 0.9999))
    xs = np.geomspace(x_min, x_max, levels)
    m = -(-n // levels)  # ceil
    vals, wts = [], []
    crossed_total = 0
    for j, x in enumerate(xs):
        arg = 1.0 / x
        if grid:
            args = K.grid_args(b, sigma, unit.killing, ch_neg, ch_pos,
                               1e-3 * tscale, K.POLICY_TARGET, arg,
                               q_cert=q_cert)
        else:
            args = K.event_args(b, unit.killing, ch_neg, ch_pos,
                                K.POLICY_TARGET, arg, q_cert=q_cert)
        _, xi_out, status, _ = K.run_batch(
            seed, m, args, grid=grid, threads=threads,
            offset=_MIXTURE_OFFSET + j * m)
        hit = status == K.ST_CROSSED
        crossed_total += int(np.sum(hit))
        if np.any(hit):
            vals.append(x * np.exp(xi_out[hit]))
            wts.append(np.full(int(np.sum(hit)), x ** (-gamma)))
    meta["acceptance"] = crossed_total / (levels * m)
    if not vals:
        raise RareEvent("no replica survived past time 1 at any start level")
    return WeightedSample(np.concatenate(vals), np.concatenate(wts))


def pareto_factor(spec: LevySpec, gamma: float, *, n: int = 20_000,
                  seed: int = 0, threads: int = 1, n_moments: int = 8,
                  levels: int = 64, x_min: float | None = None,
                  x_max: float | None = None) -> FactorLaw:
    """The Pareto(gamma) complement factor J, with a weighted sampler.

    Exists iff E[e^{gamma xi_1}] <= 1.  At equality (the exponent-root case)
    the sampler draws the lifetime integral of the reversed tilted spec and
    emits (1/I*, weight (I*)^{gamma-1}), self-normalized; strictly below 1
    it runs the start-level mixture of `_level_mixture_sample`.  Either way
    the returned sample carries its effective sample size.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    unit = to_unit_index(spec)
    psi_g = mgf_exponent(unit, gamma)
    if psi_g > 1e-12:
        raise NotFactorizableError(
            f"E[e^(gamma xi_1)] = e^{psi_g:.3e} exceeds 1 at gamma={gamma:g}")
    meta: dict = {"psi_gamma": psi_g}
    if abs(psi_g) <= 1e-9:
        meta["case"] = "exponent-root"
        flipped = negate(esscher_tilt(unit, gamma))

        def sampler(m: int, s: int, _spec=flipped, _g=gamma,
                    _threads=threads) -> WeightedSample:
            istar = sample_functional(_spec, m, s, threads=_threads).values
            return WeightedSample(1.0 / istar, istar ** (_g - 1.0))

    else:
        meta["case"] = "below-root"

        def sampler(m: int, s: int, _unit=unit, _g=gamma, _threads=threads,
                    _meta=meta) -> WeightedSample:
            return _level_mixture_sample(
                _unit, _g, m, s, levels=levels, x_min=x_min, x_max=x_max,
                threads=_threads, meta=_meta)

    sample = sampler(n, seed)
    meta["ess"] = sample.ess
    return FactorLaw(
        kind="pareto", gamma=float(gamma),
        moments=_pareto_moments(unit, gamma, n_moments),
        sample=sample, sampler=sampler, meta=meta,
    )
