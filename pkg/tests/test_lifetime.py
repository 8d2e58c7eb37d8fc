"""Lifetime-integral module: exact moment recursions and sampler law checks.

Closed-form oracles used below:
  * drift-c subordinator killed at rate q: I ~ Beta(1, q/c)/c, so the killed
    unit-drift unit-rate case is U(0,1) with moments 1/(n+1);
  * unit-index stable subordinator (index a): Mittag-Leffler moments
    n! / Gamma(1 + n a), and for a = 1/2 the law of sqrt(2)|N(0,1)|;
  * Brownian motion minus t: I ~ 2/Gamma(2,1) (reciprocal-gamma), mean 2,
    second moment infinite;
  * drift +1 with negative Exp jumps (mass b, decay b-d): I = (1-B)/B with
    B ~ Beta(d, b-d+1).
"""

import math

import numpy as np
import pytest
from scipy import special, stats

from pssmp import LevySpec
from pssmp.errors import MayDiverge, NotASubordinator, RareEvent
from pssmp.levyspec import rescale, to_unit_index
from pssmp.lifetime import (
    functional_moments,
    residual_samples,
    sample_functional,
    support_bound,
)
from pssmp.measures import ExpTail, LampertiTail


KILLED_DRIFT = LevySpec(drift=-1.0, killing=1.0)
PURE_DRIFT = LevySpec(drift=-1.0)
BM_DRIFT = LevySpec(drift=-1.0, sigma=1.0)
DRIFT_EXP = LevySpec(drift=-1.0, jumps_neg=ExpTail(1.0, 1.0))


def stable_unit(alpha: float) -> LevySpec:
    c = alpha / special.gamma(1.0 - alpha)
    base = LevySpec(
        jumps_neg=LampertiTail(c, alpha, "neg"), killing=c / alpha, alpha=alpha
    )
    return to_unit_index(base)


def rational_spec(delta: float, b: float) -> LevySpec:
    return LevySpec(drift=1.0, jumps_neg=ExpTail(b, b - delta))


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def test_moments_pure_drift():
    ms = functional_moments(PURE_DRIFT, 4)
    assert np.allclose(ms.moments, 1.0, rtol=1e-14)
    assert not ms.infinite.any()
    assert ms.source == "recursion"


def test_moments_killed_drift_both_routes():
    sub = functional_moments(KILLED_DRIFT, 3, method="subordinator")
    gen = functional_moments(KILLED_DRIFT, 3, method="general")
    expect = np.array([1 / 2, 1 / 3, 1 / 4])
    assert np.allclose(sub.moments, expect, rtol=1e-14)
    assert np.max(np.abs(sub.moments - gen.moments)) <= 1e-12
    # auto picks the subordinator route here
    auto = functional_moments(KILLED_DRIFT, 3)
    assert np.array_equal(auto.moments, sub.moments)


def test_moments_subordinator_route_guarded():
    with pytest.raises(NotASubordinator):
        functional_moments(BM_DRIFT, 2, method="subordinator")


def test_moments_stable_mittag_leffler():
    spec = stable_unit(0.5)
    ms = functional_moments(spec, 6)
    expect = [math.factorial(n) / special.gamma(1 + n / 2) for n in range(1, 7)]
    assert np.allclose(ms.moments, expect, rtol=1e-10)
    assert not ms.infinite.any()
    assert abs(ms.moments[0] - 2 / math.sqrt(math.pi)) < 1e-12
    assert abs(ms.moments[1] - 2.0) < 1e-12


def test_moments_brownian_infinite_from_two():
    ms = functional_moments(BM_DRIFT, 4)
    assert abs(ms.moments[0] - 2.0) < 1e-12
    assert np.isinf(ms.moments[1:]).all()
    assert list(ms.infinite) == [False, True, True, True]


def test_moments_rational():
    # psi(k) = k(k-3)/(k+1): mu_1 = 1, mu_2 = 3, mu_3 onwards infinite.
    ms = functional_moments(rational_spec(3.0, 4.0), 4)
    assert abs(ms.moments[0] - 1.0) < 1e-12
    assert abs(ms.moments[1] - 3.0) < 1e-12
    assert ms.infinite[2] and ms.infinite[3]
    # reciprocal-Beta oracle: E[(1-B)/B] = E[1/B] - 1 with B ~ Beta(3, 2),
    # and E[1/B] = (a+c-1)/(a-1) = 2.
    assert abs(ms.moments[0] - ((3 + 2 - 1) / (3 - 1) - 1)) < 1e-15


def test_moments_drift_exp_jump():
    # phi(k) = k + k/(k+1): mu_1 = 2/3, mu_2 = 1/2 (I ~ Beta(2,1)).
    ms = functional_moments(DRIFT_EXP, 2)
    assert np.allclose(ms.moments, [2 / 3, 1 / 2], rtol=1e-14)


def test_moments_log_convexity():
    for spec in (KILLED_DRIFT, DRIFT_EXP, stable_unit(0.5), stable_unit(0.8)):
        assert functional_moments(spec, 5).check_log_convex()


# ---------------------------------------------------------------------------
# support bound / finiteness
# ---------------------------------------------------------------------------

def test_support_bound():
    assert support_bound(KILLED_DRIFT) == 1.0
    assert support_bound(LevySpec(drift=-2.0, jumps_neg=ExpTail(1.0, 1.0))) == 0.5
    assert support_bound(BM_DRIFT) == math.inf
    assert support_bound(stable_unit(0.5)) == math.inf


def test_diverging_specs_rejected():
    with pytest.raises(MayDiverge):
        sample_functional(LevySpec(drift=1.0), 10)
    with pytest.raises(MayDiverge):
        sample_functional(LevySpec(drift=1.0, sigma=1.0), 10)


# ---------------------------------------------------------------------------
# sampling laws
# ---------------------------------------------------------------------------

def test_sample_pure_drift_hits_unit():
    batch = sample_functional(PURE_DRIFT, 64, seed=3)
    assert batch.meta["stop"] == "pathwise-drift-bound"
    assert np.all(batch.values <= 1.0)
    assert np.all(batch.values >= 1.0 - 3e-6)
    assert np.all(batch.tail_bound <= 1e-6 * batch.values + 1e-300)
    assert not batch.killed.any()


def test_sample_killed_drift_uniform():
    n = 10_000
    batch = sample_functional(KILLED_DRIFT, n, seed=11)
    assert batch.killed.all()
    assert np.all(batch.tail_bound == 0.0)
    assert batch.meta["stop"] == "kill-clock (exact)"
    d = stats.kstest(batch.values, stats.uniform.cdf).statistic
    assert d < 0.02
    for k, mu in enumerate([1 / 2, 1 / 3, 1 / 4], start=1):
        emp = batch.values**k
        assert abs(emp.mean() - mu) < 4 * emp.std() / math.sqrt(n)


def test_sample_stable_matches_half_normal():
    n = 20_000
    spec = stable_unit(0.5)
    batch = sample_functional(spec, n, seed=7)
    assert batch.killed.all()
    mu1 = 2 / math.sqrt(math.pi)
    se = batch.values.std() / math.sqrt(n)
    assert abs(batch.values.mean() - mu1) < 4 * se
    # I ~ sqrt(2)|N|: cdf erf(x/2)
    d = stats.kstest(batch.values, lambda x: special.erf(x / 2)).statistic
    assert d < 0.02


def test_sample_dufresne_reciprocal_gamma():
    n = 4_000
    batch = sample_functional(BM_DRIFT, n, seed=19)
    assert batch.meta["stop"] == "mean-remainder-bound"
    assert abs(batch.meta["qbound"] - 2.0) < 1e-12
    # P(I <= x) = P(Gamma(2) >= 2/x)
    d = stats.kstest(batch.values, lambda x: stats.gamma(2.0).sf(2.0 / x)).statistic
    assert d < 0.035
    assert np.all(batch.tail_bound <= 1e-6 * batch.values * (1 + 1e-9))


def test_sample_rational_heavy_tail_pilot():
    n = 5_000
    spec = rational_spec(1.0, 2.0)
    batch = sample_functional(spec, n, seed=23)
    assert batch.meta["stop"] == "pilot-quantile-bound"
    assert batch.meta["qbound"] > 10.0
    # I = (1-B)/B, B ~ Beta(1, 2): P(I <= y) = (y/(1+y))^2
    d = stats.kstest(batch.values, lambda y: (y / (1 + y)) ** 2).statistic
    assert d < 0.03


def test_sample_drift_exp_beta_law():
    n = 10_000
    batch = sample_functional(DRIFT_EXP, n, seed=31)
    assert batch.meta["stop"] == "pathwise-drift-bound"
    d = stats.kstest(batch.values, lambda x: np.clip(x, 0, 1) ** 2).statistic
    assert d < 0.02


def test_sample_support_band():
    # drift-2 subordinator with jumps: values live in (0, 1/2], max near it
    spec = LevySpec(drift=-2.0, jumps_neg=ExpTail(1.0, 1.0))
    batch = sample_functional(spec, 20_000, seed=41)
    assert np.all(batch.values <= 0.5)
    assert batch.values.max() > 0.5 * 0.95


def test_sample_deterministic_and_offset():
    a = sample_functional(KILLED_DRIFT, 2_000, seed=5)
    b = sample_functional(KILLED_DRIFT, 2_000, seed=5, threads=4)
    assert np.array_equal(a.values, b.values)
    tail = sample_functional(KILLED_DRIFT, 500, seed=5, offset=1_500)
    assert np.array_equal(a.values[1_500:], tail.values)
    other = sample_functional(KILLED_DRIFT, 2_000, seed=6)
    assert not np.array_equal(a.values, other.values)


def test_batch_csv():
    batch = sample_functional(KILLED_DRIFT, 5, seed=1)
    lines = batch.to_csv().split("\r\n")
    assert lines[0] == "replica,value,tail_bound,killed"
    assert len(lines) == 7 and lines[-1] == ""
    first = lines[1].split(",")
    assert first[0] == "0" and first[3] == "1"
    assert float(first[1]) == batch.values[0]


# ---------------------------------------------------------------------------
# residual sampling
# ---------------------------------------------------------------------------

def test_residual_killed_drift_uniform():
    res = residual_samples(KILLED_DRIFT, 0.5, 5_000, seed=13)
    assert res.values.shape == (5_000,)
    assert np.all(res.values > 0)
    d = stats.kstest(res.values, lambda x: np.clip(x / 0.5, 0, 1)).statistic
    assert d < 0.03
    # P(I > 0.5) = 0.5
    assert abs(res.acceptance - 0.5) < 3 * 0.5 / math.sqrt(res.n_total)


def test_residual_dufresne_acceptance():
    res = residual_samples(BM_DRIFT, 1.0, 800, seed=17)
    p = 1 - 3 * math.exp(-2)  # P(Gamma(2) < 2)
    se = math.sqrt(p * (1 - p) / res.n_total)
    assert abs(res.acceptance - p) < 3 * se


def test_residual_rare_event():
    with pytest.raises(RareEvent):
        residual_samples(KILLED_DRIFT, 1.5, 100, seed=1)  # beyond the support
    with pytest.raises(RareEvent):
        residual_samples(KILLED_DRIFT, 0.99999, 100, seed=1)  # acceptance 1e-5
