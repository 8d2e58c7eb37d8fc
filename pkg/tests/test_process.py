"""Survival-conditioned marginals: exact cases, law identities, invariance."""

import math

import numpy as np
import pytest

from pssmp.classify import classify
from pssmp.errors import RareEvent
from pssmp.levyspec import LevySpec
from pssmp.measures import ExpTail
from pssmp.norming import normalizer
from pssmp.process import (
    residual_identity_check,
    sample_U_conditioned,
    sample_X_conditioned,
)
from pssmp.lifetime import sample_functional
from pssmp.stats import ks_one_sample, ks_two_sample

# Pure killed drift: the path is X_t = x0 - t until an Exp(1) kill clock on
# the log time scale fires, so I ~ U(0,1) and the surviving marginal is a
# point mass -- every conditional statement below has a closed form.
KD = LevySpec(drift=-1.0, killing=1.0)
# Adding unit-mean exponential downward jumps keeps the event kernel exact
# but makes the marginal genuinely random.
DRIFT_EXP = LevySpec(drift=-1.0, jumps_neg=ExpTail(1.0, 1.0), killing=1.0)
# Brownian motion with drift -1: lifetime integral 2/gamma_2 (tail index 2).
BM = LevySpec(drift=-1.0, sigma=1.0)


class TestMarginal:
    def test_pure_drift_exact(self):
        m = sample_X_conditioned(KD, 1.0, 0.3, 500, seed=3)
        assert np.max(np.abs(m.values - 0.7)) < 1e-12
        # survival needs the kill clock past -log(0.7)
        assert abs(m.acceptance_rate - 0.7) < 0.02
        assert m.n_total >= 500
        assert m.normalizer == "identity"

    def test_t_zero_trivial(self):
        m = sample_X_conditioned(KD, 2.5, 0.0, 64)
        assert np.all(m.values == 2.5)
        assert m.acceptance_rate == 1.0

    def test_index_change_exact(self):
        # with self-similarity index 2 the squared process carries the clock
        # and its log drift doubles, so X_t = sqrt(x0^2 - 2t) for the pure
        # killed drift; the survival odds follow the same closed form
        spec = LevySpec(drift=-1.0, killing=1.0, alpha=2.0)
        m = sample_X_conditioned(spec, 1.5, 1.0, 200, seed=5)
        assert np.max(np.abs(m.values - math.sqrt(0.25))) < 1e-12
        assert abs(m.acceptance_rate - 1.0 / 3.0) < 0.03

    def test_monotone_marginal_below_start(self):
        m = sample_X_conditioned(DRIFT_EXP, 1.0, 0.4, 2000, seed=1)
        assert np.all(m.values > 0)
        assert np.all(m.values < 1.0)

    def test_weibull_normalizer_label_and_value(self):
        # the weibull normalizer for the pure killed drift is 1 - t, which
        # cancels the deterministic marginal exactly
        g = normalizer(classify(KD))
        m = sample_X_conditioned(KD, 1.0, 0.6, 100, seed=2, g=g)
        assert m.normalizer == "weibull"
        assert np.max(np.abs(m.values - 1.0)) < 1e-12

    def test_thread_count_invariance(self):
        a = sample_X_conditioned(BM, 1.0, 0.5, 400, seed=17, threads=1)
        b = sample_X_conditioned(BM, 1.0, 0.5, 400, seed=17, threads=4)
        assert np.array_equal(a.values, b.values)
        assert a.acceptance_rate == b.acceptance_rate

    def test_certification_only_when_unkilled(self):
        killed = sample_X_conditioned(DRIFT_EXP, 1.0, 0.2, 200, seed=4)
        free = sample_X_conditioned(BM, 1.0, 0.2, 200, seed=4)
        assert killed.meta["q_cert"] == 0.0
        assert free.meta["q_cert"] > 0.0

    def test_self_similarity_in_law(self):
        # c X_{t/c} under P_x must match X_t under P_{cx}; distinct seeds
        # keep the comparison honest
        a = sample_X_conditioned(DRIFT_EXP, 1.0, 0.4, 5000, seed=31)
        b = sample_X_conditioned(DRIFT_EXP, 2.0, 0.8, 5000, seed=77)
        assert ks_two_sample(2.0 * a.values, b.values) < 0.035

    def test_acceptance_is_survival_probability(self):
        # KD lifetime is uniform, so conditioning on t = 0.3 accepts 70%
        m = sample_X_conditioned(KD, 1.0, 0.3, 2000, seed=9)
        se = math.sqrt(0.3 * 0.7 / m.n_total)
        assert abs(m.acceptance_rate - 0.7) < 4 * se

    def test_acceptance_matches_functional_tail(self):
        t = 0.6
        m = sample_X_conditioned(DRIFT_EXP, 1.0, t, 3000, seed=12)
        batch = sample_functional(DRIFT_EXP, 20_000, seed=13)
        surv = float(np.mean(batch.values > t))
        se = math.sqrt(surv * (1 - surv) * (1 / m.n_total + 1 / 20_000))
        assert abs(m.acceptance_rate - surv) < 4 * se

    def test_rare_event_beyond_support(self):
        with pytest.raises(RareEvent):
            sample_X_conditioned(KD, 1.0, 1.2, 100)

    def test_rare_event_floor(self):
        with pytest.raises(RareEvent):
            sample_X_conditioned(KD, 1.0, 0.9995, 5000, seed=0, floor=0.05)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            sample_X_conditioned(KD, 0.0, 0.1, 10)
        with pytest.raises(ValueError):
            sample_X_conditioned(KD, 1.0, -0.1, 10)
        with pytest.raises(ValueError):
            sample_X_conditioned(KD, 1.0, 0.1, 0)

    def test_json_and_csv_shapes(self):
        m = sample_X_conditioned(KD, 1.0, 0.3, 50, seed=3)
        j = m.to_json()
        assert set(j) == {"t", "n_accepted", "acceptance_rate", "normalizer"}
        assert j["n_accepted"] == 50
        assert 0 < j["acceptance_rate"] <= 1
        lines = m.to_csv().split("\r\n")
        assert lines[0] == "sample,weight"
        assert len(lines) == 52 and lines[-1] == ""
        v, w = lines[1].split(",")
        assert float(v) > 0 and w == "1"


class TestStationaryScale:
    def test_t_zero_is_start(self):
        u = sample_U_conditioned(KD, 1.7, 0.0, 16)
        assert np.all(u.values == 1.7)
        assert u.acceptance_rate == 1.0

    def test_scalar_start_closed_form(self):
        # KD: X'_h = x0 - h on survival, so U_t = e^{-t} (x0 - (e^t - 1))
        t = 0.3
        u = sample_U_conditioned(KD, 1.0, t, 300, seed=8)
        want = math.exp(-t) * (2.0 - math.exp(t))
        assert np.max(np.abs(u.values - want)) < 1e-12
        assert u.normalizer == "ou"

    def test_array_starts_closed_form(self):
        t = 0.2
        starts = np.array([1.0, 1.5, 2.0, 3.0])
        u = sample_U_conditioned(KD, starts, t, 200, seed=21)
        want = math.exp(-t) * (starts - math.expm1(t))
        dist = np.min(np.abs(u.values[:, None] - want[None, :]), axis=1)
        assert np.max(dist) < 1e-12
        assert u.values.size == 200
        assert 0 < u.acceptance_rate <= 1

    def test_array_starts_reject_nonpositive(self):
        with pytest.raises(ValueError):
            sample_U_conditioned(KD, np.array([1.0, -2.0]), 0.1, 10)


class TestResidualIdentity:
    def test_t_zero_reduces_to_lifetime_law(self):
        rep = residual_identity_check(KD, 0.0, n=8000, seed=6)
        assert rep.ks < 0.02
        assert rep.passed
        assert rep.acceptance_residual == 1.0

    def test_killed_drift_exact_uniform(self):
        # both sides must be U(0, 0.5): the residual of a uniform lifetime,
        # and (1 - t) times an independent uniform lifetime
        rep = residual_identity_check(KD, 0.5, n=8000, seed=2)
        assert rep.ks < 0.025
        assert rep.passed

    def test_brownian_unit_time(self):
        rep = residual_identity_check(BM, 1.0, n=4000, seed=14)
        assert rep.ks < 0.04

    def test_report_json(self):
        rep = residual_identity_check(KD, 0.25, n=2000, seed=3)
        j = rep.to_json()
        assert set(j) == {"t", "ks", "n", "threshold", "passed",
                          "acceptance_residual", "acceptance_marginal"}
        assert j["passed"] is (j["ks"] < j["threshold"])


def test_killed_drift_marginal_scaled_is_uniform():
    # side check used by the residual identity: (surviving marginal at t)
    # times a fresh lifetime is uniform on (0, 1 - t) for the killed drift
    t = 0.5
    m = sample_X_conditioned(KD, 1.0, t, 6000, seed=4)
    fresh = sample_functional(KD, 6000, seed=44)
    ks = ks_one_sample(m.values * fresh.values,
                       lambda x: np.clip(x / (1 - t), 0.0, 1.0))
    assert ks < 0.025
