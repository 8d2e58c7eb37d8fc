"""Scale solver: closed forms, round trips, and the four regime normalizers."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from pssmp import LevySpec
from pssmp.errors import NoYaglomRegime, OutOfDomain
from pssmp.measures import ExpTail, FiniteTable, LampertiTail, StableTail
from pssmp.norming import NormalizerFn, normalizer, solve_scale
from scipy import special


def forward(measure, q, u):
    lam = q + (measure.lap_integral(u) if measure is not None else 0.0)
    return u / lam


def test_pure_killing_identity():
    assert solve_scale(None, 1.0, 3.5) == 3.5
    assert solve_scale(None, 2.0, 3.5) == 7.0
    with pytest.raises(OutOfDomain):
        solve_scale(None, 0.0, 1.0)


def test_exp_tail_closed_form():
    m = ExpTail(2.0, 3.0)  # mass 2, decay 3: u = q_m t - rho for q=0
    for t in (2.0, 5.0, 40.0):
        u = solve_scale(m, 0.0, t)
        assert abs(u - (2.0 * t - 3.0)) < 1e-12 * (2 * t)
        assert abs(forward(m, 0.0, u) - t) < 1e-12 * t
    # below the q=0 endpoint rho/mass = 1.5
    with pytest.raises(OutOfDomain):
        solve_scale(m, 0.0, 1.5)
    with pytest.raises(OutOfDomain):
        solve_scale(m, 0.0, 0.3)


def test_exp_tail_with_killing_quadratic():
    m = ExpTail(2.0, 3.0)
    for t in (0.01, 1.0, 100.0):
        u = solve_scale(m, 0.7, t)
        assert abs(forward(m, 0.7, u) - t) < 1e-12 * t


def test_stable_round_trip():
    alpha = 0.5
    c = alpha / special.gamma(1 - alpha)
    m = LampertiTail(c, alpha, "neg")
    q = c / alpha
    for t in (1.0, 10.0, 100.0):
        u = solve_scale(m, q, t)
        assert abs(forward(m, q, u) - t) < 1e-10 * t


def test_monotone_on_grid():
    m = StableTail(0.6, 0.5)
    ts = np.logspace(-2, 4, 25)
    us = [solve_scale(m, 0.25, t) for t in ts]
    assert np.all(np.diff(us) > 0)
    for t, u in zip(ts, us):
        assert abs(forward(m, 0.25, u) - t) < 1e-10 * t


def test_finite_measure_limit():
    # u(t)/t -> mass + q for finite measures at large t
    m = FiniteTable((0.5, 2.0), (0.8, 0.7))
    q = 0.5
    t = 1e4 / (m.mass() + q)
    u = solve_scale(m, q, t)
    assert abs(u / t - (m.mass() + q)) < 0.01 * (m.mass() + q)


def classified(spec, regime):
    return SimpleNamespace(spec=spec, regime=regime)


def test_weibull_and_frechet_exact():
    spec = LevySpec(drift=-1.0, jumps_neg=FiniteTable((1.0,), (1.0,)), killing=1.0)
    g = normalizer(classified(spec, "weibull"))
    assert g(0.25) == 0.75
    assert g.t_hi == 1.0
    with pytest.raises(OutOfDomain):
        g(1.5)
    gf = normalizer(classified(spec, "frechet"))
    assert gf(7.0) == 7.0


def test_gumbel_drift_free_finite_limit():
    # finite total mass + killing = 2: g(t) -> 1/2
    spec = LevySpec(jumps_neg=FiniteTable((1.0,), (1.0,)), killing=1.0)
    g = normalizer(classified(spec, "gumbel-drift-free"))
    val = g(1e3)
    assert 0.49 < val < 0.51


def test_gumbel_positive_drift_domain():
    spec = LevySpec(drift=-0.5, jumps_neg=StableTail(0.6, 0.5))
    g = normalizer(classified(spec, "gumbel-positive-drift"))
    assert g.t_hi == 2.0
    assert g(1.0) > 0
    with pytest.raises(OutOfDomain):
        g(2.0)
    # killing is ignored by construction: same g with q > 0
    spec_q = LevySpec(drift=-0.5, jumps_neg=StableTail(0.6, 0.5), killing=3.0)
    gq = normalizer(classified(spec_q, "gumbel-positive-drift"))
    assert gq(1.0) == g(1.0)


def test_unknown_regime():
    with pytest.raises(NoYaglomRegime):
        normalizer(classified(LevySpec(), "none"))
