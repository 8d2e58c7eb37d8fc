"""Density solver and hazard iteration against closed-form subordinator laws."""

import math

import numpy as np
import pytest
from scipy import special

from pssmp import LevySpec
from pssmp.density import solve_functional_density
from pssmp.errors import (
    MalformedSpec,
    NoConvergence,
    NotASubordinator,
    NoYaglomRegime,
)
from pssmp.hazard import hazard_iteration, tail_decay_check
from pssmp.levyspec import to_unit_index
from pssmp.lifetime import functional_moments
from pssmp.measures import ExpTail, LampertiTail
from pssmp.norming import solve_scale


KILLED_DRIFT = LevySpec(drift=-1.0, killing=1.0)
DRIFT_EXP = LevySpec(drift=-1.0, jumps_neg=ExpTail(1.0, 1.0))


def stable_sub(alpha: float) -> LevySpec:
    c = alpha / special.gamma(1.0 - alpha)
    return LevySpec(
        jumps_neg=LampertiTail(c, alpha, "neg"), killing=c / alpha, alpha=alpha
    )


def test_killed_drift_uniform_density():
    g = solve_functional_density(KILLED_DRIFT, n_nodes=1024)
    assert np.max(np.abs(g.values - 1.0)) < 1e-3
    assert abs(g.mass() - 1.0) < 1e-6
    assert g.t_f == 1.0
    assert g.density_at(1.5) == 0.0
    assert g.survival(2.0) == 0.0
    # (1/d - t) k(t) / P(I>t) == 1 exactly for the uniform law
    t = 0.95
    ratio = (1.0 - t) * g.density_at(t) / g.survival(t)
    assert abs(ratio - 1.0) < 0.1


def test_drift_exp_jump_beta_density():
    g = solve_functional_density(DRIFT_EXP, n_nodes=1024)
    assert np.max(np.abs(g.values - 2.0 * g.nodes)) < 1e-3
    assert abs(g.mass() - 1.0) < 1e-6
    for n in (1, 2, 3):
        truth = 2.0 / (n + 2.0)  # moments of Beta(2,1)
        assert abs(g.moment(n) - truth) < 1e-2 * truth


def test_stable_density_half_normal():
    spec = to_unit_index(stable_sub(0.5))
    g = solve_functional_density(spec, n_nodes=1024)
    mus = functional_moments(spec, 3).moments
    for n in (1, 2, 3):
        assert abs(g.moment(n) - mus[n - 1]) < 1e-2 * mus[n - 1]
    inner = g.nodes <= 6.0
    truth = np.exp(-g.nodes[inner] ** 2 / 4.0) / math.sqrt(math.pi)
    assert np.max(np.abs(g.values[inner] - truth)) < 5e-3
    assert abs(g.values[0] - 1.0 / math.sqrt(math.pi)) < 5e-3


def test_density_properties():
    g = solve_functional_density(DRIFT_EXP, n_nodes=512)
    assert np.all(g.values >= 0)
    cum = g.cumulative()
    assert np.all(np.diff(cum) >= 0)
    assert g.residual < 1e-6
    lines = g.to_csv().split("\r\n")
    assert lines[0] == "x,k,cumulative"
    assert len(lines) == 514
    x0, k0, c0 = (float(v) for v in lines[1].split(","))
    assert x0 == g.nodes[0] and k0 == g.values[0]


def test_density_guards():
    with pytest.raises(NotASubordinator):
        solve_functional_density(LevySpec(drift=-1.0, sigma=1.0, killing=1.0))
    with pytest.raises(NotASubordinator):
        solve_functional_density(LevySpec(drift=-1.0))  # point mass, no density
    with pytest.raises(NoConvergence) as err:
        solve_functional_density(DRIFT_EXP, n_nodes=256, max_iter=1)
    assert err.value.residual is not None


# ---------------------------------------------------------------------------
# hazard iteration
# ---------------------------------------------------------------------------

def test_hazard_pure_killing():
    spec = LevySpec(killing=1.0)
    t = hazard_iteration(spec)
    assert np.all(t.values == 1.0)


def test_hazard_finite_measure_limit():
    spec = LevySpec(jumps_neg=ExpTail(1.0, 1.0), killing=1.0)
    t = hazard_iteration(spec, n_nodes=512, x_max=1e3)
    assert abs(t.values[-1] - 2.0) < 0.05 * 2.0
    assert t.sup_change < 1e-6


def test_hazard_stable_matches_scale_solve():
    spec = stable_sub(0.5)
    t = hazard_iteration(spec, n_nodes=512, x_max=1e3, n_iter=80)
    u = solve_scale(spec.jumps_neg, spec.killing, 1e3)
    ratio = t.values[-1] * 1e3 / u
    assert 0.8 < ratio < 1.25


def test_hazard_monotone_on_upper_half():
    spec = stable_sub(0.5)
    runs = [
        hazard_iteration(spec, n_nodes=256, x_max=100.0, n_iter=k).values
        for k in (3, 4, 5)
    ]
    for a, b in zip(runs, runs[1:]):
        assert np.all(b[128:] >= a[128:] - 1e-12)


def test_hazard_guards():
    with pytest.raises(NotASubordinator):
        hazard_iteration(LevySpec(drift=-1.0, sigma=1.0, killing=1.0))
    with pytest.raises(MalformedSpec):
        hazard_iteration(KILLED_DRIFT)  # positive drift (of -xi)


# ---------------------------------------------------------------------------
# decay-rate check
# ---------------------------------------------------------------------------

def test_decay_check_stable():
    spec = to_unit_index(stable_sub(0.5))
    g = solve_functional_density(spec, n_nodes=1024)
    rep = tail_decay_check(spec, "gumbel-drift-free", g)
    up = rep.upper_decade()
    assert up.size > 0
    assert 0.8 < up[-1] < 1.25


def test_decay_check_finite_measure():
    # drift-free with finite measure: both sides -> m + q, ratio -> 1
    spec = LevySpec(jumps_neg=ExpTail(1.0, 1.0), killing=1.0)
    g = solve_functional_density(spec, n_nodes=1024)
    rep = tail_decay_check(spec, "gumbel-drift-free", g)
    assert abs(rep.ratios[-1] - 1.0) < 0.15


def test_decay_check_positive_drift_needs_infinite_measure():
    g = solve_functional_density(DRIFT_EXP, n_nodes=256)
    with pytest.raises(NoYaglomRegime):
        tail_decay_check(DRIFT_EXP, "gumbel-positive-drift", g)
    with pytest.raises(NoYaglomRegime):
        tail_decay_check(DRIFT_EXP, "weibull", g)
