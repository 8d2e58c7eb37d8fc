"""Shared fixtures: the recurring benchmark specs in unit-index form."""

import math

import pytest
from scipy import special

from pssmp.levyspec import LevySpec, to_unit_index
from pssmp.measures import LampertiTail


def make_stable_unit(alpha: float) -> LevySpec:
    """Stable subordinator of index alpha, rescaled to self-similarity 1."""
    c = alpha / special.gamma(1.0 - alpha)
    base = LevySpec(
        jumps_neg=LampertiTail(c, alpha, "neg"), killing=c / alpha, alpha=alpha
    )
    return to_unit_index(base)


def make_killed_stable(alpha: float, rho: float) -> LevySpec:
    """Strictly stable process absorbed on leaving (0, inf).

    The log of the process before absorption has two-sided Lamperti jump
    tails plus killing, and its exponent reduces (reflection formula) to a
    single gamma-product expression that stays analytic through alpha = 1:

        psi(u) = -Gamma(alpha - u) Gamma(1 + u)
                 sin(pi (alpha (1 - rho) - u)) / Gamma(1 + alpha)

    with positivity parameter rho = P(jump up); the killing rate is
    -psi(0) = sin(pi alpha (1 - rho)) / alpha after normalization.
    """
    cp = math.sin(math.pi * alpha * rho)
    cm = math.sin(math.pi * alpha * (1.0 - rho))

    def psi(u: float, _a: float = alpha, _r: float = rho) -> float:
        return (
            -special.gamma(_a - u)
            * special.gamma(1.0 + u)
            * math.sin(math.pi * (_a * (1.0 - _r) - u))
            / special.gamma(1.0 + _a)
        )

    return LevySpec(
        jumps_pos=LampertiTail(cp, alpha, "pos"),
        jumps_neg=LampertiTail(cm, alpha, "neg"),
        killing=cm / alpha,
        alpha=alpha,
        mgf_override=psi,
        mgf_domain=alpha,
    )


def make_csbp(alpha: float) -> LevySpec:
    """Continuous-state branching process with stable branching mechanism.

    Absorption at 0 happens in finite time for alpha in (1, 2); the Lamperti
    representation has self-similarity index alpha - 1 and one-sided positive
    jumps whose compensated exponent is the gamma product below.
    """
    cp = alpha * (alpha - 1.0) / special.gamma(2.0 - alpha)
    m = cp * special.gamma(alpha) * special.gamma(-alpha)

    def psi(u: float, _m: float = m, _a: float = alpha) -> float:
        return (
            -(_m / special.gamma(_a))
            * u
            * special.gamma(_a - u)
            * special.rgamma(1.0 - u)
        )

    return LevySpec(
        jumps_pos=LampertiTail(cp, alpha, "pos"),
        alpha=alpha - 1.0,
        mgf_override=psi,
        mgf_domain=alpha,
    )


@pytest.fixture(scope="session")
def stable_unit_half() -> LevySpec:
    return make_stable_unit(0.5)
