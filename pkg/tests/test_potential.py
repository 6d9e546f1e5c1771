import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acgibbs.errors import ConfigError, InvalidPotentialError
from acgibbs.potential import Potential, check_assumptions, optimal_profile, well_constants

C0 = 2 * math.sqrt(2) / 3
C1 = 5 / (12 * math.sqrt(2))


def test_quartic_values(quartic):
    u = np.array([-1.0, 0.0, 1.0, 2.0])
    assert np.allclose(quartic.eval(u), [0.0, 0.25, 0.0, 2.25])
    assert np.allclose(quartic.deriv(u), u ** 3 - u)
    assert np.allclose(quartic.deriv2(u), 3 * u ** 2 - 1)


@given(st.floats(-3, 3))
@settings(max_examples=50, deadline=None)
def test_gradient_matches_finite_difference(u):
    pot = Potential.quartic()
    h = 1e-6
    fd = (pot.eval(np.array([u + h])) - pot.eval(np.array([u - h]))) / (2 * h)
    assert abs(fd[0] - pot.deriv(np.array([u]))[0]) < 1e-6 * (1 + abs(u) ** 3)


def test_assumptions_hold_for_quartic(quartic):
    rep = check_assumptions(quartic)
    assert rep.passed, rep.clauses


def test_assumptions_flag_odd_perturbation():
    pot = Potential.from_callable(lambda u: 0.25 * (1 - u * u) ** 2 + 0.05 * u)
    rep = check_assumptions(pot)
    assert not rep.clauses["evenness"]


def test_symmetrize_restores_evenness():
    pot = Potential.from_callable(lambda u: 0.25 * (1 - u * u) ** 2 + 0.05 * u ** 3,
                                  symmetrize=True)
    assert check_assumptions(pot).clauses["evenness"]


def test_well_constants_quartic(quartic):
    wc = well_constants(quartic)
    assert abs(wc.c0 - C0) < 1e-8
    assert abs(wc.c1 - C1) < 1e-8
    # sqrt(V''(1)) / sqrt(2) = 1 for the quartic
    assert abs(wc.decay_rate - 1.0) < 1e-9


def test_table_potential_matches_quartic():
    u = np.linspace(0, 3, 301)
    pot = Potential.from_table(u, 0.25 * (1 - u * u) ** 2)
    wc = well_constants(pot)
    assert abs(wc.c0 - C0) < 1e-4
    q = np.linspace(-2.5, 2.5, 11)
    assert np.allclose(pot.eval(q), 0.25 * (1 - q * q) ** 2, atol=1e-5)


def test_table_rejects_bad_input():
    with pytest.raises(ConfigError):
        Potential.from_table([0, 1], [1, 0])
    with pytest.raises(InvalidPotentialError):
        Potential.from_table([0, 1, 2, np.nan], [1, 0, 1, 2])


def test_profile_is_tanh(quartic):
    prof = optimal_profile(quartic, 10.0, 0.01)
    assert prof.m[prof.center_index] == 0.0
    assert np.max(np.abs(prof.m - np.tanh(prof.x / math.sqrt(2)))) < 1e-6


def test_profile_config_checks(quartic):
    with pytest.raises(ConfigError):
        optimal_profile(quartic, 10.0, 0.5)
