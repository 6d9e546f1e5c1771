import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acgibbs import energy_min as em
from acgibbs.errors import ConfigError, DomainError, NumericalError
from acgibbs.path_domain import Grid
from acgibbs.potential import well_constants

C0 = 2 * math.sqrt(2) / 3
C1 = 5 / (12 * math.sqrt(2))


@pytest.fixture(scope="module")
def consts(quartic):
    return well_constants(quartic)


def test_unconstrained_transition_costs_c0(quartic):
    g = Grid.symmetric(10, 0.05)
    r = em.minimize_energy(em.EnergyProblem(g, -1.0, 1.0), quartic)
    assert r.converged
    assert abs(r.energy - C0) < 1e-3
    assert r.energy <= r.dp_energy + 1e-12


def test_well_to_well_is_free(quartic):
    g = Grid.symmetric(5, 0.1)
    r = em.minimize_energy(em.EnergyProblem(g, 1.0, 1.0), quartic)
    assert r.energy == pytest.approx(0.0, abs=1e-12)


def test_wasted_excursion_gap_and_lower_bound(quartic, consts):
    g = Grid.symmetric(10, 0.05)
    prob = em.EnergyProblem(g, -1.0, -1.0, em.wasted_dminus((-5, 5), 0.2))
    gap, rc, ru = em.energy_gap(prob, quartic)
    lb = em.mm_lower_bound(prob, quartic, consts)
    assert rc.energy >= lb - 1e-3
    # the excursion -1 -> ~0 -> -1 costs between the bound and a full transition
    assert lb - 1e-3 <= gap < C0
    assert em.wasted_dminus((-5, 5), 0.2).build_automaton().accepts(rc.path)


def test_band_constraint_respected(quartic):
    g = Grid.symmetric(6, 0.1)
    prob = em.EnergyProblem(g, -1.0, 1.0, em.band(-0.8, 0.8, (-3, 3)))
    r = em.minimize_energy(prob, quartic)
    inside = (g.x >= -3) & (g.x <= 3)
    assert np.all(np.abs(r.path.values[inside]) <= 0.8 + 1e-9)


def test_boundary_violating_site_constraint(quartic):
    g = Grid.symmetric(3, 0.1)
    prob = em.EnergyProblem(g, -1.0, 1.0, em.band(-0.5, 0.5, (-3, 3)))
    with pytest.raises(NumericalError):
        em.minimize_energy(prob, quartic)


def test_window_outside_domain():
    g = Grid.symmetric(3, 0.1)
    with pytest.raises(DomainError):
        em.EnergyProblem(g, -1.0, 1.0, em.band(-0.5, 0.5, (-5, 0)))


def test_unknown_lemma(quartic):
    with pytest.raises(ConfigError):
        em.verify_energy_lemma("9.9", quartic)


def test_boundary_sample_shape():
    pts = em.boundary_sample((-2.0, 2.0), 9, seed=0)
    assert len(pts) == 9 and pts[:5] == [(-2, -2), (-2, 2), (2, -2), (2, 2), (0, 0)]
    assert pts == em.boundary_sample((-2.0, 2.0), 9, seed=0)


def _brute_chain(start, chain, end, ys):
    cost = np.abs(ys - start)
    for lo, hi in chain:
        cost = np.where((ys >= lo - 1e-12) & (ys <= hi + 1e-12), cost, np.inf)
        # relax: cost(y) = min_z cost(z) + |y - z|
        cost = np.min(cost[None, :] + np.abs(ys[:, None] - ys[None, :]), axis=1)
    return float(np.min(cost + np.abs(ys - end)))


_val = st.integers(-60, 60).map(lambda k: k * 0.05)


@given(_val, _val, st.lists(st.tuples(_val, _val).map(sorted), min_size=1, max_size=5))
@settings(max_examples=60, deadline=None)
def test_chain_variation_matches_brute_force(start, end, chain):
    ys = np.arange(-60, 61) * 0.05
    got = em.chain_variation(lambda u: u, start, [tuple(c) for c in chain], end)
    assert got == pytest.approx(_brute_chain(start, chain, end, ys), abs=1e-9)


def test_lemma_6_7_small_delta_near_lower_well(quartic):
    # pairs near -1 are in reach of a short window even at delta = 0.05
    rep = em.verify_energy_lemma("6.7", quartic, {"delta": 0.05, "ells": (10.0,),
                                                  "boundary": [(-1.0, -1.0), (-1.1, -0.9)]},
                                 threads=2)
    for row in rep.per_case:
        assert row["gap"] >= C1 - 0.2
