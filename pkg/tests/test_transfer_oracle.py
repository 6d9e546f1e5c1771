import math

import numpy as np
import pytest

from acgibbs import automata as A
from acgibbs.errors import DomainError
from acgibbs.gaussian_bridge import BridgeSpec, RandomSource, bridge_covariance, sample_bridge
from acgibbs.path_domain import Grid
from acgibbs.potential import Potential
from acgibbs.transfer_oracle import (StateGrid, build_transfer, event_probability_exact,
                                     log_normalisation, marginal)


@pytest.fixture(scope="module")
def flat():
    return Potential.from_callable(lambda u: 0.0 * np.asarray(u, dtype=float), name="flat")


def test_flat_potential_recovers_bridge(flat):
    eps, dx = 0.2, 0.1
    g = Grid.from_spacing(0.0, 2.0, dx)
    model = build_transfer(eps, dx, flat, StateGrid.auto(eps, dx, u_max=4.0))
    assert abs(log_normalisation(model, g, -0.5, 0.5)) < 1e-6
    tab = marginal(model, g, -0.5, 0.5)
    spec = BridgeSpec(g, -0.5, 0.5, eps)
    xs = g.x[1:-1]
    assert np.allclose(tab.mean(), -0.5 + 0.5 * xs, atol=1e-6)
    assert np.allclose(tab.var(), bridge_covariance(spec, xs, xs), rtol=1e-3, atol=1e-6)


def test_event_matches_weighted_bridge(quartic):
    # importance-weighted bridge samples as an independent check
    eps, dx = 0.3, 0.1
    g = Grid.from_spacing(0.0, 1.5, dx)
    model = build_transfer(eps, dx, quartic)
    aut = A.threshold(0.0)
    res = event_probability_exact(model, g, -1.0, -1.0, aut)
    s = sample_bridge(BridgeSpec(g, -1.0, -1.0, eps), RandomSource(9), size=200_000)
    v = quartic.eval(s)
    w = np.exp(-(dx / eps) * (v.sum(axis=1) - 0.5 * (v[:, 0] + v[:, -1])))
    ind = aut.accepts_many(g.x, s)
    p = (w * ind).sum() / w.sum()
    se = math.sqrt(p * (1 - p) / (w.sum() ** 2 / (w * w).sum()))
    assert abs(p - res.prob) < 5 * se + 2e-3


def test_accept_all_and_forced_parity(quartic):
    g = Grid.symmetric(3, 0.1)
    model = build_transfer(0.1, 0.1, quartic)
    assert abs(event_probability_exact(model, g, -1, 1, A.accept_all()).prob - 1) < 1e-12
    # boundary (-1, 1) forces an odd number of layers
    assert event_probability_exact(model, g, -1, 1, A.layer_parity(1.0)).prob == 0.0


def test_tail_symmetry(quartic):
    g = Grid.symmetric(3, 0.05)
    model = build_transfer(0.1, 0.05, quartic)
    tab = marginal(model, g, -1.0, 1.0, sites=[g.index(0.0)])
    assert abs(tab.mean()[0]) < 1e-10


def test_boundary_outside_state_grid(quartic):
    g = Grid.symmetric(1, 0.1)
    model = build_transfer(0.1, 0.1, quartic)
    with pytest.raises(DomainError):
        log_normalisation(model, g, 10.0, 0.0)
    with pytest.raises(DomainError):
        StateGrid(3.0, 10)
