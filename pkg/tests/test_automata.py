import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acgibbs import automata as A
from acgibbs.errors import BudgetError, ConfigError
from acgibbs.path_domain import Grid, Path, detect_layers, detect_wasted_excursions


def test_regions_alternate():
    lv = np.array([-1.0, 1.0])
    assert list(A.regions(lv, [-2, -1, 0, 1, 2])) == [0, 1, 2, 3, 4]


def test_region_set_closed_interval():
    assert A.region_set([-1.0, 1.0], -1.0, 1.0) == frozenset({1, 2, 3})
    assert A.region_set([-1.0, 1.0], -np.inf, -1.0) == frozenset({0, 1})


def test_levels_must_be_distinct():
    with pytest.raises(ConfigError):
        A.threshold(0.5).__class__([0.0, 0.0], 0, lambda s, r: s, lambda s: True)


def test_budget_error():
    with pytest.raises(BudgetError):
        A.layer_counter(1.0, 100, max_states=8)


def test_threshold_and_band():
    g = Grid.symmetric(2, 0.1)
    p = Path(g, 0.6 * np.exp(-g.x ** 2))
    assert A.threshold(0.5).accepts(p)
    assert not A.threshold(0.7).accepts(p)
    assert A.band(-0.1, 0.7).accepts(p)
    assert not A.band(0.1, 0.7).accepts(p)
    # window restricts what is read
    assert A.band(-0.1, 0.1, window=(1.5, 2.0)).accepts(p)


def test_parity():
    g = Grid.symmetric(5, 0.05)
    p = Path(g, np.clip(2 * np.sin(np.pi * g.x / 4), -1, 1))
    assert not A.layer_parity(1.0).accepts(p)  # three layers


def test_short_up_layer_length():
    g = Grid.symmetric(5, 0.05)
    steep = Path(g, np.clip(g.x, -1, 1))            # length 2
    slow = Path(g, np.clip(g.x / 3, -1, 1))         # length 6
    aut = A.short_up_layer(4.0, g.dx)
    assert aut.accepts(steep) and not aut.accepts(slow)


def _random_paths(seed, rows=200):
    g = Grid.symmetric(3, 0.1)
    gen = np.random.default_rng(seed)
    steps = gen.normal(scale=0.35, size=(rows, g.n + 2))
    return g, np.cumsum(steps, axis=1) - 1


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_automata_agree_with_detectors(seed):
    g, rows = _random_paths(seed)
    lay = A.layer_counter(0.8, 2, window=(-2, 2))
    waste = A.wasted_dminus(0.2, window=(-2, 2))
    acc_l = lay.accepts_many(g.x, rows)
    acc_w = waste.accepts_many(g.x, rows)
    for k, row in enumerate(rows):
        p = Path(g, row)
        assert acc_l[k] == (len(detect_layers(p, "dminus", 0.2, window=(-2, 2))) >= 2)
        assert acc_w[k] == (len(detect_wasted_excursions(p, "dminus", 0.2, window=(-2, 2))) >= 1)
        assert acc_l[k] == lay.accepts(p)
