import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acgibbs.errors import ConfigError, DomainError
from acgibbs.gibbs_sampler import SamplerConfig, run_chains
from acgibbs.path_domain import Grid, Path, StoppingSpec
from acgibbs.reflections import (ReflectionSpec, apply_reflection, apply_reflection_ex,
                                 invariance_test, reflect_fixed, statistic)


@pytest.fixture(scope="module")
def ensemble(quartic):
    cfg = SamplerConfig(0.8, Grid.symmetric(3, 0.1), 0.0, 0.0, block=20, sweeps=2100,
                        burn_in=100, thin=20, seed=4)
    return run_chains(cfg, quartic, chains=16)


def _between():
    return ReflectionSpec("between", StoppingSpec("left", (-3, 3), 0.0),
                          StoppingSpec("right", (-3, 3), 0.0))


def test_spec_validation():
    with pytest.raises(ConfigError):
        ReflectionSpec("diagonal")
    with pytest.raises(ConfigError):
        ReflectionSpec("between")
    with pytest.raises(ConfigError):
        ReflectionSpec("between", StoppingSpec("right"), StoppingSpec("left"))
    assert ReflectionSpec("r_yz", StoppingSpec("left", None, -1.0),
                          StoppingSpec("right", None, 1.0)).kind == "point-between-hits"


def test_simple_symmetries():
    g = Grid.symmetric(1, 0.1)
    p = Path(g, np.linspace(-1, 2, g.n + 2))
    assert np.array_equal(apply_reflection(p, ReflectionSpec("vertical")).values, -p.values)
    assert np.array_equal(apply_reflection(p, ReflectionSpec("horizontal")).values,
                          p.values[::-1])
    assert np.array_equal(apply_reflection(p, ReflectionSpec("point")).values, -p.values[::-1])


@given(st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_grid_between_is_involution(seed):
    g = Grid.symmetric(3, 0.1)
    gen = np.random.default_rng(seed)
    p = Path(g, np.cumsum(gen.normal(scale=0.3, size=g.n + 2)) - 0.5)
    res = apply_reflection_ex(p, ReflectionSpec("between", StoppingSpec("left", None, 0.0),
                                                StoppingSpec("right", None, 0.0), mode="grid"))
    back = reflect_fixed(res.path, "between", res.chis)
    assert np.array_equal(back.values, p.values)


def test_bridge_mode_needs_epsilon():
    g = Grid.symmetric(1, 0.1)
    with pytest.raises(ConfigError):
        apply_reflection(Path(g, np.zeros(g.n + 2)), _between())


def test_statistics_registry():
    g = Grid.symmetric(1, 0.1)
    p = Path(g, np.ones(g.n + 2))
    assert statistic("integral")(p) == pytest.approx(2.0)
    assert statistic("u_at:0.5")(p) == 1.0
    assert statistic("zero_crossings")(p) == 0.0
    with pytest.raises(ConfigError):
        statistic("nope")


def test_invariance_vertical_and_between(ensemble):
    # boundary (0, 0) makes the vertical flip an exact symmetry
    assert invariance_test(ReflectionSpec("vertical"), ensemble, rng=1).passed
    assert invariance_test(_between(), ensemble, rng=1).passed


def test_invariance_detects_broken_transform(ensemble):
    shift = ReflectionSpec("fixed-window", window=(-3, 0))
    rep = invariance_test(shift, ensemble, ("integral", "u_at:-1.5"), rng=1)
    assert not rep.passed


def test_invariance_needs_paths(quartic, ensemble):
    tiny = type(ensemble)(ensemble.grid, 0.0, 0.0, ensemble.values[:2], ensemble.chain_ids[:2])
    with pytest.raises(DomainError):
        invariance_test(ReflectionSpec("vertical"), tiny)
