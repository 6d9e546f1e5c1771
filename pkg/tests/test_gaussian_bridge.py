import numpy as np
import pytest

from acgibbs.errors import DomainError
from acgibbs.gaussian_bridge import (BridgeSpec, RandomSource, bridge_covariance,
                                     cameron_martin_logdensity, resample_subinterval,
                                     sample_bridge)
from acgibbs.path_domain import Grid, Path


def test_random_source_reproducible():
    a = RandomSource(7, 3).generator().standard_normal(5)
    b = RandomSource(7, 3).generator().standard_normal(5)
    c = RandomSource(7, 4).generator().standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_zero_noise_is_affine():
    g = Grid.from_spacing(0, 1, 0.1)
    p = sample_bridge(BridgeSpec(g, -1.0, 1.0, 0.0), 0)
    assert np.allclose(p.values, -1 + 2 * g.x)


def test_mean_and_variance():
    g = Grid.from_spacing(0, 2, 0.25)
    spec = BridgeSpec(g, 0.5, -0.5, 0.3)
    s = sample_bridge(spec, RandomSource(1), size=40000)
    assert np.all(s[:, 0] == 0.5) and np.all(s[:, -1] == -0.5)
    var = bridge_covariance(spec, g.x, g.x)
    se = var * np.sqrt(2 / s.shape[0])
    assert np.all(np.abs(s.var(axis=0) - var) <= 6 * se + 1e-12)
    mean_se = np.sqrt(var / s.shape[0])
    assert np.all(np.abs(s.mean(axis=0) - (0.5 - 0.5 * g.x)) <= 6 * mean_se + 1e-12)


def test_covariance_domain_check():
    g = Grid.from_spacing(0, 1, 0.1)
    with pytest.raises(DomainError):
        bridge_covariance(BridgeSpec(g, 0, 0, 1.0), 2.0, 0.5)


def test_resample_keeps_outside_untouched():
    g = Grid.symmetric(2, 0.1)
    p = sample_bridge(BridgeSpec(g, -1, 1, 0.1), RandomSource(2))
    q = resample_subinterval(p, -0.5, 0.5, 0.1, RandomSource(3))
    i, j = g.index(-0.5), g.index(0.5)
    assert np.array_equal(p.values[:i + 1], q.values[:i + 1])
    assert np.array_equal(p.values[j:], q.values[j:])
    assert not np.array_equal(p.values[i + 1:j], q.values[i + 1:j])


def test_cameron_martin_normalises():
    # E_W[exp(log density)] = 1 for a shift vanishing at both ends
    g = Grid.from_spacing(0, 1, 0.05)
    f = Path(g, 0.3 * np.sin(np.pi * g.x))
    s = sample_bridge(BridgeSpec(g, 0.0, 0.0, 0.5), RandomSource(4), size=50000)
    w = np.exp(cameron_martin_logdensity(f, s, 0.5))
    assert abs(w.mean() - 1) < 4 * w.std() / np.sqrt(w.size)
    with pytest.raises(DomainError):
        cameron_martin_logdensity(Path(g, np.ones(g.n + 2)), s, 0.5)
