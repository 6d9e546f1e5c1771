import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acgibbs.errors import ConfigError, DomainError
from acgibbs.path_domain import (Grid, Path, StoppingSpec, affine_interpolant, detect_layers,
                                 detect_wasted_excursions, energy, energy_gradient,
                                 min_gaussian_energy, piecewise_linearize, stopping_point,
                                 touches)


def test_grid_basics():
    g = Grid.symmetric(5, 0.05)
    assert g.n == 199
    assert abs(g.dx - 0.05) < 1e-15
    assert g.index(0.0) == 100
    with pytest.raises(DomainError):
        g.index(0.0125)


def test_energy_of_constant_well_is_zero(quartic):
    g = Grid.symmetric(3, 0.1)
    p = Path(g, np.ones(g.n + 2))
    assert energy(p, quartic) == (0.0, 0.0, 0.0)


def test_energy_gradient_fd(quartic, rng):
    g = Grid.symmetric(2, 0.1)
    u = rng.normal(size=g.n + 2)
    gr = energy_gradient(u, g.dx, quartic)
    h = 1e-6
    for k in (0, 5, g.n + 1):
        up, dn = u.copy(), u.copy()
        up[k] += h
        dn[k] -= h
        fd = (energy(Path(g, up), quartic)[0] - energy(Path(g, dn), quartic)[0]) / (2 * h)
        assert abs(fd - gr[k]) < 1e-6


def test_tanh_energy_close_to_c0(quartic):
    g = Grid.symmetric(10, 0.01)
    p = Path(g, np.tanh(g.x / np.sqrt(2)))
    assert abs(energy(p, quartic)[0] - 2 * np.sqrt(2) / 3) < 1e-4


def test_affine_minimises_gaussian_energy(quartic):
    g = Grid.from_spacing(-1.0, 2.0, 0.1)
    p = affine_interpolant(-0.5, 1.0, g)
    assert abs(energy(p, quartic)[1] - min_gaussian_energy(-0.5, 1.0, -1.0, 2.0)) < 1e-12


def test_piecewise_linearize_snaps_with_warning(rng):
    g = Grid.symmetric(1, 0.1)
    p = Path(g, rng.normal(size=g.n + 2))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        q = piecewise_linearize(p, -0.52, 0.5)
    assert w
    i, j = g.index(-0.5), g.index(0.5)
    assert np.allclose(np.diff(q.values[i:j + 1], 2), 0.0, atol=1e-12)
    assert np.array_equal(q.values[:i + 1], p.values[:i + 1])


def test_touches_linear_interpolation():
    x = np.array([0.0, 1.0, 2.0])
    u = np.array([-1.0, 1.0, -1.0])
    assert np.allclose(touches(x, u, 0.0), [0.5, 1.5])


def test_detect_layers_counts():
    g = Grid.symmetric(5, 0.05)
    # saturates at +1, -1, +1, -1
    u = np.clip(2 * np.sin(np.pi * g.x / 4), -1, 1)
    rep = detect_layers(Path(g, u), "full")
    assert (rep.n_up, rep.n_down) == (1, 2)
    assert [e.kind for e in rep] == ["down", "up", "down"]


def test_wasted_excursion_detection():
    g = Grid.symmetric(5, 0.05)
    # -1 -> 0 -> -1 bump
    u = -1 + np.exp(-g.x ** 2)
    rep = detect_wasted_excursions(Path(g, u), "dminus", 0.1)
    assert len(rep) == 1
    e = rep.events[0]
    assert e.x_start < 0 < e.x_end
    assert len(detect_wasted_excursions(Path(g, -np.ones(g.n + 2)), "dminus", 0.1)) == 0


def test_wasted_bad_delta():
    g = Grid.symmetric(1, 0.1)
    with pytest.raises(ConfigError):
        detect_wasted_excursions(Path(g, np.zeros(g.n + 2)), "dminus", 0.7)


def test_stopping_points_left_right():
    g = Grid.symmetric(5, 0.05)
    p = Path(g, np.sin(g.x))
    left = stopping_point(p, StoppingSpec("left", (-5, 5), 0.0))
    right = stopping_point(p, StoppingSpec("right", (-5, 5), 0.0))
    assert abs(left + np.pi) < 1e-3 and abs(right - np.pi) < 1e-3
    # no hit returns the sentinel
    q = Path(g, np.ones(g.n + 2))
    assert stopping_point(q, StoppingSpec("left", None, 0.0)) == g.x_plus
    assert stopping_point(q, StoppingSpec("right", None, 0.0)) == g.x_minus


def test_stopping_spec_validation():
    with pytest.raises(ConfigError):
        StoppingSpec("middle")
    with pytest.raises(ConfigError):
        StoppingSpec("left", (1, 0))


@given(st.floats(-3, 3), st.floats(-2, 2))
@settings(max_examples=40, deadline=None)
def test_translation_invariance_of_layer_count(shift, level):
    g = Grid.symmetric(10, 0.05)
    u = np.tanh((g.x - shift) / np.sqrt(2))
    rep = detect_layers(Path(g, u), "dminus", 0.2)
    assert rep.n_up == 1 and rep.n_down == 0


@given(st.floats(0.02, 0.4), st.floats(0.02, 0.4))
@settings(max_examples=40, deadline=None)
def test_delta_monotonicity(d1, d2):
    # a larger delta asks less of a dminus layer, so it finds at least as many
    lo, hi = sorted((d1, d2))
    g = Grid.symmetric(6, 0.05)
    u = 0.92 * np.tanh(g.x / np.sqrt(2)) * np.cos(g.x)
    p = Path(g, u)
    assert len(detect_layers(p, "dminus", hi)) >= len(detect_layers(p, "dminus", lo))
