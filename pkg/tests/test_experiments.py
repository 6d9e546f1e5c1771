import filecmp
import math

import numpy as np
import pytest

from acgibbs import experiments as X
from acgibbs.errors import ConfigError


def test_config_validation_names_field():
    with pytest.raises(ConfigError, match="epsilons"):
        X.ExperimentConfig.default("layer_scaling", epsilons=(0.05, 0.1))
    with pytest.raises(ConfigError, match="experiment"):
        X.ExperimentConfig.default("nope")
    with pytest.raises(ConfigError, match="bogus"):
        X.ExperimentConfig.from_dict({"experiment": "ld_check", "bogus": 1})
    with pytest.raises(ConfigError, match="d"):
        X.ExperimentConfig.default("uniformity", d=(20.0,))


def test_hash_ignores_output_location():
    a = X.ExperimentConfig.default("ld_check", out_dir="a", threads=1)
    b = X.ExperimentConfig.default("ld_check", out_dir="b", threads=4)
    assert a.hash() == b.hash()
    assert a.hash() != X.ExperimentConfig.default("ld_check", seed=1).hash()


def test_linear_fit_exact():
    f = X.linear_fit([0, 1, 2], [1, 3, 5])
    assert f["slope"] == pytest.approx(2) and f["intercept"] == pytest.approx(1)
    assert f["r2"] == pytest.approx(1)


def test_flatness_on_synthetic_uniform():
    gen = np.random.default_rng(0)
    mids = [gen.uniform(-6, 6, size=3) for _ in range(4000)]
    _, p = X.flatness_pvalue(mids, -6, 6, 12)
    assert p > 0.01
    skew = [np.array([gen.uniform(-6, 6) ** 3 / 36]) for _ in range(4000)]
    assert X.flatness_pvalue(skew, -6, 6, 12)[1] < 1e-6


def test_window_statistics_uniform_layers():
    gen = np.random.default_rng(1)
    mids = [gen.uniform(-12, 12, size=1) for _ in range(20000)]
    rows = X.window_statistics(mids, np.zeros(len(mids)), 12.0, 3.0, [0.0])
    # one midpoint uniform on [-L, L]: P(|m| <= d) = d / L
    assert abs(rows[0]["stat"] - 1.0) < 4 * rows[0]["se"] + 1e-3


def test_hit_probability_pinned_at_level():
    x = np.linspace(0, 1, 11)
    rows = np.vstack([np.ones(11), np.full(11, 0.95)])
    p = X.hit_probability(x, rows, 1.0, (0, 1), 0.1)
    assert p[0] == 1.0
    assert 0.0 < p[1] < 1.0
    far = X.hit_probability(x, np.full((1, 11), -3.0), 1.0, (0, 1), 0.01)
    assert far[0] < 1e-100


def _small_scaling(**kw):
    return X.ExperimentConfig.default(
        "layer_scaling", epsilons=(0.2, 0.1), dx=0.1,
        options={"slope_Ls": [10.0, 20.0], "short_Ls": [5.0, 10.0]}, **kw)


def test_layer_scaling_small_run():
    res = X.run_experiment(_small_scaling())
    assert {"intercept_within_tolerance", "L_slope_in_range", "parity_forced"} <= set(res.checks)
    assert res.checks["parity_forced"]["passed"]
    for r in res.records:
        if "log_prob" in r:
            assert r["log_prob"] < 0


def test_results_are_deterministic(tmp_path):
    a = X.run_experiment(_small_scaling()).write(tmp_path / "a")
    b = X.run_experiment(_small_scaling()).write(tmp_path / "b")
    for pa, pb in zip(a, b):
        assert filecmp.cmp(pa, pb, shallow=False), pa


def test_onepoint_tail_symmetry_and_sign():
    cfg = X.ExperimentConfig.default("onepoint_tail", epsilons=(0.1,), dx=0.1)
    res = X.run_experiment(cfg)
    assert res.checks["tail_symmetry[eps=0.1]"]["passed"]
    assert res.checks["negative_slope[eps=0.1]"]["passed"]
    lp = [r for r in res.records if not r.get("excluded")]
    assert all(math.isfinite(r["scaled_log"]) for r in lp)


def test_ld_check_small_run():
    cfg = X.ExperimentConfig.default("ld_check", epsilons=(0.2, 0.1), dx=0.1,
                                     options={"sweep_n": 3})
    res = X.run_experiment(cfg)
    assert res.records
    assert "boundary_uniformity" in res.checks
