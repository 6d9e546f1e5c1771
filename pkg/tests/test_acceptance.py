"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest -m acceptance -v``. The slow ones take a few minutes each
on 8 threads.
"""
import filecmp
import math
import os
import time

import numpy as np
import pytest

from acgibbs import automata as A
from acgibbs import energy_min as em
from acgibbs import experiments as X
from acgibbs import persistence as P
from acgibbs.gaussian_bridge import BridgeSpec, RandomSource, bridge_covariance, sample_bridge
from acgibbs.gibbs_sampler import (SamplerConfig, estimate_event_probability, estimate_mean,
                                   run_chains)
from acgibbs.path_domain import Grid, StoppingSpec
from acgibbs.potential import Potential, optimal_profile, well_constants
from acgibbs.reflections import ReflectionSpec, invariance_test
from acgibbs.transfer_oracle import build_transfer, event_probability_exact, marginal

pytestmark = pytest.mark.acceptance

THREADS = int(os.environ.get("AC_GIBBS_THREADS", "8"))


@pytest.fixture(scope="module")
def pot():
    return Potential.quartic()


def _report(res):
    failed = {k: v for k, v in res.checks.items() if not v["passed"]}
    return "failed checks: " + ", ".join(f"{k}={v['value']!r} (target {v['target']})"
                                         for k, v in failed.items())


def test_ac01_well_constants(pot):
    t = time.perf_counter()
    wc = well_constants(pot)
    assert abs(wc.c0 - 2 * math.sqrt(2) / 3) <= 1e-6
    assert abs(wc.c1 - 5 / (12 * math.sqrt(2))) <= 1e-6
    assert time.perf_counter() - t < 1.0


def test_ac02_optimal_profile(pot):
    t = time.perf_counter()
    prof = optimal_profile(pot, half_width=10.0, dx=0.01)
    err = np.max(np.abs(prof.m - np.tanh(prof.x / math.sqrt(2))))
    assert err <= 1e-6
    assert time.perf_counter() - t < 1.0


def test_ac03_bridge_covariance():
    t = time.perf_counter()
    g = Grid.from_spacing(0.0, 2.0, 0.1)  # 21 points
    spec = BridgeSpec(g, -1.0, 1.0, 0.1)
    n = 100_000
    s = sample_bridge(spec, RandomSource(0), size=n)
    x = g.x
    c = s - s.mean(axis=0)
    emp = c.T @ c / (n - 1)
    exact = bridge_covariance(spec, x[:, None], x[None, :])
    # SE of a sample covariance under Gaussianity
    var = np.diag(exact)
    se = np.sqrt((exact ** 2 + np.outer(var, var)) / n)
    inner = np.ix_(range(1, 20), range(1, 20))
    assert np.all(np.abs(emp[inner] - exact[inner]) <= 6 * se[inner])
    assert np.all(emp[0] == 0) and np.all(emp[-1] == 0)
    assert time.perf_counter() - t < 10.0


def test_ac04_oracle_sampler_agreement(pot):
    t = time.perf_counter()
    eps, L, dx = 0.05, 5.0, 0.05
    g = Grid.symmetric(L, dx)
    k0 = g.index(0.0)
    model = build_transfer(eps, dx, pot)
    tab = marginal(model, g, -1.0, 1.0, sites=[k0])
    m_ref, v_ref = tab.mean()[0], tab.var()[0]
    event = A.short_up_layer(4.0, dx)
    p_ref = event_probability_exact(model, g, -1.0, 1.0, event).prob

    cfg = SamplerConfig(eps, g, -1.0, 1.0, block=130, sweeps=20_000, burn_in=1000, thin=5,
                        seed=3)
    ens = run_chains(cfg, pot, chains=8, threads=THREADS)
    u0 = ens.values[:, k0]
    est_m = estimate_mean(u0, ens.chain_ids)
    est_v = estimate_mean((u0 - m_ref) ** 2, ens.chain_ids)
    est_p = estimate_event_probability(ens, event)
    assert abs(est_m.value - m_ref) <= 3 * est_m.se, (est_m, m_ref)
    assert abs(est_v.value - v_ref) <= 3 * est_v.se, (est_v, v_ref)
    assert abs(est_p.value - p_ref) <= 3 * est_p.se, (est_p, p_ref)
    assert time.perf_counter() - t < 300


def test_ac05_reflection_invariance(pot):
    t = time.perf_counter()
    g = Grid.symmetric(5.0, 0.05)
    cfg = SamplerConfig(0.1, g, -1.0, 1.0, block=130, sweeps=500 + 250 * 150, burn_in=500,
                        thin=150, seed=11)
    ens = run_chains(cfg, pot, chains=40, threads=THREADS)
    assert len(ens) == 10_000
    stats = ("integral", "zero_crossings", "energy_grad", "u_at:0", "u_at:2.5")
    between = ReflectionSpec("between", StoppingSpec("left", (-5, 5), 0.0),
                             StoppingSpec("right", (-5, 5), 0.0))
    ryz = ReflectionSpec("point-between-hits", StoppingSpec("left", (-4.5, -3), -1.0),
                         StoppingSpec("right", (3, 4.5), 1.0))
    broken = ReflectionSpec("fixed-window", window=(1, 4))
    r1 = invariance_test(between, ens, stats, alpha=0.01, rng=5)
    r2 = invariance_test(ryz, ens, stats, alpha=0.01, rng=5)
    r3 = invariance_test(broken, ens, stats, alpha=0.01, rng=5)
    assert r1.passed, r1.p_values
    assert r2.passed, r2.p_values
    assert not r3.passed, r3.p_values
    assert time.perf_counter() - t < 300


def test_ac06_energy_lemmas(pot):
    t = time.perf_counter()
    bad = {}
    for lemma in ("2.2", "2.4", "2.5", "6.6", "6.7"):
        rep = em.verify_energy_lemma(lemma, pot, threads=THREADS)
        slack = rep.fitted_constants["min_lb_slack"]
        if not rep.passed or slack < -1e-3:
            bad[lemma] = (rep.worst_margin, rep.fitted_constants, slack)
    assert not bad, bad
    assert time.perf_counter() - t < 600


def test_ac07_large_deviation_brackets(pot):
    t = time.perf_counter()
    res = X.run_experiment(X.ExperimentConfig.default("ld_check", threads=THREADS), pot)
    assert res.passed, _report(res)
    assert time.perf_counter() - t < 600


def test_ac08_layer_scaling(pot):
    t = time.perf_counter()
    res = X.run_experiment(X.ExperimentConfig.default("layer_scaling", threads=THREADS), pot)
    for key in ("intercept_within_tolerance", "L_slope_in_range"):
        assert res.checks[key]["passed"], _report(res)
    assert time.perf_counter() - t < 900


def test_ac09_layer_uniformity(pot):
    t = time.perf_counter()
    res = X.run_experiment(X.ExperimentConfig.default("uniformity", threads=THREADS), pot)
    central = {k: v for k, v in res.checks.items() if k.startswith("central_")}
    assert central and all(v["passed"] for v in central.values()), _report(res)
    assert time.perf_counter() - t < 1800


def test_ac10_onepoint_tail(pot):
    t = time.perf_counter()
    res = X.run_experiment(X.ExperimentConfig.default("onepoint_tail"), pot)
    assert res.passed, _report(res)
    assert time.perf_counter() - t < 120


def test_ac11_determinism_and_persistence(pot, tmp_path):
    t = time.perf_counter()
    cfg = SamplerConfig(0.1, Grid.symmetric(5.0, 0.05), -1.0, 1.0, block=40, sweeps=2000,
                        burn_in=200, thin=10, seed=42)
    a = run_chains(cfg, pot, chains=4, threads=1)
    b = run_chains(cfg, pot, chains=4, threads=4)
    P.save_ensemble(tmp_path / "a.acp", a)
    P.save_ensemble(tmp_path / "b.acp", b)
    assert (tmp_path / "a.acp").read_bytes() == (tmp_path / "b.acp").read_bytes()
    back = P.load_ensemble(tmp_path / "a.acp")
    assert back.values.tobytes() == a.values.tobytes()
    assert np.array_equal(back.chain_ids, a.chain_ids)

    ecfg = X.ExperimentConfig.default("onepoint_tail", epsilons=(0.1,), dx=0.1)
    fa = X.run_experiment(ecfg, pot).write(tmp_path / "ra")
    fb = X.run_experiment(ecfg, pot).write(tmp_path / "rb")
    for pa, pb in zip(fa, fb):
        assert filecmp.cmp(pa, pb, shallow=False), pa
    assert time.perf_counter() - t < 60
