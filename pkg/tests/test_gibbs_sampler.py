import numpy as np
import pytest

from acgibbs.errors import ConfigError, ContractViolation
from acgibbs.gibbs_sampler import (Ensemble, SamplerConfig, estimate_event_probability,
                                   estimate_mean, integrated_autocorr, run_chain, run_chains)
from acgibbs.path_domain import Grid
from acgibbs.potential import Potential
from acgibbs.transfer_oracle import build_transfer, marginal


def _cfg(**kw):
    base = dict(epsilon=0.2, grid=Grid.symmetric(2, 0.1), u_minus=-1.0, u_plus=1.0, block=10,
                sweeps=600, burn_in=100, thin=5, seed=1)
    base.update(kw)
    return SamplerConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        _cfg(epsilon=0.0)
    with pytest.raises(ConfigError):
        _cfg(block=1)
    with pytest.raises(ConfigError):
        _cfg(sweeps=10, burn_in=10)
    with pytest.raises(ConfigError):
        _cfg(kernel="hmc")


def test_flat_potential_always_accepts():
    flat = Potential.from_callable(lambda u: 0.0 * np.asarray(u, dtype=float))
    st = []
    run_chain(_cfg(), flat, state_out=st)
    assert st[0].acceptance == 1.0


def test_weak_potential_accepts_almost_always(quartic):
    # the Metropolis exponent is (dx / eps) * V along the path; it vanishes
    # when V is small on the path scale (large eps alone does not do it for
    # the quartic because bridge values grow like sqrt(eps))
    weak = Potential.from_callable(lambda u: 1e-4 * quartic.eval(u))
    st = []
    run_chain(_cfg(epsilon=1.0, sweeps=2000, burn_in=0), weak, state_out=st)
    assert st[0].acceptance > 0.99
    assert st[0].check_cache(weak)


def test_quartic_cache_consistent(quartic):
    st = []
    run_chain(_cfg(epsilon=1e3, sweeps=300, burn_in=0), quartic, state_out=st)
    assert st[0].check_cache(quartic)


def test_acceptance_decreases_with_block(quartic):
    rates = []
    for b in (4, 16, 39):
        st = []
        run_chain(_cfg(block=b, epsilon=0.05, sweeps=800), quartic, state_out=st)
        rates.append(st[0].acceptance)
    assert rates[0] >= rates[1] >= rates[2]


def test_chain_is_deterministic(quartic):
    cfg = _cfg()
    a = run_chains(cfg, quartic, chains=3, threads=1)
    b = run_chains(cfg, quartic, chains=3, threads=3)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.chain_ids, b.chain_ids)
    c = run_chains(_cfg(seed=2), quartic, chains=3)
    assert not np.array_equal(a.values, c.values)


def test_boundary_values_pinned(quartic):
    ens = run_chain(_cfg(), quartic)
    assert np.all(ens.values[:, 0] == -1.0) and np.all(ens.values[:, -1] == 1.0)
    assert len(ens) == 100


def test_mean_agrees_with_oracle(quartic):
    cfg = _cfg(epsilon=0.3, sweeps=6000, burn_in=200, thin=2, block=20, u_plus=-1.0)
    ens = run_chains(cfg, quartic, chains=4)
    k = cfg.grid.index(0.0)
    est = estimate_mean(ens.values[:, k], ens.chain_ids)
    model = build_transfer(0.3, 0.1, quartic)
    ref = marginal(model, cfg.grid, -1.0, -1.0, sites=[k]).mean()[0]
    assert abs(est.value - ref) < 4 * est.se


def test_ensemble_shape_contract():
    with pytest.raises(ContractViolation):
        Ensemble(Grid.symmetric(1, 0.1), 0, 0, np.zeros((3, 5)), np.zeros(3))


def test_merge_rejects_mixed_configs(quartic):
    a = run_chain(_cfg(), quartic)
    b = run_chain(_cfg(seed=5), quartic)
    with pytest.raises(ConfigError):
        Ensemble.merge([a, b])


def test_iact_of_ar1():
    gen = np.random.default_rng(0)
    x = np.empty(100_000)
    x[0] = 0
    e = gen.normal(size=x.size)
    for i in range(1, x.size):
        x[i] = 0.8 * x[i - 1] + e[i]
    # exact value (1 + rho) / (1 - rho) = 9
    assert abs(integrated_autocorr(x) - 9) < 1.0


def test_event_probability_callable(quartic):
    ens = run_chain(_cfg(), quartic)
    est = estimate_event_probability(ens, lambda p: p.values[1] > -2)
    assert est.value == 1.0
