"""Blocked Metropolis sampling of the path-space Gibbs measure.

A block update resamples the interior of ``[x_i, x_j]`` from the Brownian
bridge pinned at the current endpoint values and accepts with the ratio of
``exp(-(1/eps) int V)``. By the two-sided Markov property this kernel leaves
the target invariant exactly. The pCN variant mixes the current interior
with a fresh centred bridge and is also exactly invariant, with higher
acceptance at small ``eps``.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractViolation
from .gaussian_bridge import BridgeSpec, RandomSource, as_generator, resample_subinterval, \
    sample_bridge
from .path_domain import Grid, Path

KERNELS = ("block-independence", "pcn")
BATCH = 256


@dataclass(frozen=True)
class SamplerConfig:
    """Chain parameters. ``block`` counts resampled interior points."""

    epsilon: float
    grid: Grid
    u_minus: float
    u_plus: float
    block: int = 20
    kernel: str = "block-independence"
    beta: float = 0.2
    sweeps: int = 10_000
    burn_in: int = 1_000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 2 <= self.block <= self.grid.n:
            raise ConfigError("block must satisfy 2 <= block <= n")
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel must be one of {KERNELS}")
        if not 0 < self.beta <= 1:
            raise ConfigError("beta must lie in (0, 1]")
        if not self.sweeps > self.burn_in >= 0:
            raise ConfigError("need sweeps > burn_in >= 0")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_json()
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ChainState:
    """Current path plus cached potential values and acceptance counters."""

    values: np.ndarray
    vcache: np.ndarray
    dx: float
    steps: int = 0
    accepted: np.ndarray = None
    tried: np.ndarray = None

    @classmethod
    def from_path(cls, path: Path, potential, block: int) -> "ChainState":
        v = np.array(path.values, dtype=float)
        return cls(v, potential.eval(v), path.grid.dx, 0,
                   np.zeros(block + 2, dtype=np.int64), np.zeros(block + 2, dtype=np.int64))

    def check_cache(self, potential, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.vcache - potential.eval(self.values)))
                    <= tol * self.values.size)

    @property
    def acceptance(self) -> float:
        t = self.tried.sum()
        return float(self.accepted.sum() / t) if t else math.nan


@dataclass
class Ensemble:
    """Thinned states of one or more chains sharing grid and boundary data."""

    grid: Grid
    u_minus: float
    u_plus: float
    values: np.ndarray
    chain_ids: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n + 2:
            raise ContractViolation("ensemble values must have shape (count, n + 2)")

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, k) -> Path:
        return Path(self.grid, self.values[k])

    def paths(self):
        return [Path(self.grid, row) for row in self.values]

    @property
    def n_chains(self) -> int:
        return int(np.unique(self.chain_ids).size)

    @classmethod
    def merge(cls, parts: list["Ensemble"]) -> "Ensemble":
        if not parts:
            raise ConfigError("nothing to merge")
        h = {p.metadata.get("config_hash") for p in parts}
        if len(h) != 1:
            raise ConfigError("cannot merge ensembles from different configs")
        vals = np.concatenate([p.values for p in parts])
        ids = np.concatenate([p.chain_ids for p in parts])
        meta = dict(parts[0].metadata)
        meta["acceptance"] = [a for p in parts for a in np.atleast_1d(p.metadata.get("acceptance"))]
        meta["chains"] = len(parts)
        return cls(parts[0].grid, parts[0].u_minus, parts[0].u_plus, vals, ids, meta)


def log_target_ratio(proposal: Path, current: Path, block: tuple, epsilon: float,
                     potential) -> float:
    """``-(1/eps)`` times the change of the trapezoid potential integral on the block.

    ``block`` is a pair of grid indices ``(i, j)``; values at ``i`` and ``j``
    must agree.
    """
    i, j = block
    pv, cv = proposal.values, current.values
    outside = np.ones(pv.size, dtype=bool)
    outside[i + 1:j] = False
    if not np.array_equal(pv[outside], cv[outside]):
        raise ContractViolation("proposal differs from current outside the block")
    dx = current.grid.dx
    d = potential.eval(pv[i + 1:j]) - potential.eval(cv[i + 1:j])
    return float(-dx * np.sum(d) / epsilon)


def block_step(state: ChainState, grid: Grid, block: tuple, epsilon: float, potential,
               rng) -> ChainState:
    """One independence-Metropolis update of the interior of ``block`` (in place)."""
    i, j = block
    if j - i < 2:
        return state
    gen = as_generator(rng)
    cur = Path(grid, state.values)
    prop = resample_subinterval(cur, grid.x[i], grid.x[j], epsilon, gen)
    logr = log_target_ratio(prop, cur, block, epsilon, potential)
    k = j - i - 1
    if k >= state.tried.size:
        state.tried = np.pad(state.tried, (0, k + 1 - state.tried.size))
        state.accepted = np.pad(state.accepted, (0, k + 1 - state.accepted.size))
    state.tried[k] += 1
    if logr >= 0 or math.log(gen.random()) < logr:
        state.values = np.array(prop.values)
        state.vcache[i + 1:j] = potential.eval(state.values[i + 1:j])
        state.accepted[k] += 1
    state.steps += 1
    return state


def _initial_path(config: SamplerConfig, gen) -> Path:
    spec = BridgeSpec(config.grid, config.u_minus, config.u_plus, config.epsilon)
    return sample_bridge(spec, gen)


def run_chain(config: SamplerConfig, potential, stream: int = 0, init: Path | None = None,
              state_out: list | None = None) -> Ensemble:
    """Sweep the grid ``config.sweeps`` times and keep thinned post-burn-in states.

    Every sweep visits blocks of ``config.block`` interior points left to
    right, starting from a uniformly random offset. The run is a pure
    function of ``(config, stream)``.
    """
    src = RandomSource(config.seed, stream)
    gen = src.generator()
    g = config.grid
    path = init if init is not None else _initial_path(config, gen)
    if path.grid != g:
        raise ConfigError("initial path grid differs from config grid")
    state = ChainState.from_path(path, potential, config.block)
    kind, u0, h, tab, dtab = potential.kernel_spec()
    keep = np.arange(config.burn_in, config.sweeps)
    keep = keep[(keep - config.burn_in) % config.thin == 0]
    out = np.empty((keep.size, g.n + 2))
    pos = 0
    nblocks = (g.n + 1) // (config.block + 1) + 2
    u, vc = state.values, state.vcache
    pcn = config.kernel == "pcn"
    for start in range(0, config.sweeps, BATCH):
        b = min(BATCH, config.sweeps - start)
        offsets = gen.integers(0, config.block + 1, size=b)
        normals = gen.standard_normal((b, g.n))
        uniforms = gen.random((b, nblocks))
        idx = np.arange(start, start + b)
        record = (idx >= config.burn_in) & ((idx - config.burn_in) % config.thin == 0)
        pos = _kernels.sweep_batch(u, vc, config.epsilon, g.dx, config.block, pcn, config.beta,
                                   kind, u0, h, tab, dtab, offsets, normals, uniforms, record,
                                   out, pos, state.accepted, state.tried, np.empty_like(u))
    state.steps = config.sweeps
    if state_out is not None:
        state_out.append(state)
    meta = {"config": config.to_json(), "config_hash": config.hash(), "seed": config.seed,
            "stream": stream, "acceptance": state.acceptance, "sweeps": config.sweeps}
    return Ensemble(g, config.u_minus, config.u_plus, out[:pos], np.full(pos, stream), meta)


def run_chains(config: SamplerConfig, potential, chains: int = 1, threads: int = 1) -> Ensemble:
    """Independent chains on substreams ``0..chains-1``, merged in stream order."""
    if chains < 1:
        raise ConfigError("chains must be >= 1")
    if threads > 1 and chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda s: run_chain(config, potential, stream=s), range(chains)))
    else:
        parts = [run_chain(config, potential, stream=s) for s in range(chains)]
    return Ensemble.merge(parts)


# ------------------------------------------------------------- diagnostics

def integrated_autocorr(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's adaptive window."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return 1.0
    y = x - x.mean()
    if not np.any(y):
        return math.nan
    f = np.fft.rfft(y, n=2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    m = int(np.argmax(window)) if np.any(window) else n - 1
    return float(max(taus[m], 1.0))


@dataclass
class Estimate:
    """Point estimate with standard error and effective sample size.

    The error is the larger of the 20-batch means estimate and
    ``sqrt(var * tau / n)`` from the integrated autocorrelation time.
    """

    value: float
    se: float
    ess: float
    iact: float
    flagged: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def _batch_means_var(x: np.ndarray, nb: int = 20) -> tuple[float, int]:
    nb = min(nb, x.size // 2)
    if nb < 2:
        return math.nan, 0
    size = x.size // nb
    if size < 1:
        return math.nan, 0
    means = x[: nb * size].reshape(nb, size).mean(axis=1)
    return float(means.var(ddof=1) / nb), nb


def estimate_mean(values: np.ndarray, chain_ids: np.ndarray | None = None) -> Estimate:
    """Mean of a per-sample statistic, pooling independent chains."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ConfigError("empty sample")
    if chain_ids is None:
        chain_ids = np.zeros(values.size, dtype=int)
    mean = float(values.mean())
    if np.all(values == values[0]):
        return Estimate(mean, 0.0, math.nan, math.nan, True)
    var_parts, ess = [], 0.0
    taus = []
    for c in np.unique(chain_ids):
        xc = values[chain_ids == c]
        w = xc.size / values.size
        v, _ = _batch_means_var(xc)
        tau = integrated_autocorr(xc)
        if np.isfinite(tau):
            taus.append(tau)
            ess += xc.size / tau
            # batch means undercount when batches are short against tau
            v = max(v if np.isfinite(v) else 0.0, xc.var() * tau / xc.size)
        if np.isfinite(v):
            var_parts.append(w * w * v)
    se = math.sqrt(sum(var_parts)) if var_parts else math.nan
    tau = float(np.mean(taus)) if taus else math.nan
    return Estimate(mean, se, ess, tau, ess < 1.0)


def estimate_event_probability(ensemble: Ensemble, event) -> Estimate:
    """Fraction of states satisfying ``event`` with batch-means error and ESS.

    ``event`` is an :class:`~acgibbs.automata.Automaton`, a callable on a
    :class:`Path`, or a callable taking the stacked ``(x, values)`` arrays
    when it carries ``vectorised = True``.
    """
    if len(ensemble) == 0:
        raise ConfigError("empty ensemble")
    x = ensemble.grid.x
    if hasattr(event, "accepts_many"):
        ind = event.accepts_many(x, ensemble.values)
    elif getattr(event, "vectorised", False):
        ind = np.asarray(event(x, ensemble.values), dtype=bool)
    else:
        ind = np.array([bool(event(p)) for p in ensemble.paths()])
    return estimate_mean(ind.astype(float), ensemble.chain_ids)
