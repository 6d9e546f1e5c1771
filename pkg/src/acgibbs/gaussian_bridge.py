"""Exact sampling and analytics of the Brownian-bridge reference measure.

The bridge on ``[x-, x+]`` with boundary values ``u-, u+`` has mean the
affine interpolant and covariance
``eps / (x+ - x-) * min((x1 - x-)(x+ - x2), (x2 - x-)(x+ - x1))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .path_domain import Grid, Path, affine_interpolant


@dataclass(frozen=True)
class BridgeSpec:
    """Bridge on ``grid`` pinned at ``u_minus``, ``u_plus`` with noise ``epsilon``."""

    grid: Grid
    u_minus: float
    u_plus: float
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise DomainError("epsilon must be non-negative")


@dataclass(frozen=True)
class RandomSource:
    """Counter-based random stream (Philox) keyed by ``(seed, stream)``.

    Identical ``(seed, stream, counter)`` triples produce bit-identical
    draws regardless of how many other streams are in use.
    """

    seed: int
    stream: int = 0
    counter: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        bg = np.random.Philox(ss)
        if self.counter:
            bg = bg.advance(self.counter)
        return np.random.Generator(bg)

    def substream(self, k: int) -> "RandomSource":
        """Independent child stream, e.g. one per chain."""
        return RandomSource(self.seed, self.stream * 1_000_003 + k + 1, 0)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RandomSource):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(rng))


def _conditional_fill(values: np.ndarray, x: np.ndarray, lo: int, hi: int, eps: float,
                      z: np.ndarray) -> None:
    """Overwrite ``values[..., lo+1:hi]`` by a bridge pinned at ``lo`` and ``hi``.

    Works on stacked rows; ``z`` has shape ``(..., hi - lo - 1)``.
    """
    b = values[..., hi]
    prev = values[..., lo]
    xe = x[hi]
    for k, i in enumerate(range(lo + 1, hi)):
        rem = xe - x[i - 1]
        step = x[i] - x[i - 1]
        mean = prev + step * (b - prev) / rem
        var = eps * step * (rem - step) / rem
        prev = mean + np.sqrt(var) * z[..., k]
        values[..., i] = prev


def sample_bridge(spec: BridgeSpec, rng, size: int | None = None):
    """Draw bridge paths by sequential conditioning.

    Returns a :class:`Path` if ``size`` is None, otherwise an array of shape
    ``(size, n + 2)``.
    """
    g = spec.grid
    x = g.x
    if spec.epsilon == 0:
        base = affine_interpolant(spec.u_minus, spec.u_plus, g)
        return base if size is None else np.tile(base.values, (size, 1))
    gen = as_generator(rng)
    rows = 1 if size is None else size
    vals = np.empty((rows, g.n + 2))
    vals[:, 0] = spec.u_minus
    vals[:, -1] = spec.u_plus
    z = gen.standard_normal((rows, g.n))
    _conditional_fill(vals, x, 0, g.n + 1, spec.epsilon, z)
    return Path(g, vals[0]) if size is None else vals


def bridge_covariance(spec: BridgeSpec, x1, x2):
    """Covariance of the centred bridge at ``x1`` and ``x2``."""
    g = spec.grid
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    tol = 1e-12 * max(1.0, g.length)
    if (np.any(x1 < g.x_minus - tol) or np.any(x1 > g.x_plus + tol)
            or np.any(x2 < g.x_minus - tol) or np.any(x2 > g.x_plus + tol)):
        raise DomainError("covariance arguments must lie in [x_minus, x_plus]")
    a = (x1 - g.x_minus) * (g.x_plus - x2)
    b = (x2 - g.x_minus) * (g.x_plus - x1)
    return spec.epsilon / g.length * np.minimum(a, b)


def resample_subinterval(path: Path, xh_minus: float, xh_plus: float, epsilon: float,
                         rng) -> Path:
    """Fresh bridge sample on the interior of ``[xh_minus, xh_plus]``.

    The endpoints keep their current values; everything outside is copied
    bit for bit.
    """
    g = path.grid
    i, j = g.index(xh_minus), g.index(xh_plus)
    if not i < j:
        raise DomainError("resample_subinterval needs xh_minus < xh_plus")
    if j - i < 2:
        return path
    v = path.values.copy()
    z = as_generator(rng).standard_normal(j - i - 1)
    _conditional_fill(v, g.x, i, j, epsilon, z)
    return Path(g, v)


def cameron_martin_logdensity(f: Path, u, epsilon: float):
    """Log Radon-Nikodym derivative of the bridge shifted by ``f``.

    ``-I(f)/eps + (1/eps) sum f'(x_i) (u(x_{i+1}) - u(x_i))`` with the
    left-point rule. ``u`` is a :class:`Path` or an array of stacked rows.
    """
    fv = f.values
    tol = 1e-12 * max(1.0, float(np.max(np.abs(fv))))
    if abs(fv[0]) > tol or abs(fv[-1]) > tol:
        raise DomainError("Cameron-Martin shift must vanish at both ends")
    dx = f.grid.dx
    fp = np.diff(fv) / dx
    I = 0.5 * float(np.sum(fp * fp)) * dx
    uv = u.values if isinstance(u, Path) else np.asarray(u, dtype=float)
    stoch = np.diff(uv, axis=-1) @ fp
    return (-I + stoch) / epsilon
