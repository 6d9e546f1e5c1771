"""Measure-preserving path transforms and statistical tests of their invariance.

Reflections between stopping points act on the discrete (grid) measure in
one of two modes:

* ``"grid"``: stopping points are the crossings of the piecewise-linear
  interpolant and nodes strictly between them are negated. Deterministic,
  but only approximately measure preserving on a grid.
* ``"bridge"``: the path between nodes is completed by independent Brownian
  bridges (the law the Gaussian reference measure puts there); a bridge
  between two nodes on the same side of a level hits it with probability
  ``exp(-2 (a - c)(b - c) / (eps dx))``. Stopping points are the hits of
  this completed path, so the reflection is exact for the grid measure up
  to the (negligible) event that trigger and target are hit within the
  same grid step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError
from .gaussian_bridge import as_generator
from .path_domain import Path, StoppingSpec, detect_layers, path_integral, stopping_point

KINDS = ("vertical", "horizontal", "point", "between", "composed", "point-between-hits",
         "fixed-window")
_ALIASES = {"between-stopping-points": "between", "r_yz": "point-between-hits",
            "identity": "identity"}


@dataclass(frozen=True)
class ReflectionSpec:
    """Transform description.

    Attributes:
        kind: One of ``KINDS`` or ``"identity"``.
        left, right: Stopping specs for ``between`` and the hit specs
            (target levels -1 and +1) for ``point-between-hits``.
        pairs: ``((left, right), ...)`` outermost first, for ``composed``.
        window: Fixed window for the ``fixed-window`` control.
        mode: ``"bridge"`` or ``"grid"``.
        epsilon: Noise strength used by the bridge completion.
    """

    kind: str
    left: StoppingSpec | None = None
    right: StoppingSpec | None = None
    pairs: tuple = ()
    window: tuple | None = None
    mode: str = "bridge"
    epsilon: float | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS + ("identity",):
            raise ConfigError(f"unknown reflection kind {self.kind!r}")
        if self.mode not in ("bridge", "grid"):
            raise ConfigError("mode must be 'bridge' or 'grid'")
        if kind in ("between", "point-between-hits"):
            if self.left is None or self.right is None:
                raise ConfigError(f"{kind} needs left and right stopping specs")
            if self.left.side != "left" or self.right.side != "right":
                raise ConfigError("left/right specs have the wrong sides")
        if kind == "composed" and not self.pairs:
            raise ConfigError("composed reflection needs stopping-point pairs")
        if kind == "fixed-window" and self.window is None:
            raise ConfigError("fixed-window control needs a window")

    @property
    def name(self) -> str:
        return self.kind


# ------------------------------------------------------------ bridge hits

def _hit_prob(a: np.ndarray, b: np.ndarray, level: float, eps: float, dx: float) -> np.ndarray:
    """Probability that a bridge from ``a`` to ``b`` over one step touches ``level``."""
    da, db = a - level, b - level
    p = np.exp(-2.0 * np.clip(da * db, 0.0, None) / (eps * dx))
    return np.where(da * db <= 0.0, 1.0, p)


def _window_nodes(path: Path, window) -> tuple[int, int]:
    g = path.grid
    if window is None:
        return 0, g.n + 1
    a, b = window
    x = g.x
    lo = int(np.searchsorted(x, a - 1e-9 * g.dx, side="left"))
    hi = int(np.searchsorted(x, b + 1e-9 * g.dx, side="right")) - 1
    return max(lo, 0), min(hi, g.n + 1)


def _bridge_stop(path: Path, spec: StoppingSpec, eps: float, u_trig: np.ndarray,
                 u_zero: np.ndarray):
    """Grid step containing the stopping point of the bridge-completed path, or None."""
    u = path.values
    dx = path.grid.dx
    lo, hi = _window_nodes(path, spec.window)
    if hi - lo < 1:
        return None
    seg = np.arange(lo, hi)
    if spec.side == "right":
        seg = seg[::-1]
    a, b = u[seg], u[seg + 1]
    if spec.trigger is not None:
        c = spec.trigger
        p = np.maximum(_hit_prob(a, b, c, eps, dx), _hit_prob(a, b, -c, eps, dx))
        trig = np.nonzero(u_trig[seg] < p)[0]
        if trig.size == 0:
            return None
        start = trig[0] + 1
    else:
        start = 0
    p0 = _hit_prob(a[start:], b[start:], spec.target, eps, dx)
    hit = np.nonzero(u_zero[seg[start:]] < p0)[0]
    if hit.size == 0:
        return None
    return int(seg[start + hit[0]])


def _hit_position(path: Path, k: int, level: float) -> float:
    u, x = path.values, path.grid.x
    a, b = u[k] - level, u[k + 1] - level
    if a * b <= 0 and a != b:
        return float(x[k] + a / (a - b) * (x[k + 1] - x[k]))
    return float(0.5 * (x[k] + x[k + 1]))


# ------------------------------------------------------------- transforms

@dataclass
class Applied:
    """Reflected path plus the stopping data that produced it."""

    path: Path
    chis: list = field(default_factory=list)
    degenerate: bool = False


def _negate_between_grid(path: Path, cl: float, cr: float) -> np.ndarray:
    x = path.grid.x
    v = np.array(path.values)
    if cl < cr:
        mask = (x > cl) & (x < cr)
        v[mask] = -v[mask]
    return v


def _aux(path: Path, gen):
    n = path.grid.n + 1
    return gen.random(n), gen.random(n)


def apply_reflection_ex(path: Path, spec: ReflectionSpec, rng=None, epsilon=None) -> Applied:
    """Apply ``spec`` and also return the stopping points used."""
    kind = spec.kind
    v = path.values
    g = path.grid
    if kind == "identity":
        return Applied(path)
    if kind == "vertical":
        return Applied(Path(g, -v))
    if kind == "horizontal":
        return Applied(Path(g, v[::-1].copy()))
    if kind == "point":
        return Applied(Path(g, -v[::-1]))
    if kind == "fixed-window":
        a, b = spec.window
        x = g.x
        w = np.array(v)
        m = (x >= a) & (x <= b)
        w[m] = -w[m]
        return Applied(Path(g, w))

    eps = spec.epsilon if spec.epsilon is not None else epsilon
    bridge = spec.mode == "bridge"
    if bridge:
        if eps is None or not eps > 0:
            raise ConfigError("bridge-mode reflections need epsilon > 0")
        gen = as_generator(rng if rng is not None else 0)
        ut, uz = _aux(path, gen)

    def pair_chis(left, right):
        if bridge:
            kl = _bridge_stop(path, left, eps, ut, uz)
            kr = _bridge_stop(path, right, eps, ut, uz)
            return kl, kr
        return stopping_point(path, left), stopping_point(path, right)

    if kind == "between":
        cl, cr = pair_chis(spec.left, spec.right)
        if bridge:
            w = np.array(v)
            if cl is not None and cr is not None and cl < cr:
                w[cl + 1:cr + 1] = -w[cl + 1:cr + 1]
            return Applied(Path(g, w), [cl, cr])
        return Applied(Path(g, _negate_between_grid(path, cl, cr)), [cl, cr])

    if kind == "composed":
        flips = np.zeros(v.size, dtype=bool)
        chis, degenerate = [], False
        # innermost pair acts first; with all stopping points read off the
        # input path the composition negates where an odd number of
        # intervals overlap
        for left, right in reversed(spec.pairs):
            cl, cr = pair_chis(left, right)
            chis.append((cl, cr))
            if cl is None or cr is None:
                continue
            if bridge:
                if cl < cr:
                    flips[cl + 1:cr + 1] ^= True
                elif cl == cr:
                    degenerate = True
            else:
                if cl < cr:
                    x = g.x
                    flips ^= (x > cl) & (x < cr)
                elif cl == cr and cl not in (g.x_minus, g.x_plus):
                    degenerate = True
        w = np.where(flips, -v, v)
        return Applied(Path(g, w), chis[::-1], degenerate)

    # point reflection between hitting points
    x = g.x
    if bridge:
        kl, kr = pair_chis(spec.left, spec.right)
        if kl is None or kr is None:
            return Applied(path, [None, None])
        cm = _hit_position(path, kl, spec.left.target)
        cp = _hit_position(path, kr, spec.right.target)
    else:
        cm, cp = pair_chis(spec.left, spec.right)
    if not cm <= cp:
        return Applied(path, [cm, cp])
    w = np.array(v)
    inner = np.nonzero((x > cm) & (x < cp))[0]
    y = cm + cp - x[inner]
    m = np.clip(np.floor((y - g.x_minus) / g.dx).astype(int), 0, g.n)
    t = (y - x[m]) / g.dx
    val = (1.0 - t) * v[m] + t * v[m + 1]
    if bridge:
        sd = np.sqrt(eps * g.dx * np.clip(t * (1.0 - t), 0.0, None))
        val = val + sd * gen.standard_normal(inner.size)
    w[inner] = -val
    return Applied(Path(g, w), [cm, cp])


def apply_reflection(path: Path, spec: ReflectionSpec, rng=None, epsilon=None) -> Path:
    """Reflected path; stopping points are always recomputed from ``path``."""
    return apply_reflection_ex(path, spec, rng, epsilon).path


def reflect_fixed(path: Path, kind: str, chis) -> Path:
    """Reflection with given stopping points (no recomputation); an involution."""
    if kind == "between":
        return Path(path.grid, _negate_between_grid(path, *chis))
    if kind == "composed":
        x = path.grid.x
        flips = np.zeros(x.size, dtype=bool)
        for cl, cr in chis:
            if cl < cr:
                flips ^= (x > cl) & (x < cr)
        return Path(path.grid, np.where(flips, -path.values, path.values))
    raise ConfigError(f"reflect_fixed does not support {kind!r}")


# -------------------------------------------------------------- statistics

def statistic(name: str) -> Callable[[Path], float]:
    """Scalar path functional by name.

    ``integral``, ``abs_integral``, ``layers`` (δ⁻ layers, δ = 0.1),
    ``max_abs``, ``energy_grad`` (sum of squared increments),
    ``zero_crossings`` (sign changes between nodes), ``u_at:<x>`` and
    ``first_zero``.
    """
    if name == "integral":
        return path_integral
    if name == "abs_integral":
        return lambda p: path_integral(Path(p.grid, np.abs(p.values)))
    if name == "layers":
        return lambda p: float(len(detect_layers(p, "dminus", 0.1)))
    if name == "max_abs":
        return lambda p: float(np.max(np.abs(p.values)))
    if name == "energy_grad":
        return lambda p: float(np.sum(np.diff(p.values) ** 2) / (2 * p.grid.dx))
    if name == "zero_crossings":
        return lambda p: float(np.count_nonzero(p.values[:-1] * p.values[1:] < 0))
    if name == "first_zero":
        def fz(p):
            s = np.nonzero(np.sign(p.values[:-1]) != np.sign(p.values[1:]))[0]
            return float(p.grid.x[s[0]]) if s.size else float(p.grid.x_plus)
        return fz
    if name.startswith("u_at:"):
        xq = float(name.split(":", 1)[1])
        return lambda p: float(np.interp(xq, p.grid.x, p.values))
    raise ConfigError(f"unknown statistic {name!r}")


DEFAULT_STATISTICS = ("integral", "layers", "max_abs", "u_at:0", "first_zero")


@dataclass
class TestReport:
    """Per-statistic two-sample KS p-values and the Bonferroni verdict."""

    transform: str
    statistics: list
    p_values: list
    alpha: float
    n_original: int
    n_transformed: int
    degenerate: int = 0

    __test__ = False  # not a pytest class

    @property
    def passed(self) -> bool:
        return bool(min(self.p_values) >= self.alpha / len(self.p_values))

    def to_json(self) -> dict:
        return {"transform": self.transform, "statistics": list(self.statistics),
                "p_values": [float(p) for p in self.p_values], "pass": self.passed,
                "alpha": self.alpha, "n": [self.n_original, self.n_transformed],
                "degenerate": self.degenerate}


def invariance_test(transform: ReflectionSpec, ensemble, statistics=DEFAULT_STATISTICS,
                    alpha: float = 0.01, rng=None, epsilon=None) -> TestReport:
    """Two-sample KS tests of each statistic, transformed half vs untouched half.

    The ensemble is split into alternating halves so the two samples are
    (approximately) independent; the first half is transformed.
    """
    if len(ensemble) < 4:
        raise DomainError("invariance_test needs a non-empty ensemble")
    if epsilon is None:
        cfg = getattr(ensemble, "metadata", {}).get("config", {})
        epsilon = cfg.get("epsilon")
    gen = as_generator(rng if rng is not None else 0)
    names = [s if isinstance(s, str) else getattr(s, "__name__", "stat") for s in statistics]
    funcs = [statistic(s) if isinstance(s, str) else s for s in statistics]
    vals = ensemble.values
    grid = ensemble.grid
    a_rows, b_rows = vals[0::2], vals[1::2]
    sa = np.empty((len(funcs), a_rows.shape[0]))
    sb = np.empty((len(funcs), b_rows.shape[0]))
    degenerate = 0
    for i, row in enumerate(a_rows):
        res = apply_reflection_ex(Path(grid, row), transform, gen, epsilon)
        degenerate += res.degenerate
        for j, f in enumerate(funcs):
            sa[j, i] = f(res.path)
    for i, row in enumerate(b_rows):
        p = Path(grid, row)
        for j, f in enumerate(funcs):
            sb[j, i] = f(p)
    pv = [float(stats.ks_2samp(sa[j], sb[j]).pvalue) for j in range(len(funcs))]
    return TestReport(transform.kind, names, pv, alpha, sa.shape[1], sb.shape[1], degenerate)
