"""Uniform grids, discretised paths, energies and layer/excursion detectors.

Paths are piecewise linear between grid points; all level crossings are
located by linear interpolation, consistent with the energy quadrature.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[x_minus, x_plus]`` with ``n`` interior points."""

    x_minus: float
    x_plus: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("grid needs at least one interior point")
        if not self.x_plus > self.x_minus:
            raise DomainError("grid needs x_plus > x_minus")

    @classmethod
    def from_spacing(cls, x_minus: float, x_plus: float, dx: float) -> "Grid":
        cells = int(round((x_plus - x_minus) / dx))
        if cells < 2 or abs(cells * dx - (x_plus - x_minus)) > 1e-9 * max(1.0, x_plus - x_minus):
            raise DomainError(f"spacing {dx} does not divide [{x_minus}, {x_plus}]")
        return cls(float(x_minus), float(x_plus), cells - 1)

    @classmethod
    def symmetric(cls, L: float, dx: float) -> "Grid":
        return cls.from_spacing(-L, L, dx)

    @property
    def dx(self) -> float:
        return (self.x_plus - self.x_minus) / (self.n + 1)

    @property
    def length(self) -> float:
        return self.x_plus - self.x_minus

    @property
    def x(self) -> np.ndarray:
        """All ``n + 2`` grid points including the boundary."""
        return self.x_minus + self.dx * np.arange(self.n + 2)

    def index(self, x: float, tol: float = 1e-9) -> int:
        """Index of grid point ``x``; raises if ``x`` is off the grid."""
        k = (x - self.x_minus) / self.dx
        i = int(round(k))
        if abs(k - i) > tol or not 0 <= i <= self.n + 1:
            raise DomainError(f"{x} is not a grid point")
        return i

    def nearest_index(self, x: float) -> int:
        k = int(round((x - self.x_minus) / self.dx))
        return min(max(k, 0), self.n + 1)

    def to_json(self) -> dict:
        return {"x_minus": self.x_minus, "x_plus": self.x_plus, "n": self.n}


@dataclass(frozen=True)
class Path:
    """Values of a path at all grid points (boundary entries included)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n + 2,):
            raise DomainError(f"path needs {self.grid.n + 2} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def u_minus(self) -> float:
        return float(self.values[0])

    @property
    def u_plus(self) -> float:
        return float(self.values[-1])

    def at(self, x) -> np.ndarray:
        """Linear interpolation of the path at ``x``."""
        return np.interp(x, self.grid.x, self.values)

    def with_values(self, values) -> "Path":
        return Path(self.grid, values)

    def __eq__(self, other):
        return (isinstance(other, Path) and self.grid == other.grid
                and np.array_equal(self.values, other.values))

    __hash__ = None


# --------------------------------------------------------------------- energy

def energy(path: Path, potential) -> tuple[float, float, float]:
    """Discrete energy ``(E, I, PV)`` of a piecewise-linear path.

    ``I`` is exact for the interpolant; ``PV`` is the trapezoid rule.
    """
    u = path.values
    dx = path.grid.dx
    du = np.diff(u)
    I = 0.5 * float(np.sum(du * du)) / dx
    v = potential.eval(u)
    PV = dx * float(np.sum(v) - 0.5 * (v[0] + v[-1]))
    return I + PV, I, PV


def energy_gradient(u: np.ndarray, dx: float, potential) -> np.ndarray:
    """Gradient of the discrete energy with respect to all entries of ``u``."""
    g = np.zeros_like(u)
    du = np.diff(u) / dx
    g[:-1] -= du
    g[1:] += du
    w = np.full(u.shape, dx)
    w[0] = w[-1] = 0.5 * dx
    return g + w * potential.deriv(u)


def min_gaussian_energy(u_minus: float, u_plus: float, x_minus: float, x_plus: float) -> float:
    """Smallest Gaussian energy ``1/2 int u'^2`` with the given boundary data."""
    if not x_plus > x_minus:
        raise DomainError("min_gaussian_energy needs x_plus > x_minus")
    return 0.5 * (u_plus - u_minus) ** 2 / (x_plus - x_minus)


def affine_interpolant(u_minus: float, u_plus: float, grid: Grid) -> Path:
    """Affine path joining the boundary values."""
    t = (grid.x - grid.x_minus) / grid.length
    vals = (1.0 - t) * u_minus + t * u_plus
    vals[0], vals[-1] = u_minus, u_plus
    return Path(grid, vals)


def piecewise_linearize(path: Path, xh_minus: float, xh_plus: float) -> Path:
    """Replace the path on ``[xh_minus, xh_plus]`` by its chord.

    Off-grid endpoints are snapped to the nearest grid point with a warning.
    """
    g = path.grid
    idx = []
    for xh in (xh_minus, xh_plus):
        try:
            idx.append(g.index(xh))
        except DomainError:
            i = g.nearest_index(xh)
            warnings.warn(f"hat point {xh} snapped to grid point {g.x[i]}", stacklevel=2)
            idx.append(i)
    i, j = idx
    if not i < j:
        raise DomainError("piecewise_linearize needs xh_minus < xh_plus")
    v = path.values.copy()
    t = np.arange(j - i + 1) / (j - i)
    v[i:j + 1] = (1.0 - t) * v[i] + t * v[j]
    return Path(g, v)


# ------------------------------------------------------------------ crossings

def touches(x: np.ndarray, u: np.ndarray, level: float) -> np.ndarray:
    """Sorted positions where the piecewise-linear path equals ``level``."""
    a, b = u[:-1] - level, u[1:] - level
    seg = np.nonzero(a * b <= 0.0)[0]
    if seg.size == 0:
        return np.empty(0)
    ua, ub = a[seg], b[seg]
    flat = ua == ub  # both zero
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(flat, 0.0, ua / (ua - ub))
    pos = x[seg] + frac * (x[seg + 1] - x[seg])
    if np.any(flat):
        pos = np.concatenate([pos, x[seg[flat] + 1]])
    return np.unique(pos)


def clip_window(path: Path, window) -> tuple[np.ndarray, np.ndarray]:
    """Node positions and values of the path restricted to ``window``."""
    x, u = path.grid.x, path.values
    if window is None:
        return x, u
    a, b = window
    a = max(a, x[0])
    b = min(b, x[-1])
    if not a <= b:
        raise DomainError(f"window {window} outside the path domain")
    inner = (x > a) & (x < b)
    xs = np.concatenate([[a], x[inner], [b]])
    us = np.concatenate([[np.interp(a, x, u)], u[inner], [np.interp(b, x, u)]])
    return xs, us


@dataclass
class LayerEvent:
    """One located layer or wasted excursion."""

    kind: str
    x_start: float
    x_end: float
    witnesses: tuple = ()
    delta: float | None = None

    @property
    def length(self) -> float:
        return self.x_end - self.x_start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.x_start + self.x_end)

    def contained_in(self, a: float, b: float) -> bool:
        return a <= self.x_start and self.x_end <= b


@dataclass
class LayerReport:
    """Events sorted by ``x_start``."""

    events: list = field(default_factory=list)
    kind: str = ""
    delta: float | None = None

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def count(self, orientation: str | None = None) -> int:
        if orientation is None:
            return len(self.events)
        return sum(1 for e in self.events if e.kind.endswith(orientation))

    @property
    def n_up(self) -> int:
        return self.count("up")

    @property
    def n_down(self) -> int:
        return self.count("down")


_KIND_ALIASES = {
    "full": "full", "dminus": "dminus", "δ⁻": "dminus", "delta-minus": "dminus",
    "dplus": "dplus", "δ⁺": "dplus", "delta-plus": "dplus",
}


def _normalise_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind]
    except KeyError:
        raise ConfigError(f"unknown layer kind {kind!r}") from None


def layer_level(kind: str, delta: float = 0.0) -> float:
    kind = _normalise_kind(kind)
    if kind == "full":
        return 1.0
    if not 0.0 < delta < 0.5:
        raise ConfigError("delta must lie in (0, 1/2)")
    return 1.0 - delta if kind == "dminus" else 1.0 + delta


def detect_layers(path: Path, kind: str = "full", delta: float = 0.0, window=None) -> LayerReport:
    """Locate up and down layers between the levels ``-c`` and ``+c``.

    ``c`` is 1 for full layers, ``1 - delta`` for δ⁻ layers and
    ``1 + delta`` for δ⁺ layers. A layer runs from the last touch of one
    level to the next touch of the opposite level, so between its endpoints
    ``|u| < c``; these are the minimal witness pairs.
    """
    nk = _normalise_kind(kind)
    c = layer_level(nk, delta)
    x, u = clip_window(path, window)
    lo, hi = touches(x, u, -c), touches(x, u, c)
    pos = np.concatenate([lo, hi])
    lab = np.concatenate([-np.ones(lo.size, int), np.ones(hi.size, int)])
    order = np.argsort(pos, kind="stable")
    pos, lab = pos[order], lab[order]
    prefix = "" if nk == "full" else nk + "-"
    events = []
    if pos.size > 1:
        sw = np.nonzero(lab[1:] != lab[:-1])[0]
        for i in sw:
            orient = "up" if lab[i + 1] > 0 else "down"
            events.append(LayerEvent(prefix + orient, float(pos[i]), float(pos[i + 1]),
                                     (float(pos[i]), float(pos[i + 1])),
                                     None if nk == "full" else delta))
    return LayerReport(events, nk, None if nk == "full" else delta)


# --------------------------------------------------------- wasted excursions

def _segment_spans(x, u, lo, hi):
    """Per segment, the closed sub-interval where ``lo <= u <= hi`` (nan if empty)."""
    ua, ub = u[:-1], u[1:]
    xa, xb = x[:-1], x[1:]
    du = ub - ua
    flat = du == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        t_lo = np.where(flat, -np.inf, (lo - ua) / du)
        t_hi = np.where(flat, np.inf, (hi - ua) / du)
    t0 = np.clip(np.minimum(t_lo, t_hi), 0.0, 1.0)
    t1 = np.clip(np.maximum(t_lo, t_hi), 0.0, 1.0)
    inside_flat = flat & (ua >= lo) & (ua <= hi)
    t0 = np.where(flat, 0.0, t0)
    t1 = np.where(flat, 1.0, t1)
    # nonempty iff the segment's value range meets [lo, hi]
    ok = (np.maximum(ua, ub) >= lo) & (np.minimum(ua, ub) <= hi)
    ok &= np.where(flat, inside_flat, True)
    s0 = xa + t0 * (xb - xa)
    s1 = xa + t1 * (xb - xa)
    return np.where(ok, s0, np.nan), np.where(ok, s1, np.nan)


def _visit_events(x, u, sets):
    """Time-ordered visits ``(start, end, set_id)`` of the path to closed value sets."""
    rows = []
    nseg = x.size - 1
    seg_ids = np.arange(nseg)
    for sid, (lo, hi) in enumerate(sets):
        s0, s1 = _segment_spans(x, u, lo, hi)
        ok = ~np.isnan(s0)
        rows.append(np.column_stack([seg_ids[ok], s0[ok], s1[ok], np.full(ok.sum(), sid)]))
    ev = np.concatenate(rows) if rows else np.empty((0, 4))
    order = np.lexsort((ev[:, 1], ev[:, 0]))
    return ev[order]


def _greedy_triples(events, families):
    """Greedy left-to-right disjoint (near, zero, near) witness triples.

    ``families`` maps a family label to ``(near_set_id, zero_set_id)``.
    """
    prog = {f: 0 for f in families}
    xm = {f: 0.0 for f in families}
    x0 = {f: 0.0 for f in families}
    out = []
    for _, s0, s1, sid in events:
        sid = int(sid)
        done = None
        for f, (near, zero) in families.items():
            if sid == near:
                if prog[f] == 2:
                    done = (f, xm[f], x0[f], s0)
                    break
                prog[f] = 1
                xm[f] = s1
            elif sid == zero and prog[f] == 1:
                prog[f] = 2
                x0[f] = s0
        if done is not None:
            f, a, m, b = done
            out.append((f, a, m, b))
            for g in families:
                prog[g] = 0
            prog[f] = 1
            xm[f] = s1
    return out


def wasted_sets(kind: str, delta: float):
    """Value sets and families defining wasted excursions of ``kind``."""
    nk = _normalise_kind(kind)
    if not 0.0 < delta < 0.5:
        raise ConfigError("delta must lie in (0, 1/2)")
    if nk == "dminus":
        sets = [(-1 - delta, -1 + delta), (-delta, delta), (1 - delta, 1 + delta)]
        families = {-1: (0, 1), 1: (2, 1)}
    elif nk == "dplus":
        sets = [(-np.inf, -1 - delta), (0.0, 0.0)]
        families = {-1: (0, 1)}
    else:
        raise ConfigError("wasted excursions are defined for kinds dminus and dplus")
    return nk, sets, families


def detect_wasted_excursions(path: Path, kind: str = "dminus", delta: float = 0.1,
                             window=None) -> LayerReport:
    """Disjoint wasted excursions in ``window``, found greedily left to right.

    δ⁻: ``x- < x0 < x+`` with ``|u(x0)| <= delta`` and both ends within
    ``delta`` of the same well. δ⁺: both ends ``<= -1 - delta`` and
    ``u(x0) = 0``.
    """
    nk, sets, families = wasted_sets(kind, delta)
    x, u = clip_window(path, window)
    triples = _greedy_triples(_visit_events(x, u, sets), families)
    name = "wasted-" + nk
    evs = [LayerEvent(name, a, b, (a, m, b), delta) for _, a, m, b in triples]
    return LayerReport(evs, name, delta)


# ------------------------------------------------------------ stopping points

@dataclass(frozen=True)
class StoppingSpec:
    """Stopping point description.

    With ``trigger=None`` this is a plain hitting point of ``target`` inside
    ``window`` (leftmost for ``side="left"``, rightmost for ``"right"``).
    With a trigger level ``c``, a left point is the first touch of
    ``target`` after the first touch of ``|u| = c`` to the right of the
    window start; a right point is the mirror image.
    """

    side: str
    window: tuple | None = None
    target: float = 0.0
    trigger: float | None = None

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ConfigError(f"stopping side must be 'left' or 'right', got {self.side!r}")
        if self.window is not None:
            if len(self.window) != 2 or not self.window[0] <= self.window[1]:
                raise ConfigError(f"malformed stopping window {self.window!r}")
        if self.trigger is not None and self.trigger <= 0:
            raise ConfigError("trigger level must be positive")


def stopping_point(path: Path, spec: StoppingSpec) -> float:
    """Evaluate one stopping point; the sentinel is ``x_plus`` (left) or ``x_minus`` (right)."""
    g = path.grid
    x, u = clip_window(path, spec.window)
    hits = touches(x, u, spec.target)
    left = spec.side == "left"
    sentinel = g.x_plus if left else g.x_minus
    if spec.trigger is not None:
        c = spec.trigger
        trig = np.union1d(touches(x, u, c), touches(x, u, -c))
        if left:
            trig = trig[trig > x[0]]
            if trig.size == 0:
                return sentinel
            hits = hits[hits > trig[0]]
        else:
            trig = trig[trig < x[-1]]
            if trig.size == 0:
                return sentinel
            hits = hits[hits < trig[-1]]
    if hits.size == 0:
        return sentinel
    return float(hits[0] if left else hits[-1])


def stopping_points(path: Path, specs) -> list:
    """Evaluate a single spec or a list of specs."""
    if isinstance(specs, StoppingSpec):
        return [stopping_point(path, specs)]
    return [stopping_point(path, s) for s in specs]


# ---------------------------------------------------------------- utilities

def layer_midpoints(path: Path, kind: str = "dminus", delta: float = 0.1,
                    orientation: str = "up") -> np.ndarray:
    rep = detect_layers(path, kind, delta)
    return np.array([e.midpoint for e in rep.events if e.kind.endswith(orientation)])


def path_integral(path: Path) -> float:
    """Trapezoid integral of the path."""
    u = path.values
    return path.grid.dx * float(np.sum(u) - 0.5 * (u[0] + u[-1]))


def artanh_crossing(level: float) -> float:
    """Position where tanh(x / sqrt 2) equals ``level``."""
    return math.sqrt(2.0) * math.atanh(level)
