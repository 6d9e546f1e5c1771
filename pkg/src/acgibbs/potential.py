"""Double-well potentials, assumption checks and derived well constants.

The builtin potential is the quartic ``V(u) = (1 - u**2)**2 / 4``.  User
potentials are supplied either as a callable or as a tabulated CSV with
columns ``u,V``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import ConfigError, InvalidPotentialError, PrecisionError

# kernel kinds understood by the compiled samplers (see _kernels.py)
KIND_QUARTIC = 0
KIND_TABLE = 1


def _quartic(u):
    return 0.25 * (1.0 - u * u) ** 2


def _quartic_d(u):
    return u * (u * u - 1.0)


def _quartic_d2(u):
    return 3.0 * u * u - 1.0


def _central_diff(f: Callable, order: int) -> Callable:
    def d(u):
        u = np.asarray(u, dtype=float)
        h = 1e-5 * (1.0 + np.abs(u))
        if order == 1:
            return (f(u + h) - f(u - h)) / (2.0 * h)
        return (f(u + h) - 2.0 * f(u) + f(u - h)) / (h * h)

    return d


class Potential:
    """Even double-well potential with first and second derivatives.

    Instances are immutable after construction and safe to share.

    Args:
        func: Vectorised callable ``u -> V(u)``.
        deriv: Optional ``V'``; central differences are used if omitted.
        deriv2: Optional ``V''``; central differences are used if omitted.
        family: ``"quartic"``, ``"table"`` or ``"closure"``.
        symmetrize: Evaluate ``(V(u) + V(-u)) / 2`` instead of ``V``.
        growth: Optional ``(beta, C)`` growth parameters, if known.
        name: Label used in reports.
    """

    def __init__(self, func: Callable, deriv: Callable | None = None,
                 deriv2: Callable | None = None, family: str = "closure",
                 symmetrize: bool = False, growth: tuple | None = None,
                 name: str = ""):
        if symmetrize:
            f0 = func
            func = lambda u: 0.5 * (f0(u) + f0(-np.asarray(u)))  # noqa: E731
            deriv = deriv2 = None
        self._f = func
        self._d = deriv if deriv is not None else _central_diff(func, 1)
        self._d2 = deriv2 if deriv2 is not None else _central_diff(func, 2)
        self.family = family
        self.growth = growth
        self.name = name or family
        self._table = None

    @classmethod
    def quartic(cls) -> "Potential":
        return cls(_quartic, _quartic_d, _quartic_d2, family="quartic", growth=(3.0, 4.0),
                   name="quartic")

    @classmethod
    def from_callable(cls, func: Callable, symmetrize: bool = False, name: str = "closure"):
        return cls(func, family="closure", symmetrize=symmetrize, name=name)

    @classmethod
    def from_table(cls, u, v, name: str = "table") -> "Potential":
        """Build a potential from samples, symmetrised in ``|u|``.

        Samples are averaged over ``u`` and ``-u`` and interpolated by a cubic
        spline in ``|u|``. Beyond the table the spline is continued
        quadratically so the growth stays superlinear.
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.ndim != 1 or u.shape != v.shape or u.size < 4:
            raise ConfigError("potential table needs matching 1-D columns u,V with >= 4 rows")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InvalidPotentialError("potential table contains non-finite entries")
        a = np.abs(u)
        order = np.argsort(a, kind="stable")
        a, v = a[order], v[order]
        ua, inv = np.unique(a, return_inverse=True)
        va = np.bincount(inv, weights=v) / np.bincount(inv)
        if ua.size < 4:
            raise ConfigError("potential table needs at least 4 distinct |u| values")
        # enforce V'(0) = 0 by mirroring
        if ua[0] > 0:
            xs = np.concatenate([-ua[::-1], ua])
            ys = np.concatenate([va[::-1], va])
        else:
            xs = np.concatenate([-ua[:0:-1], ua])
            ys = np.concatenate([va[:0:-1], va])
        spl = CubicSpline(xs, ys)
        d1, d2 = spl.derivative(1), spl.derivative(2)
        top = ua[-1]
        vt, dt, ct = float(spl(top)), float(d1(top)), max(float(d2(top)), 1.0)

        def f(x):
            x = np.abs(np.asarray(x, dtype=float))
            inside = spl(np.minimum(x, top))
            s = x - top
            out = vt + dt * s + 0.5 * ct * s * s
            return np.where(x <= top, inside, out)

        def fd(x):
            x = np.asarray(x, dtype=float)
            ax = np.abs(x)
            s = ax - top
            g = np.where(ax <= top, d1(np.minimum(ax, top)), dt + ct * s)
            return np.sign(x) * g

        def fd2(x):
            ax = np.abs(np.asarray(x, dtype=float))
            return np.where(ax <= top, d2(np.minimum(ax, top)), ct)

        return cls(f, fd, fd2, family="table", name=name)

    @classmethod
    def from_csv(cls, path) -> "Potential":
        path = FsPath(path)
        try:
            with path.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise ConfigError(f"potential.table: cannot read {path}: {exc}") from exc
        if not rows or "u" not in rows[0] or "V" not in rows[0]:
            raise ConfigError("potential.table: CSV must have columns u,V")
        try:
            u = [float(r["u"]) for r in rows]
            v = [float(r["V"]) for r in rows]
        except ValueError as exc:
            raise ConfigError(f"potential.table: non-numeric entry ({exc})") from exc
        return cls.from_table(u, v, name=path.name)

    @classmethod
    def from_config(cls, value, base_dir=None) -> "Potential":
        """Resolve the ``potential`` config key (``"quartic"`` or ``{"table": path}``)."""
        if value is None or value == "quartic":
            return cls.quartic()
        if isinstance(value, dict) and set(value) == {"table"}:
            p = FsPath(value["table"])
            if base_dir is not None and not p.is_absolute():
                p = FsPath(base_dir) / p
            return cls.from_csv(p)
        raise ConfigError(f"potential: expected 'quartic' or {{'table': <csv>}}, got {value!r}")

    def eval(self, u):
        return self._f(np.asarray(u, dtype=float))

    __call__ = eval

    def deriv(self, u):
        return self._d(np.asarray(u, dtype=float))

    def deriv2(self, u):
        return self._d2(np.asarray(u, dtype=float))

    def kernel_spec(self, u_max: float = 12.0, h: float = 1e-3):
        """Arguments for the compiled kernels: ``(kind, u0, h, V, dV)``.

        The quartic is evaluated in closed form; other potentials through a
        cubic Hermite table on ``[-u_max, u_max]``.
        """
        if self.family == "quartic":
            z = np.zeros(2)
            return KIND_QUARTIC, 0.0, 1.0, z, z
        if self._table is None or self._table[1] != -u_max:
            grid = np.arange(-u_max, u_max + 0.5 * h, h)
            self._table = (KIND_TABLE, float(grid[0]), float(h),
                           np.ascontiguousarray(self.eval(grid), dtype=float),
                           np.ascontiguousarray(self.deriv(grid), dtype=float))
        return self._table

    def __repr__(self):
        return f"Potential({self.name})"


@dataclass
class AssumptionReport:
    """Per-clause outcome of :func:`check_assumptions`."""

    clauses: dict
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())


def check_assumptions(potential: Potential, u_max: float = 3.0, n_samples: int = 2001,
                      tol: float = 1e-12, curvature_floor: float = 1e-4) -> AssumptionReport:
    """Check evenness, wells, curvature and growth on a symmetric sample grid.

    ``curvature_floor`` is the threshold used for ``V''(1) > 0``; the second
    derivative is often estimated by central differences, so an exact zero is
    not observable.
    """
    if u_max < 2 or n_samples < 100:
        raise ConfigError("check_assumptions needs u_max >= 2 and n_samples >= 100")
    n = n_samples | 1  # odd, so 0 is on the grid
    u = np.linspace(-u_max, u_max, n)
    v = potential.eval(u)
    if not np.all(np.isfinite(v)):
        raise InvalidPotentialError("non-finite V on the sample grid")
    scale = max(1.0, float(np.max(np.abs(v))))
    details = {}
    even_err = float(np.max(np.abs(v - v[::-1])))
    details["evenness_error"] = even_err
    at_wells = potential.eval(np.array([-1.0, 1.0]))
    details["V_at_wells"] = at_wells.tolist()
    off = np.abs(np.abs(u) - 1.0) > 1e-9
    clauses = {
        "evenness": even_err <= max(tol, 1e-12) * scale,
        "nonnegativity": bool(np.all(v >= -tol * scale)),
        "zero_set": bool(np.all(np.abs(at_wells) <= max(tol, 1e-12) * scale)
                         and np.all(v[off] > 0.0)),
    }
    # on (0, inf) the only critical point is the well at 1
    pos = u[(u > 1e-9)]
    dv = potential.deriv(pos)
    inner = pos < 1.0 - 1e-6
    outer = pos > 1.0 + 1e-6
    clauses["critical_points"] = bool(np.all(dv[inner] < 0) and np.all(dv[outer] > 0))
    curv = float(potential.deriv2(np.array([1.0]))[0])
    details["V2_at_1"] = curv
    clauses["curvature"] = curv > curvature_floor
    # growth exponent from a log-log fit on the upper half of the range
    big = u[u >= 0.5 * u_max]
    vb = potential.eval(big)
    if np.all(vb > 0):
        slope = float(np.polyfit(np.log(big), np.log(vb), 1)[0])
    else:
        slope = float("nan")
    beta = potential.growth[0] if potential.growth else 0.0
    details["growth_exponent"] = slope
    clauses["growth"] = bool(np.isfinite(slope) and slope >= 1.0 + beta - 0.5 and slope > 1.0)
    return AssumptionReport(clauses, details)


@dataclass
class WellConstants:
    """Deterministic constants of the potential.

    Attributes:
        c0: Cost of one transition, the integral of sqrt(2V) over [-1, 1].
        c1: Twice the cheaper half-excursion cost from -1 to -1/2 or -3/2.
        decay_rate: sqrt(V''(1) / 2).
        u_table: Grid on which the antiderivative ``G`` is tabulated.
        G_table: ``G(u) = int_0^u sqrt(2V)``.
    """

    c0: float
    c1: float
    decay_rate: float
    u_table: np.ndarray
    G_table: np.ndarray
    _spline: CubicHermiteSpline = field(repr=False)

    def G(self, u):
        """Antiderivative of sqrt(2V) vanishing at 0."""
        return self._spline(np.asarray(u, dtype=float))

    def phi_minus(self, u):
        """``|int_{-1}^u sqrt(2V)|``."""
        return np.abs(self.G(u) - self.G(-1.0))

    def phi_plus(self, u):
        """``|int_u^1 sqrt(2V)|``."""
        return np.abs(self.G(1.0) - self.G(u))

    def to_json(self) -> dict:
        return {"c0": self.c0, "c1": self.c1, "decay_rate": self.decay_rate}


def _root2v(potential):
    return lambda s: np.sqrt(2.0 * np.maximum(potential.eval(s), 0.0))


def _gl_composite(f, a, b, panels, order=20):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return float(np.sum(half * w * f(mid + half * x)))


def _integral(f, a, b, panels, tol):
    """Adaptive QUADPACK result cross-checked against composite Gauss-Legendre."""
    val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
    g1 = _gl_composite(f, a, b, panels)
    g2 = _gl_composite(f, a, b, 2 * panels)
    if abs(g1 - g2) > tol or abs(val - g2) > tol:
        raise PrecisionError(f"quadrature disagreement on [{a}, {b}]: "
                             f"quad={val!r}, GL={g1!r}/{g2!r}")
    return val


def well_constants(potential: Potential, quadrature_n: int = 64, u_max: float = 4.0,
                   table_h: float = 2e-3, tol: float = 1e-9) -> WellConstants:
    """Compute c0, c1, the decay rate and the tables behind phi_minus/phi_plus.

    The integrand sqrt(2V) has a kink at the wells, so every integral is
    split at -1 and +1; near a well the last 1e-6 is integrated with the
    linearised tail ``sqrt(V''(1)) * (1 - u)``.
    """
    f = _root2v(potential)
    cut = 1e-6
    k = math.sqrt(max(float(potential.deriv2(np.array([1.0]))[0]), 0.0))
    tail = 0.5 * k * cut * cut
    c0 = _integral(f, -1.0 + cut, 1.0 - cut, quadrature_n, tol) + 2.0 * tail
    a = _integral(f, -1.0 + cut, -0.5, quadrature_n, tol) + tail
    b = _integral(f, -1.5, -1.0 - cut, quadrature_n, tol) + tail
    c1 = 2.0 * min(a, b)

    # cumulative antiderivative from 0 outward, cells aligned with +-1
    n_half = int(round(u_max / table_h))
    grid = np.linspace(0.0, u_max, n_half + 1)
    grid = np.union1d(grid, [1.0])
    x, w = np.polynomial.legendre.leggauss(10)
    lo, hi = grid[:-1, None], grid[1:, None]
    cells = np.sum(0.5 * (hi - lo) * w * f(0.5 * (lo + hi) + 0.5 * (hi - lo) * x), axis=1)
    g_pos = np.concatenate([[0.0], np.cumsum(cells)])
    # G is odd for even V
    u_tab = np.concatenate([-grid[:0:-1], grid])
    g_tab = np.concatenate([-g_pos[:0:-1], g_pos])
    spline = CubicHermiteSpline(u_tab, g_tab, f(u_tab))
    g1 = float(spline(1.0))
    if abs(g1 - 0.5 * c0) > 1e-7:
        raise PrecisionError(f"tabulated G(1)={g1} disagrees with c0/2={0.5 * c0}")
    if not (c0 > 0 and 0 < c1 < c0):
        raise InvalidPotentialError(f"inconsistent well constants c0={c0}, c1={c1}")
    return WellConstants(c0=c0, c1=c1, decay_rate=k / math.sqrt(2.0), u_table=u_tab,
                         G_table=g_tab, _spline=spline)


@dataclass
class OptimalProfile:
    """Heteroclinic profile m with m(0) = 0, sampled on a uniform grid."""

    x: np.ndarray
    m: np.ndarray
    center_index: int

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


def optimal_profile(potential: Potential, half_width: float = 10.0, dx: float = 0.01,
                    switch: float = 1e-8) -> OptimalProfile:
    """Solve ``m' = sqrt(2 V(m))``, ``m(0) = 0`` on ``[-half_width, half_width]``.

    Integration stops once ``|m -+ 1| < switch``; beyond that the linearised
    solution ``1 - m ~ exp(-sqrt(V''(1)) x)`` is used.
    """
    if dx > 0.1 or half_width < 5:
        raise ConfigError("optimal_profile needs dx <= 0.1 and half_width >= 5")
    n_side = int(round(half_width / dx))
    xs = dx * np.arange(n_side + 1)
    f = _root2v(potential)
    rate = math.sqrt(float(potential.deriv2(np.array([1.0]))[0]))
    if not np.isfinite(rate) or rate <= 0:
        raise InvalidPotentialError("V''(1) must be positive for the profile asymptotics")

    def branch(sign):
        def rhs(_, y):
            return sign * f(y)

        def near_well(_, y):
            return abs(abs(y[0]) - 1.0) - switch

        near_well.terminal = True
        sol = integrate.solve_ivp(rhs, (0.0, half_width), [0.0], method="DOP853",
                                  rtol=1e-13, atol=1e-15, dense_output=True,
                                  events=near_well)
        if sol.status < 0:
            raise PrecisionError(f"profile integration failed: {sol.message}")
        x_stop = float(sol.t[-1])
        vals = np.empty_like(xs)
        inside = xs <= x_stop
        vals[inside] = sol.sol(xs[inside])[0]
        gap = 1.0 - abs(float(sol.y[0, -1]))
        vals[~inside] = sign * (1.0 - gap * np.exp(-rate * (xs[~inside] - x_stop)))
        return vals

    right = branch(1.0)
    left = branch(-1.0)
    x = np.concatenate([-xs[:0:-1], xs])
    m = np.concatenate([left[:0:-1], right])
    m = np.clip(m, -np.nextafter(1.0, 0.0), np.nextafter(1.0, 0.0))
    return OptimalProfile(x=x, m=m, center_index=n_side)
