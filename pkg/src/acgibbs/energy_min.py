"""Constrained minimisation of the discrete energy and the energy lemmas.

The solver has two stages.

1. A global min-plus dynamic programme over a value lattice crossed with the
   constraint automaton. It minimises over all witness placements at once,
   so the outer search over pin locations is exact at lattice resolution.
2. Projected Newton refinement in continuous values. Sites where the
   automaton changed state are boxed to the closure of their lattice
   region, which keeps the witnessed crossings; other sites keep their
   value constraints. Acceptance is re-checked afterwards.

Lower bounds use the Modica-Mortola inequality ``1/2 u'^2 + V >= |d G(u)/dx|``
with ``G`` the antiderivative of ``sqrt(2V)``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from . import _kernels
from . import automata as A
from .errors import BudgetError, ConfigError, DomainError, NumericalError
from .path_domain import Grid, Path, energy, energy_gradient

INF = math.inf


# -------------------------------------------------------------- constraints

@dataclass(frozen=True)
class SiteSet:
    """Values on the closed x-window must lie in the union of ``intervals``."""

    window: tuple
    intervals: tuple


@dataclass(frozen=True)
class Constraint:
    """Pointwise value sets plus an optional automaton event.

    ``mm`` lists lower-bound alternatives ``(chain, breaks, extra)``: a path
    in the class visits the value intervals of ``chain`` in order, the
    Modica-Mortola total variation is not counted across indices in
    ``breaks``, and ``extra`` is added (e.g. a band cost).
    """

    name: str = "none"
    sites: tuple = ()
    automaton: Callable | None = None
    params: dict = field(default_factory=dict)
    mm: tuple = (((), (), 0.0),)

    def build_automaton(self) -> A.Automaton:
        return self.automaton() if self.automaton is not None else A.accept_all()

    def levels(self) -> np.ndarray:
        return self.build_automaton().levels

    def allowed(self, x: np.ndarray, vals: np.ndarray) -> np.ndarray:
        """Boolean ``(len(x), len(vals))`` mask of admissible lattice values."""
        out = np.ones((x.size, vals.size), dtype=bool)
        for s in self.sites:
            a, b = s.window
            rows = np.nonzero((x >= a - 1e-9) & (x <= b + 1e-9))[0]
            if rows.size == 0:
                continue
            ok = np.zeros(vals.size, dtype=bool)
            for lo, hi in s.intervals:
                ok |= (vals >= lo - 1e-12) & (vals <= hi + 1e-12)
            out[rows] &= ok
        return out

    def boxes(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-site interval containing the current value (for refinement)."""
        lo = np.full(x.size, -INF)
        hi = np.full(x.size, INF)
        for s in self.sites:
            a, b = s.window
            rows = np.nonzero((x >= a - 1e-9) & (x <= b + 1e-9))[0]
            for r in rows:
                best = None
                for il, ih in s.intervals:
                    if il - 1e-9 <= u[r] <= ih + 1e-9:
                        best = (il, ih)
                        break
                if best is None:  # nearest interval
                    best = min(s.intervals, key=lambda iv: min(abs(u[r] - iv[0]), abs(u[r] - iv[1])))
                lo[r] = max(lo[r], best[0])
                hi[r] = min(hi[r], best[1])
        return lo, hi


def no_constraint() -> Constraint:
    return Constraint()


def band(a: float, b: float, window: tuple) -> Constraint:
    """``a <= u <= b`` on ``window`` (the long-transition class)."""
    return Constraint("band", (SiteSet(tuple(window), ((a, b),)),),
                      params={"a": a, "b": b, "window": tuple(window)},
                      mm=((((a, b), (a, b)), (1,), ("band", a, b, window[1] - window[0])),))


def wasted_dminus(window: tuple, delta: float, m: int = 1) -> Constraint:
    """``m`` disjoint wasted δ⁻ excursions inside ``window``."""
    near = {-1: (-1 - delta, -1 + delta), 1: (1 - delta, 1 + delta)}
    zero = (-delta, delta)
    alts = []
    for fams in np.ndindex(*(2,) * m):
        chain = []
        for f in fams:
            nf = near[-1 if f == 0 else 1]
            chain += [nf, zero, nf]
        alts.append((tuple(chain), (), 0.0))
    return Constraint(f"wasted-dminus-{m}", (), lambda: A.wasted_dminus(delta, tuple(window), m,
                                                                       max_states=256),
                      {"window": tuple(window), "delta": delta, "m": m}, tuple(alts))


def dplus_pre(window: tuple, delta: float) -> Constraint:
    """Points ``x- < x0 < x+`` in the window with ``u(x±) <= -1 - 2δ`` and ``u(x0) >= δ``."""
    low = (-INF, -1 - 2 * delta)
    return Constraint("dplus-pre", (), lambda: A.dplus_pre(delta, tuple(window)),
                      {"window": tuple(window), "delta": delta},
                      (((low, (delta, INF), low), (), 0.0),))


def point_floor(window: tuple, floor: float, ceiling: float, domain: tuple) -> Constraint:
    """``u <= ceiling`` on ``domain`` and ``u(x0) >= floor`` for some ``x0`` in ``window``."""
    return Constraint("point-floor", (SiteSet(tuple(domain), ((-INF, ceiling),)),),
                      lambda: A.threshold(floor, tuple(window), above=True),
                      {"window": tuple(window), "floor": floor, "ceiling": ceiling},
                      ((((floor, ceiling),), (), 0.0),))


def midpoint_away(x0: float, centre: float, radius: float, ceiling: float, window: tuple,
                  node_bound: float | None = None, nodes: tuple = ()) -> Constraint:
    """``|u(x0) - centre| >= radius`` with ``u <= ceiling`` on the window.

    Optional ``|u| <= node_bound`` at the listed ``nodes``.
    """
    sites = [SiteSet(tuple(window), ((-INF, ceiling),)),
             SiteSet((x0, x0), ((-INF, centre - radius), (centre + radius, INF)))]
    if node_bound is not None:
        for xn in nodes:
            sites.append(SiteSet((xn, xn), ((-node_bound, node_bound),)))
    alts = ((((-INF, centre - radius),), (), 0.0),
            (((centre + radius, ceiling),), (), 0.0))
    return Constraint("midpoint-away", tuple(sites), None,
                      {"x0": x0, "centre": centre, "radius": radius, "ceiling": ceiling,
                       "window": tuple(window)}, alts)


def ceiling_band(ceiling: float, window: tuple, node_bound: float | None = None,
                 nodes: tuple = ()) -> Constraint:
    """``u <= ceiling`` on the window (with optional node bounds)."""
    sites = [SiteSet(tuple(window), ((-INF, ceiling),))]
    if node_bound is not None:
        for xn in nodes:
            sites.append(SiteSet((xn, xn), ((-node_bound, node_bound),)))
    return Constraint("ceiling", tuple(sites), None, {"ceiling": ceiling, "window": tuple(window)})


# ------------------------------------------------------------------ problem

@dataclass(frozen=True)
class EnergyProblem:
    """Minimise the discrete energy over paths on ``grid`` with fixed ends."""

    grid: Grid
    u_minus: float
    u_plus: float
    constraint: Constraint = field(default_factory=no_constraint)

    def __post_init__(self):
        for s in self.constraint.sites:
            a, b = s.window
            if a < self.grid.x_minus - 1e-9 or b > self.grid.x_plus + 1e-9:
                raise DomainError(f"constraint window {s.window} outside the domain")

    def unconstrained(self) -> "EnergyProblem":
        return EnergyProblem(self.grid, self.u_minus, self.u_plus)


@dataclass
class MinimizerResult:
    """Best path found with convergence and constraint bookkeeping."""

    path: Path
    energy: float
    dp_energy: float
    iterations: int
    residual: float
    accepted: bool
    pinned: list
    active: int
    converged: bool
    seconds: float
    gap: float | None = None
    flagged: bool = False

    def to_json(self) -> dict:
        return {"energy": self.energy, "dp_energy": self.dp_energy, "gap": self.gap,
                "iterations": self.iterations, "residual": self.residual,
                "accepted": self.accepted, "pinned_sites": len(self.pinned),
                "active_constraints": self.active, "converged": self.converged,
                "flagged": self.flagged, "seconds": self.seconds}


def _lattice(problem: EnergyProblem, h: float, levels) -> np.ndarray:
    top = max(abs(problem.u_minus), abs(problem.u_plus), 1.5) + 0.3
    for lv in levels:
        if np.isfinite(lv):
            top = max(top, abs(lv) + 0.3)
    K = int(math.ceil(top / h))
    return np.round(np.arange(-K, K + 1) * h, 12)


def _step_cost(a, b, dx, va, vb):
    d = b - a
    return d * d / (2 * dx) + 0.5 * dx * (va + vb)


def _dp(problem: EnergyProblem, potential, h: float, budget_bytes: float):
    g = problem.grid
    x = g.x
    n = g.n
    aut = problem.constraint.build_automaton()
    levels = np.round(aut.levels, 12)
    vals = _lattice(problem, h, levels)
    m = vals.size
    vnode = potential.eval(vals)
    reg = A.regions(levels, vals)
    allowed = problem.constraint.allowed(x, vals)
    ends = problem.constraint.allowed(x[[0, -1]], np.array([problem.u_minus, problem.u_plus]))
    if not (ends[0, 0] and ends[1, 1]):
        raise NumericalError("boundary data violate the pointwise constraint")
    first, kinds = aut.step_plan(x)
    tabs = aut.tables()
    S = aut.n_states
    if (n - 1) * S * m * 4 > budget_bytes:
        raise BudgetError(f"back-pointer storage {(n - 1) * S * m * 4 / 1e6:.0f} MB over budget")
    smax = math.sqrt(2.0 * float(vnode.max()) + 2.0) + abs(problem.u_plus - problem.u_minus) / g.length
    kb = int(min(m - 1, math.ceil(smax * g.dx / h) + 2))
    rm = int(A.regions(levels, np.round(problem.u_minus, 12)))
    rp = int(A.regions(levels, np.round(problem.u_plus, 12)))
    s0 = int(aut.initial_letter_table()[0, rm]) if first else 0
    vm = float(potential.eval(np.array([problem.u_minus]))[0])
    vp = float(potential.eval(np.array([problem.u_plus]))[0])
    c = np.full((S, m), INF)
    cost0 = _step_cost(problem.u_minus, vals, g.dx, vm, vnode)
    t0 = tabs[kinds[0]][s0, rm, reg]
    ok = allowed[1]
    for j in np.nonzero(ok)[0]:
        if cost0[j] < c[t0[j], j]:
            c[t0[j], j] = cost0[j]
    args = np.empty((max(n - 1, 0), S, m), dtype=np.int32)
    out = np.empty_like(c)
    for k in range(1, n):
        _kernels.minplus_forward(c, vals, g.dx, vnode, kb, reg, tabs[kinds[k]], allowed[k + 1],
                                 out, args[k - 1])
        c, out = out, c
    costN = _step_cost(vals, problem.u_plus, g.dx, vnode, vp)
    T_last = tabs[kinds[n]]
    best, bs, bj = INF, -1, -1
    for s in range(S):
        tt = T_last[s, reg, rp]
        tot = c[s] + costN
        acc = aut.accept_mask[tt] & np.isfinite(tot)
        if np.any(acc):
            j = int(np.argmin(np.where(acc, tot, INF)))
            if tot[j] < best:
                best, bs, bj = float(tot[j]), s, j
    if bs < 0:
        raise NumericalError("no admissible lattice path; refine the lattice or widen it")
    idx = np.empty(n, dtype=np.int64)
    st = np.empty(n, dtype=np.int64)
    s, j = bs, bj
    for k in range(n - 1, 0, -1):
        idx[k], st[k] = j, s
        a = int(args[k - 1, s, j])
        s, j = divmod(a, m)
    idx[0], st[0] = j, s
    u = np.concatenate([[problem.u_minus], vals[idx], [problem.u_plus]])
    states = np.concatenate([[s0], st, [T_last[bs, reg[bj], rp]]])
    return u, states, best, aut, levels, reg[idx]


def _region_closure(levels: np.ndarray, r: int) -> tuple[float, float]:
    if r % 2:
        v = float(levels[(r - 1) // 2])
        return v, v
    lo = float(levels[r // 2 - 1]) if r > 0 else -INF
    hi = float(levels[r // 2]) if r // 2 < levels.size else INF
    return lo, hi


def _energy_interior(xi, a, b, dx, potential):
    u = np.concatenate([[a], xi, [b]])
    d = np.diff(u)
    v = potential.eval(u)
    return 0.5 * float(np.sum(d * d)) / dx + dx * (float(np.sum(v[1:-1])) + 0.5 * (v[0] + v[-1]))


def project_newton(u: np.ndarray, dx: float, potential, lo: np.ndarray, hi: np.ndarray,
                   tol: float = 1e-10, max_iter: int = 200, el_tol: float = 1e-4):
    """Projected Newton on the interior values of ``u`` inside boxes ``[lo, hi]``.

    Uses the tridiagonal Hessian with ``V''`` clipped at zero (so every step
    is a descent direction), an active set from the bound/gradient signs,
    and an Armijo search along the projection arc. The run counts as
    converged once the Euler-Lagrange residual ``|u'' - V'(u)|`` on free
    sites is below ``el_tol`` or the energy stops decreasing.
    """
    a, b = float(u[0]), float(u[-1])
    x = np.clip(np.array(u[1:-1], dtype=float), lo, hi)
    n = x.size
    f = _energy_interior(x, a, b, dx, potential)
    it = 0
    res = INF
    converged = False
    hist = [f]
    for it in range(1, max_iter + 1):
        full = np.concatenate([[a], x, [b]])
        g = energy_gradient(full, dx, potential)[1:-1]
        span = 1e-12 * (1.0 + np.abs(x))
        at_lo = (x <= lo + span) & (g > 0)
        at_hi = (x >= hi - span) & (g < 0)
        free = ~(at_lo | at_hi)
        res = float(np.max(np.abs(g[free]))) / dx if np.any(free) else 0.0
        if res * dx < tol:
            break
        vpp = potential.deriv2(x)
        off = np.where(free[:-1] & free[1:], -1.0 / dx, 0.0)
        rhs = np.where(free, -g, 0.0)
        hb = np.zeros((2, n))
        hb[0, 1:] = off
        hb[1] = np.where(free, 2.0 / dx + dx * vpp, 1.0)
        try:  # exact Newton where the reduced Hessian is positive definite
            step = solveh_banded(hb, rhs)
        except LinAlgError:
            hb[1] = np.where(free, 2.0 / dx + dx * np.maximum(vpp, 0.0), 1.0)
            step = solveh_banded(hb, rhs)
        if float(g @ step) >= 0:
            step = rhs * dx / 2
        t = 1.0
        while True:
            xn = np.clip(x + t * step, lo, hi)
            fn = _energy_interior(xn, a, b, dx, potential)
            if fn <= f + 1e-4 * float(g @ (xn - x)) or t < 1e-10:
                break
            t *= 0.5
        if fn > f:
            break
        stalled = f - fn <= 1e-13 * max(1.0, abs(f))
        x, f = xn, fn
        hist.append(f)
        # flat direction (e.g. translation of a layer): stop on a plateau
        if stalled or (len(hist) > 10 and hist[-11] - f <= 1e-9 * max(1.0, abs(f))):
            converged = True
            break
    else:
        converged = False
    full = np.concatenate([[a], x, [b]])
    g = energy_gradient(full, dx, potential)[1:-1]
    span = 1e-12 * (1.0 + np.abs(x))
    free = ~(((x <= lo + span) & (g > 0)) | ((x >= hi - span) & (g < 0)))
    res = float(np.max(np.abs(g[free]))) / dx if np.any(free) else 0.0
    if res * dx < tol or res < el_tol:
        converged = True
    return full, f, it, res, converged


def minimize_energy(problem: EnergyProblem, potential, h: float = 0.01, refine: bool = True,
                    max_iter: int = 200, budget_bytes: float = 1.5e9) -> MinimizerResult:
    """Global lattice minimum over all witness placements, then refinement.

    Args:
        problem: Grid, boundary data and constraint.
        potential: Double-well potential.
        h: Value-lattice spacing of the dynamic programme.
        refine: Run projected Newton on the lattice minimiser.
        max_iter: Newton iteration cap; hitting it flags the result.
    """
    t0 = time.perf_counter()
    g = problem.grid
    u_dp, states, e_dp, aut, levels, regs = _dp(problem, potential, h, budget_bytes)
    pinned = []
    if not refine:
        E = energy(Path(g, u_dp), potential)[0]
        return MinimizerResult(Path(g, u_dp), E, e_dp, 0, math.nan, True, pinned, 0, True,
                               time.perf_counter() - t0)
    x = g.x
    lo, hi = problem.constraint.boxes(x, u_dp)
    reg_all = A.regions(levels, np.round(u_dp, 12))
    change = np.nonzero(states[1:] != states[:-1])[0]
    for k in change:
        for site in (k, k + 1):
            if 1 <= site <= g.n:
                cl, ch = _region_closure(levels, int(reg_all[site]))
                lo[site] = max(lo[site], cl)
                hi[site] = min(hi[site], ch)
                pinned.append(int(site))
    u_ref, E, it, res, conv = project_newton(u_dp, g.dx, potential, lo[1:-1], hi[1:-1],
                                       max_iter=max_iter)
    ok = bool(aut.accept_mask[aut.run(x, u_ref)])
    flagged = False
    if not ok or E > e_dp + 1e-12:
        u_ref, E = u_dp, energy(Path(g, u_dp), potential)[0]
        flagged = not ok
        ok = True
    active = int(np.sum((u_ref[1:-1] <= lo[1:-1] + 1e-10) | (u_ref[1:-1] >= hi[1:-1] - 1e-10)))
    return MinimizerResult(Path(g, u_ref), float(E), float(e_dp), it, float(res), ok,
                           sorted(set(pinned)), active, conv, time.perf_counter() - t0,
                           flagged=flagged)


def energy_gap(problem: EnergyProblem, potential, reference: EnergyProblem | None = None,
               **kw) -> tuple[float, MinimizerResult, MinimizerResult]:
    """Constrained minus reference minimum on the same grid (default: unconstrained)."""
    ref = reference if reference is not None else problem.unconstrained()
    if problem.constraint.name == "none" and reference is None:
        r = minimize_energy(problem, potential, **kw)
        r.gap = 0.0
        return 0.0, r, r
    rc = minimize_energy(problem, potential, **kw)
    ru = minimize_energy(ref, potential, **kw)
    gap = rc.energy - ru.energy
    rc.gap = gap
    return gap, rc, ru


# ------------------------------------------------------ Modica-Mortola bound

def chain_variation(G: Callable, u_minus: float, chain, u_plus: float, breaks=()) -> float:
    """Least total variation of ``G(u)`` along a path visiting ``chain`` in order.

    Greedy: keep the set of cheapest current positions (an interval in
    G-space); intersect with the next interval when they overlap, otherwise
    move to its nearest end. Across a break the position resets for free.
    """
    def gi(iv):
        lo, hi = iv
        lo = -4.0 if not np.isfinite(lo) else lo
        hi = 4.0 if not np.isfinite(hi) else hi
        return float(G(lo)), float(G(hi))

    cur = (float(G(u_minus)),) * 2
    cost = 0.0
    for k, iv in enumerate(chain):
        a, b = gi(iv)
        if k in breaks:
            cur = (a, b)
            continue
        lo, hi = max(cur[0], a), min(cur[1], b)
        if lo <= hi:
            cur = (lo, hi)
        elif b < cur[0]:
            cost += cur[0] - b
            cur = (b, b)
        else:
            cost += a - cur[1]
            cur = (a, a)
    gp = float(G(u_plus))
    if gp < cur[0]:
        cost += cur[0] - gp
    elif gp > cur[1]:
        cost += gp - cur[1]
    return cost


def mm_lower_bound(problem: EnergyProblem, potential, constants) -> float:
    """Analytic lower bound on the constrained minimum for the problem's class."""
    best = INF
    for chain, breaks, extra in problem.constraint.mm:
        add = 0.0
        if isinstance(extra, tuple) and extra and extra[0] == "band":
            _, a, b, width = extra
            s = np.linspace(a, b, 2001)
            add = width * float(np.min(potential.eval(s)))
        elif isinstance(extra, (int, float)):
            add = float(extra)
        best = min(best, chain_variation(constants.G, problem.u_minus, chain, problem.u_plus,
                                         breaks) + add)
    return best


# ------------------------------------------------------------ lemma runners

LEMMAS = ("2.2", "2.4", "2.5", "4.3", "6.6", "6.7")

# (boundary box, default delta, ells, dx, declared constant bound)
_LEMMA_DEFAULTS = {
    "2.2": dict(box=(-2.0, 2.0), delta=0.2, ells=(5.0, 10.0, 20.0), dx=0.1, C_max=4.0),
    "2.4": dict(box=(-2.0, 2.0), delta=0.05, ells=(8.0,), dx=0.05, C_max=3.0),
    "2.5": dict(box=(-2.0, 0.0), delta=0.05, ells=(8.0,), dx=0.05, C_max=3.0),
    "4.3": dict(box=(-2.0, 2.0), delta=0.05, ells=(8.0,), dx=0.05, C_max=3.0, m=2),
    "6.6": dict(box=(-2.0, None), delta=0.2, ells=(10.0, 20.0, 40.0, 60.0), dx=0.1, C_max=3.0),
    "6.7": dict(box=(-2.0, None), delta=0.2, ells=(10.0, 20.0, 40.0, 80.0, 160.0), dx=0.1,
                C_max=1.0, M=2.2),
}


@dataclass
class LemmaReport:
    """Outcome of a lemma sweep: fitted constants, margins and per-case rows."""

    lemma: str
    params: dict
    worst_margin: float
    fitted_constants: dict
    per_case: list
    ell_star: dict
    passed: bool
    inconclusive: int = 0

    def to_json(self) -> dict:
        return {"lemma": self.lemma, "params": self.params, "worst_margin": self.worst_margin,
                "fitted_constants": self.fitted_constants, "per_case": self.per_case,
                "ell_star": self.ell_star, "passed": self.passed,
                "inconclusive": self.inconclusive}


def boundary_sample(box: tuple, n: int = 9, seed: int = 0) -> list:
    """Corners, centre and seeded interior points of ``box``²."""
    lo, hi = box
    pts = [(lo, lo), (lo, hi), (hi, lo), (hi, hi), ((lo + hi) / 2, (lo + hi) / 2)]
    rng = np.random.default_rng(seed)
    while len(pts) < n:
        a, b = rng.uniform(lo, hi, 2)
        pts.append((round(float(a), 6), round(float(b), 6)))
    return pts[:n]


def _lemma_problems(lemma: str, grid: Grid, um: float, up: float, ell: float, p: dict):
    """Constrained problem and reference problem for one case."""
    d = p["delta"]
    dom = (grid.x_minus, grid.x_plus)
    if lemma == "2.2":
        return EnergyProblem(grid, um, up, band(-1 + d, 1 - d, (-ell, ell))), None
    if lemma == "2.4":
        return EnergyProblem(grid, um, up, wasted_dminus((-ell, ell), d)), None
    if lemma == "2.5":
        return EnergyProblem(grid, um, up, dplus_pre((-ell, ell), d)), None
    if lemma == "4.3":
        return EnergyProblem(grid, um, up, wasted_dminus((-ell, ell), d, p.get("m", 2))), None
    if lemma == "6.6":
        return EnergyProblem(grid, um, up, point_floor((-ell, ell), -d / 2, 1 - d / 2, dom)), None
    if lemma == "6.7":
        M = p.get("M", 2.2)
        nodes = (-2 * ell, -ell, 0.0, ell, 2 * ell)
        ref = EnergyProblem(grid, um, up, ceiling_band(1 - 2 * d, (-ell, ell), M - d, nodes))
        con = EnergyProblem(grid, um, up, midpoint_away(0.0, -1.0, (1 - d) / 2, 1 - d / 2,
                                                        (-ell, ell), M + d, nodes))
        return con, ref
    raise ConfigError(f"unknown lemma id {lemma!r}; expected one of {LEMMAS}")


def _lemma_constant(lemma: str, gap: float, ell: float, p: dict, c0: float, c1: float) -> float:
    """Smallest constant for which the lemma's inequality holds on this case."""
    d = p["delta"]
    m = p.get("m", 2)
    if lemma == "2.2":
        return 2 * d * d * ell / gap if gap > 0 else INF
    if lemma == "2.4":  # both directions (lower bound plus construction upper bound)
        return abs(gap - c0) / d
    if lemma == "2.5":
        return max(gap - c0, 0.0) / d
    if lemma == "4.3":
        return max(gap / m - c0, 0.0) / d
    if lemma == "6.6":
        return max(c0 - gap, 0.0) / d
    return max(c1 - gap, 0.0) / d


def _lemma_margin(lemma: str, gap: float, ell: float, p: dict, C: float, c0, c1) -> float:
    d = p["delta"]
    m = p.get("m", 2)
    if lemma == "2.2":
        return gap - 2 * d * d * ell / C
    if lemma == "2.4":
        return C * d - abs(gap - c0)
    if lemma == "2.5":
        return c0 + C * d - gap
    if lemma == "4.3":
        return c0 + C * d - gap / m
    if lemma == "6.6":
        return gap - (c0 - C * d)
    return gap - (c1 - C * d)


def verify_energy_lemma(lemma_id: str, potential, params: dict | None = None,
                        threads: int = 1) -> LemmaReport:
    """Sweep boundary data and lengths, solve, and fit the lemma's constant.

    Args:
        lemma_id: One of ``LEMMAS``.
        potential: Double-well potential.
        params: Overrides for ``delta``, ``ells``, ``dx``, ``h``, ``box``,
            ``boundary`` (explicit list of pairs), ``n_boundary``, ``seed``,
            ``C_max`` (declared bound on the fitted constant), ``m``, ``M``.
        threads: Worker threads over independent cases.

    Returns:
        LemmaReport. ``ell_star`` maps each boundary pair to the smallest
        swept length from which the inequality holds with ``C_max``.
    """
    from concurrent.futures import ThreadPoolExecutor
    from .potential import well_constants

    lemma = str(lemma_id)
    if lemma not in _LEMMA_DEFAULTS:
        raise ConfigError(f"unknown lemma id {lemma!r}; expected one of {LEMMAS}")
    p = dict(_LEMMA_DEFAULTS[lemma])
    p.update(params or {})
    d = float(p["delta"])
    if not 0 < d < 0.5:
        raise ConfigError("delta must lie in (0, 1/2)")
    box = list(p["box"])
    if box[1] is None:
        box[1] = min(2.0, 1 - d)
    p["box"] = tuple(box)
    h = float(p.get("h", 0.005 if d < 0.1 else 0.01))
    p["h"] = h
    pairs = [tuple(map(float, b)) for b in p.get("boundary") or
             boundary_sample(p["box"], int(p.get("n_boundary", 9)), int(p.get("seed", 0)))]
    p["boundary"] = pairs
    wc = well_constants(potential)
    c0, c1 = wc.c0, wc.c1
    ells = tuple(float(e) for e in p["ells"])
    p["ells"] = ells
    C_max = float(p["C_max"])

    def solve(case):
        um, up, ell = case
        grid = Grid.symmetric(2 * ell, float(p["dx"]))
        row = {"u_minus": um, "u_plus": up, "ell": ell}
        try:
            con, ref = _lemma_problems(lemma, grid, um, up, ell, p)
            gap, rc, ru = energy_gap(con, potential, reference=ref, h=h)
            lb = mm_lower_bound(con, potential, wc)
            row.update(gap=gap, energy=rc.energy, reference_energy=ru.energy,
                       mm_lower_bound=lb, lb_slack=rc.energy - lb,
                       converged=bool(rc.converged and ru.converged),
                       flagged=bool(rc.flagged or ru.flagged),
                       residual=max(rc.residual, ru.residual), status="ok")
        except (NumericalError, BudgetError, DomainError) as exc:
            row.update(gap=math.nan, status=f"inconclusive: {exc}")
        return row

    cases = [(um, up, ell) for (um, up) in pairs for ell in ells]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(solve, cases))
    else:
        rows = [solve(c) for c in cases]

    ok_rows = [r for r in rows if r["status"] == "ok"]
    for r in ok_rows:
        r["constant"] = _lemma_constant(lemma, r["gap"], r["ell"], p, c0, c1)
        r["margin"] = _lemma_margin(lemma, r["gap"], r["ell"], p, C_max, c0, c1)
    ell_star = {}
    worst = INF
    fitted = 0.0
    slopes_ok = True
    for pair in pairs:
        pr = sorted((r for r in ok_rows if (r["u_minus"], r["u_plus"]) == pair),
                    key=lambda r: r["ell"])
        if not pr:
            continue
        star = None
        for k in range(len(pr)):
            if all(r["margin"] >= 0 for r in pr[k:]):
                star = pr[k]["ell"]
                break
        ell_star[f"{pair[0]:g},{pair[1]:g}"] = star
        last = pr[-1]
        worst = min(worst, last["margin"])
        fitted = max(fitted, last["constant"])
        if lemma == "2.2" and len(pr) > 1:
            sl = np.polyfit([r["ell"] for r in pr], [r["gap"] for r in pr], 1)[0]
            for r in pr:
                r["pair_slope"] = float(sl)
            slopes_ok &= bool(sl > 0 and all(r["gap"] > 0 for r in pr))
    name = {"2.2": "C1"}.get(lemma, "C")
    fitted_constants = {name: fitted, f"{name}_max": C_max}
    if lemma == "2.2":
        sl = [r["pair_slope"] for r in ok_rows if "pair_slope" in r]
        fitted_constants["min_slope"] = float(min(sl)) if sl else math.nan
    lb_ok = all(r["lb_slack"] >= -1e-3 for r in ok_rows)
    fitted_constants["min_lb_slack"] = float(min((r["lb_slack"] for r in ok_rows), default=math.nan))
    inconclusive = len(rows) - len(ok_rows)
    passed = bool(inconclusive == 0 and worst >= 0 and lb_ok and slopes_ok)
    params_out = {k: (list(v) if isinstance(v, tuple) else v) for k, v in p.items()}
    params_out["c0"], params_out["c1"] = c0, c1
    return LemmaReport(lemma, params_out, float(worst), fitted_constants, rows, ell_star, passed,
                       inconclusive)
