"""Finite automata over level-crossing letters.

A path is read as the sequence of value regions it visits. For sorted
levels ``l_0 < ... < l_{K-1}`` there are ``2K + 1`` regions: even indices
are the open gaps, odd indices the level points themselves. A linear
segment from region ``ra`` to ``rb`` visits every region in between, so an
automaton that consumes regions in order sees every crossing. The same
compiled tables drive the transfer oracle, the zero-temperature solver and
the evaluation of events on sampled paths.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np

from .errors import BudgetError, ConfigError

STEP_OUTSIDE, STEP_ENTER, STEP_INSIDE = 0, 1, 2


def regions(levels: np.ndarray, u) -> np.ndarray:
    """Region index of each value for sorted ``levels``."""
    u = np.asarray(u, dtype=float)
    return (np.searchsorted(levels, u, side="left")
            + np.searchsorted(levels, u, side="right")).astype(np.int64)


def region_set(levels, lo: float, hi: float) -> frozenset:
    """Regions contained in the closed interval ``[lo, hi]``.

    Finite endpoints must be levels so the interval is a union of regions.
    """
    levels = list(levels)
    R = 2 * len(levels) + 1
    out = set()
    for r in range(R):
        if r % 2:
            v = levels[(r - 1) // 2]
            if lo <= v <= hi:
                out.add(r)
        else:
            left = levels[r // 2 - 1] if r > 0 else -np.inf
            right = levels[r // 2] if r // 2 < len(levels) else np.inf
            if lo <= left and right <= hi:
                out.add(r)
    return frozenset(out)


@dataclass
class Automaton:
    """Deterministic automaton over region letters with an optional per-step tick.

    Args:
        levels: Crossing levels defining the letters.
        start: Initial (hashable) state.
        letter: ``(state, region) -> state``.
        accepting: ``state -> bool``.
        tick: ``state -> state`` applied once per grid step inside the window.
        window: Closed x-interval where the automaton reads the path, or None.
        max_states: Budget on the number of reachable states.
    """

    levels: np.ndarray
    start: Hashable
    letter: Callable
    accepting: Callable
    tick: Callable | None = None
    window: tuple | None = None
    name: str = "event"
    max_states: int = 64
    states: list = field(init=False)
    T_inside: np.ndarray = field(init=False, repr=False)
    T_enter: np.ndarray = field(init=False, repr=False)
    accept_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.levels = np.asarray(sorted(self.levels), dtype=float)
        if self.levels.size and np.any(np.diff(self.levels) <= 0):
            raise ConfigError("automaton levels must be distinct")
        self._compile()

    @property
    def n_regions(self) -> int:
        return 2 * self.levels.size + 1

    @property
    def n_states(self) -> int:
        return len(self.states)

    def _fold(self, s, ra, rb, tick):
        if rb > ra:
            seq = range(ra + 1, rb + 1)
        elif rb < ra:
            seq = range(ra - 1, rb - 1, -1)
        else:
            # re-read a region held across a step; matters for timers like short_up_layer
            seq = (rb,)
        for r in seq:
            s = self.letter(s, r)
        if tick and self.tick is not None:
            s = self.tick(s)
        return s

    def _compile(self):
        R = self.n_regions
        index = {self.start: 0}
        states = [self.start]
        queue = deque([self.start])
        trans_in, trans_en = {}, {}
        while queue:
            s = queue.popleft()
            for ra in range(R):
                for rb in range(R):
                    for tab, t in ((trans_in, self._fold(s, ra, rb, True)),
                                   (trans_en, self.letter(s, rb))):
                        tab[(s, ra, rb)] = t
                        if t not in index:
                            if len(states) >= self.max_states:
                                raise BudgetError(f"automaton {self.name!r} exceeds "
                                                  f"{self.max_states} states")
                            index[t] = len(states)
                            states.append(t)
                            queue.append(t)
            # initial letter of a window starting at the boundary
            for r in range(R):
                t = self.letter(s, r)
                if t not in index:
                    if len(states) >= self.max_states:
                        raise BudgetError(f"automaton {self.name!r} exceeds "
                                          f"{self.max_states} states")
                    index[t] = len(states)
                    states.append(t)
                    queue.append(t)
        S = len(states)
        Ti = np.empty((S, R, R), dtype=np.int64)
        Te = np.empty((S, R, R), dtype=np.int64)
        for (s, ra, rb), t in trans_in.items():
            Ti[index[s], ra, rb] = index[t]
        for (s, ra, rb), t in trans_en.items():
            Te[index[s], ra, rb] = index[t]
        self.states = states
        self._index = index
        self.T_inside, self.T_enter = Ti, Te
        self.accept_mask = np.array([bool(self.accepting(s)) for s in states])

    def region(self, u):
        return regions(self.levels, u)

    def initial_letter_table(self) -> np.ndarray:
        """``table[s, r]`` for consuming the first window value."""
        R = self.n_regions
        out = np.empty((self.n_states, R), dtype=np.int64)
        for s, st in enumerate(self.states):
            for r in range(R):
                out[s, r] = self._index[self.letter(st, r)]
        return out

    def step_plan(self, x: np.ndarray) -> tuple[bool, np.ndarray]:
        """Whether site 0 is read, and the kind of each step ``k -> k + 1``."""
        n = x.size
        if self.window is None:
            inside = np.ones(n, dtype=bool)
        else:
            a, b = self.window
            tol = 1e-9 * max(1.0, abs(x[-1] - x[0]))
            inside = (x >= a - tol) & (x <= b + tol)
        kinds = np.full(n - 1, STEP_OUTSIDE, dtype=np.int64)
        kinds[inside[1:] & inside[:-1]] = STEP_INSIDE
        kinds[inside[1:] & ~inside[:-1]] = STEP_ENTER
        return bool(inside[0]), kinds

    def tables(self) -> np.ndarray:
        """Stacked tables indexed by step kind: outside, enter, inside."""
        S, R = self.n_states, self.n_regions
        ident = np.broadcast_to(np.arange(S)[:, None, None], (S, R, R)).copy()
        return np.stack([ident, self.T_enter, self.T_inside])

    def run(self, x: np.ndarray, u: np.ndarray) -> int:
        """Final state index after reading the path ``(x, u)``."""
        first, kinds = self.step_plan(x)
        reg = self.region(u)
        s = 0
        if first:
            s = self._index[self.letter(self.states[0], int(reg[0]))]
        tabs = self.tables()
        for k in range(kinds.size):
            s = tabs[kinds[k], s, reg[k], reg[k + 1]]
        return int(s)

    def accepts(self, path) -> bool:
        return bool(self.accept_mask[self.run(path.grid.x, path.values)])

    def accepts_many(self, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Vectorised acceptance over stacked paths sharing the grid ``x``."""
        first, kinds = self.step_plan(x)
        reg = self.region(rows)
        s = np.zeros(rows.shape[0], dtype=np.int64)
        if first:
            s = self.initial_letter_table()[s, reg[:, 0]]
        tabs = self.tables()
        for k in range(kinds.size):
            s = tabs[kinds[k]][s, reg[:, k], reg[:, k + 1]]
        return self.accept_mask[s]


# ------------------------------------------------------------------ library

def accept_all() -> Automaton:
    return Automaton(levels=[], start=0, letter=lambda s, r: s, accepting=lambda s: True,
                     name="accept-all")


def _low_high(c: float):
    # levels (-c, c): regions 0,1 are "at or below -c", 3,4 "at or above c"
    return [-c, c], (lambda r: r <= 1), (lambda r: r >= 3)


def layer_counter(c: float, k: int, orientation: str = "any", window=None,
                  name: str | None = None, max_states: int = 64) -> Automaton:
    """Accept once at least ``k`` layers between ``-c`` and ``c`` were completed.

    ``orientation`` selects which layers count: ``"up"``, ``"down"`` or
    ``"any"``. State is (last touched level, count).
    """
    levels, low, high = _low_high(c)
    if orientation not in ("up", "down", "any"):
        raise ConfigError(f"unknown orientation {orientation!r}")
    up_ok = orientation in ("up", "any")
    down_ok = orientation in ("down", "any")

    def letter(s, r):
        if s == "acc":
            return s
        last, cnt = s
        if low(r):
            if last == "high" and down_ok:
                cnt += 1
            last = "low"
        elif high(r):
            if last == "low" and up_ok:
                cnt += 1
            last = "high"
        return "acc" if cnt >= k else (last, cnt)

    start = "acc" if k <= 0 else ("none", 0)
    return Automaton(levels, start, letter, lambda s: s == "acc", window=window,
                     name=name or f">={k} {orientation} layers at level {c}",
                     max_states=max_states)


def layer_parity(c: float = 1.0) -> Automaton:
    """Accept paths whose total number of layers at level ``c`` is even."""
    levels, low, high = _low_high(c)

    def letter(s, r):
        last, par = s
        if low(r):
            if last == "high":
                par ^= 1
            last = "low"
        elif high(r):
            if last == "low":
                par ^= 1
            last = "high"
        return (last, par)

    return Automaton(levels, ("none", 0), letter, lambda s: s[1] == 0, name="even layer count")


def short_up_layer(max_len: float, dx: float, c: float = 1.0, window=None,
                   max_states: int = 256) -> Automaton:
    """At least one up layer at level ``c`` spanning at most ``max_len``.

    Lengths are resolved on the grid: a layer whose last touch of ``-c``
    falls in step ``k`` and whose touch of ``c`` falls in step ``k'`` has
    grid length ``(k' - k + 1) * dx``.
    """
    levels, low, high = _low_high(c)
    kmax = int(np.floor(max_len / dx + 1e-9)) - 1
    if kmax < 0:
        raise ConfigError("max_len shorter than one grid step")

    def letter(s, r):
        if s == "acc":
            return s
        if low(r):
            return ("low", 0)
        if high(r):
            if s[0] == "low" and s[1] <= kmax:
                return "acc"
            return ("high", 0)
        return s

    def tick(s):
        if s == "acc" or s[0] != "low":
            return s
        return ("low", min(s[1] + 1, kmax + 1))

    return Automaton(levels, ("none", 0), letter, lambda s: s == "acc", tick=tick,
                     window=window, name=f"up layer (level {c}) of length <= {max_len}",
                     max_states=max_states)


def threshold(c: float, window=None, above: bool = True) -> Automaton:
    """``max u >= c`` (or ``min u <= c``) on the window."""
    def letter(s, r):
        if s:
            return True
        return r >= 1 if above else r <= 1

    return Automaton([c], False, letter, lambda s: s, window=window,
                     name=f"{'max' if above else 'min'} u {'>=' if above else '<='} {c}")


def band(a: float, b: float, window=None) -> Automaton:
    """``a <= u <= b`` everywhere on the window."""
    if not a < b:
        raise ConfigError("band needs a < b")

    def letter(s, r):
        return s and r not in (0, 4)

    return Automaton([a, b], True, letter, lambda s: s, window=window,
                     name=f"u in [{a}, {b}]")


def sign_confinement(window=None) -> Automaton:
    """``u <= 0`` everywhere on the window."""
    return Automaton([0.0], True, lambda s, r: s and r <= 1, lambda s: s, window=window,
                     name="u <= 0")


def _triples(levels, near_sets: dict, zero_set, m: int, window, name, max_states):
    """Greedy matcher for ``m`` disjoint (near, zero, near) patterns."""
    fams = sorted(near_sets)

    def letter(s, r):
        if s == "acc":
            return s
        cnt, prog = s
        prog = list(prog)
        for idx, f in enumerate(fams):
            if r in near_sets[f]:
                if prog[idx] == 2:
                    cnt += 1
                    if cnt >= m:
                        return "acc"
                    prog = [0] * len(fams)
                    prog[idx] = 1
                    return (cnt, tuple(prog))
                prog[idx] = 1
            elif r in zero_set and prog[idx] == 1:
                prog[idx] = 2
        return (cnt, tuple(prog))

    return Automaton(levels, (0, (0,) * len(fams)), letter, lambda s: s == "acc",
                     window=window, name=name, max_states=max_states)


def wasted_dminus(delta: float, window=None, m: int = 1, max_states: int = 64) -> Automaton:
    """At least ``m`` disjoint wasted δ⁻ excursions inside the window."""
    if not 0 < delta < 0.5:
        raise ConfigError("delta must lie in (0, 1/2)")
    lv = [-1 - delta, -1 + delta, -delta, delta, 1 - delta, 1 + delta]
    near = {-1: region_set(lv, -1 - delta, -1 + delta), 1: region_set(lv, 1 - delta, 1 + delta)}
    zero = region_set(lv, -delta, delta)
    return _triples(lv, near, zero, m, window, f">={m} wasted dminus excursions", max_states)


def wasted_dplus(delta: float, window=None, m: int = 1) -> Automaton:
    """At least ``m`` disjoint wasted δ⁺ excursions inside the window."""
    if not 0 < delta < 0.5:
        raise ConfigError("delta must lie in (0, 1/2)")
    lv = [-1 - delta, 0.0]
    near = {-1: region_set(lv, -np.inf, -1 - delta)}
    zero = region_set(lv, 0.0, 0.0)
    return _triples(lv, near, zero, m, window, f">={m} wasted dplus excursions", 64)


def dplus_pre(delta: float, window=None) -> Automaton:
    """Points ``x- < x0 < x+`` with ``u(x-), u(x+) <= -1 - 2 delta`` and ``u(x0) >= delta``."""
    lv = [-1 - 2 * delta, delta]
    near = {-1: region_set(lv, -np.inf, -1 - 2 * delta)}
    zero = region_set(lv, delta, np.inf)
    return _triples(lv, near, zero, 1, window, "dplus-pre", 64)
