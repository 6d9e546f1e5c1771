"""Transfer-matrix oracle for marginals, normalisation and event probabilities.

The discretised measure on grid values is a Markov chain in ``x`` with
one-step density

    N(u_j - u_i; eps dx) * exp(-(dx/eps) (V(u_i) + V(u_j)) / 2),

the same trapezoid weighting the sampler targets. Values are discretised
into bins; bin sums are midpoint quadrature, which converges spectrally once
the bin width is a fraction of the increment scale ``sqrt(eps dx)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .automata import Automaton
from .errors import BudgetError, DomainError, NumericalError
from .path_domain import Grid


@dataclass(frozen=True)
class StateGrid:
    """``m`` value bins of width ``h`` centred symmetrically about 0."""

    u_max: float
    m: int

    def __post_init__(self):
        if self.m < 41:
            raise DomainError("StateGrid needs at least 41 bins")

    @classmethod
    def auto(cls, epsilon: float, dx: float, u_max: float | None = None,
             resolution: float = 4.0) -> "StateGrid":
        """Bins of width ``sqrt(eps dx) / resolution`` covering ``[-u_max, u_max]``.

        The default range leaves ``1 + max(1.5, 5 sqrt(eps) log(1/eps))`` of
        room, far beyond where the exp(-E/eps) tail weight is below 1e-16.
        """
        if u_max is None:
            u_max = 1.0 + max(1.5, 5.0 * math.sqrt(epsilon) * max(1.0, math.log(1.0 / epsilon)))
        h = math.sqrt(epsilon * dx) / resolution
        m = max(41, int(math.ceil(2.0 * u_max / h)))
        return cls(float(u_max), m)

    @property
    def h(self) -> float:
        return 2.0 * self.u_max / self.m

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.m) - 0.5 * (self.m - 1)) * self.h


@dataclass
class TransferModel:
    """Discretised one-step kernel plus boundary injection weights."""

    epsilon: float
    dx: float
    potential: object
    states: StateGrid
    K: np.ndarray = field(repr=False)
    kb: int = 0
    log_scale: float = 0.0

    @property
    def v(self) -> np.ndarray:
        return self.states.midpoints

    def log_edge(self, u_from, u_to):
        """Log of the one-step density between arbitrary values."""
        eps, dx = self.epsilon, self.dx
        d = np.subtract.outer(np.atleast_1d(u_from), np.atleast_1d(u_to))
        va = self.potential.eval(np.atleast_1d(u_from))[:, None]
        vb = self.potential.eval(np.atleast_1d(u_to))[None, :]
        return (-d * d / (2 * eps * dx) - (dx / eps) * 0.5 * (va + vb)
                - 0.5 * math.log(2 * math.pi * eps * dx))

    def injection(self, u_minus: float) -> np.ndarray:
        """Weights from the exact left boundary value into the bins."""
        return np.exp(self.log_edge(u_minus, self.v)[0]) * self.states.h

    def ejection(self, u_plus: float) -> np.ndarray:
        """Weights from the bins into the exact right boundary value."""
        return np.exp(self.log_edge(self.v, u_plus)[:, 0])

    def check_boundary(self, *values):
        for u in values:
            if abs(u) > self.states.u_max - self.states.h:
                raise DomainError(f"boundary value {u} outside the state grid")


def build_transfer(epsilon: float, dx: float, potential, stategrid: StateGrid | None = None,
                   cut: float = 120.0) -> TransferModel:
    """Assemble the bin-to-bin kernel (bin width included in the target measure).

    Entries whose Gaussian exponent is below ``-cut`` are dropped; ``kb`` is
    the resulting half band width.
    """
    if not dx > 0 or not epsilon > 0:
        raise DomainError("build_transfer needs eps > 0 and dx > 0")
    sg = stategrid or StateGrid.auto(epsilon, dx)
    v = sg.midpoints
    h = sg.h
    kb = int(math.ceil(math.sqrt(2.0 * cut * epsilon * dx) / h))
    kb = min(kb, sg.m - 1)
    lv = potential.eval(v)
    logk = (-np.subtract.outer(v, v) ** 2 / (2 * epsilon * dx)
            - (dx / epsilon) * 0.5 * np.add.outer(lv, lv)
            - 0.5 * math.log(2 * math.pi * epsilon * dx) + math.log(h))
    idx = np.arange(sg.m)
    logk[np.abs(np.subtract.outer(idx, idx)) > kb] = -np.inf
    # column scaling guard; for desk-scale parameters the shift is zero
    top = float(np.max(logk))
    shift = top if top > 600.0 else 0.0
    K = np.exp(logk - shift)
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite transfer kernel")
    return TransferModel(epsilon, dx, potential, sg, np.ascontiguousarray(K), kb, shift)


@dataclass
class MarginalTable:
    """One-site marginals (rows sum to 1) and the log normalisation constant."""

    sites: list
    x: np.ndarray
    values: np.ndarray
    probs: np.ndarray
    log_Z: float

    def mean(self) -> np.ndarray:
        return self.probs @ self.values

    def var(self) -> np.ndarray:
        mu = self.mean()
        return self.probs @ self.values ** 2 - mu ** 2

    def tail(self, M: float, two_sided: bool = True) -> np.ndarray:
        mask = np.abs(self.values) >= M if two_sided else self.values >= M
        return self.probs[:, mask].sum(axis=1)


def _log_gauss(d, var):
    return -0.5 * d * d / var - 0.5 * math.log(2 * math.pi * var)


def _passes(model: TransferModel, grid: Grid, u_minus: float, u_plus: float):
    """Normalised forward and backward vectors at all interior sites."""
    n = grid.n
    K = model.K
    a = model.injection(u_minus)
    b = model.ejection(u_plus)
    fw = np.empty((n, model.states.m))
    bw = np.empty_like(fw)
    logs = 0.0
    p = a
    for k in range(n):
        if k:
            p = p @ K
        s = p.sum()
        if not s > 0:
            raise NumericalError("forward pass underflow")
        p = p / s
        logs += math.log(s)
        fw[k] = p
    q = b
    for k in range(n - 1, -1, -1):
        if k < n - 1:
            q = K @ q
        q = q / q.max()
        bw[k] = q
    total = float(fw[-1] @ b)
    log_mass = logs + math.log(total) + (n - 1) * model.log_scale
    return fw, bw, log_mass


def log_normalisation(model: TransferModel, grid: Grid, u_minus: float, u_plus: float) -> float:
    """``log E_W[exp(-(1/eps) int V)]`` under the bridge with the given data."""
    model.check_boundary(u_minus, u_plus)
    _, _, log_mass = _passes(model, grid, u_minus, u_plus)
    return log_mass - _log_gauss(u_plus - u_minus, model.epsilon * grid.length)


def marginal(model: TransferModel, grid: Grid, u_minus: float, u_plus: float,
             sites=None) -> MarginalTable:
    """One-site marginals at interior ``sites`` (indices 1..n; all by default)."""
    model.check_boundary(u_minus, u_plus)
    if abs(grid.dx - model.dx) > 1e-12 * max(1.0, model.dx):
        raise DomainError("grid spacing differs from the transfer step")
    fw, bw, log_mass = _passes(model, grid, u_minus, u_plus)
    if sites is None:
        sites = list(range(1, grid.n + 1))
    sites = [int(s) for s in sites]
    if any(not 1 <= s <= grid.n for s in sites):
        raise DomainError("marginal sites must be interior indices")
    rows = fw[np.array(sites) - 1] * bw[np.array(sites) - 1]
    rows /= rows.sum(axis=1, keepdims=True)
    log_Z = log_mass - _log_gauss(u_plus - u_minus, model.epsilon * grid.length)
    return MarginalTable(sites, grid.x[sites], model.v.copy(), rows, log_Z)


def joint_marginal(model: TransferModel, grid: Grid, u_minus: float, u_plus: float,
                   site_a: int, site_b: int) -> np.ndarray:
    """Joint bin probabilities of ``(u(x_a), u(x_b))`` for ``site_a < site_b``."""
    if not 1 <= site_a < site_b <= grid.n:
        raise DomainError("joint_marginal needs 1 <= site_a < site_b <= n")
    fw, bw, _ = _passes(model, grid, u_minus, u_plus)
    M = np.diag(fw[site_a - 1])
    for _ in range(site_b - site_a):
        M = M @ model.K
        M /= M.sum()
    M = M * bw[site_b - 1][None, :]
    return M / M.sum()


@dataclass
class EventResult:
    """Probability of an automaton event under the discretised measure."""

    event: str
    prob: float
    log_prob: float
    log_Z: float
    params: dict

    def to_json(self) -> dict:
        return {"event": self.event, "prob": self.prob, "log_prob": self.log_prob,
                "log_Z": self.log_Z, "params": self.params}


def state_mass(model: TransferModel, grid: Grid, u_minus: float, u_plus: float,
               automaton: Automaton, max_product: int = 2_000_000):
    """Log mass per automaton state after reading the whole path."""
    model.check_boundary(u_minus, u_plus)
    S, m = automaton.n_states, model.states.m
    if S * m > max_product:
        raise BudgetError(f"product space {S}x{m} exceeds budget {max_product}")
    x = grid.x
    first, kinds = automaton.step_plan(x)
    tabs = automaton.tables()
    reg = automaton.region(model.v)
    rm = int(automaton.region(u_minus))
    rp = int(automaton.region(u_plus))
    s0 = int(automaton.initial_letter_table()[0, rm]) if first else 0
    p = np.zeros((S, m))
    a = model.injection(u_minus)
    np.add.at(p, (tabs[kinds[0]][s0, rm, reg], np.arange(m)), a)
    logs = 0.0
    out = np.empty_like(p)
    for k in range(1, grid.n):
        tot = p.sum()
        if not tot > 0:
            raise NumericalError("automaton transfer underflow")
        p /= tot
        logs += math.log(tot)
        _kernels.transfer_forward(p, model.K, model.kb, reg, tabs[kinds[k]], out)
        p, out = out, p
    b = model.ejection(u_plus)
    final = np.zeros(S)
    T_last = tabs[kinds[grid.n]]
    for s in range(S):
        if np.any(p[s]):
            np.add.at(final, T_last[s, reg, rp], p[s] * b)
    with np.errstate(divide="ignore"):
        return np.log(final) + logs + (grid.n - 1) * model.log_scale


def event_probability_exact(model: TransferModel, grid: Grid, u_minus: float, u_plus: float,
                            automaton: Automaton) -> EventResult:
    """Accepting mass divided by total mass on the (state, bin) product space."""
    lm = state_mass(model, grid, u_minus, u_plus, automaton)
    top = np.max(lm)
    w = np.exp(lm - top)
    acc = float(w[automaton.accept_mask].sum())
    tot = float(w.sum())
    prob = acc / tot
    log_prob = math.log(acc) - math.log(tot) if acc > 0 else -math.inf
    log_mass = top + math.log(tot)
    log_Z = log_mass - _log_gauss(u_plus - u_minus, model.epsilon * grid.length)
    params = {"epsilon": model.epsilon, "dx": model.dx, "u_minus": u_minus, "u_plus": u_plus,
              "grid": grid.to_json(), "bins": model.states.m, "u_max": model.states.u_max,
              "automaton_states": automaton.n_states}
    return EventResult(automaton.name, prob, log_prob, log_Z, params)
