"""Compiled inner loops (numba) shared by the sampler, oracle and solver.

Potentials enter the kernels as ``(kind, u0, h, tab, dtab)``: kind 0 is the
closed-form quartic, kind 1 a cubic Hermite table on a uniform grid.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def vpot(u, kind, u0, h, tab, dtab):
    if kind == 0:
        w = 1.0 - u * u
        return 0.25 * w * w
    s = (u - u0) / h
    n = tab.size
    if s <= 0.0:
        i = 0
    elif s >= n - 1:
        i = n - 2
    else:
        i = int(s)
    t = s - i
    if t > 1.0:
        # beyond the table: quadratic continuation
        d = (t - 1.0) * h
        return tab[i + 1] + dtab[i + 1] * d + 0.5 * d * d
    if t < 0.0:
        d = t * h
        return tab[0] + dtab[0] * d + 0.5 * d * d
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * tab[i] + (t3 - 2 * t2 + t) * h * dtab[i]
            + (-2 * t3 + 3 * t2) * tab[i + 1] + (t3 - t2) * h * dtab[i + 1])


@njit(cache=True)
def vpot_array(u, kind, u0, h, tab, dtab):
    out = np.empty_like(u)
    for i in range(u.size):
        out[i] = vpot(u[i], kind, u0, h, tab, dtab)
    return out


# ------------------------------------------------------------------- sampler

@njit(cache=True, nogil=True)
def _bridge_fill(out, lo, hi, a, b, dx, sd, z, zi):
    """Sequential conditional bridge on indices lo+1..hi-1 pinned at a, b."""
    prev = a
    for i in range(lo + 1, hi):
        rem = (hi - i + 1) * dx  # distance from previous point to the right end
        mean = prev + dx * (b - prev) / rem
        var = dx * (rem - dx) / rem
        prev = mean + sd * math.sqrt(var) * z[zi]
        zi += 1
        out[i] = prev
    return zi


@njit(cache=True, nogil=True)
def sweep_batch(u, vc, eps, dx, block, pcn, beta, kind, u0, h, tab, dtab,
                offsets, normals, uniforms, record, out, out_pos, acc, tries, prop):
    """Run ``offsets.size`` sweeps of blocked Metropolis updates in place.

    Each sweep tiles the grid with blocks of ``block`` resampled points whose
    shared endpoints start at a random offset; blocks are visited left to
    right. ``vc`` caches V at every grid point. States of sweeps flagged in
    ``record`` are copied into ``out`` starting at row ``out_pos``.
    """
    ntot = u.size
    sd = math.sqrt(eps)
    rho = math.sqrt(1.0 - beta * beta)
    for s in range(offsets.size):
        zi = 0
        ui = 0
        left = 0
        right = offsets[s]
        if right <= 0:
            right = block + 1
        while left < ntot - 1:
            if right > ntot - 1:
                right = ntot - 1
            k = right - left - 1
            if k >= 1:
                a = u[left]
                b = u[right]
                if pcn:
                    zi = _bridge_fill(prop, left, right, 0.0, 0.0, dx, sd, normals[s], zi)
                    for i in range(left + 1, right):
                        t = (i - left) / (right - left)
                        ch = a + t * (b - a)
                        prop[i] = ch + rho * (u[i] - ch) + beta * prop[i]
                else:
                    zi = _bridge_fill(prop, left, right, a, b, dx, sd, normals[s], zi)
                dv = 0.0
                for i in range(left + 1, right):
                    dv += vpot(prop[i], kind, u0, h, tab, dtab) - vc[i]
                logr = -dx * dv / eps
                tries[k] += 1
                if logr >= 0.0 or math.log(uniforms[s, ui]) < logr:
                    acc[k] += 1
                    for i in range(left + 1, right):
                        u[i] = prop[i]
                        vc[i] = vpot(prop[i], kind, u0, h, tab, dtab)
                ui += 1
            left = right
            right = left + block + 1
        if record[s]:
            for i in range(ntot):
                out[out_pos, i] = u[i]
            out_pos += 1
    return out_pos


# ------------------------------------------------------- automaton transfer

@njit(cache=True, nogil=True)
def transfer_forward(p, K, kb, reg, T, out):
    """One sum-product step on the (state, bin) product space.

    ``out[t, j] = sum_{s, i} p[s, i] K[i, j]`` over ``|i - j| <= kb`` with
    ``t = T[s, reg[i], reg[j]]``.
    """
    S, m = p.shape
    out[:, :] = 0.0
    for s in range(S):
        for i in range(m):
            w = p[s, i]
            if w == 0.0:
                continue
            ri = reg[i]
            j0 = max(0, i - kb)
            j1 = min(m, i + kb + 1)
            for j in range(j0, j1):
                k = K[i, j]
                if k != 0.0:
                    out[T[s, ri, reg[j]], j] += w * k


@njit(cache=True, nogil=True)
def minplus_forward(c, vals, dx, vnode, kb, reg, T, allowed, out, arg):
    """One min-plus step of the zero-temperature transfer.

    Cost of a step is ``(v_j - v_i)^2 / (2 dx) + dx (V_i + V_j) / 2``.
    ``allowed`` masks the target bins; ``arg[t, j]`` stores the source as
    ``s * m + i``.
    """
    S, m = c.shape
    inf = np.inf
    out[:, :] = inf
    half = 0.5 * dx
    inv = 1.0 / (2.0 * dx)
    for s in range(S):
        for i in range(m):
            ci = c[s, i]
            if ci == inf:
                continue
            ri = reg[i]
            vi = vals[i]
            base = ci + half * vnode[i]
            j0 = max(0, i - kb)
            j1 = min(m, i + kb + 1)
            for j in range(j0, j1):
                if not allowed[j]:
                    continue
                d = vals[j] - vi
                cost = base + d * d * inv + half * vnode[j]
                t = T[s, ri, reg[j]]
                if cost < out[t, j]:
                    out[t, j] = cost
                    arg[t, j] = s * m + i
