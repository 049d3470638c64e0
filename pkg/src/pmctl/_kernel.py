"""Compiled RK4 kernel for the closed loop.

Mirrors ``controller.current_refs`` / ``controller.voltage_refs`` driving
``model.reduced_rhs`` / ``model.full_rhs`` exactly, but with every trig
polynomial evaluated by scalar harmonic recurrences inside one jitted loop.
The numpy path in :mod:`pmctl.sim` remains the reference implementation;
the test-suite checks the two agree.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# layout of the scalar parameter vector passed to the kernel
K, OMEGA_REF, T_MODEL, T_OPT, S_MAX, L_MODEL, R_MODEL, L_PLANT, R_PLANT, T_PLANT = range(10)


def coef_matrix(polys, degree: int) -> np.ndarray:
    """Rows ``[p0..pD, q1..qD]`` for each poly, zero-padded to ``degree``."""
    return np.array([p.padded(degree).to_vector() for p in polys], dtype=float)


@njit(cache=True)
def _harmonics(theta, D, c, s):
    c1 = math.cos(theta)
    s1 = math.sin(theta)
    c[0] = 1.0
    s[0] = 0.0
    for k in range(1, D + 1):
        c[k] = c[k - 1] * c1 - s[k - 1] * s1
        s[k] = s[k - 1] * c1 + c[k - 1] * s1


@njit(cache=True)
def _eval(row, D, c, s):
    acc = row[0]
    for k in range(1, D + 1):
        acc += row[k] * c[k] + row[D + k] * s[k]
    return acc


@njit(cache=True)
def _rhs(x, e, full, law, law_mask, plant, plant_mask, p, dx, c, s, cm, sm):
    n = law.shape[1]
    D = (law.shape[2] - 1) // 2
    x1 = x[0]
    x2 = x[1]
    x2m = x2 + e[n]
    err = p[OMEGA_REF] - x2m
    raw = (p[K] * err + p[T_MODEL] + e[n + 1]) / p[T_OPT]
    smax = p[S_MAX]
    sc = min(max(raw, -smax), smax)
    ds = 0.0 if abs(raw) > smax else -(p[K] / p[T_OPT]) * p[K] * err

    _harmonics(x1, D, c, s)
    torque = 0.0
    for j in range(n):
        fj = _eval(plant[0, j], D, c, s)
        _harmonics(x1 + e[j], D, cm, sm)
        gj = _eval(law[0, j], D, cm, sm) if law_mask[j] else 0.0
        if not full:
            if plant_mask[j]:
                torque += sc * gj * fj
            continue
        ij = x[2 + j] if plant_mask[j] else 0.0
        torque += ij * fj
        if plant_mask[j]:
            u = 0.0
            if law_mask[j]:
                dgj = _eval(law[1, j], D, cm, sm)
                emf = _eval(law[2, j], D, cm, sm)
                u = (p[L_MODEL] * (ds * gj + sc * dgj * x2m)
                     + p[R_MODEL] * sc * gj + x2m * emf)
            gp = _eval(plant[1, j], D, c, s)
            dx[2 + j] = (u - p[R_PLANT] * ij - x2 * gp) / p[L_PLANT]
        else:
            dx[2 + j] = 0.0
    dx[0] = x2
    dx[1] = torque - p[T_PLANT]


@njit(cache=True)
def rk4_chunk(x, noise, dt, full, law, law_mask, plant, plant_mask, p,
              log_every, out):
    """Advance every batch column of ``x`` by ``noise.shape[0]`` steps in place.

    ``x`` is (dim, B); ``noise`` is (steps, n + 2, B) with step k's noise held
    over the step.  The state before step k is written to ``out[k // log_every]``
    whenever ``k % log_every == 0``.  Returns the first failing step, or -1.
    """
    dim, B = x.shape
    steps = noise.shape[0]
    D = (law.shape[2] - 1) // 2
    c = np.empty(D + 1)
    s = np.empty(D + 1)
    cm = np.empty(D + 1)
    sm = np.empty(D + 1)
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    xs = np.empty(dim)
    xb = np.empty(dim)
    for b in range(B):
        for i in range(dim):
            xb[i] = x[i, b]
        for k in range(steps):
            if k % log_every == 0:
                for i in range(dim):
                    out[k // log_every, i, b] = xb[i]
            e = noise[k, :, b]
            _rhs(xb, e, full, law, law_mask, plant, plant_mask, p, k1, c, s, cm, sm)
            for i in range(dim):
                xs[i] = xb[i] + 0.5 * dt * k1[i]
            _rhs(xs, e, full, law, law_mask, plant, plant_mask, p, k2, c, s, cm, sm)
            for i in range(dim):
                xs[i] = xb[i] + 0.5 * dt * k2[i]
            _rhs(xs, e, full, law, law_mask, plant, plant_mask, p, k3, c, s, cm, sm)
            for i in range(dim):
                xs[i] = xb[i] + dt * k3[i]
            _rhs(xs, e, full, law, law_mask, plant, plant_mask, p, k4, c, s, cm, sm)
            finite = True
            for i in range(dim):
                xb[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not math.isfinite(xb[i]):
                    finite = False
            if not finite:
                return k
        for i in range(dim):
            x[i, b] = xb[i]
    return -1
