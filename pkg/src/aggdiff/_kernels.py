"""Compiled inner loops for the lattice maps.

Arrays are 2-D ``(batch, N + 1)``; every row is an independent lattice and
is advanced on its own, so results never depend on how rows are batched.
"""
import numpy as np
from numba import njit

AGGDIFF = 0
HEAT = 1


@njit(cache=True)
def _next_row(row, new, flux, kind, p, neumann):
    n = row.shape[0]
    if kind == AGGDIFF:
        # flux[j] = C_j * (u_j - u_{j-1}), evaluated once per edge
        for j in range(1, n):
            a = row[j - 1]
            c = row[j]
            flux[j] = 0.5 * a * c * (a + c - 1.0) * (c - a)
        for j in range(1, n - 1):
            new[j] = row[j] - flux[j] + flux[j + 1]
        if neumann:
            new[0] = row[0] + 2.0 * flux[1]
            new[n - 1] = row[n - 1] - 2.0 * flux[n - 1]
    else:
        q = 0.5 * (1.0 - p)
        for j in range(1, n - 1):
            new[j] = p * row[j] + q * (row[j - 1] + row[j + 1])
        if neumann:
            new[0] = p * row[0] + q * (row[1] + row[1])
            new[n - 1] = p * row[n - 1] + q * (row[n - 2] + row[n - 2])
    if not neumann:
        new[0] = row[0]
        new[n - 1] = row[n - 1]


@njit(cache=True)
def advance(u, steps, kind, p, neumann, env_lo, env_hi):
    """Advance every row of ``u`` in place by ``steps`` steps.

    ``env_lo``/``env_hi`` are updated with the running interior min/max seen
    after each step.
    """
    batch, n = u.shape
    new = np.empty(n)
    flux = np.zeros(n)
    for b in range(batch):
        row = u[b]
        lo = env_lo[b]
        hi = env_hi[b]
        for _ in range(steps):
            _next_row(row, new, flux, kind, p, neumann)
            for j in range(n):
                row[j] = new[j]
            for j in range(1, n - 1):
                if row[j] < lo:
                    lo = row[j]
                if row[j] > hi:
                    hi = row[j]
        env_lo[b] = lo
        env_hi[b] = hi


@njit(cache=True)
def equilibrate(u, eps, max_steps, kind, p, neumann, taken, converged):
    """Step each row until the sup-norm increment drops below ``eps``.

    A row that satisfies the criterion at step t is left at its step-t value.
    """
    batch, n = u.shape
    new = np.empty(n)
    flux = np.zeros(n)
    for b in range(batch):
        row = u[b]
        t = 0
        while True:
            _next_row(row, new, flux, kind, p, neumann)
            delta = 0.0
            for j in range(n):
                d = abs(new[j] - row[j])
                if d > delta:
                    delta = d
            if delta < eps:
                converged[b] = True
                break
            if t >= max_steps:
                converged[b] = False
                break
            for j in range(n):
                row[j] = new[j]
            t += 1
        taken[b] = t
