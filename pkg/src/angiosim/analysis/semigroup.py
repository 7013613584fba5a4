"""Monte Carlo check of the probabilistic formula for the kinetic semigroup
with ``k1 = 0``, ``sigma = 1`` and no drift.

For ``A(x, v) = E phi(x + v t + I_t, v + B_t)`` with ``I_t = int_0^t B ds``,
Gaussian integration by parts gives

    grad_v A = (6 / t) E[(I_t / t - B_t / 3) phi(x + v t + I_t, v + B_t)].

``(I_t, B_t)`` is sampled exactly per component from its bivariate normal law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sample_ib(t, n, d, rng):
    """Exact draws of ``(I_t, B_t)``, each ``(n, d)``."""
    cov = np.array([[t**3 / 3.0, t**2 / 2.0], [t**2 / 2.0, t]])
    L = np.linalg.cholesky(cov)
    z = rng.standard_normal((2, n, d))
    I = L[0, 0] * z[0]
    B = L[1, 0] * z[0] + L[1, 1] * z[1]
    return I, B


def smooth_bump(x, v, radius=1.5, center_x=0.3, center_v=-0.2):
    """C^1 compactly supported test function with sup-norm 1."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    r = np.sqrt(np.sum((x - center_x) ** 2, axis=-1) + np.sum((v - center_v) ** 2, axis=-1))
    return np.where(r < radius, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, radius) / radius)), 0.0)


@dataclass
class SemigroupReport:
    t: float
    A: float
    A_se: float
    G: np.ndarray
    G_se: np.ndarray
    fd: np.ndarray
    diff_se: np.ndarray
    truncation: np.ndarray
    passed: bool
    sup_norm: float


def ou_semigroup_check(phi, t, n_samples, seed, x=None, v=None, h=0.05, dim=1, sup_norm=1.0):
    """Compare the gradient formula with central differences of ``A`` in ``v``.

    Differences use common random numbers, so the combined standard error is
    that of the per-sample difference. The tolerance per component is
    ``3 SE + |FD(h) - FD(2h)|``.
    """
    rng = np.random.default_rng(seed)
    x = np.zeros(dim) if x is None else np.asarray(x, dtype=float)
    v = np.zeros(dim) if v is None else np.asarray(v, dtype=float)
    I, B = sample_ib(t, n_samples, dim, rng)
    base = x + v * t + I
    vals = phi(base, v + B)
    A = float(vals.mean())
    A_se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    w = (6.0 / t) * (I / t - B / 3.0)
    G = np.empty(dim)
    G_se = np.empty(dim)
    fd = np.empty(dim)
    dse = np.empty(dim)
    trunc = np.empty(dim)
    for a in range(dim):
        e = np.zeros(dim)
        e[a] = 1.0
        gs = w[:, a] * vals

        def cd(step):
            up = phi(x + (v + step * e) * t + I, v + step * e + B)
            dn = phi(x + (v - step * e) * t + I, v - step * e + B)
            return (up - dn) / (2.0 * step)

        f1 = cd(h)
        f2 = cd(2.0 * h)
        G[a] = gs.mean()
        G_se[a] = gs.std(ddof=1) / math.sqrt(n_samples)
        fd[a] = f1.mean()
        dse[a] = (gs - f1).std(ddof=1) / math.sqrt(n_samples)
        trunc[a] = abs(f1.mean() - f2.mean())
    ok = bool(np.all(np.abs(G - fd) <= 3.0 * dse + trunc))
    return SemigroupReport(t, A, A_se, G, G_se, fd, dse, trunc, ok, sup_norm)


@dataclass
class BoundSweep:
    value_ratio: float  # sup |E[(1+|v+B|) phi]| / ((1+|v|) |phi|)
    grad_ratio: float  # sup |G| / ((1+|v|)/sqrt(t) + 1)


def bound_sweep(phi, times, speeds, n_samples, seed, dim=1, sup_norm=1.0):
    """Sup over a ``(t, v)`` sweep of the two normalized semigroup bounds."""
    rng = np.random.default_rng(seed)
    vr = gr = 0.0
    for t in times:
        I, B = sample_ib(t, n_samples, dim, rng)
        w = (6.0 / t) * (I / t - B / 3.0)
        for s in speeds:
            v = np.zeros(dim)
            v[0] = s
            y = phi(v * t + I, v + B)
            weighted = (1.0 + np.linalg.norm(v + B, axis=1)) * y
            vr = max(vr, abs(weighted.mean()) / ((1.0 + abs(s)) * sup_norm))
            g = np.linalg.norm((w * y[:, None]).mean(axis=0))
            gr = max(gr, g / ((1.0 + abs(s)) / math.sqrt(t) + 1.0))
    return BoundSweep(vr, gr)
