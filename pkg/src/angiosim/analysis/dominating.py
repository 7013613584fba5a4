"""Spaceless branching process that dominates the tip count, and Wald's identity.

Every particle carries a random rate

    Z = |alpha|_inf g0 + C |beta|_inf g0 T (T + 1)
        + |beta|_inf g0 T sigma sup_{s <= T} |int_0^s exp(k1 r) dW_r|

and branches at the jumps of a Poisson clock of rate Z until time T. The
Brownian supremum is simulated by Euler steps on a fine grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..model import ModelParams, chemo_force_bound
from ..rng import derive_seed


@dataclass(frozen=True)
class DominatingRate:
    """Affine law ``Z = a + b * S`` with ``S`` the Brownian supremum."""

    a: float
    b: float
    k1: float
    dim: int
    C: float

    @classmethod
    def from_params(cls, params: ModelParams, T, speed_cap):
        """``C = max(sup_r f(r) r, speed_cap)`` bounds the drift and the initial speeds."""
        C = max(chemo_force_bound(params), speed_cap)
        a = params.alpha1 * params.g0 + C * params.beta1 * params.g0 * T * (T + 1.0)
        b = params.beta1 * params.g0 * T * params.sigma
        return cls(a, b, params.k1, params.dim, C)


def _nsteps(T, substeps):
    return max(1, int(math.ceil(substeps * T)))


def sample_z(rate: DominatingRate, T, seed, n, substeps=1000, first_stream=0):
    """``n`` independent draws of ``Z``."""
    if rate.b == 0.0 or T == 0.0:
        return np.full(n, rate.a)
    streams = np.arange(first_stream, first_stream + n, dtype=np.int64)
    sup = kernels.exp_martingale_sup(np.uint64(seed), streams, float(T), rate.k1, _nsteps(T, substeps), rate.dim)
    return rate.a + rate.b * sup


@dataclass
class DominatingTrials:
    nbar: np.ndarray  # N-bar_T per trial
    sumz: np.ndarray  # sum of Z over all particles of the trial
    z_first: np.ndarray  # Z of the ancestor
    capped: int


class CapExceeded(RuntimeError):
    pass


def dominating_trials(rate: DominatingRate, T, seed, n_trials, substeps=1000, cap=200000):
    if T == 0.0:
        z = np.full(n_trials, rate.a)
        return DominatingTrials(np.ones(n_trials, np.int64), z.copy(), z, 0)
    nbar, sumz, z1, capped = kernels.dominating_trials(
        np.uint64(seed), 0, int(n_trials), float(T), rate.a, rate.b, rate.k1, rate.dim,
        _nsteps(T, substeps), int(cap))
    if capped:
        raise CapExceeded(f"{capped} trial(s) exceeded the particle cap {cap}; rates are runaway")
    return DominatingTrials(nbar, sumz, z1, capped)


def dominating_process(params: ModelParams, T, seed, speed_cap=1.0, substeps=1000, cap=200000):
    """One trial: returns ``(N-bar_T, Z of every particle)``."""
    if not T >= 0:
        raise ValueError("T >= 0 violated")
    rate = DominatingRate.from_params(params, T, speed_cap)
    if T == 0.0:
        return 1, np.array([rate.a])
    res = dominating_trials(rate, T, seed, 1, substeps, cap)
    return int(res.nbar[0]), res.sumz


@dataclass
class LambdaEstimate:
    lam: float
    se: float
    n: int
    rate: DominatingRate


def estimate_lambda(params: ModelParams, T, seed, n_draws=100000, speed_cap=1.0, substeps=1000):
    """``lambda = E[Z]`` by Monte Carlo, with its standard error."""
    rate = DominatingRate.from_params(params, T, speed_cap)
    z = sample_z(rate, T, derive_seed(seed, 0x1A), n_draws, substeps)
    se = float(z.std(ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else 0.0
    return LambdaEstimate(float(z.mean()), se, n_draws, rate)


@dataclass
class WaldReport:
    mean_sum: float
    mean_z: float
    mean_n: float
    discrepancy: float
    se: float
    statistic: float
    passed: bool
    n_trials: int


def wald_check(n_trials, params: ModelParams, T, seed, speed_cap=1.0, substeps=1000, cap=200000,
               rate: DominatingRate = None):
    """Compare ``E[sum_{n <= N} Z_n]`` with ``E[Z] E[N]``.

    ``E[Z]`` comes from an independent batch of ``n_trials`` draws, so the
    three means are estimated without shared noise except ``S`` and ``N``,
    whose covariance enters the delta-method standard error.
    """
    if n_trials < 2:
        raise ValueError("n_trials >= 2 violated")
    rate = DominatingRate.from_params(params, T, speed_cap) if rate is None else rate
    tr = dominating_trials(rate, T, derive_seed(seed, 0x3A), n_trials, substeps, cap)
    z = sample_z(rate, T, derive_seed(seed, 0x2B), n_trials, substeps)
    S = tr.sumz
    Nb = tr.nbar.astype(float)
    n = float(n_trials)
    mS, mN, mZ = S.mean(), Nb.mean(), z.mean()
    D = mS - mZ * mN
    cov = np.cov(np.vstack([S, Nb]), ddof=1)
    var = (cov[0, 0] + mZ**2 * cov[1, 1] - 2.0 * mZ * cov[0, 1]) / n + mN**2 * z.var(ddof=1) / n
    se = math.sqrt(max(var, 0.0))
    floor = 1e-12 * max(abs(mS), 1.0)
    stat = abs(D) / se if se > 0 else (0.0 if abs(D) <= floor else math.inf)
    return WaldReport(mS, mZ, mN, D, se, stat, abs(D) <= 3.0 * se + floor, n_trials)
