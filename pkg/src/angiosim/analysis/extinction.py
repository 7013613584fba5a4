"""Lower bound on the total mass of tips."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def extinction_bound(M0, gamma, T) -> float:
    """``exp(log M0 - gamma T)``."""
    if not M0 > 0:
        raise ValueError("M0 > 0 violated")
    if gamma < 0 or T < 0:
        raise ValueError("gamma >= 0 and T >= 0 required")
    return math.exp(math.log(M0) - gamma * T)


@dataclass
class ExtinctionRow:
    N: int
    n_runs: int
    n_ok: int

    @property
    def fraction(self) -> float:
        return self.n_ok / self.n_runs

    @property
    def se(self) -> float:
        f = self.fraction
        return math.sqrt(f * (1.0 - f) / self.n_runs)


def extinction_check(mass_series, gamma, T, M0=1.0) -> ExtinctionRow:
    """Count runs whose ``min_t M_t^N`` stays at or above half the bound.

    ``mass_series`` is a list of ``(N, M_t array)`` from runs sharing one N.
    """
    half = 0.5 * extinction_bound(M0, gamma, T)
    Ns = {N for N, _ in mass_series}
    if len(Ns) != 1:
        raise ValueError("one N per call")
    ok = sum(int(np.min(m) >= half) for _, m in mass_series)
    return ExtinctionRow(Ns.pop(), len(mass_series), ok)


def trajectory_bound_violations(times, M, gamma):
    """Indices where a deterministic mass path dips below ``exp(log M_0 - gamma t)``."""
    times = np.asarray(times, dtype=float)
    M = np.asarray(M, dtype=float)
    bound = np.exp(math.log(M[0]) - gamma * times)
    return np.flatnonzero(M < bound)
