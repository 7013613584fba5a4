"""Empirical-measure convergence towards the mean-field density."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..measures import EmpiricalMeasure
from ..meanfield import MeanFieldResult, velocity_box
from .metrics import TestFunctionDictionary, sample_density, weak_metric


@dataclass
class ConvergenceRow:
    N: int
    mean: float
    se: float
    values: np.ndarray


@dataclass
class ConvergenceTable:
    rows: list
    slope: float  # None when fewer than two N
    resampled_rows: list = None
    resampled_slope: float = None
    note: str = "slope is a diagnostic only; no rate is asserted"

    def strictly_decreasing(self, overlap=1.0) -> bool:
        """Means decrease along N, allowing ``overlap`` combined SE of slack."""
        ok = True
        for a, b in zip(self.rows, self.rows[1:]):
            ok &= b.mean < a.mean + overlap * math.hypot(a.se, b.se)
        return bool(ok)


def default_dictionary(cfg, size=None):
    return TestFunctionDictionary(cfg.vec("box_lo"), cfg.vec("box_hi"), velocity_box(cfg),
                                  cfg.dict_size if size is None else size)


def sup_metric(snapshots, N, reference: MeanFieldResult, dictionary):
    """``sup_t delta(Q_N(t), p_t)`` over the snapshot times of one run."""
    worst = 0.0
    w = 1.0 / N
    for t, _, X, V in snapshots:
        rho = reference.density_at(t)
        if X.shape[1] != rho.dim:
            raise ValueError("empirical and reference dimensions differ")
        worst = max(worst, weak_metric(EmpiricalMeasure(X, V, w), rho, dictionary))
    return worst


def loglog_slope(Ns, means):
    if len(Ns) < 2:
        return None
    return float(np.polyfit(np.log(Ns), np.log(means), 1)[0])


def summarize(per_N):
    """``per_N``: mapping N -> list of sup-metric values."""
    rows = []
    for N in sorted(per_N):
        vals = np.asarray(per_N[N], dtype=float)
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        rows.append(ConvergenceRow(N, float(vals.mean()), se, vals))
    return rows, loglog_slope([r.N for r in rows], [r.mean for r in rows])


def resampled_study(reference: MeanFieldResult, Ns, seeds, dictionary, seed=0):
    """Same statistic with atoms drawn iid from ``p_t``: isolates the sampling error."""
    rng = np.random.default_rng(seed)
    per_N = {}
    for N in Ns:
        vals = []
        for _ in range(seeds):
            worst = 0.0
            for t, rho in zip(reference.out_times, reference.densities):
                emp = sample_density(rho, N, rng)
                worst = max(worst, weak_metric(emp, rho, dictionary))
            vals.append(worst)
        per_N[N] = vals
    return summarize(per_N)


def convergence_study(run_fn, reference: MeanFieldResult, Ns, seeds, dictionary, resample_seed=None):
    """Tabulate ``sup_t delta(Q_N(t), p_t)`` over seeds for each N.

    ``run_fn(N, seed)`` returns the run's snapshot list
    ``[(t, alive ids, X, V), ...]``; runs may be precomputed or executed in
    a pool by the caller.
    """
    per_N = {N: [sup_metric(run_fn(N, s), N, reference, dictionary) for s in range(seeds)] for N in Ns}
    rows, slope = summarize(per_N)
    table = ConvergenceTable(rows, slope)
    if resample_seed is not None:
        table.resampled_rows, table.resampled_slope = resampled_study(reference, Ns, seeds, dictionary,
                                                                      resample_seed)
    return table
