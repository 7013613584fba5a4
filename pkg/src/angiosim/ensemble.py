"""Seeded ensembles of simulator runs, optionally across worker processes.

Member seeds are derived from ``(master_seed, N, index)`` and results are
returned in index order, so outputs do not depend on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .rng import derive_seed
from .tips import run


@dataclass
class MemberSummary:
    index: int
    seed: int
    N: int
    times: np.ndarray
    n_alive: np.ndarray
    snapshots: list
    qv: tuple
    bounds_violations: int
    strict_cmax_violations: int
    max_death_rate: float
    n_events: int

    @property
    def mass(self):
        return self.n_alive / self.N


def member_seed(cfg: RunConfig, N, index):
    return derive_seed(cfg.master_seed, N, index)


def _member(args):
    cfg, N, index, qv_phi, keep_snapshots = args
    seed = member_seed(cfg, N, index)
    recorder = None
    if qv_phi is not None:
        from .analysis.martingale import StepRecorder
        recorder = StepRecorder()
    rec = run(cfg.model_params(), cfg, seed, N=N, observer=recorder, keep_state=False)
    qv = None
    if recorder is not None:
        from .analysis.martingale import martingale_qv
        qv = martingale_qv(recorder, qv_phi).as_tuple()
    return MemberSummary(index, seed, N, rec.times, rec.n_alive, rec.snapshots if keep_snapshots else None, qv,
                         rec.bounds_violations, rec.strict_cmax_violations, rec.max_death_rate, len(rec.events))


def run_ensemble(cfg: RunConfig, N, n_members, workers=1, qv_phi=None, keep_snapshots=False, first=0):
    """Run members ``first .. first + n_members - 1`` at tip count ``N``."""
    jobs = [(cfg, N, i, qv_phi, keep_snapshots) for i in range(first, first + n_members)]
    if workers <= 1:
        return [_member(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_member, jobs))
