"""Stochastic tip system: Langevin motion, vessel network, branching and anastomosis.

State is kept as structure-of-arrays indexed by tip id (tips are never
removed, only marked dead). Each tip draws from its own counter-based stream
keyed by ``(seed, tip id)``, so a run is bit-reproducible and independent of
iteration order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .config import RunConfig
from .field import AbsorptionField, Grid, ScalarField, accumulate_eta, field_bounds_check, field_step, sample_field
from .measures import EmpiricalMeasure
from .model import (Kernel, ModelParams, OffspringVelocityLaw, alpha_rate, beta_rate, chemo_force,
                    sample_offspring_velocity, saturation_h)

TIP_BRANCH = "tip_branch"
VESSEL_BRANCH = "vessel_branch"
ANASTOMOSIS = "anastomosis"


@dataclass
class Tip:
    id: int
    x: np.ndarray
    v: np.ndarray
    birth_time: float
    death_time: float = None

    @property
    def alive(self) -> bool:
        return self.death_time is None


class _Growable:
    """Column store with amortized append."""

    def __init__(self, specs, cap=256):
        self._specs = specs
        self.n = 0
        self._cols = {k: np.zeros((cap,) + shape, dtype) for k, (shape, dtype) in specs.items()}

    def _reserve(self, extra):
        need = self.n + extra
        cap = next(iter(self._cols.values())).shape[0]
        if need <= cap:
            return
        cap = max(need, 2 * cap)
        for k, arr in self._cols.items():
            new = np.zeros((cap,) + arr.shape[1:], arr.dtype)
            new[:self.n] = arr[:self.n]
            self._cols[k] = new

    def append(self, **cols):
        m = len(next(iter(cols.values())))
        self._reserve(m)
        for k, v in cols.items():
            self._cols[k][self.n:self.n + m] = v
        self.n += m

    def col(self, k):
        return self._cols[k][:self.n]


class SegmentIndex:
    """Uniform-cell hash over segment midpoints, rebuilt in amortized fashion.

    The cell size is ``radius + max half-length`` at build time, so every
    segment reaching a query lies in the 3^d block around the query's cell.
    Segments appended after a build form a tail that is scanned directly.
    """

    def __init__(self, dim):
        self.dim = dim
        self.n_indexed = 0
        self.origin = np.zeros(dim)
        self.size = 1.0
        self.shape = np.ones(dim, np.int64)
        self.start = np.zeros(2, np.int64)
        self.items = np.zeros(0, np.int64)

    def maybe_rebuild(self, mids, halves, radius):
        n = mids.shape[0]
        tail = n - self.n_indexed
        if tail <= max(512, self.n_indexed // 4):
            return
        half = float(np.linalg.norm(halves, axis=1).max()) if n else 0.0
        size = radius + half
        lo = mids.min(axis=0)
        hi = mids.max(axis=0)
        shape = np.maximum(np.floor((hi - lo) / size).astype(np.int64) + 1, 1)
        cell = np.minimum(np.floor((mids - lo) / size).astype(np.int64), shape - 1)
        strides = np.ones(self.dim, np.int64)
        for a in range(self.dim - 2, -1, -1):
            strides[a] = strides[a + 1] * shape[a + 1]
        flat = cell @ strides
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=int(np.prod(shape)))
        self.start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.items = order.astype(np.int64)
        self.origin, self.size, self.shape, self.n_indexed = lo, size, shape, n


class VesselNetwork:
    """Weighted segments ``(start, end, speed weight, owner, [t0, t1])``.

    A segment carries the measure ``weight * ds`` spread uniformly along it,
    so its mass is ``weight * (t1 - t0)``.
    """

    def __init__(self, dim):
        self.dim = dim
        self._store = _Growable({
            "start": ((dim,), float), "end": ((dim,), float), "weight": ((), float),
            "owner": ((), np.int64), "t0": ((), float), "t1": ((), float),
        })
        self.owner_mass = np.zeros(0)
        self.index = SegmentIndex(dim)

    def __len__(self):
        return self._store.n

    @property
    def start(self):
        return self._store.col("start")

    @property
    def end(self):
        return self._store.col("end")

    @property
    def weight(self):
        return self._store.col("weight")

    @property
    def owner(self):
        return self._store.col("owner")

    @property
    def t0(self):
        return self._store.col("t0")

    @property
    def t1(self):
        return self._store.col("t1")

    @property
    def mass(self):
        return self.weight * (self.t1 - self.t0)

    def add(self, start, end, weight, owner, t0, t1):
        start = np.atleast_2d(start)
        m = start.shape[0]
        weight = np.broadcast_to(np.asarray(weight, float), (m,))
        if np.any(weight < 0):
            raise ValueError("speed weight >= 0 violated")
        owner = np.broadcast_to(np.asarray(owner, np.int64), (m,))
        t0 = np.broadcast_to(np.asarray(t0, float), (m,))
        t1 = np.broadcast_to(np.asarray(t1, float), (m,))
        self._store.append(start=start, end=np.atleast_2d(end), weight=weight, owner=owner, t0=t0, t1=t1)
        top = int(owner.max()) + 1 if m else 0
        if top > self.owner_mass.size:
            grown = np.zeros(max(top, 2 * self.owner_mass.size))
            grown[:self.owner_mass.size] = self.owner_mass
            self.owner_mass = grown
        np.add.at(self.owner_mass, owner, weight * (t1 - t0))

    def total_length(self) -> float:
        return float(np.linalg.norm(self.end - self.start, axis=1).sum())

    @property
    def segments(self):
        return list(zip(self.start, self.end, self.weight, self.owner, zip(self.t0, self.t1)))


def network_density(net: VesselNetwork, x, K2: Kernel, N, exclude_owner=None, exclude_after=None):
    """``(1/N) sum_seg int K2(x - gamma(s)) weight ds`` at one or many points.

    Each segment is integrated by the composite midpoint rule with enough
    sub-segments to resolve the kernel (sub-length <= R/8). Segments whose
    owner equals ``exclude_owner[i]`` and that end after ``exclude_after[i]``
    are skipped for query ``i``.
    """
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    m = pts.shape[0]
    if len(net) == 0 or m == 0:
        out = np.zeros(m)
        return out[0] if np.ndim(x) == 1 else out
    if net.dim == 1 and exclude_owner is None:
        out = _line_density(net, pts[:, 0], K2) / N
        return out[0] if np.ndim(x) == 1 else out
    mids = np.ascontiguousarray(0.5 * (net.start + net.end))
    halves = np.ascontiguousarray(0.5 * (net.end - net.start))
    idx = net.index
    idx.maybe_rebuild(mids, halves, K2.support_radius)
    eo = np.full(m, -1, np.int64) if exclude_owner is None else np.broadcast_to(
        np.asarray(exclude_owner, np.int64), (m,)).copy()
    ea = np.full(m, np.inf) if exclude_after is None else np.broadcast_to(
        np.asarray(exclude_after, float), (m,)).copy()
    raw = kernels.segment_density(pts, mids, halves, np.ascontiguousarray(net.mass), net.owner.copy(),
                                  net.t1.copy(), idx.n_indexed, idx.origin, idx.size, idx.shape,
                                  idx.start, idx.items, K2.support_radius, K2.peak, eo, ea)
    out = raw / N
    return out[0] if np.ndim(x) == 1 else out


def _line_density(net: VesselNetwork, q, K2: Kernel):
    """Exact 1-d shortcut for the composite-midpoint sum.

    On a line the cosine bump splits as ``c/2 [1 + cos(a q) cos(a y) + sin(a q) sin(a y)]``
    with ``a = pi / R``, so the sum over sub-segment points inside ``(q - R, q + R)``
    reduces to three windowed prefix sums over the sorted points. Points on
    the window edge contribute zero, so the window convention is immaterial.
    """
    R = K2.support_radius
    mids = 0.5 * (net.start[:, 0] + net.end[:, 0])
    halves = 0.5 * (net.end[:, 0] - net.start[:, 0])
    nsub = 1 + (2.0 * np.abs(halves) / (R / 8.0)).astype(np.int64)
    seg = np.repeat(np.arange(mids.size), nsub)
    k = np.arange(seg.size) - np.repeat(np.cumsum(nsub) - nsub, nsub)
    y = mids[seg] + (-1.0 + (2.0 * k + 1.0) / nsub[seg]) * halves[seg]
    w = (net.mass / nsub)[seg]
    order = np.argsort(y, kind="stable")
    y, w = y[order], w[order]
    a = np.pi / R
    zero = np.zeros(1)
    s0 = np.concatenate([zero, np.cumsum(w)])
    sc = np.concatenate([zero, np.cumsum(w * np.cos(a * y))])
    ss = np.concatenate([zero, np.cumsum(w * np.sin(a * y))])
    lo = np.searchsorted(y, q - R, side="left")
    hi = np.searchsorted(y, q + R, side="right")
    val = (s0[hi] - s0[lo]) + np.cos(a * q) * (sc[hi] - sc[lo]) + np.sin(a * q) * (ss[hi] - ss[lo])
    return np.maximum(0.5 * K2.peak * val, 0.0)


@dataclass(frozen=True)
class SimulationSetup:
    """Everything a run needs that does not change in time."""

    params: ModelParams
    K1: Kernel
    K2: Kernel
    law: OffspringVelocityLaw
    grid: Grid
    source: np.ndarray  # delta_A at the nodes
    delta_sup: float
    dt: float
    N: int
    seed: int
    explicit_diffusion: bool = False
    exclude_window: float = 0.0
    track_network: bool = True

    @classmethod
    def from_config(cls, cfg: RunConfig, N=None, seed=None):
        p = cfg.model_params()
        grid = Grid.covering(cfg.vec("box_lo"), cfg.vec("box_hi"), cfg.h)
        tumor = cfg.tumor()
        src = tumor(grid.nodes()).reshape(grid.shape)
        track = cfg.track_network
        track = (p.beta1 > 0 or p.gamma > 0) if track == "auto" else track == "true"
        return cls(p, cfg.kernel1(), cfg.kernel2(), cfg.offspring_law(), grid, src, tumor.sup_norm,
                   cfg.dt, int(cfg.N if N is None else N), int(cfg.master_seed if seed is None else seed),
                   cfg.explicit_diffusion, cfg.exclude_own_recent_segments, track)


class SimulationState:
    """Mutable state of one run. Tips are rows; ``ids`` equal row indices."""

    def __init__(self, setup: SimulationSetup, x0, v0, c0: ScalarField, t0=0.0):
        d = setup.params.dim
        self.setup = setup
        self.t = float(t0)
        self.step = 0
        self._tips = _Growable({"x": ((d,), float), "v": ((d,), float), "birth": ((), float),
                                "death": ((), float), "parent": ((), np.int64)})
        x0 = np.atleast_2d(np.asarray(x0, float))
        v0 = np.atleast_2d(np.asarray(v0, float))
        n = x0.shape[0]
        self._tips.append(x=x0, v=v0, birth=np.full(n, self.t), death=np.full(n, np.nan),
                          parent=np.full(n, -1))
        self.network = VesselNetwork(d) if setup.track_network else None
        self.c_field = c0
        self.eta_field = AbsorptionField.zeros(c0.grid)
        self.event_log = []
        self.near_boundary = 0
        self.max_death_rate = 0.0

    # views -----------------------------------------------------------------
    @property
    def X(self):
        return self._tips.col("x")

    @property
    def V(self):
        return self._tips.col("v")

    @property
    def birth_time(self):
        return self._tips.col("birth")

    @property
    def death_time(self):
        return self._tips.col("death")

    @property
    def parent(self):
        return self._tips.col("parent")

    @property
    def alive(self):
        return np.isnan(self._tips.col("death"))

    @property
    def n_tips(self) -> int:
        return self._tips.n

    @property
    def n_alive(self) -> int:
        return int(self.alive.sum())

    @property
    def tips(self):
        out = []
        for i in range(self.n_tips):
            dt_ = self.death_time[i]
            out.append(Tip(i, self.X[i].copy(), self.V[i].copy(), float(self.birth_time[i]),
                           None if np.isnan(dt_) else float(dt_)))
        return out

    def add_tips(self, x, v, parents):
        x = np.atleast_2d(x)
        n = x.shape[0]
        first = self.n_tips
        self._tips.append(x=x, v=np.atleast_2d(v), birth=np.full(n, self.t), death=np.full(n, np.nan),
                          parent=np.asarray(parents, np.int64))
        return np.arange(first, first + n)

    def kill(self, ids):
        self._tips.col("death")[np.asarray(ids, np.int64)] = self.t


def initial_tips(cfg: RunConfig, N, seed):
    """Positions from the cosine-bump law around ``init_center``, velocities from the offspring law."""
    d = cfg.dim
    center = cfg.vec("init_center")
    R = cfg.init_radius
    law = cfg.offspring_law()
    bump = Kernel(R, 1.0, d)
    X = np.empty((N, d))
    V = np.empty((N, d))
    for i in range(N):
        s = rng.HashStream(seed, i, 0, rng.INITIAL)
        while True:
            y = (2.0 * s.random(d) - 1.0) * R
            if np.linalg.norm(y) <= R and s.random() < bump(y):
                break
        X[i] = center + y
        V[i] = sample_offspring_velocity(law, s)
    return X, V


def initial_state(cfg: RunConfig, N=None, seed=None) -> SimulationState:
    setup = SimulationSetup.from_config(cfg, N, seed)
    X, V = initial_tips(cfg, setup.N, setup.seed)
    c0 = ScalarField(setup.grid, cfg.initial_field(setup.grid.nodes()))
    return SimulationState(setup, X, V, c0)


def em_step(state: SimulationState, dt):
    """One Euler-Maruyama step for every alive tip; appends one segment per tip."""
    if not dt > 0:
        raise ValueError("dt > 0 violated")
    p = state.setup.params
    ids = np.flatnonzero(state.alive)
    if ids.size == 0:
        state.t += dt
        state.step += 1
        return state
    X = state.X[ids]
    V = state.V[ids]
    if p.d2 != 0.0:
        _, grad = sample_field(state.c_field, X)
        force = chemo_force(grad, p)
    else:
        force = 0.0
    V_new = V + (-p.k1 * V + force) * dt
    if p.sigma != 0.0:
        xi = rng.normals(state.setup.seed, ids, state.step, rng.EM_NOISE, p.dim)
        V_new = V_new + p.sigma * math.sqrt(dt) * xi
    X_new = X + V * dt
    if not (np.all(np.isfinite(V_new)) and np.all(np.isfinite(X_new))):
        raise FloatingPointError(f"non-finite tip state at step {state.step}; reduce dt")
    state.X[ids] = X_new
    state.V[ids] = V_new
    if state.network is not None:
        state.network.add(X, X_new, np.linalg.norm(V_new, axis=1), ids, state.t, state.t + dt)
    state.t += dt
    state.step += 1
    return state


def snapshot_empirical(state: SimulationState) -> EmpiricalMeasure:
    a = state.alive
    return EmpiricalMeasure(state.X[a].copy(), state.V[a].copy(), 1.0 / state.setup.N,
                            np.flatnonzero(a))


def _event_step(state):
    # samplers run after em_step has advanced the counter; draws are keyed by it
    return state.step


def sample_tip_branching(state: SimulationState, dt, conc=None):
    """Births from alive tips with probability ``1 - exp(-alpha(C) g0 dt)``.

    Returns ``(parent_ids, positions)``; offspring velocities are drawn when
    the births are committed, from the child's own stream.
    """
    p = state.setup.params
    ids = np.flatnonzero(state.alive)
    if ids.size == 0 or p.alpha1 == 0.0:
        return np.zeros(0, np.int64), np.zeros((0, p.dim))
    if conc is None or len(conc) != ids.size:
        conc, _ = sample_field(state.c_field, state.X[ids])
    prob = -np.expm1(-alpha_rate(conc, p) * p.g0 * dt)
    u = rng.uniforms(state.setup.seed, ids, _event_step(state), rng.TIP_BRANCH)[:, 0]
    hit = ids[u < prob]
    return hit, state.X[hit].copy()


def sample_vessel_branching(state: SimulationState, dt):
    """Births along vessels by two-stage thinning.

    Stage one: each vessel owner proposes with probability
    ``1 - exp(-beta1 g0 L_i dt)`` where ``L_i`` is its speed-weighted length.
    The proposal point is uniform with respect to that measure. Stage two:
    accept with ``beta(C(point)) / beta1``.
    """
    p = state.setup.params
    net = state.network
    if net is None or len(net) == 0 or p.beta1 == 0.0:
        return np.zeros(0, np.int64), np.zeros((0, p.dim))
    owners = np.flatnonzero(net.owner_mass > 0)
    L = net.owner_mass[owners]
    prob = -np.expm1(-p.beta1 * p.g0 * L * dt)
    step = _event_step(state)
    seed = state.setup.seed
    u = rng.uniforms(seed, owners, step, rng.VESSEL_CANDIDATE)[:, 0]
    cand = owners[u < prob]
    if cand.size == 0:
        return np.zeros(0, np.int64), np.zeros((0, p.dim))
    # owner-contiguous view of the segments, time order kept within an owner
    order = np.argsort(net.owner, kind="stable")
    own_sorted = net.owner[order]
    cum = np.cumsum(net.mass[order])
    first = np.searchsorted(own_sorted, cand, side="left")
    last = np.searchsorted(own_sorted, cand, side="right") - 1
    base = np.where(first > 0, cum[np.maximum(first - 1, 0)], 0.0)
    total = cum[last] - base
    u = rng.uniforms(seed, cand, step, rng.VESSEL_LOCATION)[:, 0]
    target = base + u * total
    j = np.clip(np.searchsorted(cum, target, side="right"), first, last)
    seg = order[j]
    before = np.where(j > 0, cum[np.maximum(j - 1, 0)], 0.0)
    m = net.mass[seg]
    frac = np.clip(np.divide(target - before, m, out=np.full(m.size, 0.5), where=m > 0), 0.0, 1.0)
    pts = net.start[seg] + frac[:, None] * (net.end[seg] - net.start[seg])
    conc, _ = sample_field(state.c_field, pts)
    acc = rng.uniforms(seed, cand, step, rng.VESSEL_ACCEPT)[:, 0] < beta_rate(conc, p) / p.beta1
    return cand[acc], pts[acc]


def sample_anastomosis(state: SimulationState, dt, ids=None):
    """Deaths with probability ``1 - exp(-gamma h(D(X)) dt)``, ``D`` the network density.

    Returns the killed ids, the per-tip hazards and the densities used.
    """
    p = state.setup.params
    if ids is None:
        ids = np.flatnonzero(state.alive)
    net = state.network
    if ids.size == 0 or p.gamma == 0.0 or net is None or len(net) == 0:
        return np.zeros(0, np.int64), np.zeros(ids.size), np.zeros(ids.size)
    setup = state.setup
    if setup.exclude_window > 0:
        dens = network_density(net, state.X[ids], setup.K2, setup.N, ids, state.t - setup.exclude_window)
    else:
        dens = network_density(net, state.X[ids], setup.K2, setup.N)
    hazard = p.gamma * saturation_h(dens)
    prob = -np.expm1(-hazard * dt)
    u = rng.uniforms(setup.seed, ids, _event_step(state), rng.ANASTOMOSIS)[:, 0]
    return ids[u < prob], hazard, dens


def _commit_births(state, parents, pts, kind):
    if parents.size == 0:
        return
    law = state.setup.law
    first = state.n_tips
    vel = np.empty_like(pts)
    for k in range(parents.size):
        s = rng.HashStream(state.setup.seed, first + k, state.step, rng.OFFSPRING)
        vel[k] = sample_offspring_velocity(law, s)
    children = state.add_tips(pts, vel, parents)
    for par, child, x in zip(parents, children, pts):
        state.event_log.append((state.t, kind, tuple(x), int(par), int(child)))


def advance(state: SimulationState, observer=None):
    """One full step: motion, eta accumulation, TAF update, branching, anastomosis."""
    setup = state.setup
    p = setup.params
    dt = setup.dt
    em_step(state, dt)
    q = snapshot_empirical(state)
    accumulate_eta(state.eta_field, q, setup.K1, dt)
    state.c_field = field_step(state.c_field, state.eta_field, p, dt, setup.source, setup.explicit_diffusion)
    g = setup.grid
    if q.n_atoms:
        margin = np.minimum(q.x - g.lo, g.hi - q.x).min()
        if margin < setup.K1.support_radius:
            state.near_boundary += 1
    pre_alive = np.flatnonzero(state.alive)
    conc = sample_field(state.c_field, state.X[pre_alive])[0] if pre_alive.size else np.zeros(0)
    tb_par, tb_pts = sample_tip_branching(state, dt, conc)
    vb_par, vb_pts = sample_vessel_branching(state, dt)
    killed, hazard, dens = sample_anastomosis(state, dt, pre_alive)
    if observer is not None:
        observer(state, StepInfo(pre_alive, conc, dens))
    if hazard.size:
        state.max_death_rate = max(state.max_death_rate, float(hazard.max()))
    _commit_births(state, tb_par, tb_pts, TIP_BRANCH)
    _commit_births(state, vb_par, vb_pts, VESSEL_BRANCH)
    if killed.size:
        state.kill(killed)
        for i in killed:
            state.event_log.append((state.t, ANASTOMOSIS, tuple(state.X[i]), int(i), -1))
    return state


@dataclass
class StepInfo:
    """What the jump samplers saw at one step, passed to observers."""

    ids: np.ndarray
    conc: np.ndarray
    density: np.ndarray


@dataclass
class TrajectoryRecord:
    setup: SimulationSetup
    times: np.ndarray  # every step, starting at 0
    n_alive: np.ndarray
    snapshots: list  # (t, alive ids, X, V) at output times
    all_tips: list  # (t, ids, alive, X, V) at output times, every tip ever born
    fields: list  # (t, C, eta) at output times
    events: list
    bounds_violations: int
    strict_cmax_violations: int
    first_violation: object
    max_death_rate: float
    clamp_count: int
    near_boundary: int
    final_state: SimulationState = field(repr=False, default=None)

    @property
    def N(self) -> int:
        return self.setup.N

    @property
    def mass(self) -> np.ndarray:
        return self.n_alive / self.setup.N


def _record_output(state, snaps, all_tips, fields_):
    a = state.alive
    snaps.append((state.t, np.flatnonzero(a), state.X[a].copy(), state.V[a].copy()))
    all_tips.append((state.t, np.arange(state.n_tips), a.copy(), state.X.copy(), state.V.copy()))
    fields_.append((state.t, state.c_field.values.copy(), state.eta_field.values.copy()))


def run(params: ModelParams, config: RunConfig, seed, N=None, observer=None, check_bounds=True,
        keep_state=True) -> TrajectoryRecord:
    """Simulate one seeded run up to ``config.T``.

    ``params`` overrides the model constants of ``config`` (pass
    ``config.model_params()`` for the configured ones).
    """
    cfg = config.replace(**{k: getattr(params, k) for k in params.__dataclass_fields__})
    state = initial_state(cfg, N, seed)
    setup = state.setup
    p = setup.params
    dt = setup.dt
    if p.gamma * dt > 0.1 or p.alpha1 * p.g0 * dt > 0.1:
        warnings.warn("thinning step is coarse: gamma*dt or alpha1*g0*dt exceeds 0.1; reduce dt")
    nsteps = int(round(cfg.T / dt))
    times = np.empty(nsteps + 1)
    counts = np.empty(nsteps + 1, np.int64)
    times[0], counts[0] = 0.0, state.n_alive
    snaps, all_tips, fields_ = [], [], []
    _record_output(state, snaps, all_tips, fields_)
    violations = strict = 0
    first = None
    for n in range(1, nsteps + 1):
        try:
            advance(state, observer)
        except FloatingPointError as exc:
            raise FloatingPointError(f"step {n}: {exc}") from None
        if check_bounds:
            rep = field_bounds_check(state.c_field, p, state.t, setup.delta_sup)
            if not rep.passed:
                violations += 1
                first = first or (n, rep)
            strict += int(not rep.strict_cmax_ok)
        times[n], counts[n] = state.t, state.n_alive
        if n % cfg.output_stride == 0 or n == nsteps:
            _record_output(state, snaps, all_tips, fields_)
    return TrajectoryRecord(setup, times, counts, snaps, all_tips, fields_, state.event_log, violations,
                            strict, first, state.max_death_rate, state.c_field.clamp_count,
                            state.near_boundary, state if keep_state else None)


def replay_counts(N0, events, times):
    """Alive count at each of ``times`` reconstructed from the event log alone."""
    ev_t = np.array([e[0] for e in events]) if events else np.zeros(0)
    delta = np.array([-1 if e[1] == ANASTOMOSIS else 1 for e in events]) if events else np.zeros(0)
    order = np.argsort(ev_t, kind="stable")
    ev_t, delta = ev_t[order], delta[order]
    cum = np.concatenate([[0], np.cumsum(delta)])
    k = np.searchsorted(ev_t, np.asarray(times) + 1e-12, side="right")
    return N0 + cum[k]
