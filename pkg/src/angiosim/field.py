"""TAF concentration on a uniform node grid.

Nodes sit at ``origin + i * spacing`` and are treated as cell centres: the
homogeneous Neumann condition is imposed with a ghost node equal to the
boundary node, so discrete mass is ``sum(values) * spacing**d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .measures import EmpiricalMeasure
from .model import Kernel, ModelParams


@dataclass(frozen=True)
class Grid:
    origin: tuple
    spacing: float
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(a) for a in self.origin))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if len(self.origin) != len(self.shape):
            raise ValueError("origin/shape dimension mismatch")
        if not self.spacing > 0:
            raise ValueError("spacing > 0 violated")
        if any(n < 3 for n in self.shape):
            raise ValueError("grid needs at least 3 nodes per axis")

    @classmethod
    def covering(cls, lo, hi, spacing):
        """Smallest grid whose cells tile ``[lo, hi]``."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        n = np.maximum(np.ceil((hi - lo) / spacing - 1e-9).astype(int), 3)
        origin = lo + 0.5 * spacing
        return cls(tuple(origin), float(spacing), tuple(n))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def lo(self) -> np.ndarray:
        """Lower corner of the box the cells tile."""
        return np.asarray(self.origin) - 0.5 * self.spacing

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(self.shape) - 0.5) * self.spacing

    def axes(self):
        return [o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(prod(shape), dim)``, C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell_volume)


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    clamp_count: int = 0
    _grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    def node_gradient(self) -> np.ndarray:
        """Central differences at nodes (one-sided on the boundary), shape ``(dim, *shape)``."""
        if self._grad is None:
            g = np.gradient(self.values, self.grid.spacing, edge_order=1)
            if self.grid.dim == 1:
                g = [g]
            self._grad = np.stack(g)
        return self._grad

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.clamp_count)


@dataclass
class AbsorptionField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))


def accumulate_eta(eta: AbsorptionField, q: EmpiricalMeasure, k1_kernel: Kernel, dt):
    """Add ``dt * sum_i w K1(x - X_i) |V_i|`` to ``eta`` in place and return it."""
    if q.n_atoms == 0:
        return eta
    if q.dim != eta.grid.dim:
        raise ValueError("measure dimension does not match eta grid")
    g = eta.grid
    speeds = np.linalg.norm(q.v, axis=1)
    flat = eta.values.reshape(-1)
    kernels.scatter_bump(flat, np.asarray(g.shape, np.int64), np.asarray(g.origin), g.spacing,
                         np.ascontiguousarray(q.x), dt * q.weight * speeds,
                         k1_kernel.support_radius, k1_kernel.peak)
    return eta


def _lines_along(values, axis):
    moved = np.moveaxis(values, axis, -1)
    return moved.reshape(-1, moved.shape[-1]), moved.shape


def _implicit_axis(values, axis, r):
    n = values.shape[axis]
    lower = np.full(n, -r)
    upper = np.full(n, -r)
    diag = np.full(n, 1.0 + 2.0 * r)
    diag[0] = diag[-1] = 1.0 + r
    lower[0] = 0.0
    upper[-1] = 0.0
    lines, shape = _lines_along(values, axis)
    solved = kernels.thomas_lines(lower, diag, upper, np.ascontiguousarray(lines))
    return np.moveaxis(solved.reshape(shape), -1, axis)


def neumann_laplacian(values, spacing):
    """Five-point (2d+1) Laplacian with ghost nodes mirroring the boundary."""
    out = np.zeros_like(values)
    for a in range(values.ndim):
        p = np.pad(values, [(1, 1) if b == a else (0, 0) for b in range(values.ndim)], mode="edge")
        sl = lambda s: tuple(s if b == a else slice(None) for b in range(values.ndim))  # noqa: E731
        out += p[sl(slice(2, None))] - 2.0 * values + p[sl(slice(None, -2))]
    return out / spacing**2


def explicit_limit(dim) -> float:
    """Largest ``d1 dt / h^2`` for which the explicit step keeps a max principle."""
    return 1.0 / (2.0 * dim)


def field_step(c: ScalarField, eta: AbsorptionField, params: ModelParams, dt, source=None,
               explicit=False, stability=None) -> ScalarField:
    """Advance ``dC/dt = k2 delta_A + d1 Lap C - eta C`` by one split step.

    Order: exact reaction factor, explicit source, then one diffusion substep
    (backward Euler factored per axis, or forward Euler when ``explicit``).
    ``source`` holds ``delta_A`` at the nodes (``None`` means no source).
    """
    if not dt > 0:
        raise ValueError("dt > 0 violated")
    if eta.grid != c.grid:
        raise ValueError("eta grid does not match C grid")
    g = c.grid
    r = params.d1 * dt / g.spacing**2
    if explicit:
        lim = explicit_limit(g.dim) if stability is None else stability
        if r > lim:
            raise ValueError(f"explicit diffusion unstable: d1*dt/h^2 = {r:.4g} > {lim:.4g}")
    u = c.values * np.exp(-eta.values * dt)
    if source is not None and params.k2 != 0.0:
        u = u + params.k2 * dt * source
    if explicit:
        u = u + params.d1 * dt * neumann_laplacian(u, g.spacing)
    else:
        for a in range(g.dim):
            u = _implicit_axis(u, a, r)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite TAF values; parameters or dt too large")
    return ScalarField(g, u, c.clamp_count)


def _interp(c: ScalarField, x, with_value):
    g = c.grid
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    if pts.shape[1] != g.dim:
        raise ValueError("query dimension does not match grid")
    stack = c.node_gradient().reshape(g.dim, -1)
    if with_value:
        stack = np.vstack([c.values.reshape(1, -1), stack])
    out, clamped = kernels.interp_nodes(np.ascontiguousarray(stack), np.asarray(g.shape, np.int64),
                                        np.asarray(g.origin), g.spacing, pts)
    c.clamp_count += int(clamped)
    return out


def grad_interp(c: ScalarField, x):
    """Multilinear interpolation of the node gradient at ``x`` (one point or ``(m, d)``).

    Queries outside the node hull are clamped onto it and counted in
    ``c.clamp_count``.
    """
    out = _interp(c, x, False)
    return out[0] if np.ndim(x) == 1 else out


def value_interp(c: ScalarField, x):
    g = c.grid
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    out, clamped = kernels.interp_nodes(np.ascontiguousarray(c.values.reshape(1, -1)),
                                        np.asarray(g.shape, np.int64), np.asarray(g.origin), g.spacing, pts)
    c.clamp_count += int(clamped)
    return out[0, 0] if np.ndim(x) == 1 else out[:, 0]


def sample_field(c: ScalarField, x):
    """Value and gradient at ``(m, d)`` points in one pass."""
    out = _interp(c, x, True)
    return np.maximum(out[:, 0], 0.0), out[:, 1:]


@dataclass
class BoundsReport:
    passed: bool
    strict_cmax_ok: bool
    c_min: float
    c_max: float
    upper_bound: float
    grad_sup: float
    hess_sup: float
    offending_node: tuple = None
    reason: str = ""


def field_bounds_check(c: ScalarField, params: ModelParams, elapsed, delta_sup=1.0, rtol=1e-12):
    """Check ``0 <= C <= C_max + k2 |delta_A|_inf t`` at every node.

    Also reports whether ``C <= C_max`` alone holds, and the sup-norms of the
    finite-difference gradient and Hessian.
    """
    v = c.values
    bound = params.C_max + params.k2 * delta_sup * elapsed
    lo, hi = float(v.min()), float(v.max())
    grad = c.node_gradient()
    hess_sup = 0.0
    for ga in grad:
        h = np.gradient(ga, c.grid.spacing, edge_order=1)
        h = [h] if c.grid.dim == 1 else h
        hess_sup = max(hess_sup, max(float(np.abs(x).max()) for x in h))
    grad_sup = float(np.sqrt(np.sum(grad**2, axis=0)).max())
    slack = rtol * max(bound, 1.0)
    passed, reason, node = True, "", None
    if lo < 0.0:
        passed, reason = False, "C >= 0 violated"
        node = tuple(int(i) for i in np.unravel_index(np.argmin(v), v.shape))
    elif hi > bound + slack:
        passed, reason = False, "C <= C_max + k2*|delta_A|*t violated"
        node = tuple(int(i) for i in np.unravel_index(np.argmax(v), v.shape))
    return BoundsReport(passed, hi <= params.C_max + slack, lo, hi, bound, grad_sup, hess_sup, node, reason)
