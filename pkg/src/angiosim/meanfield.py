"""Finite-volume solver for the mean-field kinetic system in phase space.

The density ``rho(x, v)`` lives on cell centres of a tensor grid with the
``d`` position axes first and the ``d`` velocity axes last. One step is a
Lie splitting, source first:

1. source: births ``dt * G(v) [alpha(C) pi1 + beta(C) tilde_accum]`` and
   death by the exact factor ``exp(-gamma h(D) dt)``, all evaluated at the
   start of the step;
2. upwind transport ``v . grad_x`` with zero-flux walls;
3. upwind drift ``div_v((F(grad C) - k1 v) rho)``; outflow through the
   velocity box is recorded as leakage;
4. explicit velocity diffusion ``(sigma^2/2) Lap_v`` with zero-flux walls;
5. history integrals advanced by the rectangle rule with the new density.

The TAF field is then advanced with the shared field stepper using the
accumulated absorption ``int K1 * p~``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .config import ConfigError, RunConfig
from .field import AbsorptionField, Grid, ScalarField, field_step
from .model import (Kernel, ModelParams, OffspringVelocityLaw, alpha_rate, beta_rate, chemo_force, chemo_force_bound,
                    saturation_h)

_NEG_TOL = 1e-12


@dataclass
class PhaseSpaceDensity:
    xgrid: Grid  # cell centres of the position axes
    vaxes: tuple  # 1-d arrays of velocity cell centres, one per axis
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.xgrid.dim

    @property
    def hx(self) -> float:
        return self.xgrid.spacing

    @property
    def hv(self) -> float:
        return float(self.vaxes[0][1] - self.vaxes[0][0])

    @property
    def v_max(self) -> float:
        return float(self.vaxes[0][-1] + 0.5 * self.hv)

    @property
    def cell_volume(self) -> float:
        return self.hx**self.dim * self.hv**self.dim

    def vgrid(self):
        """Velocity cell centres broadcastable against ``values``, one array per axis."""
        d = self.dim
        out = []
        for a, ax in enumerate(self.vaxes):
            shape = [1] * (2 * d)
            shape[d + a] = ax.size
            out.append(ax.reshape(shape))
        return out

    def speed(self):
        vs = self.vgrid()
        return np.sqrt(sum(v * v for v in vs))

    def copy(self):
        return PhaseSpaceDensity(self.xgrid, self.vaxes, self.values.copy())


@dataclass
class HistoryIntegrals:
    tilde_accum: np.ndarray  # int_0^t p~_r dr on the x grid
    eta_limit: np.ndarray  # int_0^t (K1 * p~_r) dr
    k2_accum: np.ndarray  # int_0^t (K2 * p~_r) dr, argument of h

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))


@dataclass
class Marginals:
    pi1: np.ndarray
    tilde: np.ndarray


def marginals(rho: PhaseSpaceDensity) -> Marginals:
    """Midpoint v-quadrature of ``rho`` and ``|v| rho``."""
    d = rho.dim
    axes = tuple(range(d, 2 * d))
    w = rho.hv**d
    return Marginals(rho.values.sum(axis=axes) * w, (rho.values * rho.speed()).sum(axis=axes) * w)


def mass(rho: PhaseSpaceDensity) -> float:
    return float(rho.values.sum() * rho.cell_volume)


def kernel_stencil(K: Kernel, h, dim):
    """``K`` sampled on the node lattice, times the cell volume (a quadrature stencil)."""
    n = int(math.floor(K.support_radius / h))
    ax = h * np.arange(-n, n + 1)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    pts = np.stack(mesh, axis=-1)
    return K(pts) * h**dim


def convolve(values, stencil):
    """Discrete ``K * f`` with zero extension outside the grid."""
    return ndimage.convolve(values, stencil, mode="constant", cval=0.0)


def discrete_offspring(law: OffspringVelocityLaw, vaxes, g0):
    """``G`` at velocity cell centres, renormalized so its midpoint integral is ``g0``."""
    mesh = np.meshgrid(*vaxes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    hv = vaxes[0][1] - vaxes[0][0]
    if law.spread == 0:
        # degenerate law: all mass in the cell holding the mean
        G = np.zeros(pts.shape[:-1])
        idx = tuple(int(np.argmin(np.abs(ax - m))) for ax, m in zip(vaxes, law.mean))
        G[idx] = 1.0
    else:
        G = law.density(pts)
    total = G.sum() * hv ** len(vaxes)
    if total <= 0:
        raise ValueError("offspring law not resolved by the velocity grid")
    return G * (g0 / total)


@dataclass
class MeanFieldProblem:
    params: ModelParams
    xgrid: Grid
    vaxes: tuple
    dt: float
    K1: Kernel
    K2: Kernel
    G: np.ndarray  # on the v grid, integral g0
    source: np.ndarray  # delta_A on the x grid
    k1_stencil: np.ndarray
    k2_stencil: np.ndarray
    explicit_diffusion: bool = False

    @property
    def dim(self):
        return self.xgrid.dim


@dataclass
class SourceTerms:
    births: np.ndarray  # x-grid rate density multiplying G
    death_rate: np.ndarray  # gamma h(D) on the x grid


def source_terms(rho, c: ScalarField, hist: HistoryIntegrals, prob: MeanFieldProblem, marg=None):
    p = prob.params
    marg = marginals(rho) if marg is None else marg
    C = np.maximum(c.values, 0.0)
    births = alpha_rate(C, p) * marg.pi1 + beta_rate(C, p) * hist.tilde_accum
    return SourceTerms(births, p.gamma * saturation_h(hist.k2_accum))


def _expand_x(arr, d):
    return arr.reshape(arr.shape + (1,) * d)


def _expand_v(arr, d):
    return arr.reshape((1,) * d + arr.shape)


def source_lambda(rho, c_field, hist, prob: MeanFieldProblem):
    """``Lambda(x, v) = G(v)[alpha(C) pi1 + beta(C) tilde_accum] - gamma h(D) rho``."""
    s = source_terms(rho, c_field, hist, prob)
    d = prob.dim
    return _expand_v(prob.G, d) * _expand_x(s.births, d) - _expand_x(s.death_rate, d) * rho.values


def _upwind_flux_div(u, speed_face, axis, hv, open_ends):
    """Conservative upwind update increment ``-dt/h * (F_{i+1/2} - F_{i-1/2})`` without dt.

    ``speed_face`` holds the advection speed on the n+1 faces along ``axis``
    (broadcastable). With ``open_ends`` the boundary faces pass outflow only;
    otherwise they are walls. Returns ``(increment, outflow_rate)``.
    """
    n = u.shape[axis]
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    up = np.pad(u, pad)  # zero ghost: no inflow
    sl = lambda s: tuple(s if b == axis else slice(None) for b in range(u.ndim))  # noqa: E731
    left = up[sl(slice(0, n + 1))]
    right = up[sl(slice(1, n + 2))]
    flux = np.maximum(speed_face, 0.0) * left + np.minimum(speed_face, 0.0) * right
    out = 0.0
    if open_ends:
        out = float(-flux[sl(slice(0, 1))].sum() + flux[sl(slice(n, n + 1))].sum())
    else:
        flux = flux.copy()
        flux[sl(slice(0, 1))] = 0.0
        flux[sl(slice(n, n + 1))] = 0.0
    return -(flux[sl(slice(1, n + 1))] - flux[sl(slice(0, n))]) / hv, out


def stable_dt(prob_params: ModelParams, hx, hv, v_max, dim, force_sup, cfl=0.9):
    """Largest step allowed by the transport, drift and diffusion limits."""
    lims = [hx / v_max]
    drift = force_sup + prob_params.k1 * v_max
    if drift > 0:
        lims.append(hv / drift)
    if prob_params.sigma > 0:
        lims.append(hv**2 / (dim * prob_params.sigma**2))
    return cfl * min(lims)


@dataclass
class StepDiagnostics:
    leakage: float = 0.0
    min_value: float = 0.0


def kinetic_step(rho: PhaseSpaceDensity, c_field: ScalarField, hist: HistoryIntegrals,
                 prob: MeanFieldProblem, dt, diag: StepDiagnostics = None):
    """Advance ``rho`` and ``hist`` by one split step; returns the new density.

    Raises ``ValueError`` on a CFL violation and ``FloatingPointError`` if a
    negative value below ``-1e-12`` appears.
    """
    p = prob.params
    d = prob.dim
    hx, hv = rho.hx, rho.hv
    vmax = rho.v_max
    grad = c_field.node_gradient()
    force = chemo_force(np.moveaxis(grad, 0, -1), p)  # (*xshape, d)
    fsup = float(np.linalg.norm(force, axis=-1).max()) if force.size else 0.0
    if vmax * dt > hx * (1 + 1e-12):
        raise ValueError(f"x CFL violated: v_max*dt = {vmax * dt:.4g} > hx = {hx:.4g}")
    if (fsup + p.k1 * vmax) * dt > hv * (1 + 1e-12):
        raise ValueError("v CFL violated: max|F - k1 v|*dt > hv")
    nu = 0.5 * p.sigma**2
    if d * 2 * nu * dt / hv**2 > 1 + 1e-12:
        raise ValueError("v diffusion unstable: sigma^2*dim*dt/hv^2 > 1")

    # 1. source, from the state at the start of the step
    s = source_terms(rho, c_field, hist, prob)
    u = rho.values * _expand_x(np.exp(-s.death_rate * dt), d)
    u = u + dt * _expand_v(prob.G, d) * _expand_x(s.births, d)

    # 2. x transport, walls closed
    for a in range(d):
        vface = rho.vgrid()[a]
        inc, _ = _upwind_flux_div(u, vface, a, hx, open_ends=False)
        u = u + dt * inc
    # 3. v drift, outflow recorded
    leak = 0.0
    for a in range(d):
        ax = rho.vaxes[a]
        faces = np.concatenate([ax - 0.5 * hv, [ax[-1] + 0.5 * hv]])
        shape = [1] * (2 * d)
        shape[d + a] = faces.size
        fa = _expand_x(force[..., a], d)
        speed = fa - p.k1 * faces.reshape(shape)
        inc, out = _upwind_flux_div(u, speed, d + a, hv, open_ends=True)
        u = u + dt * inc
        leak += out * dt * rho.cell_volume / hv
    # 4. v diffusion, zero-flux walls
    if nu > 0:
        lap = np.zeros_like(u)
        for a in range(d):
            ax = d + a
            padw = [(0, 0)] * u.ndim
            padw[ax] = (1, 1)
            up = np.pad(u, padw, mode="edge")
            sl = lambda s_: tuple(s_ if b == ax else slice(None) for b in range(u.ndim))  # noqa: E731
            lap += up[sl(slice(2, None))] - 2.0 * u + up[sl(slice(None, -2))]
        u = u + nu * dt / hv**2 * lap
    umin = float(u.min())
    if umin < -_NEG_TOL:
        raise FloatingPointError(f"negative density {umin:.3g}")
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite density")
    new = PhaseSpaceDensity(rho.xgrid, rho.vaxes, u)

    # 5. history, rectangle rule with the updated density
    m = marginals(new)
    hist.tilde_accum = hist.tilde_accum + dt * m.tilde
    hist.eta_limit = hist.eta_limit + dt * convolve(m.tilde, prob.k1_stencil)
    hist.k2_accum = hist.k2_accum + dt * convolve(m.tilde, prob.k2_stencil)
    if diag is not None:
        diag.leakage = leak
        diag.min_value = umin
    return new


def velocity_box(cfg: RunConfig) -> float:
    if cfg.v_max > 0:
        return cfg.v_max
    if cfg.k1 > 0:
        ou = 3.0 * cfg.sigma / math.sqrt(2.0 * cfg.k1)
    elif cfg.sigma == 0:
        ou = 0.0
    else:
        raise ConfigError("k1 = 0 with sigma > 0 has no stationary velocity spread; set v_max > 0")
    return max(ou, cfg.offspring_support + 0.25)


def build_problem(cfg: RunConfig, refine=1):
    """Grids, kernels and the discrete offspring law; ``refine`` divides spacings and dt."""
    p = cfg.model_params()
    if p.dim > 2:
        raise ConfigError("mean-field grid supports d <= 2")
    hx = (cfg.mf_hx or cfg.h) / refine
    hv = cfg.mf_hv / refine
    xgrid = Grid.covering(cfg.vec("box_lo"), cfg.vec("box_hi"), hx)
    vmax = velocity_box(cfg)
    nv = int(round(2 * vmax / hv))
    hv = 2 * vmax / nv
    vaxes = tuple(-vmax + hv * (np.arange(nv) + 0.5) for _ in range(p.dim))
    K1, K2 = cfg.kernel1(), cfg.kernel2()
    if cfg.mf_dt > 0:
        dt = cfg.mf_dt / refine
    else:
        lim = stable_dt(p, hx, hv, vmax, p.dim, chemo_force_bound(p), cfg.mf_cfl)
        k = max(1, math.ceil(cfg.dt / lim - 1e-9))
        dt = cfg.dt / k
        if refine > 1:
            dt = dt / refine
    G = discrete_offspring(cfg.offspring_law(), vaxes, p.g0)
    tumor = cfg.tumor()
    src = tumor(xgrid.nodes()).reshape(xgrid.shape)
    return MeanFieldProblem(p, xgrid, vaxes, dt, K1, K2, G, src, kernel_stencil(K1, hx, p.dim),
                            kernel_stencil(K2, hx, p.dim), cfg.explicit_diffusion)


def initial_density(cfg: RunConfig, prob: MeanFieldProblem) -> PhaseSpaceDensity:
    """``p0 = bump(x) G(v) / g0`` normalized to unit mass on the grid."""
    d = prob.dim
    bump = Kernel(cfg.init_radius, 1.0, d)
    X = prob.xgrid.nodes() - cfg.vec("init_center")
    bx = bump(X).reshape(prob.xgrid.shape)
    vals = _expand_x(bx, d) * _expand_v(prob.G, d)
    rho = PhaseSpaceDensity(prob.xgrid, prob.vaxes, vals)
    rho.values /= mass(rho)
    return rho


@dataclass
class MeanFieldResult:
    problem: MeanFieldProblem
    times: np.ndarray  # every step
    mass: np.ndarray
    leakage: np.ndarray  # per step
    out_times: np.ndarray
    densities: list
    fields: list
    hist_final: HistoryIntegrals = None
    step_records: list = field(default=None, repr=False)
    refined_mass: float = None

    def density_at(self, t):
        k = int(np.argmin(np.abs(self.out_times - t)))
        if abs(self.out_times[k] - t) > 1e-9:
            raise KeyError(f"no density snapshot at t={t}")
        return self.densities[k]


def solve_system(params: ModelParams, config: RunConfig, refine=1, record_steps=False,
                 output_every=None) -> MeanFieldResult:
    """Run the coupled kinetic / TAF system to ``config.T``.

    Snapshots are kept every ``output_stride * dt`` of the particle clock so
    they line up with simulator snapshots. With ``record_steps`` each step
    stores ``(t, pi1, tilde, C)`` before the update, for post-hoc checks.
    """
    cfg = config.replace(**{k: getattr(params, k) for k in params.__dataclass_fields__})
    prob = build_problem(cfg, refine)
    rho = initial_density(cfg, prob)
    c = ScalarField(prob.xgrid, cfg.initial_field(prob.xgrid.nodes()))
    hist = HistoryIntegrals.zeros(prob.xgrid.shape)
    dt = prob.dt
    nsteps = int(round(cfg.T / dt))
    if output_every is None:
        output_every = max(1, int(round(cfg.output_stride * cfg.dt / dt)))
    times = np.empty(nsteps + 1)
    M = np.empty(nsteps + 1)
    leak = np.zeros(nsteps + 1)
    times[0], M[0] = 0.0, mass(rho)
    out_t, dens, flds = [0.0], [rho.copy()], [c.values.copy()]
    recs = [] if record_steps else None
    diag = StepDiagnostics()
    for n in range(1, nsteps + 1):
        if record_steps:
            m = marginals(rho)
            recs.append((times[n - 1], m.pi1, m.tilde, c.values.copy(), hist.tilde_accum.copy(),
                         hist.k2_accum.copy()))
        try:
            rho = kinetic_step(rho, c, hist, prob, dt, diag)
            c = field_step(c, AbsorptionField(prob.xgrid, hist.eta_limit), prob.params, dt, prob.source,
                           prob.explicit_diffusion)
        except (ValueError, FloatingPointError) as exc:
            raise type(exc)(f"mean-field step {n} (t={n * dt:.4g}): {exc}") from None
        times[n], M[n], leak[n] = n * dt, mass(rho), diag.leakage
        if n % output_every == 0 or n == nsteps:
            out_t.append(times[n])
            dens.append(rho.copy())
            flds.append(c.values.copy())
    res = MeanFieldResult(prob, times, M, leak, np.array(out_t), dens, flds, hist, recs)
    return res


def self_convergence(params, config, tol=None):
    """Final mass at base and halved resolution; returns ``(M_base, M_fine, rel_diff, passed)``."""
    tol = config.mf_refine_tol if tol is None else tol
    a = solve_system(params, config).mass[-1]
    b = solve_system(params, config, refine=2).mass[-1]
    rel = abs(a - b) / max(abs(b), 1e-300)
    return a, b, rel, rel <= tol
