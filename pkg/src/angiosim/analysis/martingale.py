"""Predictable quadratic variations of the three martingales in the
semimartingale decomposition of ``<Q_N(t), phi>``.

With weight ``1/N`` per atom:

* Brownian part:  ``sum dt sigma^2 / N^2 sum_i |grad_v phi(X_i, V_i)|^2``
* births:         ``sum dt / N^2 [sum_i alpha(C(X_i)) phi_G^2(X_i)
                                  + sum_seg beta(C(y)) phi_G^2(y) mass]``
* anastomosis:    ``sum dt / N^2 sum_i gamma h(D(X_i)) phi(X_i, V_i)^2``

where ``phi_G^2(x) = int G(v) phi(x, v)^2 dv``. The integrands are evaluated
from a per-step record taken at the moment the jump samplers act.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..model import alpha_rate, beta_rate, saturation_h
from ..tips import SimulationState, StepInfo, network_density


@dataclass
class StepRecord:
    t: float
    X: np.ndarray
    V: np.ndarray
    C: np.ndarray  # node values of the TAF field
    n_segments: int
    density: np.ndarray  # network density at the tips
    conc: np.ndarray  # TAF value at the tips


@dataclass
class StepRecorder:
    """Observer for ``tips.run`` that keeps what the QVs need at every step."""

    steps: list = field(default_factory=list)
    state: SimulationState = field(default=None, repr=False)

    def __call__(self, state: SimulationState, info: StepInfo):
        ids = info.ids
        net = state.network
        n_seg = 0 if net is None else len(net)
        dens = info.density
        if dens.size != ids.size:
            dens = np.zeros(ids.size) if not n_seg else network_density(net, state.X[ids], state.setup.K2,
                                                                        state.setup.N)
        self.steps.append(StepRecord(state.t, state.X[ids].copy(), state.V[ids].copy(),
                                     state.c_field.values.copy(), n_seg, dens, info.conc.copy()))
        self.state = state


@dataclass
class QVEstimate:
    brownian: float
    birth: float
    death: float

    def as_tuple(self):
        return self.brownian, self.birth, self.death


def _phi2_g(phi, law, x, nquad=64, g0=1.0):
    """``int G(v) phi(x, v)^2 dv`` by midpoint quadrature on the support box."""
    d = law.dim
    R = law.support_radius
    ax = -R + (np.arange(nquad) + 0.5) * (2 * R / nquad)
    mesh = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    if law.spread == 0:
        Gw = np.array([g0])
        mesh = law.mean[None, :]
    else:
        Gw = law.density(mesh) * (2 * R / nquad) ** d
        keep = Gw > 0
        Gw, mesh = Gw[keep], mesh[keep]
        Gw = Gw * (g0 / Gw.sum())
    if hasattr(phi, "v_factor"):
        fv2 = phi.v_factor(mesh) ** 2
        return phi.x_factor(x) ** 2 * float(np.sum(Gw * fv2))
    x = np.atleast_2d(x)
    vals = phi(np.repeat(x[:, None, :], mesh.shape[0], axis=1), np.broadcast_to(mesh, (x.shape[0],) + mesh.shape))
    return (vals**2 * Gw[None, :]).sum(axis=1)


def martingale_qv(record: StepRecorder, phi) -> QVEstimate:
    """Terminal predictable QVs of the three martingales for test function ``phi``."""
    state = record.state
    if state is None or not record.steps:
        return QVEstimate(0.0, 0.0, 0.0)
    setup = state.setup
    p = setup.params
    N = setup.N
    dt = setup.dt
    net = state.network
    grid = setup.grid
    if net is not None and len(net):
        mids = 0.5 * (net.start + net.end)
        seg_phi = _phi2_g(phi, setup.law, mids, g0=p.g0) * net.mass
    qv1 = qv2 = qv3 = 0.0
    for rec in record.steps:
        if rec.X.shape[0] == 0 and rec.n_segments == 0:
            continue
        if rec.X.shape[0]:
            if p.sigma:
                g = phi.grad_v(rec.X, rec.V)
                qv1 += dt * p.sigma**2 * float(np.sum(g * g))
            qv2 += dt * float(np.sum(alpha_rate(rec.conc, p) * _phi2_g(phi, setup.law, rec.X, g0=p.g0)))
            qv3 += dt * p.gamma * float(np.sum(saturation_h(rec.density) * phi(rec.X, rec.V) ** 2))
        if rec.n_segments and p.beta1:
            m = rec.n_segments
            cm, _ = kernels.interp_nodes(rec.C.reshape(1, -1), np.asarray(grid.shape, np.int64),
                                         np.asarray(grid.origin), grid.spacing, np.ascontiguousarray(mids[:m]))
            qv2 += dt * float(np.sum(beta_rate(np.maximum(cm[:, 0], 0.0), p) * seg_phi[:m]))
    return QVEstimate(qv1 / N**2, qv2 / N**2, qv3 / N**2)
