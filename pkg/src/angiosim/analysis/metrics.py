"""Distances between phase-space measures."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..measures import EmpiricalMeasure
from ..meanfield import PhaseSpaceDensity


@dataclass(frozen=True)
class ProductCosine:
    """``prod_a cos(pi n_a (x_a - lo_a) / L_a) * prod_a cos(pi m_a v_a / v_max)``."""

    nx: tuple
    mv: tuple
    lo: tuple
    length: tuple
    v_max: float

    def x_factor(self, x):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for a, n in enumerate(self.nx):
            if n:
                out = out * np.cos(np.pi * n * (x[..., a] - self.lo[a]) / self.length[a])
        return out

    def v_factor(self, v):
        v = np.asarray(v, dtype=float)
        out = np.ones(v.shape[:-1])
        for a, m in enumerate(self.mv):
            if m:
                out = out * np.cos(np.pi * m * v[..., a] / self.v_max)
        return out

    def __call__(self, x, v):
        return self.x_factor(x) * self.v_factor(v)

    def grad_v(self, x, v):
        v = np.asarray(v, dtype=float)
        fx = self.x_factor(x)
        cols = []
        for a, m in enumerate(self.mv):
            k = np.pi * m / self.v_max
            part = np.ones(v.shape[:-1])
            for b, mb in enumerate(self.mv):
                if b == a:
                    part = part * (-k * np.sin(k * v[..., b]))
                elif mb:
                    part = part * np.cos(np.pi * mb * v[..., b] / self.v_max)
            cols.append(fx * part)
        return np.stack(cols, axis=-1)

    @property
    def sup_norm(self) -> float:
        return 1.0


class TestFunctionDictionary:
    """Ordered product-cosine test functions, lowest total frequency first.

    Frequencies run over nonnegative integer multi-indices ``(n, m)``,
    ordered by total degree then lexicographically, so ``phi_1 = 1`` pairs
    with total mass. All functions have sup-norm 1.
    """

    __test__ = False

    def __init__(self, lo, hi, v_max, size=16):
        lo = tuple(float(a) for a in np.atleast_1d(lo))
        hi = tuple(float(a) for a in np.atleast_1d(hi))
        d = len(lo)
        length = tuple(h - l for l, h in zip(lo, hi))
        idx = []
        deg = 0
        while len(idx) < size:
            level = [c for c in itertools.product(range(deg + 1), repeat=2 * d) if sum(c) == deg]
            idx.extend(sorted(level, reverse=True))
            deg += 1
        self.functions = [ProductCosine(c[:d], c[d:], lo, length, float(v_max)) for c in idx[:size]]
        self.dim = d

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def __getitem__(self, k):
        return self.functions[k]


def pair(mu, phi) -> float:
    """``<mu, phi>`` for an empirical measure or a grid density."""
    if isinstance(mu, EmpiricalMeasure):
        return mu.pair(phi)
    if isinstance(mu, PhaseSpaceDensity):
        xs = mu.xgrid.nodes().reshape(mu.xgrid.shape + (mu.dim,))
        vmesh = np.stack(np.meshgrid(*mu.vaxes, indexing="ij"), axis=-1)
        if isinstance(phi, ProductCosine):
            fx = phi.x_factor(xs)
            fv = phi.v_factor(vmesh)
            vals = np.tensordot(mu.values, fv, axes=mu.dim)
            return float(np.sum(vals * fx) * mu.cell_volume)
        d = mu.dim
        X = xs.reshape(xs.shape[:d] + (1,) * d + (d,))
        Vv = vmesh.reshape((1,) * d + vmesh.shape)
        return float(np.sum(mu.values * phi(X, Vv)) * mu.cell_volume)
    raise TypeError(f"cannot pair {type(mu).__name__}")


def weak_metric(mu1, mu2, dictionary) -> float:
    """``sum_k 2^-k min(|mu1(phi_k) - mu2(phi_k)|, 1)`` over the dictionary, k from 1."""
    total = 0.0
    for k, phi in enumerate(dictionary, start=1):
        total += 2.0**-k * min(abs(pair(mu1, phi) - pair(mu2, phi)), 1.0)
    return total


def _atoms(mu: EmpiricalMeasure):
    merged = {}
    for x, v in zip(mu.x, mu.v):
        key = tuple(x) + tuple(v)
        merged[key] = merged.get(key, 0.0) + mu.weight
    return merged


def weighted_tv(mu1, mu2) -> float:
    """``sup_{|phi| <= 1} |<mu1 - mu2, (1 + |v|) phi>|``.

    Exact for two atomic measures (coinciding atoms merged) and computed by
    quadrature for two densities on the same grid. Mixed inputs are rejected.
    """
    if isinstance(mu1, EmpiricalMeasure) and isinstance(mu2, EmpiricalMeasure):
        if mu1.n_atoms and mu2.n_atoms and mu1.dim != mu2.dim:
            raise ValueError("dimension mismatch")
        a, b = _atoms(mu1), _atoms(mu2)
        d = mu1.dim if mu1.n_atoms else mu2.dim
        total = 0.0
        for key in set(a) | set(b):
            v = np.asarray(key[d:])
            total += abs(a.get(key, 0.0) - b.get(key, 0.0)) * (1.0 + np.linalg.norm(v))
        return float(total)
    if isinstance(mu1, PhaseSpaceDensity) and isinstance(mu2, PhaseSpaceDensity):
        if mu1.values.shape != mu2.values.shape or mu1.xgrid != mu2.xgrid:
            raise ValueError("densities on different grids")
        return float(np.sum(np.abs(mu1.values - mu2.values) * (1.0 + mu1.speed())) * mu1.cell_volume)
    raise TypeError("weighted_tv needs two atomic measures or two grid densities; use weak_metric")


def sample_density(rho: PhaseSpaceDensity, n, rng) -> EmpiricalMeasure:
    """``n`` iid atoms from ``rho / M``, each carrying weight ``M / n``."""
    w = rho.values.ravel()
    M = w.sum() * rho.cell_volume
    cells = rng.choice(w.size, size=n, p=w / w.sum())
    d = rho.dim
    idx = np.stack(np.unravel_index(cells, rho.values.shape), axis=1)
    xo = np.asarray(rho.xgrid.origin)
    x = xo + (idx[:, :d] + rng.random((n, d)) - 0.5) * rho.hx
    v0 = np.array([ax[0] for ax in rho.vaxes])
    v = v0 + (idx[:, d:] + rng.random((n, d)) - 0.5) * rho.hv
    return EmpiricalMeasure(x, v, M / n)
