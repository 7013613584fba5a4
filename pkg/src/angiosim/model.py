"""Model parameters, coefficient functions and kernels.

Everything here is shared by the particle simulator and the mean-field
solver. All functions are pure; randomness enters only through an explicit
``rng`` argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class ModelParams:
    """Named constants of the coupled tip / TAF model (nondimensional).

    Canonical scaling: lengths in units of the tumour distance scale, time in
    units of the friction time ``1/k1``, concentrations in units of ``C_max``.
    """

    k1: float = 1.0
    k2: float = 1.0
    sigma: float = 0.5
    d1: float = 0.1
    d2: float = 1.0
    gamma1: float = 1.0
    q: float = 1.0
    alpha1: float = 0.5
    beta1: float = 0.05
    C_R: float = 0.5
    gamma: float = 0.5
    C_max: float = 1.0
    v0: float = 0.5
    g0: float = 1.0
    dim: int = 2

    def __post_init__(self):
        # gamma1 and C_R divide; the other rate constants may be switched off
        for name in ("gamma1", "C_R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} > 0 violated (got {getattr(self, name)})")
        for name in ("k1", "k2", "d1", "d2", "alpha1", "beta1", "sigma", "gamma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} >= 0 violated (got {getattr(self, name)})")
        if not self.q >= 1:
            raise ValueError(f"q >= 1 violated (got {self.q})")
        if not self.C_max > 0:
            raise ValueError(f"C_max > 0 violated (got {self.C_max})")
        if not self.v0 >= 0:
            raise ValueError(f"v0 >= 0 violated (got {self.v0})")
        if not self.g0 > 0:
            raise ValueError(f"g0 > 0 violated (got {self.g0})")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim in {{1,2,3}} violated (got {self.dim})")

    def strictly_positive(self) -> bool:
        """True when k1, k2, d1, d2, gamma1, alpha1, C_R are all > 0, the
        regime covered by the convergence results."""
        return all(getattr(self, n) > 0 for n in ("k1", "k2", "d1", "d2", "gamma1", "alpha1", "C_R"))

    def replace(self, **changes) -> "ModelParams":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(changes)
        return ModelParams(**vals)


def chemo_force(grad_c, params: ModelParams):
    """Saturated chemotactic force ``f(|g|) g`` with ``f(r) = d2 / (1 + gamma1 r)^q``.

    Works on a single gradient or a stack of them (last axis = space).
    """
    g = np.asarray(grad_c, dtype=float)
    r = np.linalg.norm(g, axis=-1, keepdims=True)
    return params.d2 / (1.0 + params.gamma1 * r) ** params.q * g


def chemo_force_bound(params: ModelParams) -> float:
    """``sup_r d2 r / (1 + gamma1 r)^q``; equals ``d2/gamma1`` when q = 1."""
    if params.q == 1.0:
        return params.d2 / params.gamma1
    r = 1.0 / (params.gamma1 * (params.q - 1.0))
    return params.d2 * r / (1.0 + params.gamma1 * r) ** params.q


def _check_nonneg(x, what):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError(f"{what} must be >= 0")
    return x


def alpha_rate(c, params: ModelParams):
    """Tip-branching modulation ``alpha1 c / (C_R + c)``."""
    c = _check_nonneg(c, "concentration")
    return params.alpha1 * c / (params.C_R + c)


def beta_rate(c, params: ModelParams):
    """Vessel-branching modulation ``beta1 c / (C_R + c)``."""
    c = _check_nonneg(c, "concentration")
    return params.beta1 * c / (params.C_R + c)


def saturation_h(r):
    """``h(r) = r / (1 + r)``."""
    r = _check_nonneg(r, "h argument")
    return r / (1.0 + r)


@dataclass(frozen=True)
class Kernel:
    """Radial cosine bump ``peak * (1 + cos(pi |x| / R)) / 2`` on ``|x| <= R``.

    Nonnegative, even, C^1, compactly supported.
    """

    support_radius: float
    peak: float
    dim: int

    def __post_init__(self):
        if not self.support_radius > 0:
            raise ValueError("support_radius > 0 violated")
        if not self.peak >= 0:
            raise ValueError("peak >= 0 violated")

    @classmethod
    def normalized(cls, support_radius, dim, mass=1.0):
        unit = cls(support_radius, 1.0, dim).mass()
        return cls(support_radius, mass / unit, dim)

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        R = self.support_radius
        return np.where(r < R, self.peak * 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, R) / R)), 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            r = np.abs(x)
        else:
            r = np.linalg.norm(x, axis=-1)
        return self.profile(r)

    def mass(self) -> float:
        """Closed-form integral over R^dim."""
        R, c = self.support_radius, self.peak
        if self.dim == 1:
            return c * R
        if self.dim == 2:
            return c * R**2 * (math.pi / 2.0 - 2.0 / math.pi)
        return 2.0 * math.pi * c * R**3 * (1.0 / 3.0 - 2.0 / math.pi**2)

    def lipschitz(self) -> float:
        """``max |K'| = peak * pi / (2 R)``."""
        return self.peak * math.pi / (2.0 * self.support_radius)


@dataclass(frozen=True)
class OffspringVelocityLaw:
    """Velocity law for newborn tips: isotropic Gaussian around ``v0 * e``,
    truncated to the ball ``|v - v0 e| <= support_radius - v0`` so that every
    draw has ``|v| <= support_radius`` and the mean is exactly ``v0 e``.

    ``spread`` is the Gaussian std in units of ``v0`` (absolute when v0 = 0).
    The density integrates to ``g0``.
    """

    mean_direction: tuple
    mean_speed: float
    spread: float
    support_radius: float
    g0: float = 1.0

    def __post_init__(self):
        e = np.asarray(self.mean_direction, dtype=float)
        n = np.linalg.norm(e)
        if n == 0:
            raise ValueError("mean_direction must be nonzero")
        object.__setattr__(self, "mean_direction", tuple(e / n))
        if self.spread < 0:
            raise ValueError("spread >= 0 violated")
        if self.support_radius < self.mean_speed:
            raise ValueError("support_radius >= mean_speed violated")
        if self.spread > 0 and self.support_radius == self.mean_speed:
            raise ValueError("support_radius > mean_speed needed when spread > 0")

    @property
    def dim(self) -> int:
        return len(self.mean_direction)

    @property
    def mean(self) -> np.ndarray:
        return self.mean_speed * np.asarray(self.mean_direction)

    @property
    def std(self) -> float:
        scale = self.mean_speed if self.mean_speed > 0 else 1.0
        return self.spread * scale

    @property
    def trunc_radius(self) -> float:
        return self.support_radius - self.mean_speed

    def _acceptance(self) -> float:
        return float(stats.chi2.cdf((self.trunc_radius / self.std) ** 2, self.dim))

    def density(self, v):
        """``G_{v0}(v)``; zero outside the support. Undefined for spread = 0."""
        if self.spread == 0:
            raise ValueError("degenerate law has no density")
        v = np.asarray(v, dtype=float)
        dv = v - self.mean
        r2 = np.sum(dv * dv, axis=-1)
        s2 = self.std**2
        gauss = np.exp(-0.5 * r2 / s2) / (2.0 * math.pi * s2) ** (self.dim / 2.0)
        inside = r2 <= self.trunc_radius**2
        return np.where(inside, self.g0 * gauss / self._acceptance(), 0.0)

    def mean_speed_exact(self, n_quad=400) -> float:
        """``E|v|`` under the normalized law, by Gauss-Legendre quadrature in
        polar coordinates centred on the mean."""
        if self.spread == 0:
            return self.mean_speed
        d, m, s, w = self.dim, self.mean_speed, self.std, self.trunc_radius
        x, wq = np.polynomial.legendre.leggauss(n_quad)
        rho = 0.5 * w * (x + 1.0)
        radial = rho ** (d - 1) * np.exp(-0.5 * (rho / s) ** 2) * 0.5 * w * wq
        if d == 1:
            ang = 0.5 * (np.abs(m + rho) + np.abs(m - rho))
        elif d == 2:
            th = 0.5 * np.pi * (x + 1.0)
            a = np.sqrt(np.maximum(m * m + rho[:, None] ** 2 + 2.0 * m * rho[:, None] * np.cos(th)[None, :], 0.0))
            ang = (a * (0.5 * wq)[None, :]).sum(axis=1)
        else:
            # mean of |m e + rho u| over the sphere, closed form
            with np.errstate(divide="ignore", invalid="ignore"):
                ang = ((m + rho) ** 3 - np.abs(m - rho) ** 3) / (6.0 * m * rho)
            ang = np.where((m * rho) > 0, ang, np.maximum(m, rho))
        return float(np.sum(radial * ang) / np.sum(radial))


def sample_offspring_velocity(law: OffspringVelocityLaw, rng, size=None):
    """Draw velocities from ``law`` by rejection.

    ``rng`` needs ``standard_normal``; a ``numpy.random.Generator`` or a
    ``HashStream`` both work. Returns shape ``(dim,)`` or ``(size, dim)``.
    """
    n = 1 if size is None else int(size)
    d = law.dim
    if law.spread == 0:
        out = np.tile(law.mean, (n, 1))
        return out[0] if size is None else out
    out = np.empty((n, d))
    filled = 0
    tries = 0
    while filled < n:
        need = n - filled
        z = np.asarray(rng.standard_normal((need, d))) * law.std
        ok = np.sum(z * z, axis=1) <= law.trunc_radius**2
        k = int(ok.sum())
        out[filled:filled + k] = law.mean + z[ok]
        filled += k
        tries += 1
        if tries > 1000:
            raise RuntimeError("rejection sampler stalled; check spread vs support_radius")
    return out[0] if size is None else out


@dataclass(frozen=True)
class TumorIndicator:
    """Mollified indicator of an axis-aligned box ``[lo, hi]``.

    Each axis factor is 1 on ``[lo_a, hi_a]`` and falls to 0 over ``width``
    with a cosine ramp, so the product is C^1 with sup-norm 1.
    """

    lo: tuple
    hi: tuple
    width: float

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(a) for a in self.lo))
        object.__setattr__(self, "hi", tuple(float(a) for a in self.hi))
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi dimension mismatch")
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise ValueError("hi >= lo violated")
        if not self.width > 0:
            raise ValueError("width > 0 violated")

    @property
    def sup_norm(self) -> float:
        return 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for a, (l, h) in enumerate(zip(self.lo, self.hi)):
            dist = np.maximum(np.maximum(l - x[..., a], x[..., a] - h), 0.0)
            ramp = np.where(dist < self.width, 0.5 * (1.0 + np.cos(np.pi * np.minimum(dist, self.width) / self.width)), 0.0)
            out = out * ramp
        return out


def kernel_eval(k: Kernel, x):
    """Evaluate ``k`` at one point or a stack of points."""
    return k(x)
