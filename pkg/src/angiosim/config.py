"""Flat ``key = value`` run configuration.

Every key has a default, listed in ``DEFAULTS`` with a one-line description.
Units follow one canonical nondimensionalization: time in units of ``1/k1``,
length in units of the vessel-to-tumour distance scale, concentration in
units of ``C_max``.

Vector-valued keys are comma-separated and are given for three axes; the
first ``dim`` entries are used unless a value of exactly ``dim`` entries is
supplied.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields

import numpy as np

from .model import Kernel, ModelParams, OffspringVelocityLaw, TumorIndicator


class ConfigError(ValueError):
    pass


# key: (default, type, description)
DEFAULTS = {
    # model
    "k1": (1.0, float, "friction rate"),
    "k2": (1.0, float, "TAF source strength"),
    "sigma": (0.5, float, "velocity noise amplitude"),
    "d1": (0.1, float, "TAF diffusivity"),
    "d2": (1.0, float, "chemotaxis strength"),
    "gamma1": (1.0, float, "chemotaxis saturation scale"),
    "q": (1.0, float, "chemotaxis saturation exponent"),
    "alpha1": (0.5, float, "maximal tip-branching rate"),
    "beta1": (0.05, float, "maximal vessel-branching rate per unit speed-weighted length"),
    "C_R": (0.5, float, "reference concentration of the branching rates"),
    "gamma": (0.5, float, "anastomosis rate constant"),
    "C_max": (1.0, float, "upper bound of the initial TAF field"),
    "v0": (0.5, float, "mean offspring speed"),
    "g0": (1.0, float, "total mass of the offspring velocity density"),
    "dim": (2, int, "spatial dimension (1 is a verification-only configuration)"),
    # laws and kernels
    "offspring_spread": (0.3, float, "offspring Gaussian std in units of v0"),
    "offspring_support": (1.0, float, "speed cap of offspring velocities"),
    "offspring_direction": ("1,0,0", "vec", "mean direction of offspring velocities"),
    "k1_radius": (0.1, float, "support radius of the absorption kernel K1 (unit mass)"),
    "k2_radius": (0.1, float, "support radius of the anastomosis kernel K2 (unit mass)"),
    "tumor_lo": ("2.4,-0.4,-0.4", "vec", "lower corner of the tumour box"),
    "tumor_hi": ("2.8,0.4,0.4", "vec", "upper corner of the tumour box"),
    "tumor_width": (0.1, float, "mollification width of the tumour indicator"),
    # geometry and initial data
    "box_lo": ("0,-1.5,-1.5", "vec", "lower corner of the simulation box"),
    "box_hi": ("3,1.5,1.5", "vec", "upper corner of the simulation box"),
    "h": (0.05, float, "TAF grid spacing"),
    "init_center": ("0.5,0,0", "vec", "centre of the initial tip cloud"),
    "init_radius": (0.3, float, "radius of the cosine-bump initial position law"),
    "c0_front": (2.0, float, "x0 location of the initial TAF front"),
    "c0_width": (0.5, float, "width of the initial TAF front"),
    # time stepping and output
    "dt": (0.01, float, "particle / field time step"),
    "T": (2.0, float, "final time"),
    "output_stride": (10, int, "steps between recorded snapshots"),
    "explicit_diffusion": (False, bool, "use forward Euler for TAF diffusion"),
    "exclude_own_recent_segments": (0.0, float, "window excluding a tip's own recent vessel from its anastomosis density (0 = off)"),
    "track_network": ("auto", str, "keep the vessel network (auto: only if beta1 > 0 or gamma > 0)"),
    # ensemble
    "N": (100, int, "initial tip count (scale parameter)"),
    "seeds": (50, int, "ensemble size"),
    "master_seed": (20240601, int, "master seed"),
    "N_list": ("50,100,200,400", "ilist", "tip counts swept by the convergence study"),
    # mean-field solver
    "mf_hx": (0.0, float, "mean-field x spacing (0: use h)"),
    "mf_hv": (0.025, float, "mean-field v spacing"),
    "v_max": (0.0, float, "velocity box half width (0: automatic)"),
    "mf_dt": (0.0, float, "mean-field time step (0: automatic, divides dt)"),
    "mf_cfl": (0.9, float, "safety factor on the mean-field stability limits"),
    "mf_refine_check": (True, bool, "run a halved-dt/spacing solve and compare final mass"),
    "mf_refine_tol": (0.02, float, "relative tolerance of the self-convergence check"),
    # verification
    "wald_trials": (10000, int, "dominating-process trials per Wald seed"),
    "wald_seeds": (10, int, "master seeds for the Wald check"),
    "wald_T": (1.0, float, "horizon of the Wald check"),
    "lambda_draws": (100000, int, "draws of Z used to estimate lambda"),
    "dom_substeps": (1000, int, "Euler substeps per unit time for the Brownian sup"),
    "dom_cap": (200000, int, "particle cap of one dominating-process trial"),
    "ou_samples": (1000000, int, "Monte Carlo samples per OU semigroup time"),
    "ou_times": ("0.25,0.5,1.0", "flist", "times of the OU semigroup check"),
    "qv_seeds": (30, int, "seeds per N in the QV scaling check"),
    "qv_N": ("100,200", "ilist", "tip counts of the QV scaling check"),
    "extinction_N": ("50,100,200", "ilist", "tip counts of the extinction ensemble"),
    "extinction_seeds": (50, int, "seeds per N in the extinction ensemble"),
    "conv_seeds": (20, int, "seeds per N in the convergence study"),
    "dict_size": (16, int, "number of test functions in the weak metric"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(key, raw, kind, dim=None):
    raw = raw.strip()
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind is str:
            return raw
        if kind == "ilist":
            return tuple(int(s) for s in raw.split(",") if s.strip())
        if kind == "flist":
            return tuple(float(s) for s in raw.split(",") if s.strip())
        if kind == "vec":
            return tuple(float(s) for s in raw.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    raise AssertionError(kind)


@dataclass(frozen=True)
class RunConfig:
    values: tuple  # sorted (key, value) pairs

    def __getattr__(self, key):
        for k, v in object.__getattribute__(self, "values"):
            if k == key:
                return v
        raise AttributeError(key)

    def as_dict(self) -> dict:
        return dict(self.values)

    def replace(self, **changes) -> "RunConfig":
        d = self.as_dict()
        for k in changes:
            if k not in DEFAULTS:
                raise ConfigError(f"unknown key {k!r}")
        d.update(changes)
        dim = int(d["dim"])
        for key, (default, kind, _) in DEFAULTS.items():
            if kind == "vec" and key not in changes and len(d[key]) != dim:
                # a dimension change resizes inherited vectors, padding from the defaults
                full = _parse_value(key, default, "vec")
                d[key] = tuple(d[key][:dim]) + tuple(full[len(d[key]):dim])
        return make_config(d)

    def hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # derived objects -------------------------------------------------------
    def vec(self, key):
        return np.asarray(getattr(self, key), dtype=float)

    def model_params(self) -> ModelParams:
        names = [f.name for f in fields(ModelParams)]
        try:
            return ModelParams(**{k: getattr(self, k) for k in names})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def kernel1(self) -> Kernel:
        return Kernel.normalized(self.k1_radius, self.dim)

    def kernel2(self) -> Kernel:
        return Kernel.normalized(self.k2_radius, self.dim)

    def offspring_law(self) -> OffspringVelocityLaw:
        return OffspringVelocityLaw(tuple(self.offspring_direction), self.v0, self.offspring_spread,
                                    self.offspring_support, self.g0)

    def tumor(self) -> TumorIndicator:
        return TumorIndicator(self.tumor_lo, self.tumor_hi, self.tumor_width)

    def initial_field(self, x):
        """``C0(x) = C_max (1 + tanh((x0 - front)/width)) / 2``, within ``[0, C_max]``."""
        x = np.asarray(x, dtype=float)
        return self.C_max * 0.5 * (1.0 + np.tanh((x[..., 0] - self.c0_front) / self.c0_width))


def _check(d):
    def need(cond, what):
        if not cond:
            raise ConfigError(f"{what} violated")

    need(d["dt"] > 0, "dt > 0")
    need(d["T"] > 0, "T > 0")
    need(d["N"] >= 1, "N >= 1")
    need(d["seeds"] >= 1, "seeds >= 1")
    need(d["h"] > 0, "h > 0")
    need(d["output_stride"] >= 1, "output_stride >= 1")
    need(d["k1_radius"] > 0, "k1_radius > 0")
    need(d["k2_radius"] > 0, "k2_radius > 0")
    need(d["tumor_width"] > 0, "tumor_width > 0")
    need(d["init_radius"] > 0, "init_radius > 0")
    need(d["c0_width"] > 0, "c0_width > 0")
    need(d["exclude_own_recent_segments"] >= 0, "exclude_own_recent_segments >= 0")
    need(d["track_network"] in ("auto", "true", "false"), "track_network in {auto,true,false}")
    need(d["mf_hv"] > 0, "mf_hv > 0")
    need(d["mf_hx"] >= 0, "mf_hx >= 0")
    need(d["v_max"] >= 0, "v_max >= 0")
    need(d["mf_dt"] >= 0, "mf_dt >= 0")
    need(0 < d["mf_cfl"] <= 1, "0 < mf_cfl <= 1")
    need(all(n >= 1 for n in d["N_list"]) and len(d["N_list"]) >= 1, "N_list entries >= 1")
    need(d["dict_size"] >= 1, "dict_size >= 1")
    need(d["wald_trials"] >= 1, "wald_trials >= 1")
    lo, hi = np.asarray(d["box_lo"]), np.asarray(d["box_hi"])
    need(np.all(hi > lo), "box_hi > box_lo")
    c = np.asarray(d["init_center"])
    need(np.all(c - d["init_radius"] >= lo) and np.all(c + d["init_radius"] <= hi),
         "initial tip cloud inside the box")


def make_config(overrides=None) -> RunConfig:
    """Resolve defaults, apply ``overrides`` (already typed or raw strings), validate."""
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    d = {}
    for key, (default, kind, _) in DEFAULTS.items():
        val = overrides.get(key, default)
        if isinstance(val, str) and kind is not str:
            val = _parse_value(key, val, kind)
        elif kind is float:
            val = float(val)
        elif kind is int:
            val = int(val)
        elif kind in ("vec", "flist"):
            val = tuple(float(a) for a in np.atleast_1d(val))
        elif kind == "ilist":
            val = tuple(int(a) for a in np.atleast_1d(val))
        d[key] = val
    dim = d["dim"]
    if dim not in (1, 2, 3):
        raise ConfigError("dim in {1,2,3} violated")
    for key, (_, kind, _) in DEFAULTS.items():
        if kind == "vec":
            v = d[key]
            if len(v) == dim:
                continue
            if key in overrides and len(v) != 3:
                raise ConfigError(f"{key} needs {dim} components")
            d[key] = tuple(v[:dim])
    d["track_network"] = str(d["track_network"]).lower()
    _check(d)
    cfg = RunConfig(tuple(sorted(d.items())))
    cfg.model_params()
    cfg.offspring_law()
    return cfg


def parse_config(path) -> RunConfig:
    """Read a ``key = value`` file; ``#`` starts a comment."""
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in overrides:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                overrides[key] = _parse_value(key, raw, DEFAULTS[key][1])
            except ConfigError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
    return make_config(overrides)


def describe() -> str:
    """Documented key list, one ``key = default  # description`` line each."""
    out = []
    for key, (default, kind, desc) in DEFAULTS.items():
        out.append(f"{key} = {default}  # {desc}")
    return "\n".join(out)
