"""The verification suite behind ``angiosim verify``.

Each check returns a :class:`CheckResult`. Ensembles of simulator runs are
shared between checks through :class:`VerifyContext`, which grows them on
demand; members are seeded by index, so the first ``k`` members of a larger
ensemble are the ``k``-member ensemble.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .. import rng
from ..config import RunConfig
from ..ensemble import run_ensemble
from ..field import ScalarField
from ..meanfield import solve_system
from ..model import alpha_rate, beta_rate, saturation_h
from ..tips import initial_state, run, sample_anastomosis, sample_tip_branching, sample_vessel_branching
from .convergence import convergence_study, default_dictionary
from .dominating import estimate_lambda, wald_check
from .extinction import extinction_bound, extinction_check, trajectory_bound_violations
from .semigroup import bound_sweep, ou_semigroup_check, smooth_bump


@dataclass
class CheckResult:
    check: str
    statistic: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"check": self.check, "statistic": self.statistic, "tolerance": self.tolerance,
                "pass": bool(self.passed)}


def _se(x):
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def qv_test_function(cfg: RunConfig):
    """First dictionary function that varies in both ``x`` and ``v``."""
    for phi in default_dictionary(cfg):
        if any(phi.nx) and any(phi.mv):
            return phi
    raise ValueError("dictionary too small for a mixed test function")


@dataclass
class VerifyContext:
    """Config, worker count and the ensembles shared between checks."""

    cfg: RunConfig
    workers: int = 1
    _ens: dict = field(default_factory=dict)
    _mf: dict = field(default_factory=dict)

    def ensemble(self, N, n_members):
        have = self._ens.setdefault(N, [])
        if len(have) < n_members:
            have.extend(run_ensemble(self.cfg, N, n_members - len(have), self.workers,
                                     qv_phi=qv_test_function(self.cfg), first=len(have)))
        return have[:n_members]

    def meanfield_1d(self, record_steps=False):
        key = bool(record_steps)
        if key not in self._mf:
            c1 = self.cfg.replace(dim=1)
            self._mf[key] = solve_system(c1.model_params(), c1, record_steps=record_steps)
        return self._mf[key]


# -- individual checks ------------------------------------------------------

def check_ou_moments(ctx: VerifyContext, N=10_000, T=5.0):
    """Velocity variance of free OU tips against ``sigma^2 / (2 k1)``."""
    cfg = ctx.cfg.replace(d2=0.0, k1=1.0, sigma=1.0, alpha1=0.0, beta1=0.0, gamma=0.0, T=T,
                          output_stride=10**6, track_network="false")
    rec = run(cfg.model_params(), cfg, rng.derive_seed(cfg.master_seed, 0x0E), N=N, check_bounds=False)
    V = rec.final_state.V
    target = cfg.sigma**2 / (2.0 * cfg.k1)
    var = V.var(axis=0, ddof=1)
    m4 = ((V - V.mean(axis=0)) ** 4).mean(axis=0)
    se = np.sqrt(np.maximum(m4 - var**2, 0.0) / V.shape[0])
    z = np.abs(var - target) / se
    return CheckResult("ou_moments", float(z.max()), 3.0, bool(np.all(z <= 3.0)),
                       {"variance": var, "se": se, "target": target, "N": N, "T": T})


def check_max_principle(ctx: VerifyContext):
    """Full default run with the TAF bounds checked at every node and step."""
    cfg = ctx.cfg
    rec = run(cfg.model_params(), cfg, rng.derive_seed(cfg.master_seed, 0x4D))
    first = None
    if rec.first_violation is not None:
        n, rep = rec.first_violation
        first = {"step": n, "c_min": rep.c_min, "c_max": rep.c_max, "node": rep.offending_node,
                 "reason": rep.reason}
    return CheckResult("max_principle", float(rec.bounds_violations), 0.0, rec.bounds_violations == 0,
                       {"steps": len(rec.times) - 1, "strict_cmax_violations": rec.strict_cmax_violations,
                        "first_violation": first, "clamped_queries": rec.clamp_count})


def check_domination(ctx: VerifyContext, N=100, seeds=None):
    """Mean of ``sup_t N_t / N`` against ``exp(lambda T)``."""
    cfg = ctx.cfg
    seeds = cfg.seeds if seeds is None else seeds
    members = ctx.ensemble(N, seeds)
    sups = np.array([m.mass.max() for m in members])
    lam = estimate_lambda(cfg.model_params(), cfg.T, cfg.master_seed, cfg.lambda_draws,
                          cfg.offspring_support, cfg.dom_substeps)
    bound = math.exp(lam.lam * cfg.T)
    se = math.hypot(_se(sups), cfg.T * bound * lam.se)
    mean = float(sups.mean())
    return CheckResult("domination", mean, bound + 3.0 * se, mean <= bound + 3.0 * se,
                       {"lambda": lam.lam, "lambda_se": lam.se, "bound": bound, "se": se, "N": N,
                        "seeds": seeds, "C": lam.rate.C})


def check_wald(ctx: VerifyContext):
    """Wald's identity for the dominating process over several master seeds."""
    cfg = ctx.cfg
    reps = [wald_check(cfg.wald_trials, cfg.model_params(), cfg.wald_T, rng.derive_seed(cfg.master_seed, 0x57, k),
                       cfg.offspring_support, cfg.dom_substeps, cfg.dom_cap)
            for k in range(cfg.wald_seeds)]
    worst = max(abs(r.statistic) for r in reps)
    return CheckResult("wald", float(worst), 3.0, all(r.passed for r in reps),
                       {"statistics": [r.statistic for r in reps], "mean_n": [r.mean_n for r in reps]})


def check_extinction(ctx: VerifyContext, Ns=None, seeds=None):
    """Mean-field mass above ``exp(log M0 - gamma t)``; ensemble fractions nondecreasing in N."""
    cfg = ctx.cfg
    Ns = list(cfg.extinction_N) if Ns is None else list(Ns)
    seeds = cfg.extinction_seeds if seeds is None else seeds
    mf = ctx.meanfield_1d()
    bad = trajectory_bound_violations(mf.times, mf.mass, cfg.gamma)
    rows = []
    for N in Ns:
        members = ctx.ensemble(N, seeds)
        rows.append(extinction_check([(N, m.mass) for m in members], cfg.gamma, cfg.T))
    mono = all(b.fraction >= a.fraction - math.hypot(a.se, b.se) for a, b in zip(rows, rows[1:]))
    return CheckResult("extinction", float(bad.size), 0.0, bad.size == 0 and mono,
                       {"bound_T": extinction_bound(mf.mass[0], cfg.gamma, cfg.T), "mf_violations": int(bad.size),
                        "fractions": {r.N: r.fraction for r in rows}, "monotone": mono})


def mass_identity_residuals(res):
    """Per-step residual of the discrete mass balance and its truncation estimate.

    ``r_n = (M_{n+1} - M_n) / dt - RHS(rho_n) + leak_n / dt``; the estimate is
    the change of ``RHS`` over the step plus the second-order term of the
    exponential death factor.
    """
    prob = res.problem
    p = prob.params
    dt = prob.dt
    dx = prob.xgrid.cell_volume
    rhs = []
    curv = []
    for t, pi1, tilde, C, tacc, kacc in res.step_records:
        C = np.maximum(C, 0.0)
        death = p.gamma * saturation_h(kacc)
        births = p.g0 * np.sum(alpha_rate(C, p) * pi1 + beta_rate(C, p) * tacc) * dx
        rhs.append(births - np.sum(death * pi1) * dx)
        curv.append(0.5 * dt * np.sum(death**2 * pi1) * dx)
    rhs = np.array(rhs)
    M = res.mass
    r = np.diff(M) / dt - rhs + res.leakage[1:] / dt
    drhs = np.abs(np.diff(rhs, append=rhs[-1]))
    est = drhs + np.array(curv)
    return r, est


def check_mass_identity(ctx: VerifyContext):
    res = ctx.meanfield_1d(record_steps=True)
    r, est = mass_identity_residuals(res)
    tol = 10.0 * est + 1e-13 * np.abs(res.mass[:-1])
    ratio = np.abs(r) / tol
    return CheckResult("mass_identity", float(ratio.max()), 1.0, bool(np.all(ratio <= 1.0)),
                       {"max_residual": float(np.abs(r).max()), "max_estimate": float(est.max()),
                        "steps": int(r.size)})


def check_qv_scaling(ctx: VerifyContext, Ns=None, seeds=None, lo=0.35, hi=0.65):
    """Ratio of mean terminal QVs between the two ensemble sizes."""
    cfg = ctx.cfg
    Ns = list(cfg.qv_N) if Ns is None else list(Ns)
    seeds = cfg.qv_seeds if seeds is None else seeds
    means = {N: np.mean([m.qv for m in ctx.ensemble(N, seeds)], axis=0) for N in Ns}
    ratios = means[Ns[1]] / means[Ns[0]]
    ok = bool(np.all((ratios >= lo) & (ratios <= hi)))
    dev = float(np.max(np.abs(ratios - 0.5)))
    return CheckResult("qv_scaling", dev, hi - 0.5, ok,
                       {"ratios": {"brownian": ratios[0], "birth": ratios[1], "death": ratios[2]},
                        "means": {N: means[N] for N in Ns}, "phi": str(qv_test_function(cfg))})


def convergence_config(cfg: RunConfig) -> RunConfig:
    return cfg.replace(dim=1)


def run_convergence(cfg: RunConfig, Ns, seeds, workers=1, resample_seed=None, reference=None):
    """Simulator ensembles at each N against the mean-field run of ``cfg`` (or ``reference``)."""
    ref = solve_system(cfg.model_params(), cfg) if reference is None else reference
    dictionary = default_dictionary(cfg)
    snaps = {N: [m.snapshots for m in run_ensemble(cfg, N, seeds, workers, keep_snapshots=True)] for N in Ns}
    return convergence_study(lambda N, s: snaps[N][s], ref, Ns, seeds, dictionary, resample_seed)


def check_convergence(ctx: VerifyContext, Ns=None, seeds=None):
    cfg = ctx.cfg
    Ns = list(cfg.N_list) if Ns is None else list(Ns)
    seeds = cfg.conv_seeds if seeds is None else seeds
    table = run_convergence(convergence_config(cfg), Ns, seeds, ctx.workers, resample_seed=cfg.master_seed)
    ok = table.strictly_decreasing(1.0)
    return CheckResult("convergence", table.rows[-1].mean, table.rows[0].mean, ok,
                       {"means": [r.mean for r in table.rows], "se": [r.se for r in table.rows],
                        "slope": table.slope, "resampled_slope": table.resampled_slope, "note": table.note})


def check_ou_semigroup(ctx: VerifyContext, times=None, n_samples=None):
    cfg = ctx.cfg
    times = list(cfg.ou_times) if times is None else list(times)
    n = cfg.ou_samples if n_samples is None else n_samples
    reps = [ou_semigroup_check(smooth_bump, t, n, rng.derive_seed(cfg.master_seed, 0x05, k),
                               x=np.array([0.1]), v=np.array([0.2]))
            for k, t in enumerate(times)]
    z = max(float(np.max(np.abs(r.G - r.fd) / (3.0 * r.diff_se + r.truncation))) for r in reps)
    sweep = bound_sweep(smooth_bump, times, [0.0, 0.5, 1.0, 2.0, 4.0], max(n // 10, 1000),
                        rng.derive_seed(cfg.master_seed, 0x06))
    return CheckResult("ou_semigroup", z, 1.0, all(r.passed for r in reps),
                       {"times": times, "G": [r.G for r in reps], "fd": [r.fd for r in reps],
                        "value_ratio": sweep.value_ratio, "grad_ratio": sweep.grad_ratio})


def _gof_chi2(observed, expected):
    """Chi-square with tail bins merged until each expected count is at least 5."""
    obs, exp_ = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= 5.0:
            obs.append(o_acc)
            exp_.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0:
        obs[-1] += o_acc
        exp_[-1] += e_acc
    return stats.chisquare(obs, exp_)


def thinning_branch_counts(cfg: RunConfig, n_trials=10_000, dt=1e-3, horizon=2.0, conc=1.0):
    """Per-tip branching counts over ``horizon`` at constant TAF, against Poisson.

    Births are not committed, so every trial is one tip with a constant rate.
    """
    c = cfg.replace(dim=1, dt=dt, alpha1=1.5 * (cfg.C_R + conc) / conc, g0=1.0)
    state = initial_state(c, n_trials, rng.derive_seed(cfg.master_seed, 0x7B))
    p = state.setup.params
    rate = float(alpha_rate(np.array([conc]), p)[0] * p.g0)
    counts = np.zeros(n_trials, np.int64)
    C = np.full(n_trials, conc)
    for k in range(1, int(round(horizon / dt)) + 1):
        state.step = k
        par, _ = sample_tip_branching(state, dt, C)
        counts[par] += 1
    mu = rate * horizon
    top = int(counts.max()) + 1
    observed = np.bincount(counts, minlength=top + 1).astype(float)
    pm = stats.poisson.pmf(np.arange(top + 1), mu)
    pm[-1] = stats.poisson.sf(top - 1, mu)
    res = _gof_chi2(observed, n_trials * pm)
    return float(res.pvalue), {"rate": rate, "mean_count": float(counts.mean()), "expected": mu}


def thinning_kill_times(cfg: RunConfig, n_trials=10_000, dt=1e-3, horizon=2.0, n_bins=20):
    """First anastomosis step of tips sitting in a fixed network, against the exponential law."""
    c = cfg.replace(dim=1, dt=dt, gamma=5.0, track_network="true")
    state = initial_state(c, n_trials, rng.derive_seed(cfg.master_seed, 0x7C))
    x = np.array([1.5])
    state.X[:] = x
    state.network.add(np.array([[1.4]]), np.array([[1.6]]), float(n_trials), 0, 0.0, 1.0)
    ids = np.arange(n_trials)
    death = np.full(n_trials, np.inf)
    hazard = None
    nsteps = int(round(horizon / dt))
    for k in range(1, nsteps + 1):
        state.step = k
        live = ids[np.isinf(death)]
        if live.size == 0:
            break
        killed, hz, _ = sample_anastomosis(state, dt, live)
        hazard = hz[0] if hazard is None else hazard
        death[killed] = k * dt
    # a death at step k means the exponential clock rang in ((k-1) dt, k dt]
    edges = np.linspace(0.0, horizon, n_bins + 1)
    observed = np.histogram(death[np.isfinite(death)], bins=edges)[0].astype(float)
    observed = np.append(observed, np.isinf(death).sum())
    cdf = -np.expm1(-hazard * edges)
    expected = n_trials * np.append(np.diff(cdf), 1.0 - cdf[-1])
    res = _gof_chi2(observed, expected)
    return float(res.pvalue), {"hazard": float(hazard), "survivors": int(np.isinf(death).sum())}


def thinning_vessel_locations(cfg: RunConfig, n_owners=10_000, n_pieces=10, conc=1.0):
    """Branch points on identical straight constant-speed vessels, against the uniform law."""
    c = cfg.replace(dim=1, dt=1e-3, beta1=1.0, g0=1.0, track_network="true")
    state = initial_state(c, n_owners, rng.derive_seed(cfg.master_seed, 0x7D))
    state.c_field = ScalarField(state.c_field.grid, np.full(state.c_field.values.shape, conc))
    a, b = 0.5, 1.5
    speed = 1.0
    edges = np.linspace(a, b, n_pieces + 1)
    seg_t = (b - a) / speed / n_pieces
    # weight chosen so that beta1 g0 L dt = 5 for every owner
    w = 5.0 / (c.beta1 * c.g0 * c.dt * (b - a) / speed)
    for i in range(n_pieces):
        state.network.add(np.full((n_owners, 1), edges[i]), np.full((n_owners, 1), edges[i + 1]), w,
                          np.arange(n_owners), i * seg_t, (i + 1) * seg_t)
    state.step = 1
    _, pts = sample_vessel_branching(state, c.dt)
    u = (pts[:, 0] - a) / (b - a)
    res = stats.kstest(u, "uniform")
    return float(res.pvalue), {"accepted": int(u.size)}


def check_thinning(ctx: VerifyContext, alpha=0.01):
    cfg = ctx.cfg
    p_branch, d1 = thinning_branch_counts(cfg)
    p_kill, d2 = thinning_kill_times(cfg)
    p_loc, d3 = thinning_vessel_locations(cfg)
    pmin = min(p_branch, p_kill, p_loc)
    return CheckResult("thinning", pmin, alpha, pmin > alpha,
                       {"p_branch": p_branch, "p_kill": p_kill, "p_location": p_loc, **d1, **d2, **d3})


def check_determinism(ctx: VerifyContext):
    """Small ``simulate`` twice, with one and with two workers; outputs compared byte by byte."""
    from ..cli import simulate_outputs

    cfg = ctx.cfg.replace(N=20, T=0.2, seeds=3, output_stride=5)
    with tempfile.TemporaryDirectory() as tmp:
        a = Path(tmp) / "w1"
        b = Path(tmp) / "w2"
        simulate_outputs(cfg, a, workers=1)
        simulate_outputs(cfg, b, workers=2)
        fa = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
        fb = sorted(p.relative_to(b) for p in b.rglob("*.csv"))
        diff = [str(f) for f in fa if (a / f).read_bytes() != (b / f).read_bytes()]
        same_set = fa == fb
    return CheckResult("determinism", float(len(diff)), 0.0, same_set and not diff and bool(fa),
                       {"files": len(fa), "differing": diff})


CHECKS = {
    "ou_moments": check_ou_moments,
    "max_principle": check_max_principle,
    "domination": check_domination,
    "wald": check_wald,
    "extinction": check_extinction,
    "mass_identity": check_mass_identity,
    "qv_scaling": check_qv_scaling,
    "convergence": check_convergence,
    "ou_semigroup": check_ou_semigroup,
    "thinning": check_thinning,
    "determinism": check_determinism,
}


def run_checks(cfg: RunConfig, only=None, workers=1):
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    ctx = VerifyContext(cfg, workers)
    return [CHECKS[n](ctx) for n in names]
