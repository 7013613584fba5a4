import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from angiosim.analysis.checks import qv_test_function
from angiosim.analysis.convergence import (ConvergenceRow, ConvergenceTable, convergence_study, default_dictionary,
                                           loglog_slope, sup_metric)
from angiosim.analysis.dominating import (CapExceeded, DominatingRate, dominating_process, dominating_trials,
                                          estimate_lambda, sample_z, wald_check)
from angiosim.analysis.extinction import extinction_bound, extinction_check, trajectory_bound_violations
from angiosim.analysis.martingale import StepRecorder, martingale_qv
from angiosim.analysis.metrics import TestFunctionDictionary, pair, sample_density, weak_metric, weighted_tv
from angiosim.analysis.semigroup import bound_sweep, ou_semigroup_check, smooth_bump
from angiosim.config import make_config
from angiosim.meanfield import PhaseSpaceDensity, build_problem, initial_density, mass
from angiosim.measures import EmpiricalMeasure
from angiosim.model import ModelParams
from angiosim.tips import run

D2 = TestFunctionDictionary([0, -1], [3, 1], 1.25)


def _emp(seed, n=20, d=2, w=None):
    r = np.random.default_rng(seed)
    return EmpiricalMeasure(r.uniform([0, -1][:d], [3, 1][:d], (n, d)), r.normal(0, 0.5, (n, d)),
                            1.0 / n if w is None else w)


# -- dictionary and metrics ---------------------------------------------------

def test_dictionary_layout():
    assert len(D2) == 16 and len(TestFunctionDictionary([0], [1], 1.0, size=20)) == 20
    phi1 = D2[0]
    assert phi1.nx == (0, 0) and phi1.mv == (0, 0)
    r = np.random.default_rng(0)
    x, v = r.uniform(-5, 5, (1000, 2)), r.uniform(-5, 5, (1000, 2))
    for phi in D2:
        assert np.abs(phi(x, v)).max() <= phi.sup_norm + 1e-15
    degs = [sum(p.nx) + sum(p.mv) for p in D2]
    assert degs == sorted(degs)


def test_grad_v_matches_finite_difference():
    r = np.random.default_rng(1)
    x, v = r.uniform(0, 3, (50, 2)), r.uniform(-1, 1, (50, 2))
    for phi in D2:
        g = phi.grad_v(x, v)
        for a in range(2):
            e = np.zeros(2)
            e[a] = 1e-6
            fd = (phi(x, v + e) - phi(x, v - e)) / 2e-6
            np.testing.assert_allclose(g[:, a], fd, atol=1e-7)


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_weak_metric_is_pseudometric(s1, s2, s3):
    a, b, c = _emp(s1), _emp(s2, n=7), _emp(s3, n=33)
    ab, ba = weak_metric(a, b, D2), weak_metric(b, a, D2)
    assert ab == ba
    assert weak_metric(a, a, D2) == 0.0
    assert ab <= weak_metric(a, c, D2) + weak_metric(c, b, D2) + 1e-15
    assert 0 <= ab <= sum(2.0**-k for k in range(1, 17)) <= 1


def test_weak_metric_separation_lower_bound():
    a = EmpiricalMeasure([[0.2, 0.0]], [[0.0, 0.0]], 1.0)
    b = EmpiricalMeasure([[2.8, 0.0]], [[0.0, 0.0]], 1.0)
    d = weak_metric(a, b, D2)
    for k, phi in enumerate(D2, start=1):
        c = abs(pair(a, phi) - pair(b, phi))
        assert d >= 2.0**-k * min(c, 1.0) - 1e-15
    assert d > 0


def _brute_tv(mu1, mu2):
    keys = sorted({tuple(x) + tuple(v) for m in (mu1, mu2) for x, v in zip(m.x, m.v)})
    d = mu1.dim
    diff = []
    for k in keys:
        w = 0.0
        for m, sgn in ((mu1, 1), (mu2, -1)):
            hit = np.all(np.hstack([m.x, m.v]) == np.array(k), axis=1)
            w += sgn * m.weight * hit.sum()
        diff.append(w * (1 + np.linalg.norm(k[d:])))
    return max(abs(np.dot(s, diff)) for s in itertools.product((-1, 1), repeat=len(keys)))


@settings(max_examples=25)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6), st.booleans())
def test_weighted_tv_matches_sign_search(n1, n2, seed, share):
    r = np.random.default_rng(seed)
    a = EmpiricalMeasure(r.integers(0, 3, (n1, 1)).astype(float), r.integers(-2, 3, (n1, 1)).astype(float), 0.3)
    src = a if share else None
    xb = r.integers(0, 3, (n2, 1)).astype(float)
    vb = r.integers(-2, 3, (n2, 1)).astype(float)
    if src is not None:
        xb[0], vb[0] = src.x[0], src.v[0]
    b = EmpiricalMeasure(xb, vb, 0.5)
    assert weighted_tv(a, b) == pytest.approx(_brute_tv(a, b), abs=1e-12)


def test_weighted_tv_examples():
    x, v = np.array([[0.3, 0.1]]), np.array([[0.6, 0.8]])
    assert weighted_tv(EmpiricalMeasure(x, v, 0.7), EmpiricalMeasure(x, v, 0.7)) == 0.0
    assert weighted_tv(EmpiricalMeasure(x, v, 0.7), EmpiricalMeasure(x, v, 0.2)) == pytest.approx(0.5 * 2.0)
    v2 = np.array([[0.0, 3.0]])
    assert weighted_tv(EmpiricalMeasure(x, v, 1.0), EmpiricalMeasure(x + 1, v2, 1.0)) == pytest.approx(2.0 + 4.0)


def test_weighted_tv_rejects_mixed_and_handles_densities():
    cfg = make_config({"dim": 1})
    prob = build_problem(cfg)
    rho = initial_density(cfg, prob)
    with pytest.raises(TypeError):
        weighted_tv(rho, _emp(0, d=1))
    assert weighted_tv(rho, rho) == 0.0
    half = PhaseSpaceDensity(rho.xgrid, rho.vaxes, rho.values * 0.5)
    expect = 0.5 * np.sum(rho.values * (1 + rho.speed())) * rho.cell_volume
    assert weighted_tv(rho, half) == pytest.approx(expect)


def test_pairing_density_and_sampling_agree():
    cfg = make_config({"dim": 1})
    rho = initial_density(cfg, build_problem(cfg))
    D = default_dictionary(cfg)
    emp = sample_density(rho, 200_000, np.random.default_rng(0))
    assert emp.total_mass == pytest.approx(mass(rho))
    for phi in list(D)[:6]:
        assert pair(emp, phi) == pytest.approx(pair(rho, phi), abs=0.01)
    assert pair(rho, D[0]) == pytest.approx(mass(rho), rel=1e-12)
    assert pair(rho, lambda x, v: np.ones(np.broadcast_shapes(x.shape[:-1], v.shape[:-1]))) == pytest.approx(1.0)


# -- dominating process --------------------------------------------------------

def test_dominating_rate_floor_and_zero_horizon():
    p = ModelParams()
    rate = DominatingRate.from_params(p, 2.0, 1.0)
    z = sample_z(rate, 2.0, 1, 2000, substeps=200)
    assert np.all(z >= p.alpha1 * p.g0) and np.all(np.isfinite(z))
    assert dominating_process(p, 0.0, 1)[0] == 1
    with pytest.raises(ValueError):
        dominating_process(p, -1.0, 1)


def test_yule_expectation():
    z = 0.9
    p = ModelParams(alpha1=z, beta1=0.0, sigma=0.0)
    rate = DominatingRate.from_params(p, 2.0, 1.0)
    assert rate.a == z and rate.b == 0.0
    tr = dominating_trials(rate, 2.0, 3, 20_000, substeps=10)
    se = tr.nbar.std(ddof=1) / math.sqrt(tr.nbar.size)
    assert abs(tr.nbar.mean() - math.exp(z * 2.0)) <= 3 * se


def test_cap_exceeded():
    p = ModelParams(alpha1=50.0)
    with pytest.raises(CapExceeded):
        dominating_trials(DominatingRate.from_params(p, 2.0, 1.0), 2.0, 0, 3, substeps=10, cap=100)


def test_lambda_bound_on_dominating_mean():
    p = ModelParams(beta1=0.2)
    lam = estimate_lambda(p, 1.0, 4, n_draws=20_000, substeps=200)
    tr = dominating_trials(lam.rate, 1.0, 5, 5000, substeps=200)
    se = tr.nbar.std(ddof=1) / math.sqrt(tr.nbar.size)
    assert tr.nbar.mean() <= math.exp(lam.lam) + 3 * se


def test_wald_trivial_cases():
    p = ModelParams(sigma=0.0)  # Z is the constant a
    rep = wald_check(2000, p, 1.0, 7, substeps=10)
    assert rep.mean_sum == pytest.approx(rep.mean_z * rep.mean_n, rel=1e-12) and rep.passed
    p = ModelParams(alpha1=0.5, beta1=0.1)
    rep = wald_check(2000, p, 0.0, 7, substeps=10)
    assert rep.mean_n == 1.0 and rep.mean_sum == pytest.approx(rep.mean_z)
    rep = wald_check(2000, ModelParams(), 1.0, 8, substeps=100)
    assert rep.passed and abs(rep.statistic) <= 3


# -- extinction ------------------------------------------------------------------

def test_extinction_bound_examples():
    assert extinction_bound(1.0, 0.0, 7.0) == 1.0
    assert extinction_bound(1.0, 0.5, 2.0) == pytest.approx(math.exp(-1))
    assert extinction_bound(1.0, 0.5, 3.0) < extinction_bound(1.0, 0.5, 2.0)
    assert extinction_bound(1.0, 0.6, 2.0) < extinction_bound(1.0, 0.5, 2.0)
    with pytest.raises(ValueError):
        extinction_bound(0.0, 0.5, 1.0)


def test_extinction_check_gamma_zero_fraction_one():
    cfg = make_config({"T": 0.3, "N": 20, "gamma": 0.0, "h": 0.1})
    series = [(20, run(cfg.model_params(), cfg, s).mass) for s in range(4)]
    row = extinction_check(series, 0.0, cfg.T)
    assert row.fraction == 1.0 and row.se == 0.0
    with pytest.raises(ValueError):
        extinction_check(series + [(30, series[0][1])], 0.0, 1.0)
    assert trajectory_bound_violations([0, 1, 2], [1.0, 0.2, 0.9], 0.5).tolist() == [1]


# -- quadratic variations ----------------------------------------------------------

def _qv(**over):
    cfg = make_config({"T": 0.3, "N": 30, "h": 0.1, **over})
    rec = StepRecorder()
    run(cfg.model_params(), cfg, 3, observer=rec)
    return martingale_qv(rec, qv_test_function(cfg))


def test_qv_trivial_cases():
    assert _qv(sigma=0.0).brownian == 0.0
    q = _qv(alpha1=0.0, beta1=0.0, gamma=0.0)
    assert q.birth == 0.0 and q.death == 0.0 and q.brownian > 0
    q = _qv(alpha1=2.0, gamma=2.0)
    assert q.birth > 0 and q.death > 0
    assert martingale_qv(StepRecorder(), D2[3]).as_tuple() == (0.0, 0.0, 0.0)


# -- OU semigroup -------------------------------------------------------------------

def test_semigroup_constant_function():
    one = lambda x, v: np.ones(x.shape[0])  # noqa: E731
    rep = ou_semigroup_check(one, 0.5, 200_000, 1)
    assert rep.A == 1.0
    assert abs(rep.G[0]) <= 3 * rep.G_se[0]


def test_semigroup_odd_function():
    odd = lambda x, v: np.tanh(x[:, 0])  # noqa: E731
    rep = ou_semigroup_check(odd, 0.5, 200_000, 2)
    assert abs(rep.A) <= 3 * rep.A_se


def test_semigroup_bump_and_sweep_stability():
    rep = ou_semigroup_check(smooth_bump, 0.5, 1_000_000, 3, x=np.array([0.1]), v=np.array([0.2]))
    assert rep.passed
    a = bound_sweep(smooth_bump, [0.25, 0.5, 1.0], [0.0, 1.0, 3.0], 100_000, 4)
    b = bound_sweep(smooth_bump, [0.25, 0.5, 1.0], [0.0, 1.0, 3.0], 200_000, 5)
    assert np.isfinite(a.grad_ratio) and a.value_ratio <= 1.0
    assert b.grad_ratio == pytest.approx(a.grad_ratio, rel=0.1)


# -- convergence table ------------------------------------------------------------------

def test_convergence_single_n_and_mismatch():
    cfg = make_config({"dim": 1, "T": 0.2, "h": 0.1})
    from angiosim.meanfield import solve_system

    ref = solve_system(cfg.model_params(), cfg)
    D = default_dictionary(cfg)
    snaps = lambda N, s: run(cfg.model_params(), cfg, s, N=N).snapshots  # noqa: E731
    table = convergence_study(snaps, ref, [20], 2, D)
    assert table.slope is None and len(table.rows) == 1
    c2 = make_config({"dim": 2, "T": 0.2, "h": 0.1})
    bad = run(c2.model_params(), c2, 0, N=5).snapshots
    with pytest.raises(ValueError, match="dimension"):
        sup_metric(bad, 5, ref, D)


def test_table_helpers():
    rows = [ConvergenceRow(50, 0.1, 0.01, np.zeros(2)), ConvergenceRow(100, 0.105, 0.01, np.zeros(2)),
            ConvergenceRow(200, 0.05, 0.01, np.zeros(2))]
    assert ConvergenceTable(rows, None).strictly_decreasing(1.0)
    assert not ConvergenceTable(rows, None).strictly_decreasing(0.0)
    assert loglog_slope([1, 10, 100], [1.0, 0.1, 0.01]) == pytest.approx(-1.0)
