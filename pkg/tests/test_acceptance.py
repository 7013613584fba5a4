"""One test per acceptance criterion, at the documented tolerances and sizes.

All checks share one verification context so ensembles are simulated once.
"""

import pytest

from angiosim.analysis import checks
from angiosim.config import make_config

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def ctx():
    return checks.VerifyContext(make_config())


def _report(res):
    print(f"{res.check}: statistic={res.statistic:.6g} tolerance={res.tolerance:.6g} details={res.details}")
    return res


def test_01_ou_moments(ctx):
    res = _report(checks.check_ou_moments(ctx, N=10_000, T=5.0))
    assert res.passed, res.details


def test_02_maximum_principle(ctx):
    assert ctx.cfg.dim == 2 and ctx.cfg.N == 100 and ctx.cfg.T == 2.0
    res = _report(checks.check_max_principle(ctx))
    assert res.passed and res.statistic == 0.0, res.details


def test_03_tip_count_domination(ctx):
    assert ctx.cfg.lambda_draws == 100_000
    res = _report(checks.check_domination(ctx, N=100, seeds=50))
    assert res.passed, res.details


def test_04_wald_identity(ctx):
    assert ctx.cfg.wald_trials == 10_000 and ctx.cfg.wald_seeds == 10
    res = _report(checks.check_wald(ctx))
    assert res.passed and res.statistic <= 3.0, res.details


def test_05_non_extinction(ctx):
    res = _report(checks.check_extinction(ctx, Ns=[50, 100, 200], seeds=50))
    assert res.details["mf_violations"] == 0
    assert res.details["monotone"], res.details
    assert res.passed


def test_06_mass_identity(ctx):
    res = _report(checks.check_mass_identity(ctx))
    assert res.passed, res.details


def test_07_martingale_scaling(ctx):
    res = _report(checks.check_qv_scaling(ctx, Ns=[100, 200], seeds=30, lo=0.35, hi=0.65))
    assert res.passed, res.details


def test_08_convergence(ctx):
    res = _report(checks.check_convergence(ctx, Ns=[50, 100, 200, 400], seeds=20))
    assert res.passed, res.details


def test_09_ou_semigroup(ctx):
    res = _report(checks.check_ou_semigroup(ctx, times=[0.25, 0.5, 1.0], n_samples=1_000_000))
    assert res.passed, res.details


def test_10_thinning(ctx):
    res = _report(checks.check_thinning(ctx, alpha=0.01))
    assert res.passed, res.details


def test_11_determinism(ctx):
    res = _report(checks.check_determinism(ctx))
    assert res.passed, res.details
