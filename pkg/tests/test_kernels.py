"""The numba and numpy kernel paths must agree; the RNG must look uniform."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from angiosim import kernels, rng
from angiosim.kernels import numpy_impl as NP

NB = kernels.numba_impl
needs_numba = pytest.mark.skipif(NB is None, reason="numba missing")


@needs_numba
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(1, 9))
def test_hash_paths_bit_identical(seed, base, n):
    streams = np.arange(0, 50, 7, dtype=np.int64)
    a = NP.hash_uniforms(np.uint64(seed), streams, np.uint64(base), n)
    b = NB.hash_uniforms(np.uint64(seed), streams, np.uint64(base), n)
    np.testing.assert_array_equal(a, b)
    a = NP.hash_normals(np.uint64(seed), streams, np.uint64(base), n)
    b = NB.hash_normals(np.uint64(seed), streams, np.uint64(base), n)
    np.testing.assert_allclose(a, b, rtol=1e-15, atol=1e-15)


def test_uniforms_are_uniform_and_independent_of_population():
    u = rng.uniforms(3, np.arange(100_000), 5, rng.TIP_BRANCH)[:, 0]
    assert stats.kstest(u, "uniform").pvalue > 0.01
    assert np.all((u > 0) & (u < 1))
    sub = rng.uniforms(3, np.array([17, 99_999]), 5, rng.TIP_BRANCH)[:, 0]
    np.testing.assert_array_equal(sub, u[[17, 99_999]])


def test_normals_are_standard():
    z = rng.normals(9, np.arange(50_000), 1, rng.EM_NOISE, 2).ravel()
    assert stats.kstest(z, "norm").pvalue > 0.01
    assert abs(np.corrcoef(z[0::2], z[1::2])[0, 1]) < 4 / np.sqrt(z.size / 2)


def test_purposes_and_steps_give_distinct_draws():
    ids = np.arange(1000)
    a = rng.uniforms(1, ids, 3, rng.TIP_BRANCH)
    b = rng.uniforms(1, ids, 3, rng.ANASTOMOSIS)
    c = rng.uniforms(1, ids, 4, rng.TIP_BRANCH)
    d = rng.uniforms(2, ids, 3, rng.TIP_BRANCH)
    for other in (b, c, d):
        assert abs(np.corrcoef(a[:, 0], other[:, 0])[0, 1]) < 0.15
        assert not np.any(a == other)


def test_counter_layout_and_limits():
    assert rng.counter(2, 3, 4) == (2 << 24) | (3 << 16) | 4
    with pytest.raises(ValueError):
        rng.counter(0, 1, 1 << 16)
    s = rng.HashStream(1, 2, 3, rng.OFFSPRING)
    first = s.standard_normal(3)
    again = rng.HashStream(1, 2, 3, rng.OFFSPRING).standard_normal(3)
    np.testing.assert_array_equal(first, again)
    assert rng.derive_seed(5, 1, 2) == rng.derive_seed(5, 1, 2) != rng.derive_seed(5, 2, 1)


@needs_numba
@pytest.mark.parametrize("d", [1, 2, 3])
def test_interp_and_scatter_parity(d):
    r = np.random.default_rng(d)
    shape = np.array([7, 6, 5][:d], np.int64)
    origin = r.normal(size=d)
    h = 0.3
    fields = r.random((2, int(np.prod(shape))))
    pts = origin + r.uniform(-0.5, (shape - 1) * h + 0.5, (200, d))
    a, ca = NP.interp_nodes(fields, shape, origin, h, pts)
    b, cb = NB.interp_nodes(fields, shape, origin, h, pts)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)
    assert ca == cb > 0
    w = r.random(200)
    ta = np.zeros(int(np.prod(shape)))
    tb = ta.copy()
    NP.scatter_bump(ta, shape, origin, h, pts, w, 0.5, 2.0)
    NB.scatter_bump(tb, shape, origin, h, pts, w, 0.5, 2.0)
    np.testing.assert_allclose(ta, tb, rtol=1e-12, atol=1e-14)


@needs_numba
def test_thomas_parity_and_solution():
    r = np.random.default_rng(0)
    n = 30
    lower = -r.random(n)
    upper = -r.random(n)
    diag = 3.0 + r.random(n)
    lower[0] = upper[-1] = 0.0
    rhs = r.random((4, n))
    A = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
    expect = np.linalg.solve(A, rhs.T).T
    np.testing.assert_allclose(NP.thomas_lines(lower, diag, upper, rhs.copy()), expect, rtol=1e-12)
    np.testing.assert_allclose(NB.thomas_lines(lower, diag, upper, rhs.copy()), expect, rtol=1e-12)


@needs_numba
def test_martingale_sup_parity():
    streams = np.arange(64, dtype=np.int64)
    a = NP.exp_martingale_sup(np.uint64(4), streams, 1.0, 1.0, 200, 2)
    b = NB.exp_martingale_sup(np.uint64(4), streams, 1.0, 1.0, 200, 2)
    np.testing.assert_allclose(a, b, rtol=1e-12)


@needs_numba
def test_dominating_trials_parity():
    args = (np.uint64(8), 0, 200, 1.0, 0.7, 0.1, 1.0, 2, 100, 10_000)
    a = NP.dominating_trials(*args)
    b = NB.dominating_trials(*args)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12)
