"""Wall-clock comparison of the numba kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat R]``. Each kernel is
called once untimed on the numba path so compilation is excluded. The script
also asserts that both paths agree on every input it times.
"""

import argparse
import time

import numpy as np

from angiosim import kernels
from angiosim.model import Kernel
from angiosim.tips import VesselNetwork


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(seed=0):
    rng = np.random.default_rng(seed)
    shape = np.array([61, 61], np.int64)
    origin = np.array([0.025, -1.475])
    h = 0.05
    pts = np.column_stack([rng.uniform(0.1, 2.9, 2000), rng.uniform(-1.4, 1.4, 2000)])
    fields = rng.random((3, int(np.prod(shape))))

    net = VesselNetwork(2)
    walk = np.cumsum(rng.normal(0, 0.01, (200, 100, 2)), axis=1) + pts[:200, None, :]
    for k in range(99):
        net.add(walk[:, k], walk[:, k + 1], rng.uniform(0.1, 1.0, 200), np.arange(200), k * 0.01, (k + 1) * 0.01)
    K2 = Kernel.normalized(0.1, 2)
    mids = np.ascontiguousarray(0.5 * (net.start + net.end))
    halves = np.ascontiguousarray(0.5 * (net.end - net.start))
    idx = net.index
    idx.maybe_rebuild(mids, halves, K2.support_radius)
    q = pts[:500].copy()
    eo = np.full(q.shape[0], -1, np.int64)
    ea = np.full(q.shape[0], np.inf)
    seg_args = (q, mids, halves, np.ascontiguousarray(net.mass), net.owner.copy(), net.t1.copy(), idx.n_indexed,
                idx.origin, idx.size, idx.shape, idx.start, idx.items, K2.support_radius, K2.peak, eo, ea)

    n = 400
    lower = np.full(n, -0.4)
    upper = np.full(n, -0.4)
    diag = np.full(n, 1.8)
    diag[[0, -1]] = 1.4
    rhs = rng.random((400, n))
    return {
        "hash_normals": lambda m: m.hash_normals(np.uint64(7), np.arange(20000, dtype=np.int64), np.uint64(3 << 16), 2),
        "interp_nodes": lambda m: m.interp_nodes(fields, shape, origin, h, pts)[0],
        "scatter_bump": lambda m: _scatter(m, shape, origin, h, pts, rng),
        "segment_density": lambda m: m.segment_density(*seg_args),
        "thomas_lines": lambda m: m.thomas_lines(lower, diag, upper, rhs.copy()),
        "exp_martingale_sup": lambda m: m.exp_martingale_sup(np.uint64(5), np.arange(2000, dtype=np.int64),
                                                             1.0, 1.0, 1000, 2),
    }


_W = None


def _scatter(m, shape, origin, h, pts, rng):
    global _W
    if _W is None:
        _W = rng.random(pts.shape[0])
    target = np.zeros(int(np.prod(shape)))
    m.scatter_bump(target, shape, origin, h, pts, _W, 0.1, 1.0)
    return target


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.numba_impl is None:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':20s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>9s}")
    for name, fn in cases().items():
        fn(kernels.numba_impl)  # compile
        t_np, a = _time(lambda: fn(kernels.numpy_impl), args.repeat)
        t_nb, b = _time(lambda: fn(kernels.numba_impl), args.repeat)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
        print(f"{name:20s} {1e3 * t_np:12.2f} {1e3 * t_nb:12.2f} {t_np / t_nb:9.1f}x")


if __name__ == "__main__":
    main()
