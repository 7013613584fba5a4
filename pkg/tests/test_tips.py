import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from angiosim import kernels, rng
from angiosim.config import make_config
from angiosim.field import ScalarField
from angiosim.model import Kernel
from angiosim.tips import (ANASTOMOSIS, VesselNetwork, advance, em_step, initial_state, network_density,
                           replay_counts, run, sample_anastomosis, sample_tip_branching, sample_vessel_branching,
                           snapshot_empirical)

SMALL = {"T": 0.3, "N": 30}


def _state(**over):
    cfg = make_config({**SMALL, **over})
    return cfg, initial_state(cfg)


def test_closed_form_decay_first_order_in_dt():
    errs = []
    for dt in (0.02, 0.01, 0.005):
        cfg, s = _state(sigma=0.0, d2=0.0, alpha1=0.0, beta1=0.0, gamma=0.0, dt=dt, k1=1.5)
        V0 = s.V.copy()
        for _ in range(int(round(1.0 / dt))):
            em_step(s, dt)
        errs.append(np.abs(s.V - V0 * math.exp(-1.5)).max())
    assert errs[1] <= 0.55 * errs[0] and errs[2] <= 0.55 * errs[1]
    assert errs[0] <= 1.0 * 0.02


def test_straight_line_motion():
    cfg, s = _state(sigma=0.0, d2=0.0, k1=0.0, alpha1=0.0, beta1=0.0, gamma=0.0)
    X0, V0 = s.X.copy(), s.V.copy()
    for _ in range(50):
        em_step(s, cfg.dt)
    np.testing.assert_allclose(s.X, X0 + V0 * 50 * cfg.dt, rtol=1e-13, atol=1e-13)
    np.testing.assert_array_equal(s.V, V0)


def test_em_rejects_bad_dt():
    _, s = _state()
    with pytest.raises(ValueError, match="dt > 0"):
        em_step(s, 0.0)


def test_noise_free_speed_bound():
    cfg = make_config({"sigma": 0.0, "T": 2.0, "N": 20, "alpha1": 2.0})
    p = cfg.model_params()
    _, s = _state(sigma=0.0, T=2.0, N=20, alpha1=2.0)
    bound_c = p.d2 / p.gamma1 / p.k1
    V0 = {}
    for _ in range(200):
        advance(s)
        for i in range(s.n_tips):
            V0.setdefault(i, (s.birth_time[i], np.linalg.norm(s.V[i])))
        for i in np.flatnonzero(s.alive):
            tb, v0 = V0[i]
            assert np.linalg.norm(s.V[i]) <= math.exp(-p.k1 * (s.t - tb)) * v0 + bound_c + 1e-12


def test_network_density_empty_and_oracle(frozen):
    K = Kernel.normalized(0.1, 2)
    net = VesselNetwork(2)
    assert network_density(net, np.array([0.0, 0.0]), K, 1) == 0.0
    o = frozen["segment_density"]
    net.add(np.array([o["a"]]), np.array([o["b"]]), o["weight"], 0, 0.0, o["duration"])
    val = network_density(net, np.array(o["x"]), K, 1)
    assert val == pytest.approx(o["value"], rel=1e-3)
    assert network_density(net, np.array(o["x"]), K, 4) == pytest.approx(val / 4)


def _random_net(d, n_own=40, n_seg=30, seed=0):
    r = np.random.default_rng(seed)
    net = VesselNetwork(d)
    walk = np.cumsum(r.normal(0, 0.03, (n_own, n_seg + 1, d)), axis=1)
    for k in range(n_seg):
        net.add(walk[:, k], walk[:, k + 1], r.uniform(0, 2, n_own), np.arange(n_own), k * 0.01, (k + 1) * 0.01)
    return net


@pytest.mark.parametrize("d", [1, 2, 3])
def test_network_density_additive(d):
    K = Kernel.normalized(0.1, d)
    a, b = _random_net(d, seed=1), _random_net(d, seed=2)
    both = VesselNetwork(d)
    for n in (a, b):
        both.add(n.start, n.end, n.weight, n.owner, n.t0, n.t1)
    q = np.random.default_rng(3).normal(0, 0.2, (100, d))
    np.testing.assert_allclose(network_density(both, q, K, 3),
                               network_density(a, q, K, 3) + network_density(b, q, K, 3), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_hashed_density_matches_brute_force(d):
    K = Kernel.normalized(0.1, d)
    net = _random_net(d, n_own=60, n_seg=40, seed=d)
    q = np.random.default_rng(4).normal(0, 0.2, (300, d))
    mids = np.ascontiguousarray(0.5 * (net.start + net.end))
    halves = np.ascontiguousarray(0.5 * (net.end - net.start))
    eo = np.full(q.shape[0], -1, np.int64)
    ea = np.full(q.shape[0], np.inf)
    brute = kernels.numpy_impl.segment_density(q, mids, halves, net.mass.copy(), net.owner.copy(), net.t1.copy(),
                                               0, None, None, None, None, None, K.support_radius, K.peak, eo, ea)
    np.testing.assert_allclose(network_density(net, q, K, 1), brute, rtol=1e-10, atol=1e-12)
    # grow a tail past the hash and query again
    net.add(mids[:5] + 0.01, mids[:5] + 0.02, 1.0, np.arange(5), 1.0, 1.01)
    mids = np.ascontiguousarray(0.5 * (net.start + net.end))
    halves = np.ascontiguousarray(0.5 * (net.end - net.start))
    brute = kernels.numpy_impl.segment_density(q, mids, halves, net.mass.copy(), net.owner.copy(), net.t1.copy(),
                                               0, None, None, None, None, None, K.support_radius, K.peak, eo, ea)
    np.testing.assert_allclose(network_density(net, q, K, 1), brute, rtol=1e-10, atol=1e-12)


def test_exclusion_window_drops_own_recent_segments():
    K = Kernel.normalized(0.1, 2)
    net = VesselNetwork(2)
    net.add(np.array([[0.0, 0.0]]), np.array([[0.05, 0.0]]), 1.0, 0, 0.0, 0.1)
    net.add(np.array([[0.05, 0.0]]), np.array([[0.1, 0.0]]), 1.0, 0, 0.9, 1.0)
    x = np.array([[0.05, 0.0]])
    full = network_density(net, x, K, 1)
    part = network_density(net, x, K, 1, exclude_owner=np.array([0]), exclude_after=np.array([0.5]))
    other = network_density(net, x, K, 1, exclude_owner=np.array([1]), exclude_after=np.array([0.5]))
    assert 0 < part[0] < full[0]
    assert other[0] == pytest.approx(full[0])


def test_branching_switches():
    _, s = _state(alpha1=0.0)
    assert sample_tip_branching(s, 0.01)[0].size == 0
    _, s = _state()
    assert sample_tip_branching(s, 0.01, np.zeros(s.n_alive))[0].size == 0
    _, s = _state(beta1=0.0)
    for _ in range(5):
        em_step(s, 0.01)
    assert sample_vessel_branching(s, 0.01)[0].size == 0
    _, s = _state()
    assert sample_vessel_branching(s, 0.01)[0].size == 0  # empty network
    killed, hz, _ = sample_anastomosis(s, 0.01)
    assert killed.size == 0 and not hz.any()


def test_branch_count_mean_is_poisson_mean():
    cfg = make_config({"dim": 1, "dt": 1e-3, "N": 2000})
    s = initial_state(cfg)
    conc = np.full(s.n_alive, 0.5)
    counts = np.zeros(s.n_alive)
    for k in range(1, 1001):
        s.step = k
        par, _ = sample_tip_branching(s, 1e-3, conc)
        counts[par] += 1
    rT = 0.5 * 0.5 / (0.5 + 0.5) * 1.0
    assert abs(counts.mean() - rT) <= 3 * math.sqrt(rT / counts.size)


def test_death_time_mean_is_exponential_mean():
    cfg = make_config({"dim": 1, "dt": 1e-3, "N": 3000, "gamma": 3.0, "track_network": "true"})
    s = initial_state(cfg)
    s.X[:] = 1.5
    s.network.add(np.array([[1.45]]), np.array([[1.55]]), 3000.0, 0, 0.0, 1.0)
    alive = np.arange(s.n_tips)
    death = np.full(s.n_tips, np.nan)
    rate = None
    k = 0
    while alive.size:
        k += 1
        s.step = k
        killed, hz, _ = sample_anastomosis(s, 1e-3, alive)
        rate = hz[0] if rate is None else rate
        death[killed] = k * 1e-3
        alive = np.setdiff1d(alive, killed)
    assert rate <= cfg.gamma
    # step-end times of a geometric law: mean 1/rate + dt/2 to first order
    mean = death.mean() - 0.5e-3
    assert abs(mean - 1.0 / rate) <= 3.0 / rate / math.sqrt(death.size)


def test_vessel_branch_points_lie_on_owner_vessels():
    _, s = _state(beta1=5.0, dim=1)
    s.c_field = ScalarField(s.c_field.grid, np.full(s.c_field.grid.shape, 1.0))
    for _ in range(20):
        em_step(s, 0.01)
    par, pts = sample_vessel_branching(s, 0.5)
    assert par.size > 0
    net = s.network
    for i, x in zip(par, pts):
        own = net.owner == i
        lo = np.minimum(net.start[own], net.end[own]).min()
        hi = np.maximum(net.start[own], net.end[own]).max()
        assert lo - 1e-12 <= x[0] <= hi + 1e-12


def test_snapshot_mass_and_deaths():
    _, s = _state()
    q = snapshot_empirical(s)
    assert q.total_mass == pytest.approx(1.0)
    s.kill(np.array([0, 3, 7]))
    assert snapshot_empirical(s).total_mass == pytest.approx(27 / 30)
    assert np.all(s.death_time[[0, 3, 7]] == s.t)


def test_no_events_constant_count():
    cfg = make_config({**SMALL, "gamma": 0.0, "alpha1": 0.0, "beta1": 0.0})
    rec = run(cfg.model_params(), cfg, 4)
    assert np.all(rec.n_alive == cfg.N) and not rec.events


@settings(max_examples=8)
@given(st.integers(0, 2**32))
def test_run_invariants(seed):
    cfg = make_config({"T": 0.5, "N": 25, "alpha1": 2.0, "beta1": 1.0, "gamma": 2.0, "h": 0.1})
    lengths = []
    rec = run(cfg.model_params(), cfg, seed, observer=lambda st_, info: lengths.append(st_.network.total_length()))
    assert np.all(np.diff(lengths) >= -1e-12)
    np.testing.assert_array_equal(replay_counts(cfg.N, rec.events, rec.times), rec.n_alive)
    times = [e[0] for e in rec.events]
    assert times == sorted(times)
    assert rec.max_death_rate <= cfg.gamma
    st_ = rec.final_state
    assert np.all((st_.death_time >= st_.birth_time) | np.isnan(st_.death_time))
    assert np.all(np.isnan(st_.death_time) == st_.alive)
    net = st_.network
    for i in range(st_.n_tips):
        t0 = net.t0[net.owner == i]
        assert np.all(np.diff(t0) > 0)
    for t, ids, X, V in rec.snapshots:
        assert ids.size == X.shape[0]
    assert rec.bounds_violations == 0


def test_death_fraction_bounded():
    cfg = make_config({"T": 1.0, "N": 200, "gamma": 3.0, "alpha1": 0.0, "beta1": 0.0, "h": 0.1, "dt": 0.005})
    fr = []
    for seed in range(5):
        rec = run(cfg.model_params(), cfg, seed)
        fr.append(1 - rec.n_alive[-1] / cfg.N)
    se = np.std(fr, ddof=1) / math.sqrt(len(fr))
    assert np.mean(fr) <= 1 - math.exp(-cfg.gamma * cfg.T) + 3 * se


def test_same_seed_bitwise():
    cfg = make_config({**SMALL, "alpha1": 2.0, "beta1": 1.0})
    a = run(cfg.model_params(), cfg, 11)
    b = run(cfg.model_params(), cfg, 11)
    assert a.events == b.events
    np.testing.assert_array_equal(a.final_state.X, b.final_state.X)
    np.testing.assert_array_equal(a.fields[-1][1], b.fields[-1][1])
    c = run(cfg.model_params(), cfg, 12)
    assert not np.array_equal(a.final_state.X, c.final_state.X)


def test_anastomosis_skips_newborns():
    cfg = make_config({**SMALL, "alpha1": 20.0, "gamma": 20.0, "dt": 0.005})
    seen = []
    rec = run(cfg.model_params(), cfg, 2, observer=lambda s, info: seen.append((s.n_tips, info.ids.max(initial=-1))))
    assert all(top < n for n, top in seen)
    born = {e[4]: e[0] for e in rec.events if e[1] != ANASTOMOSIS}
    for t, kind, _, par, _ in rec.events:
        if kind == ANASTOMOSIS and par in born:
            assert t > born[par]


def test_numpy_fallback_reproduces_numba_run(tmp_path):
    code = ("import numpy as np\nfrom angiosim.config import make_config\nfrom angiosim.tips import run\n"
            "cfg = make_config({'T': 0.2, 'N': 20, 'alpha1': 3.0, 'beta1': 1.0, 'gamma': 3.0, 'h': 0.1})\n"
            "r = run(cfg.model_params(), cfg, 5)\n"
            "np.save(%r, np.concatenate([r.n_alive, r.final_state.X.ravel(), r.fields[-1][1].ravel()]))\n")
    outs = []
    for flag in ("0", "1"):
        path = str(tmp_path / f"o{flag}.npy")
        env = {**os.environ, "ANGIOSIM_DISABLE_NUMBA": flag}
        subprocess.run([sys.executable, "-c", code % path], check=True, env=env)
        outs.append(np.load(path))
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-9, atol=1e-12)


def test_coarse_dt_warning():
    cfg = make_config({**SMALL, "gamma": 20.0, "T": 0.02})
    with pytest.warns(UserWarning, match="reduce dt"):
        run(cfg.model_params(), cfg, 0)


def test_hash_stream_per_tip_independent_of_population():
    a = rng.uniforms(1, np.arange(10), 3, rng.TIP_BRANCH)
    b = rng.uniforms(1, np.arange(5, 1000), 3, rng.TIP_BRANCH)
    np.testing.assert_array_equal(a[5:], b[:5])
