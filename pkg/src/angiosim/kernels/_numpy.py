"""Pure-numpy implementations of the hot kernels.

Integer hashing is bit-identical to the numba path. Floating results agree to
rounding; summation order is kept the same where it is cheap to do so.
``segment_density`` here is a brute-force scan that ignores the spatial hash,
which also makes it the reference the hashed numba query is tested against.
"""

import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x5851F42D4C957F2D)
_STREAM_SALT = np.uint64(0x632BE59BD9B4E019)
_TWO_M53 = 2.0 ** -53
_GAP_COUNTER = 1 << 40


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _stream_keys(seed, streams):
    with np.errstate(over="ignore"):
        k = _mix64(np.array([seed], dtype=np.uint64) ^ _SEED_SALT)
        s = np.asarray(streams, dtype=np.int64).astype(np.uint64)
        return _mix64(k ^ (s * _GOLDEN + _STREAM_SALT))


def _units(keys, counters):
    with np.errstate(over="ignore"):
        c = _mix64(np.asarray(counters, dtype=np.uint64) + _GOLDEN)
        z = _mix64(keys[:, None] ^ c[None, :])
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def hash_uniforms(seed, streams, counter_base, n):
    keys = _stream_keys(seed, streams)
    counters = np.uint64(counter_base) + np.arange(n, dtype=np.uint64)
    return _units(keys, counters)


def hash_normals(seed, streams, counter_base, n):
    npairs = (n + 1) // 2
    u = hash_uniforms(seed, streams, counter_base, 2 * npairs)
    r = np.sqrt(-2.0 * np.log(u[:, 0::2]))
    ang = 2.0 * math.pi * u[:, 1::2]
    out = np.empty((u.shape[0], 2 * npairs))
    out[:, 0::2] = r * np.cos(ang)
    out[:, 1::2] = r * np.sin(ang)
    return out[:, :n]


def interp_nodes(fields, shape, origin, h, points):
    points = np.asarray(points, dtype=float)
    m, d = points.shape
    shape = np.asarray(shape, dtype=np.int64)
    top = shape - 1
    t = (points - origin) / h
    hit = np.any((t < 0.0) | (t > top), axis=1)
    t = np.clip(t, 0.0, top.astype(float))
    idx = np.minimum(np.floor(t).astype(np.int64), top - 1)
    frac = t - idx
    strides = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    out = np.zeros((m, fields.shape[0]))
    for corner in range(1 << d):
        w = np.ones(m)
        off = np.zeros(m, dtype=np.int64)
        for a in range(d):
            bit = (corner >> a) & 1
            w = w * (frac[:, a] if bit else 1.0 - frac[:, a])
            off += (idx[:, a] + bit) * strides[a]
        out += w[:, None] * fields[:, off].T
    return out, int(hit.sum())


def _bump(r, radius, peak):
    return np.where(r < radius, peak * 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, radius) / radius)), 0.0)


def scatter_bump(target, shape, origin, h, points, weights, radius, peak):
    points = np.asarray(points, dtype=float)
    if points.shape[0] == 0:
        return
    m, d = points.shape
    shape = np.asarray(shape, dtype=np.int64)
    reach = int(math.ceil(radius / h)) + 1
    base = np.floor((points - origin) / h).astype(np.int64)
    axes = [np.arange(-reach, reach + 1)] * d
    offs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    nodes = base[:, None, :] + offs[None, :, :]
    inside = np.all((nodes >= 0) & (nodes < shape), axis=2)
    r = np.linalg.norm(origin + nodes * h - points[:, None, :], axis=2)
    contrib = weights[:, None] * _bump(r, radius, peak)
    keep = inside & (r < radius) & (weights[:, None] != 0.0)
    strides = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    flat = nodes @ strides
    np.add.at(target, flat[keep], contrib[keep])


def segment_density(queries, mids, halves, masses, owners, t_end, n_indexed,
                    cell_origin, cell_size, cell_shape, cell_start, cell_items,
                    radius, peak, excl_owner, excl_after):
    queries = np.asarray(queries, dtype=float)
    nq = queries.shape[0]
    out = np.zeros(nq)
    if mids.shape[0] == 0 or nq == 0:
        return out
    hl = np.linalg.norm(halves, axis=1)
    nsub = 1 + (2.0 * hl / (radius / 8.0)).astype(np.int64)
    seg = np.repeat(np.arange(mids.shape[0]), nsub)
    k = np.arange(seg.size) - np.repeat(np.cumsum(nsub) - nsub, nsub)
    c = -1.0 + (2.0 * k + 1.0) / nsub[seg]
    pts = mids[seg] + c[:, None] * halves[seg]
    w = masses[seg] / nsub[seg]
    chunk = max(1, 2_000_000 // max(seg.size, 1))
    for lo in range(0, nq, chunk):
        q = queries[lo:lo + chunk]
        r = np.linalg.norm(q[:, None, :] - pts[None, :, :], axis=2)
        val = _bump(r, radius, peak) * w[None, :]
        skip = (owners[seg][None, :] == excl_owner[lo:lo + chunk, None]) & (
            t_end[seg][None, :] > excl_after[lo:lo + chunk, None])
        val[skip] = 0.0
        out[lo:lo + chunk] = val.sum(axis=1)
    return out


def thomas_lines(lower, diag, upper, rhs):
    nl, n = rhs.shape
    cp = np.empty(n)
    denom = np.empty(n)
    cp[0] = upper[0] / diag[0]
    denom[0] = diag[0]
    for i in range(1, n):
        denom[i] = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / denom[i] if i < n - 1 else 0.0
    out = np.empty_like(rhs)
    out[:, 0] = rhs[:, 0] / denom[0]
    for i in range(1, n):
        out[:, i] = (rhs[:, i] - lower[i] * out[:, i - 1]) / denom[i]
    for i in range(n - 2, -1, -1):
        out[:, i] -= cp[i] * out[:, i + 1]
    return out


def exp_martingale_sup(seed, streams, T, k1, nsteps, d):
    streams = np.asarray(streams, dtype=np.int64)
    out = np.empty(streams.size)
    dt = T / nsteps
    g = np.exp(k1 * np.arange(nsteps) * dt) * math.sqrt(dt)
    for lo in range(0, streams.size, 256):
        s = streams[lo:lo + 256]
        z = hash_normals(seed, s, 0, nsteps * d).reshape(s.size, nsteps, d)
        y = np.cumsum(g[None, :, None] * z, axis=1)
        out[lo:lo + 256] = np.sqrt(np.max(np.sum(y * y, axis=2), axis=1))
    return out


def dominating_trials(seed, first_trial, n_trials, T, a_const, b_coef, k1, d, nsteps, cap):
    nbar = np.empty(n_trials, np.int64)
    sumz = np.empty(n_trials)
    z1 = np.empty(n_trials)
    capped = 0
    for t in range(n_trials):
        trial = first_trial + t
        births = [0.0]
        i = 0
        total = 0.0
        hit_cap = False
        while i < len(births):
            stream = np.array([trial * cap + i], dtype=np.int64)
            z = a_const
            if b_coef != 0.0:
                z += b_coef * exp_martingale_sup(seed, stream, T, k1, nsteps, d)[0]
            if i == 0:
                z1[t] = z
            total += z
            if z > 0.0:
                tau = births[i]
                key = _stream_keys(seed, stream)
                k = 0
                while True:
                    u = _units(key, np.array([_GAP_COUNTER + k], dtype=np.uint64))[0, 0]
                    tau += -math.log(u) / z
                    k += 1
                    if tau > T:
                        break
                    if len(births) >= cap:
                        hit_cap = True
                        break
                    births.append(tau)
            i += 1
        capped += int(hit_cap)
        nbar[t] = len(births)
        sumz[t] = total
    return nbar, sumz, z1, capped
