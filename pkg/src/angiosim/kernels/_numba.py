"""numba implementations of the hot kernels. Signatures mirror ``_numpy``."""

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x5851F42D4C957F2D)
_STREAM_SALT = np.uint64(0x632BE59BD9B4E019)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi
_GAP_COUNTER = np.uint64(1 << 40)


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _stream_key(seed, stream):
    k = _mix64(np.uint64(seed) ^ _SEED_SALT)
    return _mix64(k ^ (np.uint64(stream) * _GOLDEN + _STREAM_SALT))


@njit(cache=True, inline="always")
def _unit(key, counter):
    z = _mix64(key ^ _mix64(np.uint64(counter) + _GOLDEN))
    return (float(z >> _S11) + 0.5) * _TWO_M53


@njit(cache=True, inline="always")
def _normal(key, base, j):
    p = j // 2
    u1 = _unit(key, base + np.uint64(2 * p))
    u2 = _unit(key, base + np.uint64(2 * p + 1))
    r = math.sqrt(-2.0 * math.log(u1))
    if j % 2 == 0:
        return r * math.cos(_TWO_PI * u2)
    return r * math.sin(_TWO_PI * u2)


@njit(cache=True)
def hash_uniforms(seed, streams, counter_base, n):
    m = streams.shape[0]
    out = np.empty((m, n))
    base = np.uint64(counter_base)
    for i in range(m):
        key = _stream_key(seed, streams[i])
        for j in range(n):
            out[i, j] = _unit(key, base + np.uint64(j))
    return out


@njit(cache=True)
def hash_normals(seed, streams, counter_base, n):
    m = streams.shape[0]
    out = np.empty((m, n))
    base = np.uint64(counter_base)
    for i in range(m):
        key = _stream_key(seed, streams[i])
        for p in range((n + 1) // 2):
            u1 = _unit(key, base + np.uint64(2 * p))
            u2 = _unit(key, base + np.uint64(2 * p + 1))
            r = math.sqrt(-2.0 * math.log(u1))
            out[i, 2 * p] = r * math.cos(_TWO_PI * u2)
            if 2 * p + 1 < n:
                out[i, 2 * p + 1] = r * math.sin(_TWO_PI * u2)
    return out


@njit(cache=True)
def interp_nodes(fields, shape, origin, h, points):
    m, d = points.shape
    k = fields.shape[0]
    out = np.zeros((m, k))
    strides = np.empty(d, np.int64)
    s = 1
    for a in range(d - 1, -1, -1):
        strides[a] = s
        s *= shape[a]
    idx = np.empty(d, np.int64)
    frac = np.empty(d)
    clamped = 0
    for p in range(m):
        hit = False
        for a in range(d):
            t = (points[p, a] - origin[a]) / h
            top = shape[a] - 1
            if t < 0.0:
                t = 0.0
                hit = True
            elif t > top:
                t = float(top)
                hit = True
            i = int(math.floor(t))
            if i > top - 1:
                i = top - 1
            idx[a] = i
            frac[a] = t - i
        if hit:
            clamped += 1
        for corner in range(1 << d):
            w = 1.0
            off = 0
            for a in range(d):
                bit = (corner >> a) & 1
                if bit:
                    w *= frac[a]
                else:
                    w *= 1.0 - frac[a]
                off += (idx[a] + bit) * strides[a]
            if w != 0.0:
                for j in range(k):
                    out[p, j] += w * fields[j, off]
    return out, clamped


@njit(cache=True, inline="always")
def _bump(r, radius, peak):
    if r >= radius:
        return 0.0
    return peak * 0.5 * (1.0 + math.cos(math.pi * r / radius))


@njit(cache=True)
def scatter_bump(target, shape, origin, h, points, weights, radius, peak):
    m, d = points.shape
    strides = np.empty(d, np.int64)
    s = 1
    for a in range(d - 1, -1, -1):
        strides[a] = s
        s *= shape[a]
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    cur = np.empty(d, np.int64)
    for p in range(m):
        if weights[p] == 0.0:
            continue
        empty = False
        for a in range(d):
            lo[a] = max(0, int(math.ceil((points[p, a] - radius - origin[a]) / h)))
            hi[a] = min(shape[a] - 1, int(math.floor((points[p, a] + radius - origin[a]) / h)))
            if hi[a] < lo[a]:
                empty = True
        if empty:
            continue
        for a in range(d):
            cur[a] = lo[a]
        while True:
            r2 = 0.0
            off = 0
            for a in range(d):
                dx = origin[a] + cur[a] * h - points[p, a]
                r2 += dx * dx
                off += cur[a] * strides[a]
            target[off] += weights[p] * _bump(math.sqrt(r2), radius, peak)
            a = d - 1
            while a >= 0:
                cur[a] += 1
                if cur[a] <= hi[a]:
                    break
                cur[a] = lo[a]
                a -= 1
            if a < 0:
                break


@njit(cache=True, inline="always")
def _segment_contrib(q, mid, half, mass, radius, peak):
    d = q.shape[0]
    hl2 = 0.0
    r2 = 0.0
    for a in range(d):
        hl2 += half[a] * half[a]
        r2 += (q[a] - mid[a]) ** 2
    hl = math.sqrt(hl2)
    reach = radius + hl
    if r2 >= reach * reach:
        return 0.0
    nsub = 1 + int(2.0 * hl / (radius / 8.0))
    acc = 0.0
    for k in range(nsub):
        c = -1.0 + (2.0 * k + 1.0) / nsub
        s2 = 0.0
        for a in range(d):
            dx = q[a] - (mid[a] + c * half[a])
            s2 += dx * dx
        acc += _bump(math.sqrt(s2), radius, peak)
    return acc * mass / nsub


@njit(cache=True)
def segment_density(queries, mids, halves, masses, owners, t_end, n_indexed,
                    cell_origin, cell_size, cell_shape, cell_start, cell_items,
                    radius, peak, excl_owner, excl_after):
    nq, d = queries.shape
    ns = mids.shape[0]
    out = np.zeros(nq)
    strides = np.empty(d, np.int64)
    s = 1
    for a in range(d - 1, -1, -1):
        strides[a] = s
        s *= cell_shape[a]
    base = np.empty(d, np.int64)
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    cur = np.empty(d, np.int64)
    for i in range(nq):
        q = queries[i]
        acc = 0.0
        if n_indexed > 0:
            for a in range(d):
                c = int(math.floor((q[a] - cell_origin[a]) / cell_size))
                c = min(max(c, 0), cell_shape[a] - 1)
                base[a] = c
                lo[a] = max(c - 1, 0)
                hi[a] = min(c + 1, cell_shape[a] - 1)
                cur[a] = lo[a]
            while True:
                cell = 0
                for a in range(d):
                    cell += cur[a] * strides[a]
                for t in range(cell_start[cell], cell_start[cell + 1]):
                    j = cell_items[t]
                    if owners[j] == excl_owner[i] and t_end[j] > excl_after[i]:
                        continue
                    acc += _segment_contrib(q, mids[j], halves[j], masses[j], radius, peak)
                a = d - 1
                while a >= 0:
                    cur[a] += 1
                    if cur[a] <= hi[a]:
                        break
                    cur[a] = lo[a]
                    a -= 1
                if a < 0:
                    break
        for j in range(n_indexed, ns):
            if owners[j] == excl_owner[i] and t_end[j] > excl_after[i]:
                continue
            acc += _segment_contrib(q, mids[j], halves[j], masses[j], radius, peak)
        out[i] = acc
    return out


@njit(cache=True)
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
    for line in range(nl):
        out[line, 0] = rhs[line, 0] / denom[0]
        for i in range(1, n):
            out[line, i] = (rhs[line, i] - lower[i] * out[line, i - 1]) / denom[i]
        for i in range(n - 2, -1, -1):
            out[line, i] -= cp[i] * out[line, i + 1]
    return out


@njit(cache=True, inline="always")
def _sup_one(key, T, k1, nsteps, d, y):
    dt = T / nsteps
    sq = math.sqrt(dt)
    for a in range(d):
        y[a] = 0.0
    sup = 0.0
    spare = 0.0
    j = 0
    for n in range(nsteps):
        g = math.exp(k1 * n * dt) * sq
        r2 = 0.0
        for a in range(d):
            if j % 2 == 0:
                u1 = _unit(key, np.uint64(j))
                u2 = _unit(key, np.uint64(j + 1))
                r = math.sqrt(-2.0 * math.log(u1))
                z = r * math.cos(_TWO_PI * u2)
                spare = r * math.sin(_TWO_PI * u2)
            else:
                z = spare
            j += 1
            y[a] += g * z
            r2 += y[a] * y[a]
        if r2 > sup:
            sup = r2
    return math.sqrt(sup)


@njit(cache=True)
def exp_martingale_sup(seed, streams, T, k1, nsteps, d):
    m = streams.shape[0]
    out = np.empty(m)
    y = np.empty(d)
    for i in range(m):
        out[i] = _sup_one(_stream_key(seed, streams[i]), T, k1, nsteps, d, y)
    return out


@njit(cache=True)
def dominating_trials(seed, first_trial, n_trials, T, a_const, b_coef, k1, d, nsteps, cap):
    nbar = np.empty(n_trials, np.int64)
    sumz = np.empty(n_trials)
    z1 = np.empty(n_trials)
    births = np.empty(cap)
    y = np.empty(d)
    capped = 0
    for t in range(n_trials):
        trial = first_trial + t
        births[0] = 0.0
        count = 1
        i = 0
        total = 0.0
        hit_cap = False
        while i < count:
            key = _stream_key(seed, trial * cap + i)
            z = a_const
            if b_coef != 0.0:
                z += b_coef * _sup_one(key, T, k1, nsteps, d, y)
            if i == 0:
                z1[t] = z
            total += z
            if z > 0.0:
                tau = births[i]
                k = 0
                while True:
                    tau += -math.log(_unit(key, _GAP_COUNTER + np.uint64(k))) / z
                    k += 1
                    if tau > T:
                        break
                    if count >= cap:
                        hit_cap = True
                        break
                    births[count] = tau
                    count += 1
            i += 1
        if hit_cap:
            capped += 1
        nbar[t] = count
        sumz[t] = total
    return nbar, sumz, z1, capped
