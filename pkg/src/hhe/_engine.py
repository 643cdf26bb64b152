"""Compiled kernels for the Monte Carlo engine.

Randomness comes from a keyed counter-based generator: the stream for run
``r`` of a batch seeded with ``seed`` is keyed by a 64-bit hash of
``(seed, r)``, and draw number ``k`` of that stream is a fixed function of
``(key, k)``. Runs therefore never share state and can be executed in any
order or on any thread.

Contact-model codes (``kind``):
    0 constant      ip = [g, l]
    1 poisson       fp = [lambda_g, lambda_l]
    2 binomial      ip = [n_g, n_l], fp = [q_g, q_l]
    3 mixed         ip = [0 gamma | 1 point], fp = [beta_g, beta_l, shape, rate, value]
    4 table         tg, tl, tcum (cumulative probabilities)
"""

import math

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
SH30 = np.uint64(30)
SH27 = np.uint64(27)
SH31 = np.uint64(31)
SH11 = np.uint64(11)
ONE = np.uint64(1)
INV53 = 1.0 / 9007199254740992.0

jit = nb.njit(nogil=True, cache=True)


@jit
def mix64(z):
    z = (z ^ (z >> SH30)) * MIX1
    z = (z ^ (z >> SH27)) * MIX2
    return z ^ (z >> SH31)


@jit
def seed_stream(st, seed, index):
    k0 = mix64(seed ^ mix64(np.uint64(index) + GOLDEN))
    st[0] = k0
    # k1 must not be reachable as k0 + c * GOLDEN, or the XOR below cancels
    st[1] = mix64(k0 ^ MIX2)
    st[2] = np.uint64(0)


@jit
def next_u64(st):
    st[2] += ONE
    return mix64(mix64(st[2] * GOLDEN + st[0]) ^ st[1])


@jit
def uniform(st):
    return np.float64(next_u64(st) >> SH11) * INV53


@jit
def randbelow(st, n):
    k = np.int64(uniform(st) * n)
    return k if k < n else n - 1


@jit
def std_normal(st):
    while True:
        u = 2.0 * uniform(st) - 1.0
        v = 2.0 * uniform(st) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * math.sqrt(-2.0 * math.log(s) / s)


@jit
def gamma(st, shape, scale):
    # Marsaglia-Tsang; shape < 1 via the U^(1/shape) boost
    boost = 1.0
    if shape < 1.0:
        u = uniform(st)
        while u == 0.0:
            u = uniform(st)
        boost = u ** (1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = std_normal(st)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = uniform(st)
        if u < 1.0 - 0.0331 * x * x * x * x:
            return d * v * scale * boost
        if u > 0.0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v * scale * boost


@jit
def _poisson_small(st, lam):
    u = uniform(st)
    p = math.exp(-lam)
    cdf = p
    k = 0
    while u > cdf:
        k += 1
        p *= lam / k
        if p == 0.0:
            break
        cdf += p
    return k


@jit
def poisson(st, lam):
    if lam <= 0.0:
        return 0
    if lam < 30.0:
        return _poisson_small(st, lam)
    # sum of independent Poissons with mean below 30 each
    parts = int(math.ceil(lam / 25.0))
    piece = lam / parts
    k = 0
    for _ in range(parts):
        k += _poisson_small(st, piece)
    return k


@jit
def binomial(st, n, p):
    if p <= 0.0 or n <= 0:
        return 0
    if p >= 1.0:
        return n
    k = 0
    for _ in range(n):
        if uniform(st) < p:
            k += 1
    return k


@jit
def draw_contacts(st, kind, ip, fp, tg, tl, tcum):
    if kind == 0:
        return ip[0], ip[1]
    if kind == 1:
        return poisson(st, fp[0]), poisson(st, fp[1])
    if kind == 2:
        return binomial(st, ip[0], fp[0]), binomial(st, ip[1], fp[1])
    if kind == 3:
        if ip[0] == 0:
            i = gamma(st, fp[2], 1.0 / fp[3])
        else:
            i = fp[4]
        return poisson(st, fp[0] * i), poisson(st, fp[1] * i)
    u = uniform(st)
    j = np.searchsorted(tcum, u, side="right")
    if j >= len(tg):
        j = len(tg) - 1
    return tg[j], tl[j]


@jit
def contacts_batch(seed, n, kind, ip, fp, tg, tl, tcum, p, out_g, out_l):
    st = np.empty(3, dtype=np.uint64)
    for r in range(n):
        seed_stream(st, seed, r)
        g, l = draw_contacts(st, kind, ip, fp, tg, tl, tcum)
        if p > 0.0 and l > 0:
            y = binomial(st, l, p)
            g += y
            l -= y
        out_g[r] = g
        out_l[r] = l


@jit
def run_epidemic(st, kind, ip, fp, tg, tl, tcum, p, n, h, m, local_wr, global_wr,
                 status, queue, mark, hit):
    """One epidemic to extinction; returns (Z, V, global contacts made)."""
    big_n = n * h
    status[:] = 0
    mark[:] = 0
    hit[:] = 0
    tail = 0
    v = 0
    for _ in range(m):
        i = randbelow(st, big_n)
        while status[i] != 0:
            i = randbelow(st, big_n)
        status[i] = 1
        queue[tail] = i
        tail += 1
        if hit[i // h] == 0:
            hit[i // h] = 1
            v += 1
    head = 0
    stamp = 0
    total_global = 0
    while head < tail:
        i = queue[head]
        head += 1
        g, l = draw_contacts(st, kind, ip, fp, tg, tl, tcum)
        if p > 0.0 and l > 0:
            y = binomial(st, l, p)
            g += y
            l -= y
        base = (i // h) * h
        if h > 1 and l > 0:
            if local_wr:
                for _ in range(l):
                    j = randbelow(st, h - 1)
                    if j >= i - base:
                        j += 1
                    j += base
                    if status[j] == 0:
                        status[j] = 1
                        queue[tail] = j
                        tail += 1
            else:
                stamp += 1
                mark[i] = stamp
                for _ in range(min(l, h - 1)):
                    j = base + randbelow(st, h)
                    while mark[j] == stamp:
                        j = base + randbelow(st, h)
                    mark[j] = stamp
                    if status[j] == 0:
                        status[j] = 1
                        queue[tail] = j
                        tail += 1
        if g > 0:
            if global_wr:
                cnt = g
            else:
                cnt = min(g, big_n - 1)
                stamp += 1
                mark[i] = stamp
            total_global += cnt
            for _ in range(cnt):
                j = randbelow(st, big_n)
                if not global_wr:
                    while mark[j] == stamp:
                        j = randbelow(st, big_n)
                    mark[j] = stamp
                if status[j] == 0:
                    status[j] = 1
                    queue[tail] = j
                    tail += 1
                    if hit[j // h] == 0:
                        hit[j // h] = 1
                        v += 1
    return tail, v, total_global


@jit
def epidemic_batch(seed, start, stop, kind, ip, fp, tg, tl, tcum, p, n, h, m,
                   local_wr, global_wr, out_z, out_v, out_g):
    big_n = n * h
    status = np.zeros(big_n, dtype=np.int8)
    queue = np.zeros(big_n, dtype=np.int64)
    mark = np.zeros(big_n, dtype=np.int64)
    hit = np.zeros(n, dtype=np.int8)
    st = np.empty(3, dtype=np.uint64)
    for r in range(start, stop):
        seed_stream(st, seed, r)
        z, v, gc = run_epidemic(st, kind, ip, fp, tg, tl, tcum, p, n, h, m,
                                local_wr, global_wr, status, queue, mark, hit)
        out_z[r] = z
        out_v[r] = v
        out_g[r] = gc


@jit
def household_batch(seed, start, stop, kind, ip, fp, tg, tl, tcum, p, h, tau, local_wr,
                    out_r, out_g, out_y):
    """Single households under global pressure tau: infected count, global contacts, hits."""
    status = np.zeros(h, dtype=np.int8)
    queue = np.zeros(h, dtype=np.int64)
    mark = np.zeros(h, dtype=np.int64)
    st = np.empty(3, dtype=np.uint64)
    for r in range(start, stop):
        seed_stream(st, seed, r)
        status[:] = 0
        mark[:] = 0
        tail = 0
        y_tot = 0
        for j in range(h):
            k = poisson(st, tau)
            y_tot += k
            if k > 0:
                status[j] = 1
                queue[tail] = j
                tail += 1
        head = 0
        stamp = 0
        g_tot = 0
        while head < tail:
            i = queue[head]
            head += 1
            g, l = draw_contacts(st, kind, ip, fp, tg, tl, tcum)
            if p > 0.0 and l > 0:
                y = binomial(st, l, p)
                g += y
                l -= y
            g_tot += g
            if h > 1 and l > 0:
                if local_wr:
                    for _ in range(l):
                        j = randbelow(st, h - 1)
                        if j >= i:
                            j += 1
                        if status[j] == 0:
                            status[j] = 1
                            queue[tail] = j
                            tail += 1
                else:
                    stamp += 1
                    mark[i] = stamp
                    for _ in range(min(l, h - 1)):
                        j = randbelow(st, h)
                        while mark[j] == stamp:
                            j = randbelow(st, h)
                        mark[j] = stamp
                        if status[j] == 0:
                            status[j] = 1
                            queue[tail] = j
                            tail += 1
        out_r[r] = tail
        out_g[r] = g_tot
        out_y[r] = y_tot
