"""Compiled inner loops.

Walk kernels read steps from packed 64-bit words (bit ``b`` of word ``w`` is
step ``64*w + b``; set bit = +1) so that streamed and materialized walks
built from the same generator agree step for step.  Kernels whose random
consumption is data dependent (compressed walks, embeddings, branching)
seed numba's own generator from a 32-bit stream seed instead.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _profile_core(words, steps, packed, nsteps, state, lo, counts, spill, zstride, zseries):
    pos = state[0]
    t = state[1]
    zeros = state[2]
    zf = state[3]
    below = spill[0]
    above = spill[1]
    nl = counts.shape[0]
    nz = zseries.shape[0]
    for i in range(nsteps):
        if packed:
            if words[i >> 6] >> np.uint64(i & 63) & np.uint64(1):
                pos += 1
            else:
                pos -= 1
        else:
            pos += steps[i]
        t += 1
        if pos == 0:
            zeros += 1
        idx = pos - lo
        if idx < 0:
            below += 1
        elif idx >= nl:
            above += 1
        else:
            counts[idx] += 1
        if zstride > 0 and zf < nz and t % zstride == 0:
            zseries[zf] = zeros
            zf += 1
    state[0] = pos
    state[1] = t
    state[2] = zeros
    state[3] = zf
    spill[0] = below
    spill[1] = above


@njit(cache=True)
def profile_words(words, nsteps, state, lo, counts, spill, zstride, zseries):
    _profile_core(words, np.empty(0, np.int8), True, nsteps, state, lo, counts,
                  spill, zstride, zseries)


@njit(cache=True)
def profile_steps(steps, state, lo, counts, spill, zstride, zseries):
    _profile_core(np.empty(0, np.uint64), steps, False, steps.shape[0], state, lo,
                  counts, spill, zstride, zseries)


@njit(cache=True)
def lil_scan_words(words, nsteps, state, counts, n_min, k_c, k_exp_rho, k_exp_n,
                   checkpoints, out_series, sups):
    """Running normalized local-time statistics over one chunk.

    ``counts`` holds visits to levels 0..len-1.  ``sups`` accumulates, for
    n >= n_min: [0] centered statistic at level k_c over n^{1/4}(loglog n)^{3/4},
    [1] the same over (xi(0,n) loglog n)^{1/2}, [2] max over k <= K(N) of
    |xi(k, rho_N) - N| over (N loglog N)^{1/2} with K(N) = floor(N^k_exp_rho),
    [3] max over k <= K(n) of |xi(k,n) - xi(0,n)| over n^{1/4}(loglog n)^{3/4}
    with K(n) = floor(n^k_exp_n).  The (4K-2)^{1/2} factors are included.
    ``state`` = [pos, time, checkpoint cursor].
    """
    nlev = counts.shape[0]
    pos = state[0]
    n = state[1]
    c = state[2]
    ncp = checkpoints.shape[0]
    s0 = sups[0]
    s1 = sups[1]
    s2 = sups[2]
    s3 = sups[3]
    f0 = np.sqrt(4.0 * k_c - 2.0)
    # Denominators increase with n, so values from the start of a block
    # bound them from below; exact values are computed only when a new
    # running maximum or a checkpoint is possible.
    block = 4096
    lo_n = 0.0
    lo_ll = 0.0
    kn = 0
    kn_next = 0
    for i in range(nsteps):
        if words[i >> 6] >> np.uint64(i & 63) & np.uint64(1):
            pos += 1
        else:
            pos -= 1
        n += 1
        if 0 <= pos < nlev:
            counts[pos] += 1
        if n < n_min:
            continue
        if lo_n == 0.0 or n % block == 0:
            fn = float(n)
            lo_ll = np.log(np.log(fn))
            lo_n = fn ** 0.25 * lo_ll ** 0.75
        if n >= kn_next:
            kn = int(float(n) ** k_exp_n)
            while float(kn + 1) ** (1.0 / k_exp_n) <= float(n):
                kn += 1
            while kn > 1 and float(kn) ** (1.0 / k_exp_n) > float(n):
                kn -= 1
            kn_next = int(np.ceil(float(kn + 1) ** (1.0 / k_exp_n)))
            while float(kn_next - 1) ** k_exp_n >= kn + 1:
                kn_next -= 1
            if kn < 1:
                kn = 1
        kk = kn if kn < nlev - 1 else nlev - 1
        z = counts[0]
        c_k = counts[k_c] - z
        m = 0
        for k in range(1, kk + 1):
            d = abs(counts[k] - z)
            if d > m:
                m = d
        g3 = np.sqrt(4.0 * kk - 2.0)
        at_cp = c < ncp and checkpoints[c] == n
        if at_cp or c_k > s0 * f0 * lo_n or m > s3 * g3 * lo_n or (
                z > 0 and c_k > s1 * f0 * np.sqrt(z * lo_ll)):
            fn = float(n)
            ll = np.log(np.log(fn))
            denom_n = fn ** 0.25 * ll ** 0.75
            v0 = c_k / (f0 * denom_n)
            v1 = 0.0
            if z > 0:
                v1 = c_k / (f0 * np.sqrt(z * ll))
            v3 = m / (g3 * denom_n)
            if v0 > s0:
                s0 = v0
            if z > 0 and v1 > s1:
                s1 = v1
            if v3 > s3:
                s3 = v3
        if pos == 0 and z >= 16:
            kr = int(float(z) ** k_exp_rho)
            if kr < 1:
                kr = 1
            if kr > nlev - 1:
                kr = nlev - 1
            m2 = 0
            for k in range(1, kr + 1):
                d = abs(counts[k] - z)
                if d > m2:
                    m2 = d
            v2 = m2 / (np.sqrt(4.0 * kr - 2.0) * np.sqrt(z * np.log(np.log(float(z)))))
            if v2 > s2:
                s2 = v2
        if at_cp:
            out_series[c, 0] = v0
            out_series[c, 1] = v1
            out_series[c, 2] = s2
            out_series[c, 3] = v3
            c += 1
    state[0] = pos
    state[1] = n
    state[2] = c
    sups[0] = s0
    sups[1] = s1
    sups[2] = s2
    sups[3] = s3


@njit(cache=True, inline="always")
def _coin(bits):
    # bits = [buffer, remaining]; refills 62 bits at a time
    if bits[1] == 0:
        bits[0] = np.random.randint(0, 2**62)
        bits[1] = 62
    b = bits[0] & 1
    bits[0] >>= 1
    bits[1] -= 1
    return 1 if b == 1 else -1


@njit(cache=True)
def compressed_walk(seed, lo, hi, target, upward_only, max_steps):
    """Walk whose excursions above ``hi`` / below ``lo`` are collapsed to
    two steps; stops at the ``target``-th return to zero (upward returns
    only if ``upward_only``)."""
    np.random.seed(seed)
    bits = np.zeros(2, np.int64)
    buf = np.empty(1024, np.int8)
    n = 0
    pos = 0
    hits = 0
    if target <= 0:
        return buf[:0]
    while True:
        s = _coin(bits)
        if (pos == hi and s == 1) or (pos == lo and s == -1):
            seq = 2
        else:
            seq = 1
        for r in range(seq):
            step = s if r == 0 else -s
            if n >= max_steps:
                raise ValueError("compressed walk exceeded max_steps")
            if n == buf.shape[0]:
                nb = np.empty(2 * n, np.int8)
                nb[:n] = buf
                buf = nb
            buf[n] = step
            n += 1
            pos += step
            if pos == 0 and (not upward_only or step == -1):
                hits += 1
        if hits >= target:
            return buf[:n]


@njit(cache=True)
def compressed_counts(seed, lo, hi, target, upward_only, reps):
    """Visits and started up/down excursions at levels lo..hi, recorded at
    the ``target``-th (upward) return to zero of a compressed walk."""
    np.random.seed(seed)
    bits = np.zeros(2, np.int64)
    nlev = hi - lo + 1
    visits = np.zeros((reps, nlev), np.int64)
    ups = np.zeros((reps, nlev), np.int64)
    downs = np.zeros((reps, nlev), np.int64)
    for r in range(reps):
        pos = 0
        hits = 0
        while hits < target:
            s = _coin(bits)
            if s == 1:
                ups[r, pos - lo] += 1
            else:
                downs[r, pos - lo] += 1
            if (pos == hi and s == 1) or (pos == lo and s == -1):
                # collapsed excursion outside the window
                visits[r, pos - lo] += 1
                if pos == 0:
                    if not upward_only or s == 1:
                        hits += 1
                continue
            pos += s
            visits[r, pos - lo] += 1
            if pos == 0 and (not upward_only or s == -1):
                hits += 1
    return visits, ups, downs


@njit(cache=True)
def return_time_censored(seed, target, cap, reps):
    """Time of the ``target``-th return to zero, or ``cap + 1`` if later."""
    np.random.seed(seed)
    bits = np.zeros(2, np.int64)
    out = np.empty(reps, np.int64)
    for r in range(reps):
        pos = 0
        hits = 0
        t = 0
        while t <= cap:
            pos += _coin(bits)
            t += 1
            if pos == 0:
                hits += 1
                if hits == target:
                    break
        out[r] = t if hits == target else cap + 1
    return out


@njit(cache=True)
def embed_centered_geometric(seed, j_max):
    """Randomized two-point embedding of increments Y = T - 2 (T geometric
    on 1,2,...) into a Brownian motion observed at its integer hits.

    Each increment picks (a, b) = (0, 0) with probability 1/4, otherwise
    (-1, v) with P(v) = (v+1) 2^-v / 3, and runs the integer-hit walk of
    the Brownian motion until it leaves (a, b).  Returns the increments, the
    cumulative number of integer-hit steps after each increment, and the
    integer-hit steps themselves.
    """
    np.random.seed(seed)
    bits = np.zeros(2, np.int64)
    y = np.empty(j_max, np.int64)
    idx = np.empty(j_max, np.int64)
    steps = np.empty(max(16, 3 * j_max), np.int8)
    m = 0
    for j in range(j_max):
        u = np.random.random()
        if u < 0.25:
            y[j] = 0
            idx[j] = m
            continue
        # v with P(v) = (v + 1) 2^-v / 3
        w = np.random.random()
        v = 1
        p = 2.0 / 3.0 * 0.5
        acc = p
        while w > acc:
            v += 1
            p = (v + 1) * 0.5 ** v / 3.0
            acc += p
        x = 0
        while -1 < x < v:
            s = _coin(bits)
            if m == steps.shape[0]:
                nb = np.empty(2 * m, np.int8)
                nb[:m] = steps
                steps = nb
            steps[m] = s
            m += 1
            x += s
        y[j] = x
        idx[j] = m
    return y, idx, steps[:m]


@njit(cache=True)
def excursion_table(seed, count, k_max):
    """Zero-excursions sampled through their Ray-Knight branching profile.

    Upward excursions: upcrossing counts Z_0 = 1, Z_k = NegBin(Z_{k-1}, 1/2);
    visits to level k are Z_k + Z_{k-1}; length is 2 * sum_k Z_k.
    """
    np.random.seed(seed)
    bits = np.zeros(2, np.int64)
    sign = np.empty(count, np.int8)
    length = np.empty(count, np.int64)
    local = np.zeros((count, k_max), np.int64)
    limit = 2**61
    for i in range(count):
        s = _coin(bits)
        sign[i] = s
        z = 1
        total = 1
        k = 0
        while z > 0:
            k += 1
            znew = np.random.negative_binomial(z, 0.5)
            if k <= k_max:
                local[i, k - 1] = znew + z
            total += znew
            if total > limit:
                raise ValueError("excursion length overflow")
            z = znew
        length[i] = 2 * total
        if s == -1:
            local[i, :] = 0
    return sign, length, local
