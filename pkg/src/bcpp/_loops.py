"""Hot inner loops: event-driven simulation and random-walk sampling.

Everything here is decorated with :func:`bcpp.accel.njit` and written in
the restricted numpy/scalar style numba compiles.  With ``BCPP_NO_NUMBA=1``
the same code runs interpreted and produces bit-identical output.

The RNG is an explicit xoshiro256** so that both execution modes share one
stream; state is a length-4 uint64 array, seeded from ``np.random.SeedSequence``
by the callers.
"""

import numpy as np

from .accel import njit

U64 = np.uint64

RENORM_THRESHOLD = 1e200
RENORM_FACTOR = 1e-100
RENORM_LOG = 230.25850929940457  # 100 * ln(10)
_INV_2_53 = 1.1102230246251565e-16  # 2**-53


@njit(cache=True, inline="always")
def _rotl(x, k):
    return U64((x << k) | (x >> (U64(64) - k)))


@njit(cache=True, inline="always")
def next_u64(s):
    r = _rotl(s[1] * U64(5), U64(7)) * U64(9)
    t = s[1] << U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], U64(45))
    return r


@njit(cache=True, inline="always")
def next_double(s):
    # uniform on [0, 1) with 53 random bits
    return np.float64(next_u64(s) >> U64(11)) * _INV_2_53


def seed_state(entropy):
    """Length-4 uint64 xoshiro state from entropy or a SeedSequence."""
    if isinstance(entropy, np.random.SeedSequence):
        ss = entropy
    else:
        ss = np.random.SeedSequence(entropy)
    state = ss.generate_state(4, dtype=np.uint64)
    if not state.any():
        state[0] = U64(1)
    return state


@njit(cache=True)
def stream_doubles(s, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = next_double(s)
    return out


@njit(cache=True, inline="always")
def _neighbor(x, j, L, d):
    # neighbor of flat index x in direction j (axis j>>1, sign by parity)
    k = j >> 1
    stride = 1
    for _ in range(d - 1 - k):
        stride *= L
    c = (x // stride) % L
    if j & 1 == 0:
        return x + stride if c + 1 < L else x + stride * (1 - L)
    return x - stride if c > 0 else x + stride * (L - 1)


@njit(cache=True)
def _renormalize(zeta):
    for i in range(zeta.shape[0]):
        zeta[i] *= RENORM_FACTOR


@njit(cache=True)
def run_events(zeta, L, d, p_death, n_events, s):
    """Apply ``n_events`` death/infection events in place.

    Event times are irrelevant to the final field because the deterministic
    drift is a global factor handled by the caller, so the caller draws the
    Poisson event count for the window and this loop only orders the events.

    Returns (deaths, infections, zeta_exponent_delta).
    """
    n = zeta.shape[0]
    two_d = 2 * d
    deaths = 0
    infections = 0
    zexp_delta = 0.0
    for _ in range(n_events):
        x = np.int64(next_double(s) * n)
        if next_double(s) < p_death:
            zeta[x] = 0.0
            deaths += 1
        else:
            j = np.int64(next_double(s) * two_d)
            y = _neighbor(x, j, L, d)
            zeta[x] += zeta[y]
            infections += 1
            if zeta[x] > RENORM_THRESHOLD:
                _renormalize(zeta)
                zexp_delta += RENORM_LOG
    return deaths, infections, zexp_delta


@njit(cache=True)
def _weighted_sums(zeta, wlap, w2):
    w1 = 0.0
    ww2 = 0.0
    for i in range(zeta.shape[0]):
        z = zeta[i]
        if z != 0.0:
            w1 += z * wlap[i]
            ww2 += z * z * w2[i]
    return w1, ww2


@njit(cache=True)
def run_events_tracked(zeta, L, d, p_death, total_rate, duration, a, wlap, w2, in_supp, s):
    """Event loop that also integrates the two test-function functionals.

    Accumulates, in physical units (zeta times the drift factor exp(a*t)),

        I1 = integral_0^duration  sum_x eta_t(x) * wlap[x]      dt
        I2 = integral_0^duration  sum_x eta_t(x)^2 * w2[x]      dt

    exactly: the integrands are piecewise exponential between events, and
    the weighted sums W1, W2 only change at events inside the support mask,
    so each constant-W stretch is integrated in closed form.

    Returns (deaths, infections, zeta_exponent_delta, I1, I2).
    """
    n = zeta.shape[0]
    two_d = 2 * d
    deaths = 0
    infections = 0
    zexp = 0.0
    scale1 = 1.0  # exp(zexp)
    scale2 = 1.0  # exp(2*zexp)
    w1_sum, w2_sum = _weighted_sums(zeta, wlap, w2)
    a_zero = a == 0.0
    t = 0.0
    t_mark = 0.0  # start of the current constant-W stretch
    e_mark = 1.0  # exp(a*t_mark)
    e2_mark = 1.0  # exp(2*a*t_mark)
    i1 = 0.0
    i2 = 0.0
    refresh_every = 8 * n if 8 * n > 1048576 else 1048576
    since_refresh = 0
    while True:
        dt = -np.log1p(-next_double(s)) / total_rate
        if t + dt > duration:
            break
        t += dt
        x = np.int64(next_double(s) * n)
        if next_double(s) < p_death:
            dz = -zeta[x]
            deaths += 1
            if dz != 0.0 and in_supp[x] != 0:
                if a_zero:
                    i1 += w1_sum * scale1 * (t - t_mark)
                    i2 += w2_sum * scale2 * (t - t_mark)
                else:
                    e_t = np.exp(a * t)
                    e2_t = e_t * e_t
                    i1 += w1_sum * scale1 * (e_t - e_mark) / a
                    i2 += w2_sum * scale2 * (e2_t - e2_mark) / (2.0 * a)
                    e_mark = e_t
                    e2_mark = e2_t
                t_mark = t
                w1_sum += dz * wlap[x]
                w2_sum -= zeta[x] * zeta[x] * w2[x]
            zeta[x] = 0.0
        else:
            j = np.int64(next_double(s) * two_d)
            y = _neighbor(x, j, L, d)
            dz = zeta[y]
            infections += 1
            if dz != 0.0:
                if in_supp[x] != 0:
                    if a_zero:
                        i1 += w1_sum * scale1 * (t - t_mark)
                        i2 += w2_sum * scale2 * (t - t_mark)
                    else:
                        e_t = np.exp(a * t)
                        e2_t = e_t * e_t
                        i1 += w1_sum * scale1 * (e_t - e_mark) / a
                        i2 += w2_sum * scale2 * (e2_t - e2_mark) / (2.0 * a)
                        e_mark = e_t
                        e2_mark = e2_t
                    t_mark = t
                    znew = zeta[x] + dz
                    w1_sum += dz * wlap[x]
                    w2_sum += (znew * znew - zeta[x] * zeta[x]) * w2[x]
                zeta[x] += dz
                if zeta[x] > RENORM_THRESHOLD:
                    # close the stretch, rescale everything consistently
                    if a_zero:
                        i1 += w1_sum * scale1 * (t - t_mark)
                        i2 += w2_sum * scale2 * (t - t_mark)
                    else:
                        e_t = np.exp(a * t)
                        e2_t = e_t * e_t
                        i1 += w1_sum * scale1 * (e_t - e_mark) / a
                        i2 += w2_sum * scale2 * (e2_t - e2_mark) / (2.0 * a)
                        e_mark = e_t
                        e2_mark = e2_t
                    t_mark = t
                    _renormalize(zeta)
                    zexp += RENORM_LOG
                    scale1 = np.exp(zexp)
                    scale2 = np.exp(2.0 * zexp)
                    w1_sum, w2_sum = _weighted_sums(zeta, wlap, w2)
        since_refresh += 1
        if since_refresh >= refresh_every:
            # periodically resync the streamed sums against float drift
            w1_sum, w2_sum = _weighted_sums(zeta, wlap, w2)
            since_refresh = 0
    # final stretch up to `duration`
    if a_zero:
        i1 += w1_sum * scale1 * (duration - t_mark)
        i2 += w2_sum * scale2 * (duration - t_mark)
    else:
        e_t = np.exp(a * duration)
        e2_t = e_t * e_t
        i1 += w1_sum * scale1 * (e_t - e_mark) / a
        i2 += w2_sum * scale2 * (e2_t - e2_mark) / (2.0 * a)
    return deaths, infections, zexp, i1, i2


@njit(cache=True)
def walk_hit_count(d, start, escape_radius, max_steps, n_walks, s):
    """Discrete simple random walks from ``start``: count hits of the origin.

    A walk ends successfully on reaching the origin, unsuccessfully on
    leaving the l-inf ball of ``escape_radius`` (or after ``max_steps``,
    which at sane settings essentially never binds first).
    """
    pos = np.empty(d, dtype=np.int64)
    two_d = 2 * d
    hits = 0
    for _ in range(n_walks):
        for k in range(d):
            pos[k] = start[k]
        for _ in range(max_steps):
            j = np.int64(next_double(s) * two_d)
            k = j >> 1
            if j & 1 == 0:
                pos[k] += 1
            else:
                pos[k] -= 1
            if pos[k] > escape_radius or pos[k] < -escape_radius:
                break
            at_origin = True
            for m in range(d):
                if pos[m] != 0:
                    at_origin = False
                    break
            if at_origin:
                hits += 1
                break
    return hits
