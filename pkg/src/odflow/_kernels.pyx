# cython: language_level=3
# cython: boundscheck=False
# cython: wraparound=False
# cython: cdivision=True
"""Compiled kernels: the fast backend.

Mirror of ``odflow._kernels_py`` (which documents the contract). Same
formulas in the same evaluation order, both sides calling libm, and the
extension is built with -ffp-contract=off, so results are bit-identical
to the fallback. Keep the two files in sync when editing.
"""

from libc.math cimport asin, cos, exp, fabs, floor, log, pow, sin, sqrt

import numpy as np

from .errors import DomainError

DEF LOGFACT_TABLE_SIZE = 1024

cdef double EARTH_RADIUS_KM = 6371.0
cdef double DEG2RAD = 0.017453292519943295  # math.pi / 180
cdef unsigned long long GAMMA = 0x9E3779B97F4A7C15ULL
cdef unsigned long long MIX1 = 0xBF58476D1CE4E5B9ULL
cdef unsigned long long MIX2 = 0x94D049BB133111EBULL
cdef double INV_2POW53 = 1.0 / 9007199254740992.0
cdef double LN_SQRT_2PI = 0.9189385332046727

cdef double[LOGFACT_TABLE_SIZE] LOGFACT


cdef void _init_tables() noexcept:
    cdef int k
    LOGFACT[0] = 0.0
    for k in range(1, LOGFACT_TABLE_SIZE):
        LOGFACT[k] = LOGFACT[k - 1] + log(<double> k)

_init_tables()


# ---------------------------------------------------------------------------
# geometry

cdef double _haversine(double lat1, double lon1, double lat2, double lon2) noexcept nogil:
    cdef double rlat1 = lat1 * DEG2RAD
    cdef double rlat2 = lat2 * DEG2RAD
    cdef double dlat = (lat2 - lat1) * DEG2RAD
    cdef double dlon = (lon2 - lon1) * DEG2RAD
    cdef double sdlat = sin(0.5 * dlat)
    cdef double sdlon = sin(0.5 * dlon)
    cdef double a = sdlat * sdlat + cos(rlat1) * cos(rlat2) * sdlon * sdlon
    if a > 1.0:
        a = 1.0
    return EARTH_RADIUS_KM * (2.0 * asin(sqrt(a)))


def haversine_km(double lat1, double lon1, double lat2, double lon2):
    """Great-circle distance in km between two lat/lon points (degrees)."""
    return _haversine(lat1, lon1, lat2, lon2)


def distance_matrix(lat, lon):
    """Pairwise haversine distances; symmetric with a zero diagonal."""
    cdef const double[::1] la = np.ascontiguousarray(lat, dtype=np.float64)
    cdef const double[::1] lo = np.ascontiguousarray(lon, dtype=np.float64)
    cdef Py_ssize_t n = la.shape[0]
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double d
    for i in range(n):
        for j in range(i + 1, n):
            d = _haversine(la[i], lo[i], la[j], lo[j])
            o[i, j] = d
            o[j, i] = d
    return out


def opportunity_matrix(dist, population):
    """Population strictly closer to i than j, excluding both endpoints."""
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    cdef const double[:, ::1] dv = dist
    cdef const double[::1] pop = np.ascontiguousarray(population, dtype=np.float64)
    cdef Py_ssize_t n = dv.shape[0]
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef const Py_ssize_t[::1] order
    cdef Py_ssize_t i, j, g, h, k
    cdef double cum, d0
    for i in range(n):
        order = np.argsort(dist[i], kind="stable").astype(np.intp, copy=False)
        cum = 0.0
        g = 0
        while g < n:
            d0 = dv[i, order[g]]
            h = g
            while h < n and dv[i, order[h]] == d0:
                j = order[h]
                if j != i:
                    o[i, j] = cum
                h += 1
            for k in range(g, h):
                j = order[k]
                if j != i:
                    cum += pop[j]
            g = h
    return out


# ---------------------------------------------------------------------------
# model surfaces

def gravity_matrix(population, dist, double scale, double beta, bint exponential):
    """Gravity flows scale*m_i*m_j*f(r) for every off-diagonal pair."""
    cdef const double[::1] pop = np.ascontiguousarray(population, dtype=np.float64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(dist, dtype=np.float64)
    cdef Py_ssize_t n = pop.shape[0]
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double r, f
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            r = dv[i, j]
            if exponential:
                f = exp(-beta * r)
            else:
                if r <= 0.0:
                    raise DomainError(
                        "power-law deterrence undefined at zero distance "
                        f"(pair {i},{j})"
                    )
                f = pow(r, -beta)
            o[i, j] = scale * pop[i] * pop[j] * f
    return out


def cgm_matrix(population, dist, si, double epsilon, double alpha, double beta,
               double gamma, double delta1, double delta2, bint exponential,
               double decay_rate):
    """Stringency-extended gravity surface, log-link form."""
    cdef const double[::1] pop = np.ascontiguousarray(population, dtype=np.float64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(dist, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(si, dtype=np.float64)
    cdef Py_ssize_t n = pop.shape[0]
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double r, logf
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            r = dv[i, j]
            if exponential:
                logf = -decay_rate * r
            else:
                if r <= 0.0:
                    raise DomainError(
                        "power-law deterrence undefined at zero distance "
                        f"(pair {i},{j})"
                    )
                logf = -decay_rate * log(r)
            o[i, j] = exp(
                epsilon
                + alpha * log(pop[i])
                + beta * log(pop[j])
                + gamma * logf
                + delta1 * sv[i]
                + delta2 * sv[j]
            )
    return out


def radiation_matrix(population, opportunity, outflow, bint paper_denominator):
    """Radiation flows O_i*m_i*m_j/((m_x+s)(m_i+m_j+s))."""
    cdef const double[::1] pop = np.ascontiguousarray(population, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(opportunity, dtype=np.float64)
    cdef const double[::1] ov = np.ascontiguousarray(outflow, dtype=np.float64)
    cdef Py_ssize_t n = pop.shape[0]
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double s, first, denom
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            s = sv[i, j]
            if paper_denominator:
                first = pop[j] + s
            else:
                first = pop[i] + s
            denom = first * (pop[i] + pop[j] + s)
            o[i, j] = ov[i] * pop[i] * pop[j] / denom
    return out


# ---------------------------------------------------------------------------
# keyed counter RNG (splitmix64)

cdef inline unsigned long long _mix64(unsigned long long z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef unsigned long long _stream_state(unsigned long long seed,
                                      unsigned long long key1,
                                      unsigned long long key2,
                                      unsigned long long key3) noexcept nogil:
    cdef unsigned long long s = _mix64(seed)
    s = _mix64(s ^ key1)
    s = _mix64(s ^ key2)
    s = _mix64(s ^ key3)
    return s


def stream_state(seed, key1, key2, key3):
    """Initial stream state for a (seed, key1, key2, key3) cell."""
    return _stream_state(seed, key1, key2, key3)


cdef inline unsigned long long _next_u64(unsigned long long *state) noexcept nogil:
    state[0] = state[0] + GAMMA
    return _mix64(state[0])


cdef inline double _next_u01(unsigned long long *state) noexcept nogil:
    return <double> (_next_u64(state) >> 11) * INV_2POW53


cdef double _log_factorial(double k) noexcept nogil:
    cdef long ki = <long> k
    cdef double x, inv, inv2
    if ki < LOGFACT_TABLE_SIZE:
        return LOGFACT[ki]
    x = <double> ki
    inv = 1.0 / x
    inv2 = inv * inv
    return ((x + 0.5) * log(x) - x + LN_SQRT_2PI
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0)))


cdef double _poisson(unsigned long long *state, double mu) noexcept nogil:
    cdef double x, p, f, u, slam, loglam, b, a, invalpha, vr, v, us, k
    if mu <= 0.0:
        return 0.0
    if mu < 10.0:
        x = 0.0
        p = exp(-mu)
        f = p
        u = _next_u01(state)
        while u > f:
            x += 1.0
            p *= mu / x
            f += p
            if x >= 500.0:
                break
        return x
    slam = sqrt(mu)
    loglam = log(mu)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = _next_u01(state) - 0.5
        v = _next_u01(state)
        us = 0.5 - fabs(u)
        k = floor((2.0 * a / us + b) * u + mu + 0.43)
        if us >= 0.07 and v <= vr:
            return k
        if k < 0.0 or (us < 0.013 and v > us):
            continue
        if v <= 0.0:
            continue
        if (log(v) + log(invalpha) - log(a / (us * us) + b)
                <= k * loglam - mu - _log_factorial(k)):
            return k


cdef double _normal(unsigned long long *state) noexcept nogil:
    cdef double u, v, s
    while True:
        u = 2.0 * _next_u01(state) - 1.0
        v = 2.0 * _next_u01(state) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * sqrt(-2.0 * log(s) / s)


cdef double _gamma_ge1(unsigned long long *state, double shape) noexcept nogil:
    cdef double d = shape - 1.0 / 3.0
    cdef double c = 1.0 / sqrt(9.0 * d)
    cdef double x, v, u, x2
    while True:
        x = _normal(state)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = _next_u01(state)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if u <= 0.0:
            continue
        if log(u) < 0.5 * x2 + d * (1.0 - v + log(v)):
            return d * v


cdef double _gamma_sample(unsigned long long *state, double shape) noexcept nogil:
    cdef double g, u
    if shape < 1.0:
        g = _gamma_ge1(state, shape + 1.0)
        u = _next_u01(state)
        return g * pow(u, 1.0 / shape)
    return _gamma_ge1(state, shape)


cdef double _negative_binomial(unsigned long long *state, double mu,
                               double dispersion) noexcept nogil:
    cdef double lam
    if mu <= 0.0:
        return 0.0
    lam = _gamma_sample(state, dispersion) * (mu / dispersion)
    return _poisson(state, lam)


def poisson_matrix(mean, seed, day_key):
    """Cell-wise Poisson draws keyed by (seed, day_key, i, j); zero diagonal."""
    cdef const double[:, ::1] mv = np.ascontiguousarray(mean, dtype=np.float64)
    cdef unsigned long long sd = seed
    cdef unsigned long long dk = day_key
    cdef Py_ssize_t n = mv.shape[0]
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef unsigned long long state
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            state = _stream_state(sd, dk, i, j)
            o[i, j] = _poisson(&state, mv[i, j])
    return out


def negative_binomial_matrix(mean, dispersion, seed, day_key):
    """Cell-wise NB2 draws keyed by (seed, day_key, i, j); zero diagonal."""
    cdef const double[:, ::1] mv = np.ascontiguousarray(mean, dtype=np.float64)
    cdef double disp = dispersion
    cdef unsigned long long sd = seed
    cdef unsigned long long dk = day_key
    cdef Py_ssize_t n = mv.shape[0]
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef unsigned long long state
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            state = _stream_state(sd, dk, i, j)
            o[i, j] = _negative_binomial(&state, mv[i, j], disp)
    return out


def stream_uniforms(seed, key1, key2, key3, count):
    """`count` uniform [0, 1) draws from one keyed stream."""
    cdef unsigned long long state = _stream_state(seed, key1, key2, key3)
    cdef Py_ssize_t n = count
    out = np.empty(n)
    cdef double[::1] o = out
    cdef Py_ssize_t k
    for k in range(n):
        o[k] = _next_u01(&state)
    return out
