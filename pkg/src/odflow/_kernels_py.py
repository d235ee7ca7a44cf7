"""Pure-Python kernels: the fallback backend.

This module is the reference implementation of every hot kernel. The
compiled module ``odflow._kernels`` mirrors it operation for operation
(same formulas, same evaluation order, libm for both), so the two
backends produce bit-identical results; ``tests/test_backends.py``
asserts exact equality. Keep the two files in sync when editing.

All matrix kernels take and return float64 numpy arrays but compute
cell-wise with scalar ``math`` calls, never numpy elementwise ufuncs,
because numpy's SIMD exp/log paths may differ from libm by an ulp.

Random sampling uses a counter-based scheme: every (seed, key1, key2,
key3) tuple opens an independent splitmix64 stream, so generation is
order-independent and embarrassingly parallel.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

EARTH_RADIUS_KM = 6371.0

_DEG2RAD = math.pi / 180.0
_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2POW53 = 1.0 / 9007199254740992.0
_LN_SQRT_2PI = 0.9189385332046727
_LOGFACT_TABLE_SIZE = 1024


# ---------------------------------------------------------------------------
# geometry

def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km between two lat/lon points (degrees)."""
    rlat1 = lat1 * _DEG2RAD
    rlat2 = lat2 * _DEG2RAD
    dlat = (lat2 - lat1) * _DEG2RAD
    dlon = (lon2 - lon1) * _DEG2RAD
    sdlat = math.sin(0.5 * dlat)
    sdlon = math.sin(0.5 * dlon)
    a = sdlat * sdlat + math.cos(rlat1) * math.cos(rlat2) * sdlon * sdlon
    if a > 1.0:
        a = 1.0
    return EARTH_RADIUS_KM * (2.0 * math.asin(math.sqrt(a)))


def distance_matrix(lat, lon):
    """Pairwise haversine distances; symmetric with a zero diagonal."""
    n = lat.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = haversine_km(lat[i], lon[i], lat[j], lon[j])
            out[i, j] = d
            out[j, i] = d
    return out


def opportunity_matrix(dist, population):
    """Population strictly closer to i than j, excluding both endpoints.

    Ties (equal distance) are excluded, so the j column itself never
    counts. Row-wise stable argsort keeps the accumulation order, and
    therefore the float result, deterministic.
    """
    n = dist.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        row = dist[i]
        order = np.argsort(row, kind="stable")
        cum = 0.0
        g = 0
        while g < n:
            d0 = row[order[g]]
            h = g
            while h < n and row[order[h]] == d0:
                j = order[h]
                if j != i:
                    out[i, j] = cum
                h += 1
            for k in range(g, h):
                j = order[k]
                if j != i:
                    cum += population[j]
            g = h
    return out


# ---------------------------------------------------------------------------
# model surfaces

def gravity_matrix(population, dist, scale, beta, exponential):
    """Gravity flows scale*m_i*m_j*f(r) for every off-diagonal pair."""
    n = population.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            r = dist[i, j]
            if exponential:
                f = math.exp(-beta * r)
            else:
                if r <= 0.0:
                    raise DomainError(
                        "power-law deterrence undefined at zero distance "
                        f"(pair {i},{j})"
                    )
                f = math.pow(r, -beta)
            out[i, j] = scale * population[i] * population[j] * f
    return out


def cgm_matrix(population, dist, si, epsilon, alpha, beta, gamma,
               delta1, delta2, exponential, decay_rate):
    """Stringency-extended gravity surface, log-link form.

    log f(r) enters the exponent as -decay_rate*r (exponential decay) or
    -decay_rate*log(r) (power decay).
    """
    n = population.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            r = dist[i, j]
            if exponential:
                logf = -decay_rate * r
            else:
                if r <= 0.0:
                    raise DomainError(
                        "power-law deterrence undefined at zero distance "
                        f"(pair {i},{j})"
                    )
                logf = -decay_rate * math.log(r)
            out[i, j] = math.exp(
                epsilon
                + alpha * math.log(population[i])
                + beta * math.log(population[j])
                + gamma * logf
                + delta1 * si[i]
                + delta2 * si[j]
            )
    return out


def radiation_matrix(population, opportunity, outflow, paper_denominator):
    """Radiation flows O_i*m_i*m_j/((m_x+s)(m_i+m_j+s)).

    m_x is m_i in the canonical form, m_j in the paper-printed variant.
    """
    n = population.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            s = opportunity[i, j]
            if paper_denominator:
                first = population[j] + s
            else:
                first = population[i] + s
            denom = first * (population[i] + population[j] + s)
            out[i, j] = outflow[i] * population[i] * population[j] / denom
    return out


# ---------------------------------------------------------------------------
# keyed counter RNG (splitmix64)

def _mix64(z):
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def stream_state(seed, key1, key2, key3):
    """Initial stream state for a (seed, key1, key2, key3) cell."""
    s = _mix64(seed & _MASK64)
    s = _mix64(s ^ (key1 & _MASK64))
    s = _mix64(s ^ (key2 & _MASK64))
    s = _mix64(s ^ (key3 & _MASK64))
    return s


class _Stream:
    __slots__ = ("state",)

    def __init__(self, state):
        self.state = state

    def next_u64(self):
        self.state = (self.state + _GAMMA) & _MASK64
        return _mix64(self.state)

    def next_u01(self):
        # top 53 bits -> uniform double in [0, 1)
        return (self.next_u64() >> 11) * _INV_2POW53


_LOGFACT = np.zeros(_LOGFACT_TABLE_SIZE)
for _k in range(1, _LOGFACT_TABLE_SIZE):
    _LOGFACT[_k] = _LOGFACT[_k - 1] + math.log(_k)


def _log_factorial(k):
    # exact cumulative table below 1024, Stirling series above (the
    # series error there is far below double precision)
    ki = int(k)
    if ki < _LOGFACT_TABLE_SIZE:
        return float(_LOGFACT[ki])
    x = float(ki)
    inv = 1.0 / x
    inv2 = inv * inv
    return ((x + 0.5) * math.log(x) - x + _LN_SQRT_2PI
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0)))


def _poisson(stream, mu):
    if mu <= 0.0:
        return 0.0
    if mu < 10.0:
        # inversion by sequential search
        x = 0.0
        p = math.exp(-mu)
        f = p
        u = stream.next_u01()
        while u > f:
            x += 1.0
            p *= mu / x
            f += p
            if x >= 500.0:
                break
        return x
    # transformed rejection (PTRS), valid for mu >= 10
    slam = math.sqrt(mu)
    loglam = math.log(mu)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = stream.next_u01() - 0.5
        v = stream.next_u01()
        us = 0.5 - math.fabs(u)
        k = math.floor((2.0 * a / us + b) * u + mu + 0.43)
        if us >= 0.07 and v <= vr:
            return k
        if k < 0.0 or (us < 0.013 and v > us):
            continue
        if v <= 0.0:
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= k * loglam - mu - _log_factorial(k)):
            return k


def _normal(stream):
    # Marsaglia polar method; the second variate is discarded to keep
    # the draw sequence identical across backends
    while True:
        u = 2.0 * stream.next_u01() - 1.0
        v = 2.0 * stream.next_u01() - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * math.sqrt(-2.0 * math.log(s) / s)


def _gamma_ge1(stream, shape):
    # Marsaglia-Tsang squeeze method, shape >= 1
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _normal(stream)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = stream.next_u01()
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if u <= 0.0:
            continue
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v


def _gamma(stream, shape):
    if shape < 1.0:
        g = _gamma_ge1(stream, shape + 1.0)
        u = stream.next_u01()
        return g * math.pow(u, 1.0 / shape)
    return _gamma_ge1(stream, shape)


def _negative_binomial(stream, mu, dispersion):
    # NB2 via gamma-Poisson mixture: var = mu + mu^2/dispersion
    if mu <= 0.0:
        return 0.0
    lam = _gamma(stream, dispersion) * (mu / dispersion)
    return _poisson(stream, lam)


def poisson_matrix(mean, seed, day_key):
    """Cell-wise Poisson draws keyed by (seed, day_key, i, j); zero diagonal."""
    n = mean.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            stream = _Stream(stream_state(seed, day_key, i, j))
            out[i, j] = _poisson(stream, float(mean[i, j]))
    return out


def negative_binomial_matrix(mean, dispersion, seed, day_key):
    """Cell-wise NB2 draws keyed by (seed, day_key, i, j); zero diagonal."""
    n = mean.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            stream = _Stream(stream_state(seed, day_key, i, j))
            out[i, j] = _negative_binomial(stream, float(mean[i, j]), dispersion)
    return out


def stream_uniforms(seed, key1, key2, key3, count):
    """`count` uniform [0, 1) draws from one keyed stream."""
    stream = _Stream(stream_state(seed, key1, key2, key3))
    out = np.empty(count)
    for k in range(count):
        out[k] = stream.next_u01()
    return out
