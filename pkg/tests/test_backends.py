"""Compiled vs pure-Python kernel equivalence.

The two backends promise bit-identical results; every assertion here is
exact equality, no tolerances.
"""

import numpy as np
import pytest

from odflow import _kernels_py as fallback
from odflow.errors import DomainError

compiled = pytest.importorskip(
    "odflow._kernels", reason="compiled kernels not built")


@pytest.fixture(scope="module")
def geometry():
    rng = np.random.default_rng(7)
    n = 24
    lat = rng.uniform(-60.0, 60.0, n)
    lon = rng.uniform(-170.0, 170.0, n)
    pop = np.exp(rng.uniform(np.log(1e5), np.log(5e7), n))
    dist = compiled.distance_matrix(lat, lon)
    return lat, lon, pop, dist


def test_haversine_scalar(geometry):
    lat, lon, _, _ = geometry
    for i in range(0, 20, 3):
        a = compiled.haversine_km(lat[i], lon[i], lat[i + 1], lon[i + 1])
        b = fallback.haversine_km(lat[i], lon[i], lat[i + 1], lon[i + 1])
        assert a == b


def test_distance_matrix(geometry):
    lat, lon, _, dist = geometry
    assert np.array_equal(dist, fallback.distance_matrix(lat, lon))


def test_opportunity_matrix(geometry):
    _, _, pop, dist = geometry
    assert np.array_equal(compiled.opportunity_matrix(dist, pop),
                          fallback.opportunity_matrix(dist, pop))


def test_opportunity_matrix_with_distance_ties():
    # duplicated coordinates force zero-distance ties in every row
    lat = np.array([45.0, 45.0, 46.0, 46.0, 47.0])
    lon = np.array([7.0, 7.0, 8.0, 8.0, 9.0])
    pop = np.array([1e6, 2e6, 3e6, 4e6, 5e6])
    dist = compiled.distance_matrix(lat, lon)
    assert np.array_equal(compiled.opportunity_matrix(dist, pop),
                          fallback.opportunity_matrix(dist, pop))


@pytest.mark.parametrize("scale,beta,exponential", [
    (1e-9, 0.002, True),
    (1e-9, 0.0, True),
    (1e-3, 1.7, False),
])
def test_gravity_matrix(geometry, scale, beta, exponential):
    _, _, pop, dist = geometry
    assert np.array_equal(
        compiled.gravity_matrix(pop, dist, scale, beta, exponential),
        fallback.gravity_matrix(pop, dist, scale, beta, exponential))


def test_gravity_matrix_power_zero_distance_raises_in_both():
    pop = np.array([1e6, 1e6])
    dist = np.zeros((2, 2))
    with pytest.raises(DomainError):
        compiled.gravity_matrix(pop, dist, 1.0, 1.0, False)
    with pytest.raises(DomainError):
        fallback.gravity_matrix(pop, dist, 1.0, 1.0, False)


@pytest.mark.parametrize("exponential", [True, False])
def test_cgm_matrix(geometry, exponential):
    _, _, pop, dist = geometry
    rng = np.random.default_rng(8)
    si = rng.uniform(0.0, 100.0, pop.size)
    rate = 1.0 / dist[dist > 0].mean() if exponential else 1.0
    args = (pop, dist, si, -19.0, 0.9, 0.8, 1.3, -0.02, -0.03, exponential, rate)
    assert np.array_equal(compiled.cgm_matrix(*args), fallback.cgm_matrix(*args))


@pytest.mark.parametrize("paper", [False, True])
def test_radiation_matrix(geometry, paper):
    _, _, pop, dist = geometry
    opportunity = compiled.opportunity_matrix(dist, pop)
    outflow = 0.01 * pop
    assert np.array_equal(
        compiled.radiation_matrix(pop, opportunity, outflow, paper),
        fallback.radiation_matrix(pop, opportunity, outflow, paper))


def test_stream_state_and_uniforms():
    for seed in (0, 1, 12345, 2 ** 64 - 1):
        assert compiled.stream_state(seed, 1, 2, 3) == fallback.stream_state(seed, 1, 2, 3)
        assert np.array_equal(compiled.stream_uniforms(seed, 9, 8, 7, 500),
                              fallback.stream_uniforms(seed, 9, 8, 7, 500))


@pytest.mark.parametrize("mu", [0.0, 0.5, 3.3, 9.99, 10.0, 57.3, 1500.0, 5e4])
def test_poisson_matrix(mu):
    # 5e4 pushes log-factorial onto the Stirling branch (k > 1024)
    mean = np.full((6, 6), mu)
    np.fill_diagonal(mean, 0.0)
    a = compiled.poisson_matrix(mean, 42, 737000)
    b = fallback.poisson_matrix(mean, 42, 737000)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("mu,dispersion", [
    (3.3, 1.0), (57.3, 1.0), (57.3, 0.4), (200.0, 5.0),
])
def test_negative_binomial_matrix(mu, dispersion):
    mean = np.full((6, 6), mu)
    np.fill_diagonal(mean, 0.0)
    a = compiled.negative_binomial_matrix(mean, dispersion, 42, 737001)
    b = fallback.negative_binomial_matrix(mean, dispersion, 42, 737001)
    assert np.array_equal(a, b)
