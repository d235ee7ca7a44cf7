import datetime as dt

import numpy as np
import pytest

from odflow.geo import Zone, ZoneRegistry


def make_registry(n, seed=0, pop_range=(1e5, 5e7), box=(35.0, 60.0, -10.0, 25.0),
                  integer_pops=False):
    """Seeded random registry for property tests.

    With integer_pops (person counts), population sums below 2**53 are
    exact in float64 regardless of summation order.
    """
    rng = np.random.default_rng(seed)
    lat_min, lat_max, lon_min, lon_max = box
    zones = []
    for k in range(n):
        pop = float(np.exp(rng.uniform(np.log(pop_range[0]), np.log(pop_range[1]))))
        if integer_pops:
            pop = float(round(pop))
        zones.append(Zone(
            id=f"Z{k:03d}",
            name=f"Zone {k:03d}",
            population=pop,
            lat=float(rng.uniform(lat_min, lat_max)),
            lon=float(rng.uniform(lon_min, lon_max)),
        ))
    return ZoneRegistry(zones)


@pytest.fixture
def registry3():
    return ZoneRegistry([
        Zone("UK", "United Kingdom", 67e6, 54.0, -2.0),
        Zone("FR", "France", 67.4e6, 46.6, 2.2),
        Zone("DE", "Germany", 83.2e6, 51.0, 10.0),
    ])


@pytest.fixture
def day():
    return dt.date(2020, 3, 5)
