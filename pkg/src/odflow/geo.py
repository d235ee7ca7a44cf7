"""Zones, distances, daily flow matrices, and stringency series.

Data model and CSV ingestion for the rest of the package. All types are
immutable after construction and safe to share across threads. Matrices
are plain float64 numpy arrays aligned to the position order of a
:class:`ZoneRegistry`; that order is fixed for the lifetime of a run.

CSV schemas (UTF-8, comma-separated, ``.`` decimal separator):

* zones.csv: ``id,name,population,lat,lon``
* flows.csv: ``date,origin,destination,count`` (one row per nonzero
  origin-destination cell per day)
* stringency.csv: ``date,zone,si``
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._backend import kernels
from .errors import IngestError

EARTH_RADIUS_KM = 6371.0

DIRECTIONS = ("incoming", "outgoing", "full")

ZONES_HEADER = ["id", "name", "population", "lat", "lon"]
FLOWS_HEADER = ["date", "origin", "destination", "count"]
STRINGENCY_HEADER = ["date", "zone", "si"]


@dataclass(frozen=True)
class Zone:
    """A country or region with a population mass and a centroid."""

    id: str
    name: str
    population: float
    lat: float
    lon: float

    def __post_init__(self):
        if not self.id:
            raise ValueError("zone id must be a nonempty string")
        if not (self.population > 0 and math.isfinite(self.population)):
            raise ValueError(f"zone {self.id!r}: population must be positive")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"zone {self.id!r}: lat out of [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"zone {self.id!r}: lon out of [-180, 180]")


class ZoneRegistry:
    """Ordered, immutable zone collection; position defines matrix alignment."""

    def __init__(self, zones: Sequence[Zone]):
        zones = tuple(zones)
        if len(zones) < 2:
            raise ValueError("a registry needs at least 2 zones")
        index: dict[str, int] = {}
        for pos, zone in enumerate(zones):
            if zone.id in index:
                raise ValueError(f"duplicate zone id {zone.id!r}")
            index[zone.id] = pos
        self._zones = zones
        self._index = index
        self._populations = _readonly(np.array([z.population for z in zones]))
        self._lats = _readonly(np.array([z.lat for z in zones]))
        self._lons = _readonly(np.array([z.lon for z in zones]))

    def __len__(self) -> int:
        return len(self._zones)

    def __iter__(self):
        return iter(self._zones)

    def __getitem__(self, position: int) -> Zone:
        return self._zones[position]

    def __eq__(self, other) -> bool:
        return isinstance(other, ZoneRegistry) and self._zones == other._zones

    def __repr__(self) -> str:
        return f"ZoneRegistry({len(self._zones)} zones)"

    @property
    def zones(self) -> tuple[Zone, ...]:
        return self._zones

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(z.id for z in self._zones)

    @property
    def populations(self) -> np.ndarray:
        return self._populations

    @property
    def lats(self) -> np.ndarray:
        return self._lats

    @property
    def lons(self) -> np.ndarray:
        return self._lons

    def index_of(self, zone_id: str) -> int:
        """Position of a zone id; raises KeyError when unknown."""
        return self._index[zone_id]

    def __contains__(self, zone_id: str) -> bool:
        return zone_id in self._index


@dataclass(frozen=True, eq=False)
class DailyFlowMatrix:
    """Observed or generated O-D trip counts for one calendar day.

    ``counts[i, j]`` is the flow from zone position i to position j.
    Counts are stored as reals: generated flows are fractional. The
    diagonal is zero (no self-flows).
    """

    date: dt.date
    counts: np.ndarray
    direction: str = "full"

    def __post_init__(self):
        arr = np.array(self.counts, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("counts must be a square matrix")
        if not np.all(np.isfinite(arr)):
            raise ValueError("counts must be finite")
        if np.any(arr < 0):
            raise ValueError("counts must be nonnegative")
        if np.any(np.diagonal(arr) != 0):
            raise ValueError("self-flows (diagonal) must be zero")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        object.__setattr__(self, "counts", _readonly(arr))

    def total(self) -> float:
        return float(self.counts.sum())

    def outflows(self) -> np.ndarray:
        """Total outgoing trips per origin zone (row sums)."""
        return self.counts.sum(axis=1)


class StringencyPanel:
    """Per-zone, date-indexed stringency index values in [0, 100]."""

    def __init__(self, values: Mapping[str, Mapping[dt.date, float]]):
        panel: dict[str, dict[dt.date, float]] = {}
        for zone_id, series in values.items():
            checked: dict[dt.date, float] = {}
            for date, si in series.items():
                si = float(si)
                if not (0.0 <= si <= 100.0):
                    raise ValueError(
                        f"stringency for {zone_id!r} on {date}: {si} not in [0, 100]"
                    )
                checked[date] = si
            panel[zone_id] = checked
        self._panel = panel

    def value(self, zone_id: str, date: dt.date) -> float:
        try:
            return self._panel[zone_id][date]
        except KeyError:
            raise KeyError(
                f"no stringency value for zone {zone_id!r} on {date.isoformat()}"
            ) from None

    def vector(self, registry: ZoneRegistry, date: dt.date) -> np.ndarray:
        """Stringency values for one date, aligned to registry order."""
        return np.array([self.value(z.id, date) for z in registry])

    def series(self, zone_id: str) -> dict[dt.date, float]:
        return dict(self._panel[zone_id])

    @property
    def zone_ids(self) -> tuple[str, ...]:
        return tuple(self._panel)

    def rows(self) -> Iterable[tuple[dt.date, str, float]]:
        """All (date, zone, si) triples sorted by (date, zone)."""
        triples = [
            (date, zone_id, si)
            for zone_id, series in self._panel.items()
            for date, si in series.items()
        ]
        triples.sort(key=lambda t: (t[0], t[1]))
        return triples


# ---------------------------------------------------------------------------
# geometry

def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km (Earth radius 6371.0 km)."""
    return kernels.haversine_km(lat1, lon1, lat2, lon2)


def distance_matrix(registry: ZoneRegistry) -> np.ndarray:
    """Pairwise haversine distances between zone centroids (km).

    Symmetric, zero diagonal, aligned to registry order.
    """
    return _readonly(kernels.distance_matrix(registry.lats, registry.lons))


# ---------------------------------------------------------------------------
# aggregation

def aggregate_total(panel: Sequence[DailyFlowMatrix], registry: ZoneRegistry,
                    focus: str, direction: str) -> dict[dt.date, float]:
    """Daily total flow into or out of one focus zone.

    ``incoming`` sums over origins (column of the focus zone),
    ``outgoing`` over destinations (row). Raises KeyError for an unknown
    focus id.
    """
    pos = registry.index_of(focus)
    if direction == "incoming":
        return {m.date: float(m.counts[:, pos].sum()) for m in panel}
    if direction == "outgoing":
        return {m.date: float(m.counts[pos, :].sum()) for m in panel}
    raise ValueError("direction must be 'incoming' or 'outgoing'")


# ---------------------------------------------------------------------------
# CSV ingestion

def load_zones(path) -> ZoneRegistry:
    """Read a zones CSV into a registry, preserving file row order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ZONES_HEADER:
            raise IngestError(
                f"{path}: expected header {','.join(ZONES_HEADER)!r}, got {header}"
            )
        zones: list[Zone] = []
        seen: dict[str, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise IngestError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            zone_id, name = row[0], row[1]
            population = _parse_float(path, lineno, "population", row[2])
            lat = _parse_float(path, lineno, "lat", row[3])
            lon = _parse_float(path, lineno, "lon", row[4])
            if zone_id in seen:
                raise IngestError(
                    f"{path}:{lineno}: duplicate zone id {zone_id!r} "
                    f"(first seen at row {seen[zone_id]})"
                )
            seen[zone_id] = lineno
            try:
                zones.append(Zone(zone_id, name, population, lat, lon))
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
    try:
        return ZoneRegistry(zones)
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from None


def load_flows(path, registry: ZoneRegistry,
               direction: str = "full") -> list[DailyFlowMatrix]:
    """Read a flows CSV into per-day matrices, sorted by date."""
    n = len(registry)
    days: dict[dt.date, np.ndarray] = {}
    filled: set[tuple[dt.date, int, int]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FLOWS_HEADER:
            raise IngestError(
                f"{path}: expected header {','.join(FLOWS_HEADER)!r}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise IngestError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            date = _parse_date(path, lineno, row[0])
            origin, destination = row[1], row[2]
            count = _parse_float(path, lineno, "count", row[3])
            for zone_id in (origin, destination):
                if zone_id not in registry:
                    raise IngestError(f"{path}:{lineno}: unknown zone id {zone_id!r}")
            if not (count >= 0 and math.isfinite(count)):
                raise IngestError(f"{path}:{lineno}: count must be finite and >= 0")
            i = registry.index_of(origin)
            j = registry.index_of(destination)
            if i == j:
                if count != 0:
                    raise IngestError(
                        f"{path}:{lineno}: self-flow {origin!r}->{origin!r} must be zero"
                    )
                continue
            key = (date, i, j)
            if key in filled:
                raise IngestError(
                    f"{path}:{lineno}: duplicate cell {origin!r}->{destination!r} on {date}"
                )
            filled.add(key)
            days.setdefault(date, np.zeros((n, n)))[i, j] = count
    return [
        DailyFlowMatrix(date=date, counts=days[date], direction=direction)
        for date in sorted(days)
    ]


def load_stringency(path) -> StringencyPanel:
    """Read a stringency CSV into a panel."""
    values: dict[str, dict[dt.date, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STRINGENCY_HEADER:
            raise IngestError(
                f"{path}: expected header {','.join(STRINGENCY_HEADER)!r}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise IngestError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            date = _parse_date(path, lineno, row[0])
            zone_id = row[1]
            si = _parse_float(path, lineno, "si", row[2])
            if not (0.0 <= si <= 100.0):
                raise IngestError(f"{path}:{lineno}: si {si} not in [0, 100]")
            series = values.setdefault(zone_id, {})
            if date in series:
                raise IngestError(
                    f"{path}:{lineno}: duplicate stringency for {zone_id!r} on {date}"
                )
            series[date] = si
    return StringencyPanel(values)


# ---------------------------------------------------------------------------
# CSV serialization (same schemas as ingestion; round-trip safe)

def write_zones(path, registry: ZoneRegistry) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ZONES_HEADER)
        for zone in registry:
            writer.writerow([zone.id, zone.name, _fmt(zone.population),
                             _fmt(zone.lat), _fmt(zone.lon)])


def write_flows(path, panel: Sequence[DailyFlowMatrix],
                registry: ZoneRegistry) -> None:
    ids = registry.ids
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FLOWS_HEADER)
        for matrix in sorted(panel, key=lambda m: m.date):
            counts = matrix.counts
            date = matrix.date.isoformat()
            for i in range(len(ids)):
                for j in range(len(ids)):
                    if counts[i, j] != 0:
                        writer.writerow([date, ids[i], ids[j], _fmt(counts[i, j])])


def write_stringency(path, panel: StringencyPanel) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STRINGENCY_HEADER)
        for date, zone_id, si in panel.rows():
            writer.writerow([date.isoformat(), zone_id, _fmt(si)])


# ---------------------------------------------------------------------------
# helpers

def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _fmt(value: float) -> str:
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def _parse_float(path, lineno: int, field: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise IngestError(f"{path}:{lineno}: bad {field} value {raw!r}") from None


def _parse_date(path, lineno: int, raw: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except ValueError:
        raise IngestError(f"{path}:{lineno}: bad date {raw!r} (expected YYYY-MM-DD)") from None
