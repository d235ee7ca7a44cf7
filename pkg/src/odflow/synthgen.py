"""Seeded synthetic data: zones, stringency ramps, and flow panels.

Everything is drawn through the keyed counter RNG, so identical seeds
give bit-identical output regardless of generation order, and noise for
cell (i, j) on day t never depends on any other cell. Used as the
recovery oracle for the fitting modules and by the ``gen`` CLI command.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ._backend import kernels
from .errors import ConfigError
from .geo import DailyFlowMatrix, StringencyPanel, Zone, ZoneRegistry, distance_matrix
from .models import (
    CgmParams,
    DecayKind,
    GravityParams,
    MODEL_NAMES,
    exponential_decay_rate,
    model_decay,
    model_family,
    opportunity_matrix,
    predict_cgm,
    predict_gravity,
    predict_radiation,
)

NOISE_KINDS = ("none", "poisson", "negative_binomial")

# stream key tags keep zone layout, stringency, and noise draws disjoint
_TAG_ZONES = 101
_TAG_SI = 202
_TAG_NOISE = 303

_GRAVITY_PARAM_KEYS = {"scale", "beta"}
_CGM_PARAM_KEYS = {"epsilon", "alpha", "beta", "gamma", "delta1", "delta2"}


def _default_cgm_params() -> dict[str, float]:
    return {
        "epsilon": -18.0,
        "alpha": 0.9,
        "beta": 0.8,
        "gamma": 1.3,
        "delta1": -0.03,
        "delta2": -0.03,
    }


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for one synthetic dataset."""

    zones: int = 25
    population_range: tuple[float, float] = (1e5, 5e7)
    bbox: tuple[float, float, float, float] = (35.0, 60.0, -10.0, 25.0)
    start_date: dt.date = dt.date(2020, 3, 5)
    days: int = 40
    model: str = "cgm-exp"
    params: Mapping[str, float] = field(default_factory=_default_cgm_params)
    noise: str = "poisson"
    dispersion: float = 1.0
    trips_per_capita: float = 0.01
    seed: int = 20200305

    def __post_init__(self):
        if self.zones < 2:
            raise ConfigError("zones must be >= 2")
        lo, hi = self.population_range
        if not (0 < lo <= hi):
            raise ConfigError("population_range must be 0 < low <= high")
        lat_min, lat_max, lon_min, lon_max = self.bbox
        if not (-90 <= lat_min <= lat_max <= 90 and -180 <= lon_min <= lon_max <= 180):
            raise ConfigError("bbox must be (lat_min, lat_max, lon_min, lon_max)")
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"model must be one of {MODEL_NAMES}")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"noise must be one of {NOISE_KINDS}")
        if self.noise == "negative_binomial" and not self.dispersion > 0:
            raise ConfigError("dispersion must be positive for negative_binomial noise")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.trips_per_capita <= 0:
            raise ConfigError("trips_per_capita must be positive")
        expected = {
            "gravity": _GRAVITY_PARAM_KEYS,
            "cgm": _CGM_PARAM_KEYS,
            "radiation": set(),
        }[model_family(self.model)]
        got = set(self.params)
        if got != expected:
            raise ConfigError(
                f"params for {self.model} must have keys {sorted(expected)}, "
                f"got {sorted(got)}"
            )

    @classmethod
    def from_dict(cls, raw: Mapping) -> "SynthConfig":
        known = {
            "zones", "population_range", "bbox", "start_date", "days",
            "model", "params", "noise", "dispersion", "trips_per_capita", "seed",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "start_date" in kwargs:
            try:
                kwargs["start_date"] = dt.date.fromisoformat(kwargs["start_date"])
            except (TypeError, ValueError):
                raise ConfigError(
                    f"bad start_date {kwargs['start_date']!r} (expected YYYY-MM-DD)"
                ) from None
        for key in ("population_range", "bbox"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "zones": self.zones,
            "population_range": list(self.population_range),
            "bbox": list(self.bbox),
            "start_date": self.start_date.isoformat(),
            "days": self.days,
            "model": self.model,
            "params": dict(self.params),
            "noise": self.noise,
            "dispersion": self.dispersion,
            "trips_per_capita": self.trips_per_capita,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SynthResult:
    """Generated dataset plus the parameters that produced it."""

    registry: ZoneRegistry
    stringency: StringencyPanel
    flows: list[DailyFlowMatrix]
    truth: GravityParams | CgmParams | None
    config: SynthConfig


def _make_zones(cfg: SynthConfig) -> ZoneRegistry:
    lat_min, lat_max, lon_min, lon_max = cfg.bbox
    log_lo = math.log(cfg.population_range[0])
    log_hi = math.log(cfg.population_range[1])
    zones = []
    for idx in range(cfg.zones):
        u = kernels.stream_uniforms(cfg.seed, _TAG_ZONES, idx, 0, 3)
        zones.append(Zone(
            id=f"Z{idx:03d}",
            name=f"Zone {idx:03d}",
            population=math.exp(log_lo + u[2] * (log_hi - log_lo)),
            lat=lat_min + u[0] * (lat_max - lat_min),
            lon=lon_min + u[1] * (lon_max - lon_min),
        ))
    return ZoneRegistry(zones)


def _make_stringency(cfg: SynthConfig, registry: ZoneRegistry) -> StringencyPanel:
    """Piecewise-linear restriction ramps: quiet base, onset, climb, plateau."""
    values: dict[str, dict[dt.date, float]] = {}
    for idx, zone in enumerate(registry):
        u = kernels.stream_uniforms(cfg.seed, _TAG_SI, idx, 0, 4)
        base = u[0] * 10.0
        onset = math.floor(u[1] * 0.4 * cfg.days)
        ramp_days = 5.0 + u[2] * 15.0
        plateau = 45.0 + u[3] * 50.0
        series = {}
        for t in range(cfg.days):
            date = cfg.start_date + dt.timedelta(days=t)
            if t < onset:
                si = base
            else:
                si = base + (plateau - base) * min(1.0, (t - onset + 1) / ramp_days)
            series[date] = min(max(si, 0.0), 100.0)
        values[zone.id] = series
    return StringencyPanel(values)


def _truth_params(cfg: SynthConfig, dist: np.ndarray):
    family = model_family(cfg.model)
    decay = model_decay(cfg.model)
    if family == "gravity":
        return GravityParams(scale=cfg.params["scale"], beta=cfg.params["beta"],
                             decay=decay)
    if family == "cgm":
        rate = (exponential_decay_rate(dist)
                if decay is DecayKind.EXPONENTIAL else 1.0)
        return CgmParams(decay=decay, decay_rate=rate,
                         **{k: float(cfg.params[k]) for k in _CGM_PARAM_KEYS})
    return None


def generate(cfg: SynthConfig) -> SynthResult:
    """Zones, stringency, and a daily flow panel from known parameters."""
    registry = _make_zones(cfg)
    stringency = _make_stringency(cfg, registry)
    dist = distance_matrix(registry)
    truth = _truth_params(cfg, dist)
    family = model_family(cfg.model)

    if family == "radiation":
        opportunity = opportunity_matrix(registry, dist)
        outflows = cfg.trips_per_capita * registry.populations

    noise_seed = kernels.stream_state(cfg.seed, _TAG_NOISE, 0, 0)
    flows = []
    for t in range(cfg.days):
        date = cfg.start_date + dt.timedelta(days=t)
        if family == "gravity":
            expected = predict_gravity(registry, dist, truth)
        elif family == "cgm":
            expected = predict_cgm(registry, dist, truth, stringency, date)
        else:
            expected = predict_radiation(registry, outflows, opportunity)
        if cfg.noise == "none":
            counts = expected
        elif cfg.noise == "poisson":
            counts = kernels.poisson_matrix(expected, noise_seed, date.toordinal())
        else:
            counts = kernels.negative_binomial_matrix(
                expected, cfg.dispersion, noise_seed, date.toordinal())
        flows.append(DailyFlowMatrix(date=date, counts=counts))
    return SynthResult(registry=registry, stringency=stringency, flows=flows,
                       truth=truth, config=cfg)
