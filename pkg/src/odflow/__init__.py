"""Origin-destination mobility flow modeling.

Gravity, radiation, and stringency-extended gravity (CGM) models over
zone registries, with parameter fitting, CPC / Information Gain /
Pearson-synchronicity evaluation, a seeded synthetic-data generator, and
a reproducible CLI (``odflow fit|evaluate|sync|gen``).
"""

from ._backend import BACKEND
from .errors import (
    ConfigError,
    DomainError,
    FitError,
    IngestError,
    MetricError,
    OdflowError,
)
from .geo import (
    DailyFlowMatrix,
    StringencyPanel,
    Zone,
    ZoneRegistry,
    aggregate_total,
    distance_matrix,
    haversine_km,
    load_flows,
    load_stringency,
    load_zones,
    write_flows,
    write_stringency,
    write_zones,
)
from .models import (
    CgmParams,
    DecayKind,
    GravityParams,
    MODEL_NAMES,
    RadiationDenominator,
    cgm_flow,
    deterrence,
    exponential_decay_rate,
    gravity_flow,
    opportunity_matrix,
    predict_cgm,
    predict_day,
    predict_gravity,
    predict_radiation,
    radiation_flow,
)
from .fitting import FitReport, fit_cgm, fit_gravity
from .metrics import (
    DailyScore,
    SyncReport,
    cpc,
    information_gain,
    mean_relative_improvement,
    pearson,
    relative_improvement,
    rolling_pearson,
    sync_report,
)
from .synthgen import SynthConfig, SynthResult, generate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DomainError",
    "FitError",
    "IngestError",
    "MetricError",
    "OdflowError",
    "DailyFlowMatrix",
    "StringencyPanel",
    "Zone",
    "ZoneRegistry",
    "aggregate_total",
    "distance_matrix",
    "haversine_km",
    "load_flows",
    "load_stringency",
    "load_zones",
    "write_flows",
    "write_stringency",
    "write_zones",
    "CgmParams",
    "DecayKind",
    "GravityParams",
    "MODEL_NAMES",
    "RadiationDenominator",
    "cgm_flow",
    "deterrence",
    "exponential_decay_rate",
    "gravity_flow",
    "opportunity_matrix",
    "predict_cgm",
    "predict_day",
    "predict_gravity",
    "predict_radiation",
    "radiation_flow",
    "FitReport",
    "fit_cgm",
    "fit_gravity",
    "DailyScore",
    "SyncReport",
    "cpc",
    "information_gain",
    "mean_relative_improvement",
    "pearson",
    "relative_improvement",
    "rolling_pearson",
    "sync_report",
    "SynthConfig",
    "SynthResult",
    "generate",
    "__version__",
]
