"""Forward evaluation of gravity, radiation, and CGM flow estimates.

Three model families over a zone registry:

* gravity: flow proportional to the population product damped by a
  distance deterrence, exponential ``exp(-beta*r)`` or power ``r**-beta``;
* radiation: parameter-free, driven by the population found closer to
  the origin than the destination (intervening opportunities);
* CGM: a log-link count regression extending gravity with origin and
  destination stringency-index covariates.

Scalar operations mirror the matrix kernels cell for cell; `predict_day`
vectorizes them over all O-D pairs for one calendar day.
"""

from __future__ import annotations

import datetime as dt
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import DomainError
from .geo import DailyFlowMatrix, StringencyPanel, ZoneRegistry, _readonly


class DecayKind(enum.Enum):
    """Distance-deterrence family for gravity-type models."""

    EXPONENTIAL = "exponential"
    POWER_LAW = "power"


class RadiationDenominator(enum.Enum):
    """First denominator factor of the radiation formula.

    CANONICAL uses (m_i + s_ij); PAPER keeps the (m_j + s_ij) variant as
    printed in some write-ups, selectable for comparison.
    """

    CANONICAL = "canonical"
    PAPER = "paper"


@dataclass(frozen=True)
class GravityParams:
    """Gravity model parameters: flow = scale * m_i * m_j * f(r)."""

    scale: float
    beta: float
    decay: DecayKind

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive and finite")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be finite and >= 0")


@dataclass(frozen=True)
class CgmParams:
    """CGM regression coefficients (log link).

    flow = exp(epsilon + alpha*log(m_i) + beta*log(m_j) + gamma*log(f(r))
               + delta1*SI_i + delta2*SI_j)

    ``decay_rate`` is the fixed deterrence coefficient inside log f:
    log f(r) = -decay_rate*r for exponential decay (fitters set it to the
    reciprocal mean pairwise distance), -decay_rate*log(r) with
    decay_rate = 1 for power decay, where gamma is directly the distance
    elasticity.
    """

    epsilon: float
    alpha: float
    beta: float
    gamma: float
    delta1: float
    delta2: float
    decay: DecayKind
    decay_rate: float = 1.0

    def __post_init__(self):
        for name in ("epsilon", "alpha", "beta", "gamma", "delta1", "delta2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not (self.decay_rate > 0 and math.isfinite(self.decay_rate)):
            raise ValueError("decay_rate must be positive and finite")


# model names as exposed on the CLI
MODEL_NAMES = ("gravity-exp", "gravity-pow", "radiation", "cgm-exp", "cgm-pow")

_MODEL_DECAY = {
    "gravity-exp": DecayKind.EXPONENTIAL,
    "gravity-pow": DecayKind.POWER_LAW,
    "cgm-exp": DecayKind.EXPONENTIAL,
    "cgm-pow": DecayKind.POWER_LAW,
    "radiation": None,
}


def model_family(model: str) -> str:
    """'gravity', 'radiation', or 'cgm' for a model name."""
    if model not in _MODEL_DECAY:
        raise ValueError(f"unknown model {model!r}; choose from {MODEL_NAMES}")
    return model.split("-")[0]


def model_decay(model: str):
    """DecayKind of a model name (None for radiation)."""
    if model not in _MODEL_DECAY:
        raise ValueError(f"unknown model {model!r}; choose from {MODEL_NAMES}")
    return _MODEL_DECAY[model]


# ---------------------------------------------------------------------------
# scalar operations

def deterrence(r: float, beta: float, decay: DecayKind) -> float:
    """Distance-decay factor exp(-beta*r) or r**-beta."""
    if decay is DecayKind.EXPONENTIAL:
        return math.exp(-beta * r)
    if r <= 0.0:
        raise DomainError("power-law deterrence undefined at zero distance")
    return math.pow(r, -beta)


def gravity_flow(m_i: float, m_j: float, r_ij: float, params: GravityParams) -> float:
    """Estimated trips between one origin-destination pair."""
    f = deterrence(r_ij, params.beta, params.decay)
    return params.scale * m_i * m_j * f


def radiation_flow(outflow_i: float, m_i: float, m_j: float, s_ij: float,
                   denominator: RadiationDenominator = RadiationDenominator.CANONICAL) -> float:
    """Radiation estimate O_i*m_i*m_j/((m_x+s)(m_i+m_j+s)).

    ``outflow_i`` is the observed total outgoing trips of the origin zone
    on the day being modeled.
    """
    if denominator is RadiationDenominator.PAPER:
        first = m_j + s_ij
    else:
        first = m_i + s_ij
    denom = first * (m_i + m_j + s_ij)
    return outflow_i * m_i * m_j / denom


def cgm_flow(m_i: float, m_j: float, r_ij: float, si_i: float, si_j: float,
             params: CgmParams) -> float:
    """CGM estimate for one pair (natural logs throughout)."""
    if params.decay is DecayKind.EXPONENTIAL:
        logf = -params.decay_rate * r_ij
    else:
        if r_ij <= 0.0:
            raise DomainError("power-law deterrence undefined at zero distance")
        logf = -params.decay_rate * math.log(r_ij)
    return math.exp(
        params.epsilon
        + params.alpha * math.log(m_i)
        + params.beta * math.log(m_j)
        + params.gamma * logf
        + params.delta1 * si_i
        + params.delta2 * si_j
    )


# ---------------------------------------------------------------------------
# matrix operations

def opportunity_matrix(registry: ZoneRegistry, dist: np.ndarray) -> np.ndarray:
    """Intervening-opportunity mass for every pair.

    Entry (i, j) is the total population of zones strictly closer to i
    than j is, excluding i and j themselves; distance ties are excluded.
    """
    return _readonly(kernels.opportunity_matrix(dist, registry.populations))


def exponential_decay_rate(dist: np.ndarray) -> float:
    """Reciprocal mean off-diagonal distance, the fixed CGM exp-decay rate."""
    n = dist.shape[0]
    off = dist[~np.eye(n, dtype=bool)]
    mean = float(off.mean())
    if not mean > 0:
        raise DomainError("mean pairwise distance is zero")
    return 1.0 / mean


def predict_gravity(registry: ZoneRegistry, dist: np.ndarray,
                    params: GravityParams) -> np.ndarray:
    exponential = params.decay is DecayKind.EXPONENTIAL
    return kernels.gravity_matrix(registry.populations, dist,
                                  params.scale, params.beta, exponential)


def predict_cgm(registry: ZoneRegistry, dist: np.ndarray, params: CgmParams,
                stringency: StringencyPanel, date: dt.date) -> np.ndarray:
    si = stringency.vector(registry, date)
    exponential = params.decay is DecayKind.EXPONENTIAL
    return kernels.cgm_matrix(registry.populations, dist, si,
                              params.epsilon, params.alpha, params.beta,
                              params.gamma, params.delta1, params.delta2,
                              exponential, params.decay_rate)


def predict_radiation(registry: ZoneRegistry, outflows: np.ndarray,
                      opportunity: np.ndarray,
                      denominator: RadiationDenominator = RadiationDenominator.CANONICAL) -> np.ndarray:
    outflows = np.asarray(outflows, dtype=np.float64)
    paper = denominator is RadiationDenominator.PAPER
    return kernels.radiation_matrix(registry.populations, opportunity,
                                    outflows, paper)


def predict_day(model: str, params, registry: ZoneRegistry, dist: np.ndarray,
                date: dt.date, *, stringency: StringencyPanel | None = None,
                outflows: np.ndarray | None = None,
                opportunity: np.ndarray | None = None,
                denominator: RadiationDenominator = RadiationDenominator.CANONICAL,
                direction: str = "full") -> DailyFlowMatrix:
    """Model estimate for every O-D pair on one day.

    Every cell equals the corresponding scalar operation; the diagonal is
    zero. CGM needs a stringency panel covering (zone, date) for every
    zone (KeyError otherwise); radiation needs the day's observed
    outflow totals.
    """
    family = model_family(model)
    if family == "gravity":
        if not isinstance(params, GravityParams):
            raise TypeError(f"{model} needs GravityParams")
        counts = predict_gravity(registry, dist, params)
    elif family == "cgm":
        if not isinstance(params, CgmParams):
            raise TypeError(f"{model} needs CgmParams")
        if stringency is None:
            raise ValueError(f"{model} needs a stringency panel")
        counts = predict_cgm(registry, dist, params, stringency, date)
    else:
        if outflows is None:
            raise ValueError("radiation needs observed outflow totals")
        if opportunity is None:
            opportunity = opportunity_matrix(registry, dist)
        counts = predict_radiation(registry, outflows, opportunity, denominator)
    return DailyFlowMatrix(date=date, counts=counts, direction=direction)


def normalize_to_total(counts: np.ndarray, total: float) -> np.ndarray:
    """Rescale a prediction so its grand total matches an observed total."""
    current = float(counts.sum())
    if current <= 0:
        return counts
    return counts * (total / current)
