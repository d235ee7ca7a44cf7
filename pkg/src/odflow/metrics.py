"""Model-quality and synchronicity measures.

CPC (Sorensen-Dice overlap of generated vs observed flows), Information
Gain (KL divergence of the normalized flow distributions), global and
sliding-window Pearson correlation, and relative improvement.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import MetricError

#: added to every generated cell before IG normalization so model zeros
#: cannot produce an infinite divergence
IG_SMOOTHING = 1e-12


@dataclass(frozen=True)
class DailyScore:
    """Per-day evaluation of one model."""

    date: dt.date
    model: str
    cpc: float
    ig: float


@dataclass(frozen=True)
class WindowStats:
    """Sliding-window correlation summary for one window size."""

    w: int
    mean: float
    median: float


@dataclass(frozen=True)
class SyncReport:
    """Global correlation plus per-window-size local correlation stats."""

    rho_g: float
    local: tuple[WindowStats, ...]


def _counts(flows) -> np.ndarray:
    arr = getattr(flows, "counts", flows)
    return np.asarray(arr, dtype=np.float64)


def cpc(generated, observed) -> float:
    """Common Part of Commuters: 2*sum(min)/(sum(g)+sum(r)), in [0, 1].

    Accepts matrices or DailyFlowMatrix objects aligned to the same
    registry. Raises MetricError when both totals are zero (0/0).
    """
    g = _counts(generated)
    r = _counts(observed)
    total = g.sum() + r.sum()
    if total <= 0:
        raise MetricError("CPC undefined: both flow totals are zero")
    return float(2.0 * np.minimum(g, r).sum() / total)


def information_gain(observed, generated, smoothing: float = IG_SMOOTHING) -> float:
    """KL divergence of normalized observed flows from generated ones.

    Both matrices are normalized to probability distributions first, so
    the result is a true KL divergence and therefore nonnegative; 0 means
    the normalized flows coincide. ``smoothing`` is added to every
    generated cell beforehand to keep model zeros finite; passing 0
    disables it, in which case observed mass on a generated-zero cell
    raises MetricError.
    """
    r = _counts(observed)
    g = _counts(generated) + smoothing
    r_total = r.sum()
    if r_total <= 0:
        raise MetricError("IG undefined: observed total is zero")
    g_total = g.sum()
    if g_total <= 0:
        raise MetricError("IG undefined: generated total is zero")
    p_r = r / r_total
    p_g = g / g_total
    mask = p_r > 0
    if np.any(p_g[mask] == 0):
        raise MetricError("IG undefined: observed mass on a generated-zero cell")
    value = float((p_r[mask] * np.log(p_r[mask] / p_g[mask])).sum())
    # KL is nonnegative; clamp the rounding dust from equal distributions
    return max(value, 0.0)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation of two equal-length series."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("series must be 1-d and of equal length")
    if x.size < 2:
        raise MetricError("series must have at least 2 points")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = float((xd * xd).sum())
    sy = float((yd * yd).sum())
    if sx == 0 or sy == 0:
        raise MetricError("correlation undefined for a constant series")
    return float((xd * yd).sum() / np.sqrt(sx * sy))


@dataclass(frozen=True)
class RollingCorrelation:
    """Sliding-window Pearson series with its mean and median.

    ``values`` has one entry per window (length n - w + 1); windows where
    either sub-series is constant hold NaN and are excluded from the
    mean/median, which are NaN themselves if no window is valid.
    """

    values: np.ndarray
    mean: float
    median: float


def rolling_pearson(x: Sequence[float], y: Sequence[float], window: int) -> RollingCorrelation:
    """Pearson correlation over every length-`window` slice (stride 1)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if window < 2:
        raise MetricError("window must be >= 2")
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("series must be 1-d and of equal length")
    if x.size < window:
        raise MetricError(f"series length {x.size} is shorter than window {window}")
    count = x.size - window + 1
    values = np.empty(count)
    for t in range(count):
        try:
            values[t] = pearson(x[t:t + window], y[t:t + window])
        except MetricError:
            values[t] = np.nan
    valid = values[~np.isnan(values)]
    if valid.size:
        mean = float(valid.mean())
        median = float(np.median(valid))
    else:
        mean = float("nan")
        median = float("nan")
    return RollingCorrelation(values=values, mean=mean, median=median)


def sync_report(x: Sequence[float], y: Sequence[float],
                windows: Sequence[int]) -> SyncReport:
    """Global correlation plus local stats for each window size."""
    local = []
    for w in windows:
        rolling = rolling_pearson(x, y, w)
        local.append(WindowStats(w=int(w), mean=rolling.mean, median=rolling.median))
    return SyncReport(rho_g=pearson(x, y), local=tuple(local))


def relative_improvement(y_hat: float, y: float) -> float:
    """(y_hat - y) / y."""
    if y == 0:
        raise MetricError("relative improvement undefined for y = 0")
    return (y_hat - y) / y


def mean_relative_improvement(y_hat: Sequence[float], y: Sequence[float],
                              convention: str = "mean-of-ratios") -> float:
    """Average relative improvement over paired series.

    ``mean-of-ratios`` (default) averages the per-pair improvements;
    ``ratio-of-means`` compares the series means instead.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape or y_hat.ndim != 1 or y_hat.size == 0:
        raise MetricError("paired series must be 1-d, equal length, nonempty")
    if convention == "mean-of-ratios":
        return float(np.mean([relative_improvement(a, b) for a, b in zip(y_hat, y)]))
    if convention == "ratio-of-means":
        return relative_improvement(float(y_hat.mean()), float(y.mean()))
    raise ValueError(f"unknown convention {convention!r}")
