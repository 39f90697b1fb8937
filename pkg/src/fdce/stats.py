"""Per-sample error metrics and distribution summaries.

Quartiles use linear interpolation between order statistics (numpy's
default); whiskers follow the 1.5 IQR rule with whisker ends at the most
extreme data points inside the fences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateDataError

QUARTILE_CONVENTION = "linear-interpolation"
WHISKER_FACTOR = 1.5


def nmse(h_hat: np.ndarray, h: np.ndarray) -> float:
    """Squared error normalized by the true channel power."""
    h_hat = np.asarray(h_hat)
    h = np.asarray(h)
    if h_hat.shape != h.shape:
        raise DegenerateDataError(
            f"estimate shape {h_hat.shape} does not match channel {h.shape}"
        )
    power = float(np.sum(np.abs(h) ** 2))
    if power == 0.0:
        raise DegenerateDataError("NMSE undefined for a zero channel")
    return float(np.sum(np.abs(h - h_hat) ** 2) / power)


def nmse_rows(h_hat: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Per-row NMSE for stacked samples."""
    err = np.sum(np.abs(h - h_hat) ** 2, axis=-1)
    power = np.sum(np.abs(h) ** 2, axis=-1)
    if np.any(power == 0.0):
        raise DegenerateDataError("NMSE undefined for a zero channel")
    return err / power


@dataclass(frozen=True)
class BoxplotStats:
    q1: float
    median: float
    q3: float
    mean: float
    whisker_low: float
    whisker_high: float
    outliers: np.ndarray = field(repr=False)

    @property
    def n_outliers(self) -> int:
        return len(self.outliers)


def boxplot_stats(samples) -> BoxplotStats:
    """Quartiles, mean, 1.5-IQR whiskers, and outliers of a sample list."""
    data = np.asarray(samples, dtype=np.float64)
    if data.size == 0:
        raise DegenerateDataError("boxplot statistics need at least one sample")
    q1, median, q3 = np.percentile(data, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence = q1 - WHISKER_FACTOR * iqr
    hi_fence = q3 + WHISKER_FACTOR * iqr
    inside = data[(data >= lo_fence) & (data <= hi_fence)]
    outliers = data[(data < lo_fence) | (data > hi_fence)]
    return BoxplotStats(
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        mean=float(data.mean()),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=np.sort(outliers),
    )


def empirical_cdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Step CDF at the sorted distinct values; final fraction is exactly 1."""
    data = np.asarray(samples, dtype=np.float64)
    if data.size == 0:
        raise DegenerateDataError("empirical CDF needs at least one sample")
    values, counts = np.unique(data, return_counts=True)
    fractions = np.cumsum(counts) / data.size
    fractions[-1] = 1.0
    return values, fractions
