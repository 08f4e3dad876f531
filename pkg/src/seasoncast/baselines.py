"""Non-learned comparators for the ablation harness."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .features import TARGET, Dataset, Sample

SEASON = 52
KINDS = ("persistence", "seasonal-naive", "oracle")


def persistence(samples: Sequence[Sample], horizon: int, target: str = TARGET) -> np.ndarray:
    """Repeat the last observed value over the horizon."""
    last = np.array([s.windows[target][-1] for s in samples], dtype=float)
    return np.repeat(last[:, None], horizon, axis=1)


def seasonal_naive(
    samples: Sequence[Sample], dataset: Dataset, horizon: int, target: str = TARGET, season: int = SEASON
) -> tuple[np.ndarray, int]:
    """Value one season earlier, falling back to persistence where the
    lagged value is unavailable. Returns forecasts and the fallback count."""
    out = np.empty((len(samples), horizon))
    fallbacks = 0
    for i, s in enumerate(samples):
        y = dataset.series[s.entity][target]
        last = s.windows[target][-1]
        for j in range(1, horizon + 1):
            # lags of at least one full season keep the source at or before t
            lag = season * ((j + season - 1) // season)
            src = s.t + j - lag
            if src >= 0 and np.isfinite(y[src]):
                out[i, j - 1] = y[src]
            else:
                out[i, j - 1] = last
                fallbacks += 1
    return out, fallbacks


def oracle(samples: Sequence[Sample]) -> np.ndarray:
    """The realised future; only useful as a harness self-check."""
    return np.stack([s.target for s in samples]).astype(float)
