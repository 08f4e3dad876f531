"""Invertible per-window differencing and normalization.

All functions operate along the last axis, so a single window (1-D) and a
stack of windows (2-D, one row per window) are handled identically. Metas
then hold scalars or per-row arrays respectively.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import WindowTooShort

EPS_NORM = 1e-6

Scalar = Union[float, np.ndarray]


@dataclass(frozen=True)
class DiffMeta:
    anchor: Scalar  # first element of the pre-difference window


@dataclass(frozen=True)
class NormMeta:
    mu: Scalar
    sigma: Scalar  # population std (divisor n), before flooring

    @property
    def scale(self) -> Scalar:
        return np.maximum(self.sigma, EPS_NORM)


def difference(w) -> tuple[np.ndarray, DiffMeta]:
    """Consecutive deltas of a window; the first element is kept as anchor."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] < 2:
        raise WindowTooShort(f"differencing needs length >= 2, got {w.shape[-1]}")
    anchor = w[..., 0]
    if anchor.ndim == 0:
        anchor = float(anchor)
    return np.diff(w, axis=-1), DiffMeta(anchor=anchor)


def invert_difference(d, meta: DiffMeta) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    anchor = np.asarray(meta.anchor, dtype=float)[..., None]
    head = np.broadcast_to(anchor, d.shape[:-1] + (1,))
    return np.concatenate([head, anchor + np.cumsum(d, axis=-1)], axis=-1)


def normalize(w) -> tuple[np.ndarray, NormMeta]:
    """Standardize a window by its own mean and population std.

    Constant windows have sigma == 0; the divisor is floored at ``EPS_NORM`` so
    they map to zeros and still invert exactly.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[-1] < 1:
        raise WindowTooShort("cannot normalize an empty window")
    mu = w.mean(axis=-1)
    sigma = w.std(axis=-1)
    scale = np.maximum(sigma, EPS_NORM)
    out = (w - mu[..., None]) / scale[..., None]
    if mu.ndim == 0:
        mu, sigma = float(mu), float(sigma)
    return out, NormMeta(mu=mu, sigma=sigma)


def invert_normalize(n, meta: NormMeta) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    scale = np.asarray(meta.scale, dtype=float)[..., None]
    mu = np.asarray(meta.mu, dtype=float)[..., None]
    return n * scale + mu
