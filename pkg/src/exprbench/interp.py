"""Embedding algebra for continuous control.

Embeddings are opaque 1-D float64 arrays; no normalization is applied here
(normalization belongs to the contrastive feature space, not the conditioning
path). Alpha range checking lives in this module, with a configurable upper
bound that also admits extrapolation past 1.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import AlphaOutOfRange, DimMismatch, NonFinite

DEFAULT_ALPHA_MAX = 1.5


def as_embedding(values) -> np.ndarray:
    """Coerce to a finite 1-D float64 vector."""
    e = np.asarray(values, dtype=np.float64)
    if e.ndim != 1 or e.size == 0:
        raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {e.shape}")
    if not np.all(np.isfinite(e)):
        raise NonFinite("embedding has non-finite entries")
    return e


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise DimMismatch(a.shape[0], b.shape[0])


def check_alpha(alpha: float, alpha_max: float = DEFAULT_ALPHA_MAX) -> float:
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0.0 or alpha > alpha_max:
        raise AlphaOutOfRange(alpha, alpha_max)
    return alpha


def residual_direction(e_neu, e_tgt) -> np.ndarray:
    """Elementwise shift from the neutral embedding to the target embedding."""
    e_neu = as_embedding(e_neu)
    e_tgt = as_embedding(e_tgt)
    _check_dims(e_neu, e_tgt)
    return e_tgt - e_neu


def interpolate(e_neu, direction, alpha: float, alpha_max: float = DEFAULT_ALPHA_MAX) -> np.ndarray:
    """e_neu + alpha * direction; alpha=0 returns the neutral embedding bit-identically."""
    e_neu = as_embedding(e_neu)
    direction = as_embedding(direction)
    _check_dims(e_neu, direction)
    alpha = check_alpha(alpha, alpha_max)
    if alpha == 0.0:
        return e_neu.copy()
    return e_neu + alpha * direction


def blend(
    e_neu,
    terms: Sequence[tuple[np.ndarray, float]],
    alpha_max: float = DEFAULT_ALPHA_MAX,
) -> np.ndarray:
    """e_neu + sum_i alpha_i * d_i, accumulated in the given term order."""
    e_neu = as_embedding(e_neu)
    out = e_neu.copy()
    for direction, alpha in terms:
        direction = as_embedding(direction)
        _check_dims(e_neu, direction)
        alpha = check_alpha(alpha, alpha_max)
        out += alpha * direction
    return out
