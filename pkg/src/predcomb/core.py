"""Sample-evaluated predictors and their projection onto the unit-norm, zero-mean sphere.

A predictor is represented by its evaluations on the N test points, a plain
1-D float array.  "Normalized" predictors are centered and have unit
Euclidean norm; :class:`ScaleShift` keeps what is needed to undo that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroVarianceError

EPS_VAR = 1e-12


@dataclass(frozen=True)
class ScaleShift:
    """Mean and population standard deviation of an un-normalized predictor."""

    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"std must be positive, got {self.std}")


def as_evaluations(v) -> np.ndarray:
    """Validate and convert to a finite float vector with at least 2 entries."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D evaluation vector, got shape {arr.shape}")
    if arr.size < 2:
        raise DimensionMismatch("an evaluation vector needs at least 2 points")
    if not np.all(np.isfinite(arr)):
        raise ValueError("evaluation vector contains non-finite entries")
    return arr


def center(v) -> np.ndarray:
    """Apply the centering projector: ``v - mean(v)``."""
    arr = as_evaluations(v)
    return arr - arr.mean()


def center_normalize(v) -> tuple[np.ndarray, ScaleShift]:
    """Project ``v`` onto the model sphere.

    Returns the centered unit-norm vector and the :class:`ScaleShift`
    recording ``mean(v)`` and the population std ``||v - mean||/sqrt(N)``.

    Raises
    ------
    ZeroVarianceError
        If ``v`` is constant (population std <= 1e-12).
    """
    arr = as_evaluations(v)
    mean = float(arr.mean())
    c = arr - mean
    norm = float(np.linalg.norm(c))
    std = norm / np.sqrt(arr.size)
    if not std > EPS_VAR:
        raise ZeroVarianceError("constant predictor cannot be normalized")
    return c / norm, ScaleShift(mean=mean, std=std)


def normalize(v) -> np.ndarray:
    return center_normalize(v)[0]


def inverse_normalize(p, s: ScaleShift) -> np.ndarray:
    """Map a normalized predictor back to the scale and offset recorded in ``s``."""
    arr = as_evaluations(p)
    return arr * (s.std * np.sqrt(arr.size)) + s.mean


def is_normalized(p, atol: float = 1e-9) -> bool:
    arr = np.asarray(p, dtype=float)
    return bool(abs(arr.sum()) <= atol * arr.size and abs(np.linalg.norm(arr) - 1.0) <= atol)


def reference_matrix(columns: Sequence) -> np.ndarray:
    """Stack reference predictors as normalized columns of an N x R matrix."""
    if len(columns) == 0:
        raise DimensionMismatch("at least one reference is required")
    cols = [normalize(c) for c in columns]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise DimensionMismatch("references must share the same number of points")
    return np.column_stack(cols)
