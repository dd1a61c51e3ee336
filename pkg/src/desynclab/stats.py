"""Summary statistics used when comparing model curves with simulation means."""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np
from scipy import stats as _st


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation; NaN (with a warning) when either input is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d sequences of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    den = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if den == 0.0:
        warnings.warn("correlation undefined for a constant input", RuntimeWarning, stacklevel=2)
        return math.nan
    return float(dx @ dy) / den


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    return pearson(_st.rankdata(x), _st.rankdata(y))


def fit_scale(model: Sequence[float], observed: Sequence[float]) -> float:
    """Least-squares ``c`` minimising ``sum (c * model - observed)^2``."""
    m = np.asarray(model, dtype=float)
    o = np.asarray(observed, dtype=float)
    den = float(m @ m)
    if den == 0.0:
        raise ValueError("cannot scale an all-zero curve")
    return float(m @ o) / den
