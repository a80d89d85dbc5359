from __future__ import annotations

import numpy as np


class ZeroVariance(ValueError):
    pass


def _pair(actual, predicted):
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.size == 0:
        raise ValueError(f"need equal non-empty lengths, got {a.shape} and {p.shape}")
    return a, p


def mse(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.mean((a - p) ** 2))


def r2(actual, predicted) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    a, p = _pair(actual, predicted)
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0:
        raise ZeroVariance("r2 undefined for constant actual values")
    return 1.0 - float(np.sum((a - p) ** 2)) / ss_tot
