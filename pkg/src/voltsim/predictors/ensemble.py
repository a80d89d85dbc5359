"""Rules for merging the forest and perceptron idle-time predictions."""

from __future__ import annotations

import enum
import math
from typing import Mapping, Optional, Sequence

import numpy as np

FOREST = "rf"
MLP = "mlp"


class MissingHistory(LookupError):
    pass


class EnsembleKind(enum.Enum):
    MAX = "max"
    MIN = "min"
    AVERAGE = "avg"
    LAST_MONTH = "lastmonth"
    BEST_ON_AVERAGE = "bestavg"


def choose_model(kind: EnsembleKind, history: Sequence[Mapping[str, float]]) -> str:
    """Which single model a history-based ensemble follows next month.

    ``history`` is the chronological list of per-month {model: MSE} dicts
    for one computer; months with a missing or NaN score are skipped.
    Ties go to the forest.
    """
    usable = [h for h in history
              if all(m in h and not math.isnan(h[m]) for m in (FOREST, MLP))]
    if not usable:
        raise MissingHistory("no scored month precedes this one")
    if kind is EnsembleKind.LAST_MONTH:
        rf, mlp = usable[-1][FOREST], usable[-1][MLP]
    elif kind is EnsembleKind.BEST_ON_AVERAGE:
        rf = float(np.mean([h[FOREST] for h in usable]))
        mlp = float(np.mean([h[MLP] for h in usable]))
    else:
        raise ValueError(f"{kind} does not use history")
    return MLP if mlp < rf else FOREST


def ensemble_combine(kind: EnsembleKind, rf_pred, mlp_pred,
                     history: Optional[Sequence[Mapping[str, float]]] = None,
                     fallback: bool = True):
    """Combine predictions elementwise (scalars or arrays).

    With no usable history, LAST_MONTH and BEST_ON_AVERAGE fall back to the
    average unless ``fallback`` is False, in which case MissingHistory is raised.
    """
    rf = np.asarray(rf_pred, dtype=float)
    mlp = np.asarray(mlp_pred, dtype=float)
    if kind is EnsembleKind.MAX:
        out = np.maximum(rf, mlp)
    elif kind is EnsembleKind.MIN:
        out = np.minimum(rf, mlp)
    elif kind is EnsembleKind.AVERAGE:
        out = (rf + mlp) / 2
    else:
        try:
            out = mlp if choose_model(kind, history or ()) == MLP else rf
        except MissingHistory:
            if not fallback:
                raise
            out = (rf + mlp) / 2
    return out[()] if out.ndim == 0 else out
