"""Monthly retrain-and-annotate driver.

For every computer and every target month, both regressors are fitted on
all (densified) history logged out before the month and then predict the
idle time after each logout and reboot inside it.  Ensemble variants are
derived from the two per-record predictions and the per-computer accuracy
history of earlier target months.
"""

from __future__ import annotations

import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..core import MS_PER_MINUTE, ComputerId, IdleRecord, SessionKind
from ..preprocess import (DEFAULT_FEATURES, EmptyTrainSet, ScalingSpec, TermCalendar,
                          densify_arrays, feature_matrix, month_bounds,
                          month_range, scale_and_select)
from .ensemble import FOREST, MLP, EnsembleKind, ensemble_combine
from .forest import DimensionMismatch, ForestConfig, ForestRegressor, aggregate
from .metrics import ZeroVariance, mse, r2
from .mlp import MlpConfig, Network, fit_mlp

log = logging.getLogger(__name__)

VARIANTS = (FOREST, MLP) + tuple(k.value for k in EnsembleKind)


@dataclass(frozen=True)
class TrainedModel:
    """A fitted regressor bound to one computer and its feature scaling."""

    kind: str
    computer: ComputerId
    scaling: ScalingSpec
    features: tuple[str, ...]
    estimator: object
    target_scale: float
    months: tuple

    def predict(self, full_features: np.ndarray) -> np.ndarray:
        """Idle-time predictions in ms from full-width feature rows, clamped at zero."""
        X = scale_and_select(np.atleast_2d(full_features), self.scaling, self.features)
        if isinstance(self.estimator, ForestRegressor):
            per_tree = self.estimator.per_tree(X) * self.target_scale
            cfg = self.estimator.config
            # modal vote over whole minutes, the mean otherwise
            out = aggregate(per_tree, cfg.aggregation, MS_PER_MINUTE)
        elif isinstance(self.estimator, Network):
            # a ReLU network extrapolates linearly; keep it inside the trained target range
            out = np.clip(self.estimator.forward(X), 0.0, 1.0) * self.target_scale
        else:
            out = np.full(len(X), float(self.estimator))
        return np.maximum(out, 0.0)


@dataclass(frozen=True)
class TrainSettings:
    delta: int = 10 * MS_PER_MINUTE
    features: tuple[str, ...] = DEFAULT_FEATURES
    forest: ForestConfig = ForestConfig()
    mlp: MlpConfig = MlpConfig()
    tz: str = "UTC"
    seed: int = 0
    fallback: Optional[float] = None
    oracle: bool = False


@dataclass(frozen=True)
class AccuracyRow:
    computer: ComputerId
    month: str
    model: str
    mse: float
    r2: float


@dataclass
class MonthlyResult:
    """Target-month records with one prediction column per variant."""

    records: list[IdleRecord] = field(default_factory=list)
    months: list[str] = field(default_factory=list)
    predictions: dict[str, np.ndarray] = field(default_factory=dict)
    accuracy: list[AccuracyRow] = field(default_factory=list)

    def variant(self, name: str) -> list[tuple[IdleRecord, int]]:
        return [(r, int(round(p))) for r, p in zip(self.records, self.predictions[name])]

    def accuracy_history(self) -> dict[ComputerId, list[dict]]:
        hist: dict = defaultdict(dict)
        for row in self.accuracy:
            hist[row.computer].setdefault(row.month, {})[row.model] = row.mse
        return {c: [h[m] for m in sorted(h)] for c, h in hist.items()}


def label(month: tuple[int, int]) -> str:
    return f"{month[0]:04d}-{month[1]:02d}"


def _seed(base: int, comp: ComputerId, month: tuple[int, int], salt: int) -> int:
    ss = np.random.SeedSequence([base, comp.cluster, comp.machine, month[0], month[1], salt])
    return int(ss.generate_state(1)[0])


def fit_models(full: np.ndarray, idle: np.ndarray, comp: ComputerId,
               settings: TrainSettings, month: tuple[int, int]) -> dict[str, TrainedModel]:
    """Fit the forest and perceptron on one computer's training rows."""
    spec = ScalingSpec.fit(full)
    X = scale_and_select(full, spec, settings.features)
    scale = float(idle.max()) if idle.max() > 0 else 1.0
    y = idle / scale
    forest = ForestRegressor(_replace_seed(settings.forest, _seed(settings.seed, comp, month, 1)))
    forest.fit(X, y)
    if len(X) >= 2:
        net, _ = fit_mlp(X, y, _replace_seed(settings.mlp, _seed(settings.seed, comp, month, 2)))
    else:
        net = float(idle[0])
    span = (label(month),)
    return {
        FOREST: TrainedModel("forest", comp, spec, settings.features, forest, scale, span),
        MLP: TrainedModel("mlp", comp, spec, settings.features, net,
                          scale if isinstance(net, Network) else 1.0, span),
    }


def _replace_seed(cfg, seed):
    return replace(cfg, seed=seed)


def _score(actual: np.ndarray, pred: np.ndarray) -> tuple[float, float]:
    a = actual / MS_PER_MINUTE
    p = pred / MS_PER_MINUTE
    try:
        r = r2(a, p)
    except ZeroVariance:
        r = math.nan
    return mse(a, p), r


def _train_computer(comp: ComputerId, recs: list[IdleRecord], targets: list[tuple[int, int]],
                    fallbacks: dict, calendar: TermCalendar, settings: TrainSettings):
    recs = sorted(recs, key=lambda r: (r.logout, r.login))
    login = np.array([r.login for r in recs], dtype=np.int64)
    logout = np.array([r.logout for r in recs], dtype=np.int64)
    idle = np.array([r.idle for r in recs], dtype=np.int64)

    src, k = densify_arrays(idle, settings.delta)
    shifted = logout[src] + k * settings.delta
    all_login = np.concatenate([login, shifted])
    all_logout = np.concatenate([logout, shifted])
    all_idle = np.concatenate([idle, idle[src] - k * settings.delta]).astype(float)
    original = np.concatenate([np.ones(len(recs), bool), np.zeros(len(src), bool)])
    full = feature_matrix(all_login, all_logout, comp.cluster, comp.machine,
                          calendar, settings.tz)

    out_idx, out_month, preds, acc = [], [], {FOREST: [], MLP: []}, []
    for month in targets:
        lo, hi = month_bounds(*month, settings.tz)
        pred_rows = np.flatnonzero(original & (all_logout >= lo) & (all_logout < hi))
        if len(pred_rows) == 0:
            continue
        actual = all_idle[pred_rows]
        train = all_logout < lo
        if settings.oracle:
            p_rf = p_mlp = actual.copy()
        elif not train.any():
            p_rf = p_mlp = np.full(len(pred_rows), float(fallbacks[month]))
        else:
            models = fit_models(full[train], all_idle[train], comp, settings, month)
            p_rf = models[FOREST].predict(full[pred_rows])
            p_mlp = models[MLP].predict(full[pred_rows])
        for name, p in ((FOREST, p_rf), (MLP, p_mlp)):
            preds[name].append(p)
            m, r = _score(actual, p)
            acc.append(AccuracyRow(comp, label(month), name, m, r))
        out_idx.append(pred_rows)
        out_month += [label(month)] * len(pred_rows)
    if not out_idx:
        return comp, [], [], {FOREST: np.zeros(0), MLP: np.zeros(0)}, acc
    rows = np.concatenate(out_idx)
    return (comp, [recs[i] for i in rows], out_month,
            {n: np.concatenate(v) for n, v in preds.items()}, acc)


def fleet_fallbacks(records: Sequence[IdleRecord], targets, tz: str,
                    fixed: Optional[float] = None) -> dict:
    """Constant prediction for computers without training rows, per target month."""
    out = {}
    for month in targets:
        if fixed is not None:
            out[month] = float(fixed)
            continue
        lo, _ = month_bounds(*month, tz)
        hist = [r.idle for r in records if r.logout < lo and r.kind is SessionKind.REAL]
        out[month] = float(np.median(hist)) if hist else 0.0
    return out


def _combine_variants(result: MonthlyResult):
    """Fill ensemble columns using each computer's accuracy history."""
    history = defaultdict(list)
    scores = defaultdict(dict)
    for row in result.accuracy:
        scores[(row.computer, row.month)][row.model] = row.mse
    rf, mlp = result.predictions[FOREST], result.predictions[MLP]
    for kind in EnsembleKind:
        result.predictions[kind.value] = np.empty(len(rf))
    by_key = defaultdict(list)
    for i, (rec, month) in enumerate(zip(result.records, result.months)):
        by_key[(rec.computer, month)].append(i)
    for comp, month in sorted(by_key):
        idx = np.array(by_key[(comp, month)])
        for kind in EnsembleKind:
            result.predictions[kind.value][idx] = ensemble_combine(
                kind, rf[idx], mlp[idx], history[comp])
        history[comp].append(scores[(comp, month)])


def train_all_monthly(records: Sequence[IdleRecord], first: tuple[int, int],
                      last: tuple[int, int], calendar: TermCalendar,
                      settings: TrainSettings = TrainSettings(),
                      threads: Optional[int] = None) -> MonthlyResult:
    """Fit, predict and score every computer for each month in ``first..last``.

    ``records`` are reboot-split idle records (real and reboot sessions).
    Training parallelises over computers up to ``threads`` worker processes
    (default from ``VOLT_SIM_THREADS``, else 1).
    """
    targets = month_range(first, last)
    lo, _ = month_bounds(*targets[0], settings.tz)
    if not any(r.logout < lo for r in records):
        raise EmptyTrainSet(f"no history before {label(first)}")
    fallbacks = fleet_fallbacks(records, targets, settings.tz, settings.fallback)
    grouped = defaultdict(list)
    for r in records:
        if r.kind is not SessionKind.DENSIFY:
            grouped[r.computer].append(r)
    comps = sorted(grouped)
    threads = threads or int(os.environ.get("VOLT_SIM_THREADS", "1") or 1)
    jobs = [(c, grouped[c], targets, fallbacks, calendar, settings) for c in comps]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_train_star, jobs))
    else:
        parts = []
        for job in jobs:
            parts.append(_train_computer(*job))
            log.debug("trained %s", job[0])

    result = MonthlyResult()
    cols = {FOREST: [], MLP: []}
    for comp, recs, months, preds, acc in parts:
        result.records += recs
        result.months += months
        for n in cols:
            cols[n].append(preds[n])
        result.accuracy += acc
    result.predictions = {n: np.concatenate(v) if v else np.zeros(0) for n, v in cols.items()}
    _combine_variants(result)
    return result


def _train_star(job):
    return _train_computer(*job)


__all__ = ["TrainedModel", "TrainSettings", "AccuracyRow", "MonthlyResult",
           "VARIANTS", "train_all_monthly", "fit_models", "fleet_fallbacks",
           "DimensionMismatch"]
