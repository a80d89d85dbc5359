"""Post-processing of simulation reports and prediction accuracy."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import JOULES_PER_MWH, MS_PER_MINUTE, Task
from .predictors.metrics import ZeroVariance


class IncompleteTasks(ValueError):
    pass


class MissingBaseline(KeyError):
    pass


def mean_overhead(tasks: Sequence[Task]) -> float:
    """Mean of finish - submit - duration over tasks, in minutes."""
    if not tasks:
        return 0.0
    pending = [t.id for t in tasks if t.finish is None]
    if pending:
        raise IncompleteTasks(f"{len(pending)} task(s) never completed, e.g. {pending[0]}")
    total = sum(t.finish - t.submit - t.duration for t in tasks)
    return total / len(tasks) / MS_PER_MINUTE


def energy_decompose(report) -> dict:
    """Productive, wasted and total HTC energy in MWh (joules kept alongside)."""
    tasks = getattr(report, "tasks", ())
    prod = math.fsum(report.task_productive_j.get(t.id, 0.0) for t in tasks)
    waste = math.fsum(report.task_wasted_j.get(t.id, 0.0) for t in tasks)
    total = prod + waste
    return {
        "productiveMWh": prod / JOULES_PER_MWH,
        "wastedMWh": waste / JOULES_PER_MWH,
        "totalMWh": total / JOULES_PER_MWH,
        "productiveJ": prod,
        "wastedJ": waste,
        "totalJ": total,
    }


def summary_row(report) -> dict:
    """One comparison-table row (values rounded to 2 dp) from a report or its JSON."""
    data = report if isinstance(report, Mapping) else report.to_json()
    overhead = data["meanOverheadMinutes"]
    return {
        "scheduler": data["scheduler"],
        "overhead_min": None if overhead is None else round(overhead, 2),
        "total_MWh": round(data["totalHtcMWh"], 2),
        "productive_MWh": round(data["productiveMWh"], 2),
        "wasted_MWh": round(data["wastedMWh"], 2),
    }


def relative_report(results: Mapping[str, Mapping[str, float]],
                    baseline: str = "random") -> dict[str, dict]:
    """Energy and overhead as percentages of the baseline scheduler.

    ``results`` maps scheduler name to a dict with ``energy`` and
    ``overhead``; savings are 100 minus the percentage.
    """
    if baseline not in results:
        raise MissingBaseline(baseline)
    base = results[baseline]
    out = {}
    for name, r in results.items():
        e = 100.0 * r["energy"] / base["energy"]
        o = 100.0 * r["overhead"] / base["overhead"]
        out[name] = {"energy_pct": e, "overhead_pct": o,
                     "energy_saving_pct": 100.0 - e, "overhead_reduction_pct": 100.0 - o}
    return out


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 1..max_lag (biased estimator, via FFT)."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= max_lag:
        raise ValueError(f"series of length {n} too short for lag {max_lag}")
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0 or not np.isfinite(denom):
        raise ZeroVariance("autocorrelation undefined for a constant series")
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    full = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    return np.clip(full[1:] / denom, -1.0, 1.0)


def box_stats(values: Iterable[float], floor: float = -3.2) -> dict:
    """Median, quartiles and Tukey whiskers of values clipped below at ``floor``."""
    v = np.array([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return {"n": 0, "median": math.nan, "q1": math.nan, "q3": math.nan,
                "whisker_lo": math.nan, "whisker_hi": math.nan, "clipped": 0}
    clipped = int(np.sum(v < floor))
    v = np.maximum(v, floor)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return {"n": int(v.size), "median": float(med), "q1": float(q1), "q3": float(q3),
            "whisker_lo": float(inside.min()), "whisker_hi": float(inside.max()),
            "clipped": clipped}


def accuracy_summary(rows, floor: float = -3.2) -> list[dict]:
    """Per (month, model) distribution of per-computer r2 values.

    ``rows`` are objects or dicts with ``month``, ``model`` and ``r2``.
    """
    groups = defaultdict(list)
    for row in rows:
        get = row.get if isinstance(row, Mapping) else lambda k: getattr(row, k)
        groups[(get("month"), get("model"))].append(float(get("r2")))
    return [{"month": month, "model": model, **box_stats(vals, floor)}
            for (month, model), vals in sorted(groups.items())]
