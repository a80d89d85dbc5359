"""A look at the synthetic campus the simulator runs on.

Generates the default bundle, then walks through what the prediction
pipeline sees: logins per day across term and vacation, idle periods cut
at nightly reboots, the extra training rows densification adds, and the
burst structure of the task durations.

    python demos/01_synthetic_campus.py [--seed N]
"""

import argparse
import datetime as dt

import numpy as np
import pandas as pd

from voltsim import pipeline
from voltsim.analysis import acf
from voltsim.config import Config
from voltsim.core import MS_PER_DAY, MS_PER_MINUTE, SessionKind
from voltsim.preprocess import densify_counts
from voltsim.tracegen import generate_bundle


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = Config()
    bundle = generate_bundle(cfg.generator, args.seed)
    print(f"{len(bundle.fleet.machines)} machines in {len(bundle.fleet.clusters)} clusters, "
          f"{len(bundle.sessions)} sessions, {len(bundle.tasks)} tasks")

    # Daily logins by week, split by whether the day falls in term.
    days = pd.to_datetime([s.login for s in bundle.sessions], unit="ms", utc=True).normalize()
    per_day = days.value_counts().sort_index()
    in_term = [bundle.calendar.locate(d.date())[0] > 0 for d in per_day.index]
    frame = pd.DataFrame({"logins": per_day.values, "term": in_term}, index=per_day.index)
    print("\nmean logins per day")
    means = frame.groupby("term")["logins"].mean().rename({True: "term", False: "vacation"})
    print(means.rename_axis(None).round(1).to_string())

    # Which clusters stay quiet?  Busy labs have short idle gaps.
    records = pipeline.preprocess(bundle)
    real = [r for r in records if r.kind is SessionKind.REAL]
    reboot = [r for r in records if r.kind is SessionKind.REBOOT]
    by_cluster = pd.DataFrame({"cluster": [bundle.fleet.clusters[r.computer.cluster] for r in records],
                               "idle_h": [r.idle / 3.6e6 for r in records]})
    print(f"\n{len(real)} idle periods after a logout, {len(reboot)} after a reboot")
    print("median idle hours per cluster")
    print(by_cluster.groupby("cluster")["idle_h"].median().round(2).to_string())

    idle = np.array([r.idle for r in records], dtype=np.int64)
    for delta in (5, 10, 30, 60):
        extra = int(densify_counts(idle, delta * MS_PER_MINUTE).sum())
        print(f"densify every {delta:2d} min -> {extra:8d} extra training rows")

    durations = np.array([t.duration for t in bundle.tasks], dtype=float) / MS_PER_MINUTE
    r = acf(durations, 50)
    print(f"\ntask durations: median {np.median(durations):.0f} min, "
          f"lag-1 autocorrelation {r[0]:.2f}, lag-50 {r[49]:.2f}")
    hours = [(t.submit % MS_PER_DAY) / 3.6e6 for t in bundle.tasks]
    print(f"submissions between {min(hours):.1f} h and {max(hours):.1f} h UTC")
    start = dt.datetime.fromtimestamp(bundle.start / 1000, dt.timezone.utc).date()
    print(f"trace starts {start}; models are scored on {cfg.training.months}")


if __name__ == "__main__":
    main()
