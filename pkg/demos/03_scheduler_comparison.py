"""Energy and waiting time of every scheduler on the same workload.

Runs the whole pipeline into a workspace directory: generate, split at
reboots, train monthly, replay the target months under each scheduler,
and tabulate.  Random placement is the baseline; Crystal knows the future
and so bounds what any predictor could achieve.

    python demos/03_scheduler_comparison.py --out /tmp/voltsim-demo [--quick]

The default configuration takes several minutes on one core.  ``--quick``
scores a single month instead of five.
"""

import argparse
from dataclasses import replace
from pathlib import Path

from voltsim import pipeline
from voltsim.config import Config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()

    cfg = Config()
    if args.quick:
        cfg = replace(cfg, training=replace(cfg.training, months="2010-03:2010-03"))
    tables = pipeline.run_all(cfg, args.out)

    comparison = tables["comparison"].set_index("scheduler")
    print(comparison.round(4).to_string())
    print()
    print(tables["relative"].set_index("scheduler").to_string())

    # the tables round to 0.01 MWh, which is coarse at this scale; use the raw reports
    reports = pipeline.load_reports(args.out / "sim")
    base = reports["random"]
    print("\nrelative to random placement:")
    for name, doc in sorted(reports.items()):
        if name.startswith("ml:"):
            cut = 100 * (1 - doc["wastedMWh"] / base["wastedMWh"])
            extra = 100 * (doc["meanOverheadMinutes"] / base["meanOverheadMinutes"] - 1)
            print(f"  {name:13s} {cut:5.1f}% less wasted energy, overhead {extra:+5.1f}%")
    print(f"\nreports and tables are under {args.out}")


if __name__ == "__main__":
    main()
