import datetime as dt
from dataclasses import replace

import numpy as np
import pytest

from voltsim.analysis import acf
from voltsim.core import MS_PER_DAY, MS_PER_HOUR, validate_trace
from voltsim.predictors.metrics import ZeroVariance
from voltsim.preprocess import month_start
from voltsim.tracegen import (BurstSpec, FleetSpec, GeneratorSpec, InfeasibleRates,
                              SeasonalitySpec, gen_interactive, gen_reboots, gen_tasks,
                              generate_bundle)

FLEET = FleetSpec(cluster_count=2, machines_per_cluster=10).build(0)
SPAN = (month_start(2009, 9), month_start(2009, 9) + 26 * 7 * MS_PER_DAY)
PLAIN = SeasonalitySpec(class_booking=0.0, weekend_multiplier=1.0, out_of_term_multiplier=1.0,
                        logins_per_day=2.0, session_median_min=10.0, session_sigma=0.3,
                        occupancy_ceiling=1.0)


def logins_per_day(sessions, spec):
    days = np.array([(s.login - SPAN[0]) // MS_PER_DAY for s in sessions])
    counts = np.bincount(days, minlength=(SPAN[1] - SPAN[0]) // MS_PER_DAY)
    start = dt.date(2009, 9, 1)
    dates = [start + dt.timedelta(days=int(k)) for k in range(len(counts))]
    return counts, dates


def test_weekend_multiplier_zero():
    spec = replace(PLAIN, weekend_multiplier=0.0)
    counts, dates = logins_per_day(gen_interactive(FLEET, spec, SPAN, seed=1), spec)
    assert all(c == 0 for c, d in zip(counts, dates) if d.weekday() >= 5)
    assert counts.sum() > 0


def test_term_multiplier_doubles_daily_mean():
    spec = replace(PLAIN, term_multiplier=2.0, out_of_term_multiplier=1.0)
    counts, dates = logins_per_day(gen_interactive(FLEET, spec, SPAN, seed=2), spec)
    in_term = np.array([spec.calendar.locate(d)[0] > 0 for d in dates])
    ratio = counts[in_term].mean() / counts[~in_term].mean()
    assert ratio == pytest.approx(2.0, rel=0.1)


def test_sessions_are_valid_and_deterministic():
    spec = SeasonalitySpec()
    a = gen_interactive(FLEET, spec, SPAN, seed=3)
    assert validate_trace(a) == []
    assert a == gen_interactive(FLEET, spec, SPAN, seed=3)
    assert a != gen_interactive(FLEET, spec, SPAN, seed=4)


def test_timetable_puts_classes_on_term_weekdays():
    spec = replace(SeasonalitySpec(), logins_per_day=0.0, class_booking=1.0)
    sessions = gen_interactive(FLEET, spec, SPAN, seed=5)
    for s in sessions:
        d = dt.datetime.fromtimestamp(s.login / 1000, dt.timezone.utc).date()
        assert d.weekday() < 5 and spec.calendar.locate(d)[0] > 0


def test_infeasible_rates():
    spec = replace(SeasonalitySpec(), logins_per_day=200.0)
    with pytest.raises(InfeasibleRates):
        gen_interactive(FLEET, spec, SPAN)


def test_short_span_rejected():
    with pytest.raises(ValueError):
        gen_interactive(FLEET, SeasonalitySpec(), (SPAN[0], SPAN[0] + 10 * MS_PER_DAY))


class TestTasks:
    def test_deterministic_and_sorted(self):
        a = gen_tasks(BurstSpec(), SPAN, seed=1)
        assert a == gen_tasks(BurstSpec(), SPAN, seed=1)
        assert [t.submit for t in a] == sorted(t.submit for t in a)
        assert all(SPAN[0] <= t.submit < SPAN[1] and t.duration > 0 for t in a)

    def test_two_regime_bursts_have_signed_acf(self):
        spec = BurstSpec(bursts_per_day=0.2, fixed_burst_size=1000, regime_order="cycle",
                         burst_sigma=0.1, within_sigma=0.2)
        d = np.array([t.duration for t in gen_tasks(spec, SPAN, seed=2)], dtype=float)
        r = acf(d, 1500)
        assert r[:10].min() > 0
        assert r[990:1010].mean() < 0

    def test_constant_single_burst_has_no_acf(self):
        spec = BurstSpec(bursts_per_day=0.0, fixed_burst_size=50, regimes=((30.0, 1.0),),
                         burst_sigma=0.0, within_sigma=0.0)
        d = [t.duration for t in gen_tasks(spec, SPAN, seed=3)]
        with pytest.raises(ZeroVariance):
            acf(d, 5)


class TestReboots:
    week = (month_start(2010, 1), month_start(2010, 1) + 7 * MS_PER_DAY)

    def test_nightly(self):
        r = gen_reboots(FLEET, 24 * MS_PER_HOUR, self.week)
        assert all(len(v) == 7 for v in r.values())

    def test_weekly(self):
        span = (self.week[0], self.week[0] + 28 * MS_PER_DAY)
        r = gen_reboots(FLEET, 7 * 24 * MS_PER_HOUR, span)
        assert all(len(v) == 4 for v in r.values())

    def test_offset_clusters_are_disjoint(self):
        r = gen_reboots(FLEET, 24 * MS_PER_HOUR, self.week, cluster_offset_ms=MS_PER_HOUR)
        a, b = (set(v) for v in r.values())
        assert a and b and not a & b


def test_default_bundle_scale():
    b = generate_bundle(GeneratorSpec(), seed=0)
    assert len(b.fleet.machines) == 50
    assert 7000 <= len(b.tasks) <= 14000
    assert validate_trace(b.sessions) == []
    assert generate_bundle(GeneratorSpec(), seed=0).sessions == b.sessions


def test_bursts_start_inside_the_submit_window():
    spec = BurstSpec(submit_hours=(9.0, 17.0), submit_spread_min=0.0, burst_size_mean=1.0,
                     burst_size_sigma=0.0)
    hours = [(t.submit % MS_PER_DAY) / MS_PER_HOUR for t in gen_tasks(spec, SPAN, seed=4)]
    assert min(hours) >= 9 and max(hours) < 17
    assert np.histogram(hours, bins=8, range=(9, 17))[0].min() > 0.8 * len(hours) / 8


def test_submit_window_validation():
    with pytest.raises(ValueError):
        BurstSpec(submit_hours=(20.0, 8.0))
    with pytest.raises(ValueError):
        gen_tasks(BurstSpec(submit_hours=(9.0, 10.0)), (SPAN[0], SPAN[0] + MS_PER_HOUR))
