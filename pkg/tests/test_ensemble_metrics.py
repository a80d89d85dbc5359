import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from voltsim.predictors.ensemble import (FOREST, MLP, EnsembleKind, MissingHistory,
                                         choose_model, ensemble_combine)
from voltsim.predictors.metrics import ZeroVariance, mse, r2


@pytest.mark.parametrize("kind, expected", [
    (EnsembleKind.MAX, 12), (EnsembleKind.MIN, 10), (EnsembleKind.AVERAGE, 11)])
def test_pointwise_rules(kind, expected):
    assert ensemble_combine(kind, 10, 12) == expected


def test_last_month_follows_lower_mse():
    hist = [{FOREST: 4.0, MLP: 9.0}]
    assert ensemble_combine(EnsembleKind.LAST_MONTH, 1.0, 2.0, hist) == 1.0


def test_best_on_average_uses_mean_mse():
    hist = [{FOREST: 4.0, MLP: 5.0}, {FOREST: 6.0, MLP: 3.0}]
    assert choose_model(EnsembleKind.BEST_ON_AVERAGE, hist) == MLP
    assert choose_model(EnsembleKind.LAST_MONTH, hist) == MLP
    assert choose_model(EnsembleKind.LAST_MONTH, hist[:1]) == FOREST


def test_nan_months_are_skipped():
    hist = [{FOREST: 1.0, MLP: 2.0}, {FOREST: math.nan, MLP: 0.5}]
    assert choose_model(EnsembleKind.LAST_MONTH, hist) == FOREST


def test_missing_history():
    assert ensemble_combine(EnsembleKind.LAST_MONTH, 2.0, 4.0, []) == 3.0
    with pytest.raises(MissingHistory):
        ensemble_combine(EnsembleKind.BEST_ON_AVERAGE, 2.0, 4.0, [], fallback=False)


@given(st.lists(st.tuples(st.floats(-1e12, 1e12), st.floats(-1e12, 1e12)), min_size=1, max_size=50))
def test_ordering(pairs):
    rf, mlp = np.array(pairs).T
    lo = ensemble_combine(EnsembleKind.MIN, rf, mlp)
    mid = ensemble_combine(EnsembleKind.AVERAGE, rf, mlp)
    hi = ensemble_combine(EnsembleKind.MAX, rf, mlp)
    assert np.all(lo <= mid) and np.all(mid <= hi)


class TestMetrics:
    def test_perfect(self):
        assert mse([1, 2, 3], [1, 2, 3]) == 0 and r2([1, 2, 3], [1, 2, 3]) == 1

    def test_mean_prediction(self):
        assert r2([1, 2, 3], [2, 2, 2]) == 0

    def test_hand_arithmetic(self):
        assert mse([1, 2, 3], [1, 2, 5]) == pytest.approx(4 / 3)
        assert r2([1, 2, 3], [1, 2, 5]) == pytest.approx(-1)

    def test_matches_sklearn(self):
        from sklearn.metrics import mean_squared_error, r2_score

        rng = np.random.default_rng(0)
        a, p = rng.normal(size=50), rng.normal(size=50)
        assert mse(a, p) == pytest.approx(mean_squared_error(a, p))
        assert r2(a, p) == pytest.approx(r2_score(a, p))

    def test_errors(self):
        with pytest.raises(ZeroVariance):
            r2([2, 2], [1, 2])
        with pytest.raises(ValueError):
            mse([], [])
        with pytest.raises(ValueError):
            mse([1, 2], [1])
