import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rulepress.config import FitSettings
from rulepress.dataio import from_arrays
from rulepress.validate import auc, cross_validate, friedman1_mean, gen_friedman1


class MeanStub:
    """Predicts the training mean."""

    def __init__(self, train, settings):
        self.mean = float(train.y.mean())

    def predict(self, data, scale="response"):
        return np.full(data.n_rows, self.mean)


def test_auc_examples():
    assert auc([.9, .8, .3, .1], [1, 1, 0, 0]) == 1.0
    assert auc([.9, .3, .8, .1], [1, 1, 0, 0]) == 0.75
    assert auc([.4, .4, .4, .4], [1, 0, 1, 0]) == 0.5
    with pytest.raises(ValueError):
        auc([.1, .2], [1, 1])


@given(st.lists(st.integers(-20, 20), min_size=4, max_size=30), st.integers(0, 1000))
def test_auc_monotone_invariance(scores, seed):
    labels = np.random.default_rng(seed).integers(0, 2, len(scores))
    labels[:2] = [0, 1]
    s = np.asarray(scores, dtype=float)
    assert auc(np.exp(s) * 3 + 1, labels) == pytest.approx(auc(s, labels), abs=1e-12)


def test_friedman_closed_form():
    assert friedman1_mean([[.5] * 6])[0] == pytest.approx(10 * math.sqrt(2) / 2 + 7.5)
    assert friedman1_mean([[.5] * 6])[0] == pytest.approx(14.5711, abs=1e-4)
    x = np.random.default_rng(0).uniform(size=(5, 5))
    x[:, 2] = .5
    expected = 10 * np.sin(np.pi * x[:, 0] * x[:, 1]) + 10 * x[:, 3] + 5 * x[:, 4]
    np.testing.assert_allclose(friedman1_mean(x), expected)
    a, b = gen_friedman1(30, 7, seed=3), gen_friedman1(30, 7, seed=3)
    np.testing.assert_array_equal(a.y, b.y)
    with pytest.raises(ValueError):
        gen_friedman1(10, 4)


def test_noiseless_friedman_matches_mean():
    d = gen_friedman1(20, 5, noise_sd=0.0, seed=1)
    X = np.column_stack([d.numeric(f"x{j}") for j in range(1, 6)])
    np.testing.assert_allclose(d.y, friedman1_mean(X))


def test_mean_stub_on_six_rows():
    y = np.array([1.0, 4.0, 2.0, 8.0, 5.0, 7.0])
    d = from_arrays(np.arange(6.0)[:, None], y=y)
    rep = cross_validate(FitSettings(), d, k=3, seed=2, fit=MeanStub)
    per_fold = []
    for f in range(1, 4):
        held = rep.folds == f
        ybar = y[~held].mean()
        per_fold.append(np.sum((y[held] - ybar) ** 2) / held.sum())
    assert rep.metrics["MSE"][0] == pytest.approx(np.mean(per_fold), abs=1e-12)
    assert rep.metrics["MSE"][1] == pytest.approx(np.std(per_fold, ddof=1) / math.sqrt(3), abs=1e-12)
    assert set(rep.metrics) == {"MSE", "MAE"}


def test_leave_one_out():
    d = from_arrays(np.arange(10.0)[:, None], y=np.arange(10.0) ** 2)
    rep = cross_validate(FitSettings(), d, k=10, fit=MeanStub)
    assert sorted(rep.folds) == list(range(1, 11))
    y = d.y
    errs = [(y[i] - np.delete(y, i).mean()) ** 2 for i in range(10)]
    assert rep.metrics["MSE"][1] == pytest.approx(np.std(errs, ddof=1) / math.sqrt(10))


def test_poisoned_holdout_does_not_leak():
    d = gen_friedman1(60, 5, seed=4)
    s = FitSettings(ntrees=10, nfolds=3, seed=1)
    base = cross_validate(s, d, k=4, seed=9)
    i = int(np.flatnonzero(base.folds == 2)[0])
    y = d.y.copy()
    y[i] += 1000.0
    poisoned = cross_validate(s, d.with_response(y), k=4, seed=9)
    assert poisoned.predictions[i] == base.predictions[i]
    again = cross_validate(s, d, k=4, seed=9)
    np.testing.assert_array_equal(again.predictions, base.predictions)


def test_binomial_report(tmp_path):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(80, 2))
    y = (x[:, 0] + rng.normal(scale=.5, size=80) > 0).astype(float)
    d = from_arrays(x, y=y)
    rep = cross_validate(FitSettings(family="binomial", ntrees=10, nfolds=3), d, k=4, seed=0)
    assert {"deviance", "misclassification", "AUC"} <= set(rep.metrics)
    assert np.all((rep.predictions > 0) & (rep.predictions < 1))
    for f in range(1, 5):
        assert set(y[rep.folds == f]) == {0.0, 1.0}
    out = json.loads(rep.to_json())
    assert out["k"] == 4 and "value" in out["metrics"]["AUC"]
    rep.write_predictions(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "row_id,fold,observed,prediction" and len(lines) == 81
