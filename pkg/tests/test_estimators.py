import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from evsiting.cases import case9
from evsiting.choice import UtilityTable
from evsiting.estimators import ACPowerFlow, BertrandPricer, MultiStagePlanner, NestedLogitChoice, apply_overrides
from evsiting._validation import ValidationError
from helpers import full_placement


def test_params_and_clone():
    est = MultiStagePlanner(w=3.0, delay_max=0.2, threads=2)
    params = est.get_params()
    assert params["w"] == 3.0 and params["delay_max"] == 0.2 and params["threads"] == 2
    copy = clone(est)
    assert copy.get_params() == params and copy is not est
    est.set_params(w=7.0)
    assert est.w == 7.0
    assert clone(NestedLogitChoice(sigma=[0.5])).sigma == [0.5]


def test_nested_logit_estimator():
    table = UtilityTable([[1.0, 0.0, -1.0], [0.0, 2.0, 0.5]], [0, 0, 1], [0.5, 1.0], [-1.0, -2.0], True)
    est = NestedLogitChoice()
    with pytest.raises(NotFittedError):
        est.predict_proba(table)
    proba = est.fit(table).predict_proba(table)
    assert proba.shape == (2, 4)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert list(est.predict(table)) == [0, 1]
    inside = NestedLogitChoice(outside_good=False).fit(table).predict_proba(table)
    assert inside.shape == (2, 3)
    assert est.price_gradient(table, 0).shape == (2, 3)
    with pytest.raises(ValidationError):
        est.fit("not a table")


def test_power_flow_estimator():
    est = ACPowerFlow().fit(case9())
    assert est.converged_ and est.n_iter_ <= 20
    assert est.vm_.shape == (9,)


def test_pricer(toy):
    est = BertrandPricer(ev_count=80).fit(toy)
    prices = est.predict(full_placement(toy))
    assert prices.shape == (3,) and np.all(prices > 0)
    assert est.equilibrium(full_placement(toy)).converged


def test_planner_fit_predict(toy):
    est = MultiStagePlanner(monte_carlo_runs=1).fit(toy)
    assert len(est.stage_results_) == len(toy.stages)
    assert est.predict().shape == (3, toy.n_sites)
    assert np.array_equal(est.predict(), np.array(est.stage_results_[-1].policies))


def test_overrides_validate(toy):
    assert apply_overrides(toy, w=None).planner == toy.planner
    assert apply_overrides(toy, seed=5).seed == 5
    with pytest.raises(ValidationError):
        apply_overrides(toy, monte_carlo_runs=0)
    with pytest.raises(ValidationError):
        MultiStagePlanner(delay_max=1.5).fit(toy)
