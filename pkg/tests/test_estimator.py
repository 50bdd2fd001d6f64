import numpy as np
import pytest
from sklearn.base import clone

from dynfl import DynamicFacilityLocation, GreedyFacilityLocation, NearestFacilityLocation, audit


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    return rng.normal(size=(8, 2)) * 3, rng.normal(size=(80, 2)) * 3


def test_fit_sets_attributes(data):
    F, X = data
    est = DynamicFacilityLocation(facilities=F).fit(X)
    assert est.labels_.shape == (80,)
    assert set(est.labels_) <= set(est.open_facilities_)
    assert est.cost_ == pytest.approx(est.state_.solution_cost())
    assert est.recourse_.client_recourse >= 80
    assert audit(est.state_).ok


def test_params_and_clone(data):
    F, _ = data
    est = DynamicFacilityLocation(facilities=F, opening_cost=2.0, epsilon=0.5, mu=2)
    params = clone(est).get_params()
    assert params["epsilon"] == 0.5 and params["mu"] == 2 and params["opening_cost"] == 2.0
    est.set_params(assign="any")
    assert est.assign == "any"


def test_partial_fit_and_forget(data):
    F, X = data
    est = DynamicFacilityLocation(facilities=F, opening_cost=5.0).partial_fit(X[:40])
    est.partial_fit(X[40:])
    assert est.client_ids_.tolist() == list(range(80))
    est.forget(range(10))
    assert est.client_ids_.tolist() == list(range(10, 80))
    assert audit(est.state_).ok


def test_predict_uses_open_facilities(data):
    F, X = data
    est = DynamicFacilityLocation(facilities=F).fit(X)
    pred = est.predict(X[:5])
    assert set(pred) <= set(est.open_facilities_)
    # the prediction is the nearest open facility
    open_pts = F[est.open_facilities_]
    d = np.linalg.norm(X[:5, None] - open_pts[None], axis=2)
    assert pred.tolist() == [est.open_facilities_[k] for k in d.argmin(axis=1)]


def test_input_validation(data):
    F, X = data
    with pytest.raises(ValueError):
        DynamicFacilityLocation(facilities=F).fit(np.full((3, 2), np.nan))
    with pytest.raises(ValueError):
        DynamicFacilityLocation(facilities=F).fit(np.ones((3, 3)))
    est = DynamicFacilityLocation(facilities=F).fit(X)
    with pytest.raises(ValueError):
        est.partial_fit(np.ones((2, 5)))
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        DynamicFacilityLocation(facilities=F).predict(X)


@pytest.mark.parametrize("cls", [GreedyFacilityLocation, NearestFacilityLocation])
def test_static_estimators(cls, data):
    F, X = data
    est = cls(facilities=F, opening_cost=4.0).fit(X)
    assert est.labels_.shape == (80,)
    assert set(est.labels_) == set(est.open_facilities_)
    assert est.fit_predict(X).shape == (80,)
