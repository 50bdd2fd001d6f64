"""scikit-learn style wrappers around the dynamic and static algorithms."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .baselines import nearest_facility, static_greedy
from .engine import ClusteringState
from .harness import calibrate_costs
from .instance import LevelGeometry, MetricInstance


class _FacilityBase(ClusterMixin, BaseEstimator):
    def _make_instance(self, X):
        F = check_array(self.facilities, ensure_min_samples=1)
        if F.shape[1] != X.shape[1]:
            raise ValueError(f"facilities have {F.shape[1]} features, X has {X.shape[1]}")
        offset = self.offset if self.offset is not None else 1.0 / (len(F) + len(X))
        if self.opening_cost is None:
            costs = np.full(len(F), calibrate_costs(F, X, offset))
        else:
            costs = np.broadcast_to(np.asarray(self.opening_cost, dtype=float), (len(F),))
        return MetricInstance.from_points(F, np.zeros((0, F.shape[1])), costs, offset=offset)

    def predict(self, X):
        """Index of the nearest open facility for each row of ``X``."""
        check_is_fitted(self, "open_facilities_")
        X = check_array(X)
        F = check_array(self.facilities)[self.open_facilities_]
        d = np.linalg.norm(X[:, None, :] - F[None, :, :], axis=2)
        return np.asarray(self.open_facilities_)[np.argmin(d, axis=1)]


class DynamicFacilityLocation(_FacilityBase):
    """Facility location maintained under client insertions and deletions.

    Parameters
    ----------
    facilities : array-like of shape (m, n_features)
        Candidate facility locations.
    opening_cost : float, array-like of shape (m,) or None
        Opening costs; ``None`` calibrates a uniform cost from the first batch.
    epsilon, mu : level geometry (base ``1 + epsilon``, admissibility offset ``mu``).
    offset : float or None
        Added to every distance so none is zero; ``None`` uses ``1 / n_points``.
    assign : {"nearest", "any"}
        Facility a new client joins when some facility is open.

    ``fit`` starts from scratch, ``partial_fit`` inserts more clients and
    ``forget`` deletes clients by the ids in ``client_ids_``.
    """

    def __init__(self, facilities=None, opening_cost=None, epsilon=1.0, mu=3, offset=None,
                 assign="nearest"):
        self.facilities = facilities
        self.opening_cost = opening_cost
        self.epsilon = epsilon
        self.mu = mu
        self.offset = offset
        self.assign = assign

    def fit(self, X, y=None):
        X = check_array(X)
        instance = self._make_instance(X)
        self.state_ = ClusteringState(instance, LevelGeometry(self.epsilon, self.mu),
                                      assign=self.assign)
        self.n_features_in_ = X.shape[1]
        return self._insert(X)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "state_"):
            return self.fit(X)
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self._insert(X)

    def forget(self, ids):
        """Delete previously inserted clients by id."""
        check_is_fitted(self, "state_")
        for j in np.atleast_1d(ids):
            self.state_.delete(int(j))
        return self._refresh()

    def _insert(self, X):
        for j in self.state_.instance.add_clients(X):
            self.state_.insert(int(j))
        return self._refresh()

    def _refresh(self):
        s = self.state_
        assignment = s.assignments()
        self.client_ids_ = np.array(sorted(assignment), dtype=np.int64)
        self.labels_ = np.array([assignment[j] for j in self.client_ids_], dtype=np.int64)
        self.cost_ = s.solution_cost()
        self.open_facilities_ = s.open_facilities()
        self.recourse_ = s.recourse()
        return self


class _StaticFacilityLocation(_FacilityBase):
    solver = None

    def __init__(self, facilities=None, opening_cost=None, offset=None):
        self.facilities = facilities
        self.opening_cost = opening_cost
        self.offset = offset

    def fit(self, X, y=None):
        X = check_array(X)
        instance = self._make_instance(X)
        ids = instance.add_clients(X)
        for j in ids:
            instance.activate(int(j))
        sol = type(self).solver(instance)
        self.n_features_in_ = X.shape[1]
        self.labels_ = np.array([sol.assignment[int(j)] for j in ids], dtype=np.int64)
        self.cost_ = sol.cost
        self.open_facilities_ = list(sol.open_set)
        return self


class GreedyFacilityLocation(_StaticFacilityLocation):
    """Static minimum-average-cost greedy."""

    solver = staticmethod(static_greedy)


class NearestFacilityLocation(_StaticFacilityLocation):
    """Open the nearest facility of every client."""

    solver = staticmethod(nearest_facility)
