"""Facility location instances and the (epsilon, mu) level geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputError, UnknownIdError


class _PowerTable:
    """Powers of a base built by repeated multiplication from exponent 0.

    Every threshold in the package is read from this table so that
    half-open interval tests are decided by the same float values everywhere.
    """

    def __init__(self, base: float):
        self.base = base
        self._pos = [1.0]  # base**e for e >= 0
        self._neg = []  # base**-(e+1)

    def __call__(self, e: int) -> float:
        if e >= 0:
            while len(self._pos) <= e:
                self._pos.append(self._pos[-1] * self.base)
            return self._pos[e]
        idx = -e - 1
        while len(self._neg) <= idx:
            prev = self._neg[-1] if self._neg else 1.0
            self._neg.append(prev / self.base)
        return self._neg[idx]

    def array(self, lo: int, hi: int) -> np.ndarray:
        """Powers for exponents lo..hi inclusive."""
        self(lo)
        self(hi)
        return np.array([self(e) for e in range(lo, hi + 1)])


@lru_cache(maxsize=None)
def _powers(base: float) -> _PowerTable:
    return _PowerTable(base)


@dataclass(frozen=True)
class LevelGeometry:
    """Level grid with base ``1 + epsilon`` and admissible-level offset ``mu``."""

    epsilon: float = 1.0
    mu: int = 3

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if int(self.mu) != self.mu or self.mu < 1:
            raise ValueError(f"mu must be an integer >= 1, got {self.mu!r}")
        object.__setattr__(self, "mu", int(self.mu))

    @property
    def base(self) -> float:
        return 1.0 + self.epsilon

    @property
    def proven_regime(self) -> bool:
        return self.epsilon == 1 and self.mu >= 3

    def threshold(self, k: int) -> float:
        return _powers(self.base)(int(k))

    def bucket(self, d: float) -> int:
        """Index x with base**(x-1) <= d < base**x."""
        if not d > 0:
            raise ValueError(f"distance must be positive, got {d!r}")
        pw = _powers(self.base)
        if math.isinf(d):
            raise ValueError("distance must be finite")
        x = math.floor(math.log(d) / math.log(self.base)) + 1
        while d < pw(x - 1):
            x -= 1
        while d >= pw(x):
            x += 1
        return x

    def kappa_star(self, d: float) -> int:
        """Smallest level at which a client at distance ``d`` may be served."""
        return self.bucket(d) + self.mu

    def buckets(self, d) -> np.ndarray:
        """Vectorised :meth:`bucket`; agrees with it element for element."""
        d = np.asarray(d, dtype=float)
        if d.size == 0:
            return np.zeros(d.shape, dtype=np.int64)
        if not np.all(d > 0) or not np.all(np.isfinite(d)):
            raise ValueError("distances must be positive and finite")
        lb = math.log(self.base)
        lo = math.floor(math.log(float(d.min())) / lb) - 2
        hi = math.floor(math.log(float(d.max())) / lb) + 3
        table = _powers(self.base).array(lo, hi)
        while table[0] > d.min():
            lo -= 4
            table = _powers(self.base).array(lo, hi)
        while table[-1] <= d.max():
            hi += 4
            table = _powers(self.base).array(lo, hi)
        return (lo + np.searchsorted(table, d, side="right")).astype(np.int64)

    def thresholds(self, ks) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.int64)
        if ks.size == 0:
            return np.zeros(ks.shape)
        table = _powers(self.base).array(int(ks.min()), int(ks.max()))
        return table[ks - ks.min()]


PENDING, ACTIVE, DELETED = 0, 1, 2


class MetricInstance:
    """Facilities with opening costs, clients, and a distance oracle.

    Distances come either from an explicit ``(m, n)`` matrix or from L2
    distances between point embeddings plus an additive ``offset``.
    Client ids index the client columns; a deleted id is never reused.
    """

    def __init__(self, opening_costs, *, distances=None, facility_points=None,
                 client_points=None, offset: float = 0.0):
        self.opening_costs = np.asarray(opening_costs, dtype=float).reshape(-1).copy()
        if self.opening_costs.size == 0:
            raise InputError("an instance needs at least one facility")
        if np.any(self.opening_costs < 0) or not np.all(np.isfinite(self.opening_costs)):
            raise InputError("opening costs must be finite and nonnegative")
        self.offset = float(offset)
        m = self.opening_costs.size

        if distances is not None:
            if facility_points is not None or client_points is not None:
                raise InputError("give either a distance matrix or points, not both")
            dist = np.asarray(distances, dtype=float)
            if dist.ndim != 2 or dist.shape[0] != m:
                raise InputError(f"distance matrix must have shape ({m}, n)")
            self._check_positive(dist + self.offset)
            self._matrix = dist.copy()
            self.facility_points = None
            self.client_points = None
            n = dist.shape[1]
        else:
            if facility_points is None:
                raise InputError("facility points are required without a distance matrix")
            fp = np.atleast_2d(np.asarray(facility_points, dtype=float))
            if fp.shape[0] != m:
                raise InputError("one opening cost per facility point is required")
            cp = (np.zeros((0, fp.shape[1])) if client_points is None
                  else np.atleast_2d(np.asarray(client_points, dtype=float)))
            if cp.shape[1] != fp.shape[1]:
                raise InputError("facility and client points differ in dimension")
            self._matrix = None
            self.facility_points = fp
            self.client_points = cp
            n = cp.shape[0]
        self._status = np.full(n, PENDING, dtype=np.int8)
        self._columns: dict[int, np.ndarray] = {}

    @classmethod
    def from_matrix(cls, distances, opening_costs):
        return cls(opening_costs, distances=distances)

    @classmethod
    def from_points(cls, facility_points, client_points, opening_costs, offset=0.0):
        fp = np.atleast_2d(np.asarray(facility_points, dtype=float))
        costs = np.broadcast_to(np.asarray(opening_costs, dtype=float), (fp.shape[0],))
        return cls(costs, facility_points=fp, client_points=client_points, offset=offset)

    @staticmethod
    def _check_positive(dist):
        if not np.all(dist > 0) or not np.all(np.isfinite(dist)):
            raise InputError("all distances must be positive and finite")

    @property
    def m(self) -> int:
        return self.opening_costs.size

    @property
    def n(self) -> int:
        """Number of client ids ever registered (active, pending or deleted)."""
        return self._status.size

    def add_clients(self, data) -> np.ndarray:
        """Register new clients (points, or distance columns of shape (m, k))."""
        data = np.asarray(data, dtype=float)
        if self._matrix is not None:
            data = data.reshape(self.m, -1)
            self._check_positive(data + self.offset)
            self._matrix = np.hstack([self._matrix, data])
            k = data.shape[1]
        else:
            data = np.atleast_2d(data)
            if data.shape[1] != self.facility_points.shape[1]:
                raise InputError("client points differ in dimension from facilities")
            self.client_points = np.vstack([self.client_points, data])
            k = data.shape[0]
        start = self._status.size
        self._status = np.concatenate([self._status, np.full(k, PENDING, dtype=np.int8)])
        return np.arange(start, start + k)

    def _check_client(self, j):
        if not (0 <= j < self._status.size) or int(j) != j:
            raise UnknownIdError(f"unknown client id {j!r}")

    def _check_facility(self, i):
        if not (0 <= i < self.m) or int(i) != i:
            raise UnknownIdError(f"unknown facility id {i!r}")

    def _compute_column(self, j: int) -> np.ndarray:
        if self._matrix is not None:
            col = self._matrix[:, j] + self.offset
        else:
            diff = self.facility_points - self.client_points[j]
            col = np.sqrt(np.einsum("ij,ij->i", diff, diff)) + self.offset
        if not np.all(col > 0):
            raise InputError(f"client {j} has a zero distance; use a positive offset")
        col.setflags(write=False)
        return col

    def distance_column(self, j: int) -> np.ndarray:
        """Distances from every facility to client ``j`` (cached while known)."""
        self._check_client(j)
        col = self._columns.get(j)
        if col is None:
            col = self._compute_column(j)
            if self._status[j] == ACTIVE:
                self._columns[j] = col
        return col

    def distance(self, i: int, j: int) -> float:
        self._check_facility(i)
        self._check_client(j)
        if self._status[j] != ACTIVE:
            raise UnknownIdError(f"client {j} is not active")
        return float(self.distance_column(j)[i])

    def distance_matrix(self, clients) -> np.ndarray:
        clients = list(clients)
        if not clients:
            return np.zeros((self.m, 0))
        return np.column_stack([self.distance_column(j) for j in clients])

    def opening_cost(self, i: int) -> float:
        self._check_facility(i)
        return float(self.opening_costs[i])

    # active-client registry

    def activate(self, j: int):
        self._check_client(j)
        if self._status[j] == ACTIVE:
            raise InputError(f"client {j} is already active")
        if self._status[j] == DELETED:
            raise InputError(f"client {j} was deleted; ids are never reused")
        self._status[j] = ACTIVE
        self._columns[j] = self._compute_column(j)

    def deactivate(self, j: int):
        self._check_client(j)
        if self._status[j] != ACTIVE:
            raise UnknownIdError(f"client {j} is not active")
        self._status[j] = DELETED
        self._columns.pop(j, None)

    def is_active(self, j: int) -> bool:
        return 0 <= j < self._status.size and self._status[j] == ACTIVE

    def active_clients(self) -> list[int]:
        return np.flatnonzero(self._status == ACTIVE).tolist()
