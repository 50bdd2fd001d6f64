"""Fully dynamic maintenance of a nice clustering.

A clustering is nice when

1. every cluster's average cost is below ``base**level``;
2. each open facility's critical cluster sits at or below its satellites;
3. every client sits at or above its minimum admissible level for its facility;
4. no blocking cluster exists (see :mod:`dynfl.detector`).

Insertions and deletions break at most (1) or (4) locally; :meth:`ClusteringState.fix_clustering`
repairs them, blocking clusters first, then the lowest cluster whose average
is too high.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .cluster import CRITICAL, SATELLITE, Cluster
from .detector import BlockingDetector
from .errors import DuplicateInsertError, InputError, InternalInconsistency, UnknownIdError
from .instance import LevelGeometry, MetricInstance

ORIGIN_INSERT = "insert"
ORIGIN_BLOCKING = "blocking"
ORIGIN_CONVERSION = "conversion"
ORIGIN_LOADED = "loaded"


@dataclass
class RecourseLedger:
    client_recourse: int = 0
    facility_recourse: int = 0
    up_work: int = 0
    down_work: int = 0
    # lifetime up-work per (cluster id, birth level)
    tally: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.client_recourse + self.facility_recourse

    def snapshot(self) -> "RecourseLedger":
        return replace(self, tally=dict(self.tally))

    def counters(self) -> tuple[int, int, int, int]:
        return (self.client_recourse, self.facility_recourse, self.up_work, self.down_work)


@dataclass
class ClusterRecord:
    """Lifetime facts about a cluster, kept after it is removed."""

    id: int
    facility: int
    kind: str
    birth_level: int
    birth_size: int
    origin: str
    opening: float
    up_work: int = 0


class ClusteringState:
    """Nice clustering over the active clients of ``instance``.

    ``assign`` picks the facility a new client joins when some facility is
    open: ``"nearest"`` (nearest open facility) or ``"any"`` (the open
    facility with the lowest id).  ``prefix`` selects which blocking prefix
    is installed: ``"min_average"`` or ``"shortest"``.
    """

    def __init__(self, instance: MetricInstance, geometry: LevelGeometry | None = None,
                 *, assign: str = "nearest", prefix: str = "min_average"):
        if assign not in ("nearest", "any"):
            raise InputError(f"assign must be 'nearest' or 'any', got {assign!r}")
        if prefix not in ("min_average", "shortest"):
            raise InputError(f"prefix must be 'min_average' or 'shortest', got {prefix!r}")
        self.instance = instance
        self.geometry = geometry or LevelGeometry()
        self.assign = assign
        self.prefix = prefix
        self.detector = BlockingDetector(instance, self.geometry)
        self.f = np.asarray(instance.opening_costs, dtype=float)

        self.clusters: dict[int, Cluster] = {}
        self.client_index: dict[int, int] = {}
        self._critical: dict[int, int] = {}
        self._satellites: dict[int, dict[int, set[int]]] = defaultdict(lambda: defaultdict(set))
        self.ledger = RecourseLedger()
        self.history: dict[int, ClusterRecord] = {}
        self.levels_seen: set[int] = set()
        self.iterations = 0
        self._next_id = 0

    # -- structure helpers ------------------------------------------------

    def _new_cluster(self, facility, kind, level, clients, origin) -> Cluster:
        cid = self._next_id
        self._next_id += 1
        opening = float(self.f[facility]) if kind == CRITICAL else 0.0
        c = Cluster(cid, facility, kind, level, clients, opening=opening)
        self.clusters[cid] = c
        for j in c.clients:
            self.client_index[j] = cid
        if kind == CRITICAL:
            if facility in self._critical:
                raise InternalInconsistency(f"facility {facility} already has a critical cluster")
            self._critical[facility] = cid
            self.detector.set_facility(facility, level)
        else:
            self._satellites[facility][level].add(cid)
        self.history[cid] = ClusterRecord(cid, facility, kind, level, len(c), origin, opening)
        self.ledger.tally[(cid, level)] = 0
        self.levels_seen.add(level)
        return c

    def _drop_cluster(self, c: Cluster):
        """Forget ``c``; its clients must already be reassigned or gone."""
        del self.clusters[c.id]
        if c.is_critical:
            del self._critical[c.facility]
        else:
            sats = self._satellites[c.facility]
            sats[c.level].discard(c.id)
            if not sats[c.level]:
                del sats[c.level]
            if not sats:
                del self._satellites[c.facility]

    def _close(self, i: int):
        self.detector.set_facility(i, None)
        self.ledger.facility_recourse += 1

    def _cluster_count(self, i: int) -> int:
        n = 1 if i in self._critical else 0
        sats = self._satellites.get(i)
        if sats:
            n += sum(len(s) for s in sats.values())
        return n

    def critical_of(self, i: int) -> Cluster | None:
        cid = self._critical.get(i)
        return None if cid is None else self.clusters[cid]

    def clusters_of(self, i: int) -> list[Cluster]:
        out = []
        if i in self._critical:
            out.append(self.clusters[self._critical[i]])
        for level in sorted(self._satellites.get(i, {})):
            out.extend(self.clusters[cid] for cid in sorted(self._satellites[i][level]))
        return out

    # -- updates ------------------------------------------------------------

    def insert(self, j: int):
        j = int(j)
        if j in self.client_index:
            raise DuplicateInsertError(f"client {j} is already assigned")
        if not self.instance.is_active(j):
            self.instance.activate(j)
        col = self.instance.distance_column(j)
        if not self._critical:
            i = int(np.argmin(col + self.f))
            level = self.geometry.kappa_star(float(col[i] + self.f[i]))
            self._new_cluster(i, CRITICAL, level, {j: float(col[i])}, ORIGIN_INSERT)
            self.ledger.facility_recourse += 1
        else:
            open_ = np.array(sorted(self._critical))
            i = int(open_[np.argmin(col[open_])]) if self.assign == "nearest" else int(open_[0])
            d = float(col[i])
            kappa = self.geometry.kappa_star(d)
            crit = self.clusters[self._critical[i]]
            if kappa <= crit.level:
                level = crit.level
                crit.add(j, d)
                self.client_index[j] = crit.id
            else:
                level = kappa
                self._new_cluster(i, SATELLITE, kappa, {j: d}, ORIGIN_INSERT)
        self.ledger.client_recourse += 1
        self.detector.on_level_change(j, None, level)
        self.fix_clustering()

    def delete(self, j: int):
        j = int(j)
        cid = self.client_index.pop(j, None)
        if cid is None:
            raise UnknownIdError(f"client {j} is not assigned")
        c = self.clusters[cid]
        c.remove(j)
        self.detector.on_level_change(j, c.level, None)
        self.instance.deactivate(j)
        if not c.is_critical:
            if c.clients:
                raise InternalInconsistency(f"satellite {cid} held more than one client")
            self._drop_cluster(c)
        self.fix_clustering()

    # -- repair loop ----------------------------------------------------------

    def _violator(self) -> Cluster | None:
        """Lowest cluster (by level, facility, id) whose average is too high."""
        best = None
        for cid in self._critical.values():
            c = self.clusters[cid]
            if c.cost_avg() >= self.geometry.threshold(c.level):
                key = (c.level, c.facility, c.id)
                if best is None or key < best[0]:
                    best = (key, c)
        # satellites satisfy the bound by admissibility; the check is a guard
        return None if best is None else best[1]

    def iteration_cap(self) -> int:
        return 64 * (len(self.client_index) + 1) * (len(self.levels_seen) + 1)

    def fix_clustering(self):
        steps = 0
        while True:
            hit = self.detector.scan_all()
            if hit is not None:
                i, k = hit
                self.fix_blocking(self.detector.extract_blocking(i, k, prefix=self.prefix), k)
            else:
                c = self._violator()
                if c is None:
                    self.iterations += steps
                    return
                self.fix_level(c)
            steps += 1
            if steps > self.iteration_cap():
                raise InternalInconsistency(
                    f"repair loop exceeded {self.iteration_cap()} iterations")

    def fix_blocking(self, C: Cluster, k: int):
        if not self.detector.is_blocking(C, k):
            raise InternalInconsistency(f"{C!r} is not blocking at level {k}")
        i = C.facility
        was_open = i in self._critical
        touched: dict[int, Cluster] = {}
        by_level: dict[int, list[int]] = defaultdict(list)
        for j in sorted(C.clients):
            old = self.clusters[self.client_index[j]]
            old.remove(j)
            touched[old.id] = old
            by_level[old.level].append(j)
            self.ledger.down_work += old.level - k
            if old.facility != i:
                self.ledger.client_recourse += 1
        for old_level in sorted(by_level):
            self.detector.on_levels_change(by_level[old_level], old_level, k)

        if C.is_critical and was_open:
            prev = self.clusters[self._critical[i]]
            self._drop_cluster(prev)
            touched.pop(prev.id, None)
            for j in sorted(prev.clients):
                self._new_cluster(i, SATELLITE, prev.level, {j: prev.clients[j]},
                                  ORIGIN_CONVERSION)
        self._new_cluster(i, C.kind, k, C.clients, ORIGIN_BLOCKING)
        if not was_open:
            self.ledger.facility_recourse += 1

        for old in sorted(touched.values(), key=lambda c: c.id):
            if old.clients:
                continue
            if not old.is_critical:
                self._drop_cluster(old)
            elif self._cluster_count(old.facility) == 1:
                self._drop_cluster(old)
                self._close(old.facility)
            # an empty critical with satellites left is lifted by fix_level

    def fix_level(self, C: Cluster):
        i, k = C.facility, C.level
        if not C.clients and self._cluster_count(i) == 1:
            self._drop_cluster(C)
            self._close(i)
            return
        if C.cost_avg() < self.geometry.threshold(k):
            raise InternalInconsistency(f"{C!r} satisfies its level bound")
        if C.is_critical:
            for cid in sorted(self._satellites.get(i, {}).get(k, ())):
                sat = self.clusters[cid]
                self._drop_cluster(sat)
                for j, d in sat.clients.items():
                    C.add(j, d)
                    self.client_index[j] = C.id
        if C.cost_avg() >= self.geometry.threshold(k):
            self.detector.on_levels_change(sorted(C.clients), k, k + 1)
            if not C.is_critical:
                sats = self._satellites[i]
                sats[k].discard(C.id)
                if not sats[k]:
                    del sats[k]
                sats[k + 1].add(C.id)
            C.level = k + 1
            n = len(C)
            self.ledger.up_work += n
            rec = self.history[C.id]
            rec.up_work += n
            self.ledger.tally[(C.id, rec.birth_level)] += n
            self.levels_seen.add(k + 1)
            if C.is_critical:
                self.detector.set_facility(i, k + 1)

    # -- views ------------------------------------------------------------------

    def solution_cost(self) -> float:
        terms = [self.f[i] for i in self._critical]
        for c in self.clusters.values():
            terms.extend(c.clients.values())
        return math.fsum(terms)

    def assignment(self, j: int) -> int:
        cid = self.client_index.get(int(j))
        if cid is None:
            raise UnknownIdError(f"client {j} is not assigned")
        return self.clusters[cid].facility

    def level_of(self, j: int) -> int:
        cid = self.client_index.get(int(j))
        if cid is None:
            raise UnknownIdError(f"client {j} is not assigned")
        return self.clusters[cid].level

    def recourse(self) -> RecourseLedger:
        return self.ledger.snapshot()

    def open_facilities(self) -> list[int]:
        return sorted(self._critical)

    def assignments(self) -> dict[int, int]:
        return {j: self.clusters[cid].facility for j, cid in self.client_index.items()}

    def __len__(self):
        return len(self.client_index)

    # -- arbitrary states -----------------------------------------------------

    @classmethod
    def load(cls, instance: MetricInstance, geometry: LevelGeometry | None, clusters,
             **kwargs) -> "ClusteringState":
        """Build a state from ``(facility, kind, level, client ids)`` tuples without repairing it.

        Only the clustering structure is checked (each client once, one critical
        per used facility); the invariants are left to the caller or the auditor.
        """
        state = cls(instance, geometry, **kwargs)
        seen: set[int] = set()
        for facility, kind, level, members in clusters:
            members = [int(j) for j in members]
            if seen.intersection(members):
                raise InputError("a client appears in two clusters")
            seen.update(members)
            if kind == SATELLITE and len(members) != 1:
                raise InputError("satellite clusters hold exactly one client")
            for j in members:
                if not instance.is_active(j):
                    instance.activate(j)
            dists = {j: float(instance.distance(facility, j)) for j in members}
            state._new_cluster(int(facility), kind, int(level), dists, ORIGIN_LOADED)
            for j in members:
                state.detector.on_level_change(j, None, int(level))
        for i, sats in state._satellites.items():
            if sats and i not in state._critical:
                raise InputError(f"facility {i} has satellites but no critical cluster")
        return state
