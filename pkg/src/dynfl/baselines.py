"""Static reference algorithms: the minimum-average greedy and nearest facility."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import CRITICAL, SATELLITE
from .instance import MetricInstance


@dataclass
class StaticSolution:
    assignment: dict  # client id -> facility
    open_set: list
    cost: float
    # (facility, kind, client ids, average cost) in selection order
    clusters: list = field(default_factory=list)


def _cost(instance, D, clients, assign_idx, open_set):
    return math.fsum([*instance.opening_costs[list(open_set)],
                      *D[assign_idx, np.arange(len(clients))]])


def static_greedy(instance: MetricInstance, clients=None) -> StaticSolution:
    """Repeatedly take the cluster with minimum average cost until every client is served.

    Candidates are, for each closed facility, its best prefix of unassigned
    clients by distance (paying the opening cost) and, for each open facility,
    its nearest unassigned client.  Ties go to the lower facility id, then
    the smaller cluster.
    """
    clients = instance.active_clients() if clients is None else list(clients)
    m, n = instance.m, len(clients)
    if n == 0:
        return StaticSolution({}, [], 0.0, [])
    D = instance.distance_matrix(clients)
    f = instance.opening_costs
    order = np.argsort(D, axis=1, kind="stable")  # ties by client position
    Dsorted = np.take_along_axis(D, order, axis=1)
    free = np.ones(n, dtype=bool)
    is_open = np.zeros(m, dtype=bool)
    best_open = np.full(n, np.inf)
    best_fac = np.full(n, m, dtype=np.int64)
    assign_idx = np.full(n, -1, dtype=np.int64)
    picked = []

    def best_prefix(i):
        avail = free[order[i]]
        sums = np.cumsum(np.where(avail, Dsorted[i], 0.0))
        counts = np.cumsum(avail)
        avg = np.where(avail, (f[i] + sums) / np.maximum(counts, 1), np.inf)
        p = int(np.argmin(avg))  # first minimum, i.e. the smallest cluster
        return (float(avg[p]), i, int(counts[p])), p

    heap = [best_prefix(i)[0] for i in range(m)]
    heapq.heapify(heap)
    remaining = n
    while remaining:
        crit_key = None
        while heap:
            key = heap[0]
            i = key[1]
            if is_open[i]:
                heapq.heappop(heap)
                continue
            fresh, p = best_prefix(i)
            if fresh == key:
                crit_key = (key, p)
                break
            heapq.heapreplace(heap, fresh)

        cand = np.flatnonzero(free)
        sat_keys = None
        if is_open.any():
            sat_order = np.lexsort((cand, best_fac[cand], best_open[cand]))
            sat_keys = cand[sat_order]
        if sat_keys is not None:
            first = sat_keys[0]
            first_key = (best_open[first], int(best_fac[first]), 1)
            if crit_key is None or first_key < crit_key[0]:
                # satellites do not change other satellite keys and only raise
                # critical keys, so all of them below the best critical go now
                if crit_key is None:
                    take = sat_keys
                else:
                    ck = crit_key[0]
                    keys_ok = [(best_open[j], int(best_fac[j]), 1) < ck for j in sat_keys]
                    take = sat_keys[np.asarray(keys_ok)]
                for j in take:
                    assign_idx[j] = best_fac[j]
                    picked.append((int(best_fac[j]), SATELLITE, [clients[j]], float(best_open[j])))
                free[take] = False
                remaining -= take.size
                continue
        (avg, i, size), p = crit_key
        members = order[i, :p + 1][free[order[i, :p + 1]]]
        heapq.heappop(heap)
        is_open[i] = True
        free[members] = False
        assign_idx[members] = i
        remaining -= members.size
        picked.append((i, CRITICAL, [clients[j] for j in members], avg))
        closer = (D[i] < best_open) | ((D[i] == best_open) & (i < best_fac))
        best_open = np.where(closer, D[i], best_open)
        best_fac = np.where(closer, i, best_fac)

    open_set = sorted(np.flatnonzero(is_open).tolist())
    assignment = {clients[j]: int(assign_idx[j]) for j in range(n)}
    return StaticSolution(assignment, open_set, _cost(instance, D, clients, assign_idx, open_set),
                          picked)


def nearest_facility(instance: MetricInstance, clients=None) -> StaticSolution:
    """Open every facility that is nearest to some client; ties go to the lower id."""
    clients = instance.active_clients() if clients is None else list(clients)
    if not clients:
        return StaticSolution({}, [], 0.0, [])
    D = instance.distance_matrix(clients)
    nearest = np.argmin(D, axis=0)
    open_set = sorted(set(nearest.tolist()))
    assignment = {j: int(i) for j, i in zip(clients, nearest)}
    return StaticSolution(assignment, open_set, _cost(instance, D, clients, nearest, open_set))
