"""Incremental detection of blocking clusters.

A candidate cluster ``(i, A)`` is blocking at level ``k`` when every client of
``A`` sits above ``k``, may be served at ``k`` (its bucket ``x`` satisfies
``x <= k - mu``), and the bucketised average cost, with each distance rounded
up to ``base**x``, is below ``base**(k - mu)``.  Critical candidates pay the
opening cost and need ``k`` at or below every cluster of ``i``; satellite
candidates are singletons and need the critical cluster of ``i`` at or below
``k``.

For a fixed ``(i, k)`` all eligible rounded distances are at most the
threshold ``T``, so a critical blocking cluster exists iff
``sum(T - rounded) > f_i`` over all eligible clients.  The detector keeps,
per facility and level, the count ``N`` and rounded-distance sum ``P`` of
eligible clients, which turns ``scan_all`` into one vectorised pass.  Every
hit from that pass is confirmed by an exact prefix scan over the bucket
matrix before it is reported.
"""

from __future__ import annotations

import numpy as np

from .cluster import CRITICAL, SATELLITE, Cluster
from .errors import InternalInconsistency, UnknownIdError

_REL_TOL = 1e-9


class BucketMatrix:
    """Counters ``W[i, x, y]``: clients at distance bucket ``x`` from facility ``i``
    that currently sit at level ``y``.

    Backed by a dense array that grows on demand; :meth:`entries` gives the
    sparse view (nonzero cells only).
    """

    def __init__(self, m: int):
        self.m = m
        self._x0 = 0
        self._y0 = 0
        self._w = np.zeros((m, 0, 0), dtype=np.int32)

    def _ensure(self, xmin, xmax, ymin, ymax):
        nx, ny = self._w.shape[1], self._w.shape[2]
        if nx and ny and xmin >= self._x0 and xmax < self._x0 + nx \
                and ymin >= self._y0 and ymax < self._y0 + ny:
            return
        if nx == 0 or ny == 0:
            lo_x, hi_x, lo_y, hi_y = xmin - 4, xmax + 5, ymin - 4, ymax + 5
        else:
            lo_x = min(self._x0, xmin - 8)
            hi_x = max(self._x0 + nx, xmax + 9)
            lo_y = min(self._y0, ymin - 8)
            hi_y = max(self._y0 + ny, ymax + 9)
        grown = np.zeros((self.m, hi_x - lo_x, hi_y - lo_y), dtype=np.int32)
        if nx and ny:
            ox, oy = self._x0 - lo_x, self._y0 - lo_y
            grown[:, ox:ox + nx, oy:oy + ny] = self._w
        self._w, self._x0, self._y0 = grown, lo_x, lo_y

    def add(self, xs: np.ndarray, ys, delta: int):
        """Add ``delta`` at ``(i, xs[i, c], ys[c])`` for every facility and column."""
        xs = np.asarray(xs).reshape(self.m, -1)
        ys = np.broadcast_to(np.asarray(ys, dtype=np.int64), (xs.shape[1],))
        if xs.size == 0:
            return
        self._ensure(int(xs.min()), int(xs.max()), int(ys.min()), int(ys.max()))
        rows = np.broadcast_to(np.arange(self.m)[:, None], xs.shape)
        cols = np.broadcast_to(ys[None, :] - self._y0, xs.shape)
        np.add.at(self._w, (rows, xs - self._x0, cols), delta)
        if delta < 0 and self._w.min() < 0:
            raise InternalInconsistency("bucket counter went negative")

    def count(self, i: int, x: int, y: int) -> int:
        xi, yi = x - self._x0, y - self._y0
        if 0 <= xi < self._w.shape[1] and 0 <= yi < self._w.shape[2]:
            return int(self._w[i, xi, yi])
        return 0

    def entries(self, i: int) -> list[tuple[int, int, int]]:
        """Nonzero ``(x, y, count)`` cells of facility ``i`` sorted by ``(x, y)``."""
        xs, ys = np.nonzero(self._w[i])
        return [(int(x) + self._x0, int(y) + self._y0, int(self._w[i, x, y]))
                for x, y in zip(xs, ys)]

    def total(self, i: int) -> int:
        return int(self._w[i].sum())

    def eligible_counts(self, i: int, k: int, mu: int) -> list[tuple[int, int]]:
        """``(x, count)`` over clients above level ``k`` with ``x <= k - mu``."""
        if self._w.shape[1] == 0:
            return []
        ystart = max(k + 1 - self._y0, 0)
        xstop = min(k - mu - self._x0 + 1, self._w.shape[1])
        if xstop <= 0 or ystart >= self._w.shape[2]:
            return []
        counts = self._w[i, :xstop, ystart:].sum(axis=1)
        nz = np.flatnonzero(counts)
        return [(int(x) + self._x0, int(counts[x])) for x in nz]


class BlockingDetector:
    """Tracks client levels and facility status to find blocking clusters."""

    def __init__(self, instance, geometry):
        self.instance = instance
        self.geometry = geometry
        self.m = instance.m
        self.f = np.asarray(instance.opening_costs, dtype=float)
        self.W = BucketMatrix(self.m)

        cap = 16
        self._dist = np.zeros((self.m, cap))
        self._bx = np.zeros((self.m, cap), dtype=np.int64)
        self._bval = np.zeros((self.m, cap))
        self._level = np.zeros(cap, dtype=np.int64)
        self._client = np.full(cap, -1, dtype=np.int64)
        self._slot: dict[int, int] = {}
        self._free = list(range(cap - 1, -1, -1))

        self._k0 = 0
        self._N = np.zeros((self.m, 0), dtype=np.int64)
        self._P = np.zeros((self.m, 0))
        self._S = np.zeros((self.m, 0), dtype=np.int64)

        self._open = np.zeros(self.m, dtype=bool)
        self._crit = np.zeros(self.m, dtype=np.int64)

    # -- bookkeeping -------------------------------------------------------

    def _grow_slots(self):
        cap = self._level.size
        new = cap * 2
        for name in ("_dist", "_bx", "_bval"):
            arr = getattr(self, name)
            grown = np.zeros((self.m, new), dtype=arr.dtype)
            grown[:, :cap] = arr
            setattr(self, name, grown)
        self._level = np.concatenate([self._level, np.zeros(cap, dtype=np.int64)])
        self._client = np.concatenate([self._client, np.full(cap, -1, dtype=np.int64)])
        self._free.extend(range(new - 1, cap - 1, -1))

    def _ensure_levels(self, klo, khi):
        """Make profile columns cover levels ``klo .. khi - 1``."""
        L = self._N.shape[1]
        if L and klo >= self._k0 and khi <= self._k0 + L:
            return
        if L == 0:
            lo, hi = klo - 8, khi + 8
        else:
            lo = min(self._k0, klo - 16)
            hi = max(self._k0 + L, khi + 16)
        off = self._k0 - lo
        for name, dtype in (("_N", np.int64), ("_P", float), ("_S", np.int64)):
            grown = np.zeros((self.m, hi - lo), dtype=dtype)
            if L:
                grown[:, off:off + L] = getattr(self, name)
            setattr(self, name, grown)
        self._k0 = lo

    def _profile(self, slots, klo, khi, sign):
        if khi <= klo or len(slots) == 0:
            return
        self._ensure_levels(klo, khi)
        ks = np.arange(klo, khi)
        thr = self._bx[:, slots] + self.geometry.mu  # (m, s): kappa star
        mask = thr[:, :, None] <= ks[None, None, :]
        c0 = klo - self._k0
        cols = slice(c0, c0 + ks.size)
        self._N[:, cols] += sign * mask.sum(axis=1)
        self._P[:, cols] += sign * (mask * self._bval[:, slots, None]).sum(axis=1)
        self._S[:, cols] += sign * (thr[:, :, None] + 1 <= ks[None, None, :]).sum(axis=1)

    # -- notifications from the engine --------------------------------------

    def set_facility(self, i: int, critical_level):
        """Record the critical level of facility ``i`` (``None`` when closed)."""
        if critical_level is None:
            self._open[i] = False
            self._crit[i] = 0
        else:
            self._open[i] = True
            self._crit[i] = int(critical_level)

    def on_level_change(self, j: int, old_level, new_level):
        if old_level is None and new_level is None:
            return
        if old_level is None:
            if j in self._slot:
                raise InternalInconsistency(f"client {j} is already tracked")
            if not self._free:
                self._grow_slots()
            s = self._free.pop()
            col = self.instance.distance_column(j)
            bx = self.geometry.buckets(col)
            self._slot[j] = s
            self._client[s] = j
            self._dist[:, s] = col
            self._bx[:, s] = bx
            self._bval[:, s] = self.geometry.thresholds(bx)
            self._level[s] = new_level
            self.W.add(bx, new_level, +1)
            self._profile([s], int(bx.min()) + self.geometry.mu, int(new_level), +1)
            return
        s = self._slot.get(j)
        if s is None:
            raise UnknownIdError(f"client {j} is not tracked by the detector")
        if self._level[s] != old_level:
            raise InternalInconsistency(
                f"client {j} is at level {self._level[s]}, not {old_level}")
        if new_level is None:
            self.W.add(self._bx[:, s], old_level, -1)
            self._profile([s], int(self._bx[:, s].min()) + self.geometry.mu,
                          int(old_level), -1)
            del self._slot[j]
            self._client[s] = -1
            self._free.append(s)
            return
        self.on_levels_change([j], old_level, new_level)

    def on_levels_change(self, clients, old_level: int, new_level: int):
        """Move a batch of clients that all sit at ``old_level`` to ``new_level``."""
        clients = list(clients)
        if not clients or old_level == new_level:
            return
        slots = []
        for j in clients:
            s = self._slot.get(j)
            if s is None:
                raise UnknownIdError(f"client {j} is not tracked by the detector")
            if self._level[s] != old_level:
                raise InternalInconsistency(
                    f"client {j} is at level {self._level[s]}, not {old_level}")
            slots.append(s)
        slots = np.asarray(slots)
        self.W.add(self._bx[:, slots], old_level, -1)
        self.W.add(self._bx[:, slots], new_level, +1)
        if new_level > old_level:
            self._profile(slots, old_level, new_level, +1)
        else:
            self._profile(slots, new_level, old_level, -1)
        self._level[slots] = new_level

    def level_of(self, j: int) -> int:
        return int(self._level[self._slot[j]])

    # -- queries ------------------------------------------------------------

    def _kinds(self, i: int, k: int):
        critical_ok = (not self._open[i]) or k <= self._crit[i]
        satellite_ok = bool(self._open[i]) and self._crit[i] <= k
        return critical_ok, satellite_ok

    def exists_blocking(self, i: int, k: int) -> bool:
        """Exact prefix scan of ``W[i]`` for a blocking cluster at level ``k``."""
        mu = self.geometry.mu
        critical_ok, satellite_ok = self._kinds(i, k)
        cells = self.W.eligible_counts(i, k, mu)
        if not cells:
            return False
        if satellite_ok and cells[0][0] <= k - mu - 1:
            return True
        if critical_ok:
            T = self.geometry.threshold(k - mu)
            f = float(self.f[i])
            total, p = 0.0, 0
            for x, c in cells:
                bx = self.geometry.threshold(x)
                for _ in range(c):
                    total += bx
                    p += 1
                    if (f + total) / p < T:
                        return True
        return False

    def _eligible(self, i: int, k: int):
        """Clients above ``k`` servable at ``k`` by ``i``, in ``S(i, k)`` order."""
        active = self._client >= 0
        mask = active & (self._level > k) & (self._bx[i] <= k - self.geometry.mu)
        slots = np.flatnonzero(mask)
        order = np.lexsort((self._client[slots], self._dist[i, slots]))
        return slots[order]

    def neighbors(self, i: int, k: int) -> list[int]:
        """``S(i, k)``: clients above level ``k`` by increasing distance to ``i``."""
        active = self._client >= 0
        slots = np.flatnonzero(active & (self._level > k))
        order = np.lexsort((self._client[slots], self._dist[i, slots]))
        return self._client[slots[order]].tolist()

    def extract_blocking(self, i: int, k: int, prefix: str = "shortest"):
        """Blocking cluster at ``(i, k)`` whose clients form a prefix of ``S(i, k)``.

        ``prefix`` picks the shortest qualifying prefix or the one with the
        smallest bucketised average.  When both kinds qualify the satellite
        candidate is returned.
        """
        mu = self.geometry.mu
        critical_ok, satellite_ok = self._kinds(i, k)
        slots = self._eligible(i, k)
        if slots.size:
            if satellite_ok:
                near = slots[self._bx[i, slots] <= k - mu - 1]
                if near.size:
                    s = int(near[0])
                    j = int(self._client[s])
                    return Cluster(-1, i, SATELLITE, k, {j: float(self._dist[i, s])})
            if critical_ok:
                T = self.geometry.threshold(k - mu)
                f = float(self.f[i])
                avg = (f + np.cumsum(self._bval[i, slots])) / np.arange(1, slots.size + 1)
                hits = np.flatnonzero(avg < T)
                if hits.size:
                    p = int(hits[0]) + 1 if prefix == "shortest" else int(np.argmin(avg)) + 1
                    chosen = slots[:p]
                    members = {int(self._client[s]): float(self._dist[i, s]) for s in chosen}
                    true_avg = (f + sum(members.values())) / p
                    if not true_avg < T:
                        raise InternalInconsistency("rounded-up cluster is not blocking")
                    return Cluster(-1, i, CRITICAL, k, members, opening=f)
        raise InternalInconsistency(f"no blocking cluster at facility {i}, level {k}")

    def is_blocking(self, cluster, k: int) -> bool:
        """Definition check for a proposed cluster under rounded-up distances."""
        i = cluster.facility
        members = sorted(cluster.clients)
        if not members:
            return False
        mu = self.geometry.mu
        critical_ok, satellite_ok = self._kinds(i, k)
        total = 0.0
        xs = []
        for j in members:
            s = self._slot.get(j)
            if s is None or self._level[s] <= k or self._bx[i, s] > k - mu:
                return False
            xs.append(int(self._bx[i, s]))
        xs.sort()
        for x in xs:
            total += self.geometry.threshold(x)
        T = self.geometry.threshold(k - mu)
        if cluster.kind == SATELLITE:
            return satellite_ok and len(members) == 1 and total < T
        return critical_ok and (float(self.f[i]) + total) / len(members) < T

    def candidates(self):
        """Boolean ``(m, L)`` mask of profile cells that may hold a blocking cluster,
        with the level of column 0."""
        L = self._N.shape[1]
        if L == 0:
            return np.zeros((self.m, 0), dtype=bool), self._k0
        ks = np.arange(self._k0, self._k0 + L)
        T = self.geometry.thresholds(ks - self.geometry.mu)[None, :]
        gain = T * self._N - self._P
        tol = _REL_TOL * (self.f[:, None] + T * self._N + np.abs(self._P)) + 1e-12
        crit_ok = (~self._open[:, None]) | (ks[None, :] <= self._crit[:, None])
        sat_ok = self._open[:, None] & (ks[None, :] >= self._crit[:, None])
        critical = (self._N > 0) & crit_ok & (gain + tol > self.f[:, None])
        satellite = (self._S > 0) & sat_ok
        return critical | satellite, self._k0

    def scan_all(self):
        """Lowest level, then lowest facility, holding a blocking cluster."""
        cand, k0 = self.candidates()
        if not cand.any():
            return None
        cols = np.flatnonzero(cand.any(axis=0))
        for c in cols:
            k = int(k0 + c)
            for i in np.flatnonzero(cand[:, c]):
                if self.exists_blocking(int(i), k):
                    return int(i), k
        return None

    def level_range(self):
        """(lowest servable level, highest client level) over tracked clients."""
        active = self._client >= 0
        if not active.any():
            return None
        lo = int(self._bx[:, active].min()) + self.geometry.mu
        hi = int(self._level[active].max())
        return lo, hi
