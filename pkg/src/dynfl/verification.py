"""Independent checks of a maintained clustering.

Nothing here goes through the incremental detector: the auditor recomputes
every quantity from the distance oracle and the level geometry.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .cluster import CRITICAL, SATELLITE
from .detector import BlockingDetector
from .errors import InputError
from .instance import LevelGeometry, MetricInstance

REL_TOL = 1e-9
ABS_TOL = 1e-12


def _leq(a: float, b: float) -> bool:
    return a <= b + max(REL_TOL * max(abs(a), abs(b)), ABS_TOL)


# -- auditor -------------------------------------------------------------------

CHECKS = ("clustering", "inv1", "inv2", "inv3", "inv4", "satellite_bound")


@dataclass
class AuditReport:
    results: dict = field(default_factory=dict)  # check name -> (passed, witness)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return all(passed for passed, _ in self.results.values())

    def failures(self) -> dict:
        return {k: w for k, (p, w) in self.results.items() if not p}

    def __str__(self):
        if self.ok:
            return f"audit passed ({len(self.results)} checks, {self.elapsed * 1e3:.1f} ms)"
        return "audit failed: " + "; ".join(f"{k}: {w}" for k, w in self.failures().items())


def _sorted_clusters(state):
    return sorted(state.clusters.values(), key=lambda c: (c.level, c.facility, c.id))


def _check_clustering(state):
    active = set(state.instance.active_clients())
    owner = {}
    for c in state.clusters.values():
        for j in c.clients:
            if j in owner:
                return f"client {j} is in clusters {owner[j]} and {c.id}"
            owner[j] = c.id
            if state.client_index.get(j) != c.id:
                return f"client index disagrees for client {j}"
            if c.clients[j] != state.instance.distance(c.facility, j):
                return f"stale distance for client {j} in cluster {c.id}"
        if c.kind == SATELLITE and len(c.clients) != 1:
            return f"satellite {c.id} holds {len(c.clients)} clients"
    if set(owner) != active:
        missing = sorted(active - set(owner))
        extra = sorted(set(owner) - active)
        return f"unassigned active clients {missing[:5]} / inactive assigned {extra[:5]}"
    per_facility = {}
    for c in state.clusters.values():
        per_facility.setdefault(c.facility, []).append(c)
    for i, cs in per_facility.items():
        crit = [c.id for c in cs if c.kind == CRITICAL]
        if len(crit) != 1:
            return f"facility {i} has critical clusters {crit}"
    return None


def _check_inv1(state, geom):
    for c in _sorted_clusters(state):
        avg = math.inf if not c.clients else (
            math.fsum([c.opening, *c.clients.values()]) / len(c.clients))
        if not avg < geom.threshold(c.level):
            return f"cluster {c.id} (facility {c.facility}, level {c.level}) has average {avg}"
    return None


def _check_inv2(state):
    crit_level = {c.facility: c.level for c in state.clusters.values() if c.kind == CRITICAL}
    for c in _sorted_clusters(state):
        if c.facility in crit_level and c.level < crit_level[c.facility]:
            return (f"cluster {c.id} at level {c.level} is below the critical cluster "
                    f"of facility {c.facility} at {crit_level[c.facility]}")
    return None


def _check_inv3(state, geom):
    rows = [(c.level, c.facility, c.id, j) for c in state.clusters.values() for j in c.clients]
    if not rows:
        return None
    rows.sort()
    level, fac, _, js = (np.array(col) for col in zip(*rows))
    d = state.instance.distance_matrix(js)[fac, np.arange(len(js))]
    kappa = geom.buckets(d) + geom.mu
    bad = np.flatnonzero(kappa > level)
    if bad.size:
        k = bad[0]
        return f"client {js[k]} at level {level[k]} below its minimum level {kappa[k]}"
    return None


def _facility_levels(state):
    return {c.facility: c.level for c in state.clusters.values() if c.kind == CRITICAL}


def find_blocking(instance: MetricInstance, geom: LevelGeometry, levels: dict,
                  critical_levels: dict):
    """Exhaustive prefix search for a blocking cluster under rounded-up distances.

    ``levels`` maps active clients to levels; ``critical_levels`` maps each open
    facility to the level of its critical cluster.  Returns the lowest
    ``(level, facility)`` witness or ``None``.
    """
    hits = blocking_pairs(instance, geom, levels, critical_levels, first_only=True)
    return hits[0] if hits else None


def blocking_pairs(instance, geom, levels, critical_levels, first_only=False):
    """All ``(level, facility)`` pairs holding a blocking cluster, lowest level first."""
    clients = sorted(levels)
    if not clients:
        return []
    mu, m = geom.mu, instance.m
    D = instance.distance_matrix(clients)
    X = geom.buckets(D)
    Y = np.array([levels[j] for j in clients], dtype=np.int64)
    order = np.argsort(X, axis=1, kind="stable")
    Xs = np.take_along_axis(X, order, axis=1)
    Ys = Y[order]
    Vs = geom.thresholds(Xs)
    ks = np.arange(int(X.min()) + mu, int(Y.max()))
    if ks.size == 0:
        return []
    T = geom.thresholds(ks - mu)[:, None, None]
    kk = ks[:, None, None]
    elig = (Ys[None] > kk) & (Xs[None] <= kk - mu)  # (L, m, n)
    # cumsum is sequential, so each prefix sum matches a running total
    sums = np.cumsum(np.where(elig, Vs[None], 0.0), axis=2)
    counts = np.cumsum(elig, axis=2)
    f = instance.opening_costs[None, :, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        below = elig & ((f + sums) / np.maximum(counts, 1) < T)
    crit = np.array([critical_levels.get(i, np.iinfo(np.int64).max) for i in range(m)])
    is_open = np.array([i in critical_levels for i in range(m)])
    critical_ok = (~is_open[None, :]) | (ks[:, None] <= crit[None, :])
    satellite_ok = is_open[None, :] & (crit[None, :] <= ks[:, None])
    near = (elig & (Xs[None] <= kk - mu - 1)).any(axis=2)
    hit = (critical_ok & below.any(axis=2)) | (satellite_ok & near)
    out = [(int(ks[a]), int(i)) for a, i in zip(*np.nonzero(hit))]
    return out[:1] if first_only else out


def _check_inv4(state, geom):
    levels = {j: state.clusters[cid].level for j, cid in state.client_index.items()}
    hit = find_blocking(state.instance, geom, levels, _facility_levels(state))
    if hit is None:
        return None
    return f"blocking cluster at facility {hit[1]}, level {hit[0]}"


def _check_satellite_bound(state, geom):
    # a satellite with its critical strictly below must not be blocking one level down
    crit = _facility_levels(state)
    for c in _sorted_clusters(state):
        if c.kind != SATELLITE or crit.get(c.facility, c.level) > c.level - 1:
            continue
        (j,) = c.clients
        x = geom.bucket(state.instance.distance(c.facility, j))
        if geom.threshold(x) < geom.threshold(c.level - 1 - geom.mu):
            return f"satellite {c.id} (client {j}) is close enough to block at level {c.level - 1}"
    return None


def audit(state) -> AuditReport:
    t0 = time.perf_counter()
    geom = state.geometry
    report = AuditReport()
    problem = _check_clustering(state)
    report.results["clustering"] = (problem is None, problem)
    if problem is None:
        for name, fn in (("inv1", lambda: _check_inv1(state, geom)),
                         ("inv2", lambda: _check_inv2(state)),
                         ("inv3", lambda: _check_inv3(state, geom)),
                         ("inv4", lambda: _check_inv4(state, geom)),
                         ("satellite_bound", lambda: _check_satellite_bound(state, geom))):
            w = fn()
            report.results[name] = (w is None, w)
    report.elapsed = time.perf_counter() - t0
    return report


# -- dual certificate ------------------------------------------------------------

SIGMA = 2.0 ** 10


@dataclass
class DualCertificate:
    clients: list
    alpha: np.ndarray
    beta: np.ndarray  # (m, len(clients))
    sigma: float = SIGMA


@dataclass
class CertificateCheck:
    feasible: bool
    primal: float
    dual_sum: float
    facility_slack: float  # min_i f_i - sum_j beta_ij
    primal_ok: bool

    @property
    def ok(self) -> bool:
        return self.feasible and self.primal_ok


def build_dual(state) -> DualCertificate:
    if not state.geometry.proven_regime:
        raise InputError("the dual certificate needs epsilon = 1 and mu >= 3")
    clients = sorted(state.client_index)
    alpha = np.array([2.0 ** state.clusters[state.client_index[j]].level for j in clients])
    D = state.instance.distance_matrix(clients)
    beta = np.maximum(0.0, alpha[None, :] / SIGMA - D)
    return DualCertificate(clients, alpha, beta, SIGMA)


def check_certificate(state, cert: DualCertificate) -> CertificateCheck:
    inst = state.instance
    D = inst.distance_matrix(cert.clients)
    f = inst.opening_costs
    ahat = cert.alpha / cert.sigma
    feasible = True
    slack = math.inf
    for i in range(inst.m):
        load = math.fsum(cert.beta[i])
        slack = min(slack, f[i] - load)
        feasible &= _leq(load, float(f[i]))
    if cert.clients:
        lhs = ahat[None, :] - cert.beta
        tol = np.maximum(REL_TOL * np.maximum(np.abs(lhs), D), ABS_TOL)
        feasible &= bool(np.all(lhs <= D + tol))
        feasible &= bool(np.all(cert.beta >= 0))
    primal = state.solution_cost()
    dual_sum = math.fsum(cert.alpha)
    return CertificateCheck(bool(feasible), primal, dual_sum, float(slack), _leq(primal, dual_sum))


# -- exact optimum -----------------------------------------------------------------

MAX_EXACT_FACILITIES = 20


@dataclass
class ExactResult:
    cost: float
    open_set: tuple


def exact_opt(instance: MetricInstance, clients=None) -> ExactResult:
    """Optimal cost over all facility subsets, clients going to their nearest open facility."""
    m = instance.m
    if m > MAX_EXACT_FACILITIES:
        raise InputError(f"exact_opt enumerates subsets; m = {m} exceeds {MAX_EXACT_FACILITIES}")
    clients = instance.active_clients() if clients is None else list(clients)
    if not clients:
        return ExactResult(0.0, ())
    D = instance.distance_matrix(clients)
    f = instance.opening_costs
    bits = 1 << np.arange(m)
    chunk = max(1, (1 << 22) // (m * len(clients)))
    best_cost, best_mask = math.inf, 0
    total = 1 << m
    for start in range(1, total, chunk):
        masks = np.arange(start, min(start + chunk, total))
        member = (masks[:, None] & bits[None, :]) != 0  # (s, m)
        opening = member.astype(float) @ f
        conn = np.where(member[:, :, None], D[None, :, :], np.inf).min(axis=1).sum(axis=1)
        cost = opening + conn
        a = int(np.argmin(cost))
        if cost[a] < best_cost:
            best_cost, best_mask = float(cost[a]), int(masks[a])
    open_set = tuple(i for i in range(m) if best_mask >> i & 1)
    idx = list(open_set)
    exact = math.fsum([*f[idx], *D[idx].min(axis=0)])
    return ExactResult(exact, open_set)


# -- detector oracle -------------------------------------------------------------------

MAX_ORACLE_CLIENTS = 12


def subset_blocking(instance, geom, levels, critical_levels, i, k) -> bool:
    """Exhaustive search over all client subsets for a blocking cluster at ``(i, k)``."""
    mu = geom.mu
    cand = [j for j in sorted(levels) if levels[j] > k]
    if not cand:
        return False
    xs = np.array([geom.bucket(instance.distance(i, j)) for j in cand])
    ok = xs <= k - mu
    xs = xs[ok]
    if xs.size == 0:
        return False
    vals = geom.thresholds(xs)
    T = geom.threshold(k - mu)
    crit = critical_levels.get(i)
    if crit is not None and crit <= k and np.any(vals < T):
        return True
    if crit is None or k <= crit:
        e = vals.size
        masks = np.arange(1, 1 << e)
        member = (masks[:, None] >> np.arange(e)[None, :]) & 1
        sizes = member.sum(axis=1)
        sums = member.astype(float) @ vals
        return bool(np.any((float(instance.opening_costs[i]) + sums) / sizes < T))
    return False


def equivalence_mismatches(detector: BlockingDetector, levels: dict, critical_levels: dict):
    """Pairs ``(i, k)`` where the detector and subset search disagree.

    Also fails a pair when an extracted cluster is not blocking or is not a
    prefix of the eligible clients ordered by distance.
    """
    if len(levels) > MAX_ORACLE_CLIENTS:
        raise InputError(f"oracle search is limited to {MAX_ORACLE_CLIENTS} clients")
    inst, geom = detector.instance, detector.geometry
    if not levels:
        return []
    xmin = min(int(geom.buckets(inst.distance_column(j)).min()) for j in levels)
    ks = range(xmin + geom.mu - 1, max(levels.values()) + 2)
    bad = []
    for k, i in product(ks, range(inst.m)):
        expected = subset_blocking(inst, geom, levels, critical_levels, i, k)
        got = detector.exists_blocking(i, k)
        if expected != got:
            bad.append((i, k, expected, got))
            continue
        if got:
            for prefix in ("shortest", "min_average"):
                c = detector.extract_blocking(i, k, prefix=prefix)
                if not _valid_extraction(inst, geom, levels, critical_levels, c, k):
                    bad.append((i, k, "extraction", prefix))
    return bad


def _valid_extraction(inst, geom, levels, critical_levels, c, k) -> bool:
    i, mu = c.facility, geom.mu
    T = geom.threshold(k - mu)
    elig = [j for j in levels if levels[j] > k and geom.bucket(inst.distance(i, j)) <= k - mu]
    elig.sort(key=lambda j: (inst.distance(i, j), j))
    members = sorted(c.clients, key=lambda j: (inst.distance(i, j), j))
    crit = critical_levels.get(i)
    if c.kind == SATELLITE:
        if crit is None or crit > k or len(members) != 1:
            return False
        j = members[0]
        return j in elig and geom.threshold(geom.bucket(inst.distance(i, j))) < T
    if elig[:len(members)] != members or not (crit is None or k <= crit):
        return False
    rounded = math.fsum(geom.threshold(geom.bucket(inst.distance(i, j))) for j in members)
    true = math.fsum(inst.distance(i, j) for j in members)
    f = float(inst.opening_costs[i])
    return (f + rounded) / len(members) < T and (f + true) / len(members) < T


def detector_equivalence(state) -> bool:
    levels = {j: state.clusters[cid].level for j, cid in state.client_index.items()}
    return not equivalence_mismatches(state.detector, levels, _facility_levels(state))


def random_detector_state(rng: np.random.Generator, points=None, max_clients=MAX_ORACLE_CLIENTS,
                          geometry: LevelGeometry | None = None):
    """A detector holding arbitrary client levels and facility states.

    Returns ``(detector, levels, critical_levels)``.  Facility and client
    locations are drawn from ``points`` when given, else uniformly from a box.
    """
    geom = geometry or LevelGeometry(1.0, 3)
    m = int(rng.integers(1, 5))
    n = int(rng.integers(1, max_clients + 1))
    if points is not None and len(points) >= m + n:
        pick = rng.choice(len(points), size=m + n, replace=False)
        fp, cp = points[pick[:m]], points[pick[m:]]
    else:
        fp = rng.uniform(0, 8, size=(m, 2))
        cp = rng.uniform(0, 8, size=(n, 2))
    f = rng.choice([0.0, 0.5, 1.0, 2.0, 4.0, 10.0], size=m) * rng.uniform(0.5, 2.0, size=m)
    inst = MetricInstance.from_points(fp, cp, f, offset=0.01)
    det = BlockingDetector(inst, geom)
    levels = {}
    for j in range(n):
        inst.activate(j)
        lo = int(geom.buckets(inst.distance_column(j)).min()) + geom.mu
        levels[j] = lo + int(rng.integers(0, 6))
        det.on_level_change(j, None, levels[j])
    # churn a few levels so the incremental paths are exercised
    for j in rng.choice(n, size=min(n, 3), replace=False):
        j = int(j)
        new = levels[j] + int(rng.integers(-2, 3))
        det.on_level_change(j, levels[j], new)
        levels[j] = new
    crit = {}
    lo = min(levels.values()) - 1
    for i in range(m):
        if rng.random() < 0.6:
            crit[i] = lo + int(rng.integers(0, 8))
        det.set_facility(i, crit.get(i))
    return det, levels, crit


def oracle_sweep(trials: int, seed: int = 0, points=None, max_clients=MAX_ORACLE_CLIENTS):
    """Run the detector against subset search on ``trials`` random states.

    Returns ``(agreeing_states, pairs_checked, first_mismatch)``.
    """
    rng = np.random.default_rng(seed)
    agree, pairs, first = 0, 0, None
    for t in range(trials):
        det, levels, crit = random_detector_state(rng, points, max_clients)
        bad = equivalence_mismatches(det, levels, crit)
        pairs += det.m
        if bad:
            first = first or (t, bad[0])
        else:
            agree += 1
    return agree, pairs, first
