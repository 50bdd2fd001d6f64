"""Sliding-window benchmark runs over point sets.

A run samples a fraction of the points as facilities, calibrates a uniform
opening cost, permutes the remaining points, and slides a window over them:
the first ``window`` points are inserted, then each step deletes the oldest
active point and inserts the next one.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from .baselines import nearest_facility, static_greedy
from .engine import ClusteringState
from .errors import AuditFailure, InputError
from .instance import LevelGeometry, MetricInstance
from .verification import audit, build_dual, check_certificate

ALGORITHMS = ("nice", "greedy-off", "nearest")
HEADER = ("idx", "op", "cost", "client_recourse", "facility_recourse", "open", "usec", "warmup")


# -- inputs --------------------------------------------------------------------------

def ingest(path) -> np.ndarray:
    """Read one point per line of comma-separated decimals."""
    rows = []
    dim = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise InputError(f"{path}: line {lineno}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise InputError(f"{path}: line {lineno}: non-finite coordinate")
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise InputError(
                    f"{path}: line {lineno}: expected {dim} coordinates, got {len(values)}")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no points")
    return np.array(rows, dtype=float)


def synthetic_points(n: int, clusters: int = 10, dim: int = 2, seed: int = 0,
                     spread: float = 20.0) -> np.ndarray:
    """Seeded Gaussian mixture with unit-variance components."""
    if n < 1 or clusters < 1 or dim < 1:
        raise InputError("synthetic data needs n, clusters and dim >= 1")
    rng = np.random.default_rng([seed, 7])
    centers = rng.uniform(-spread, spread, size=(clusters, dim))
    labels = rng.integers(0, clusters, size=n)
    return centers[labels] + rng.normal(size=(n, dim))


def parse_synthetic(text: str) -> dict:
    """Parse ``n=<N>,clusters=<K>[,dim=<D>]``."""
    out = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in ("n", "clusters", "dim"):
            raise InputError(f"bad synthetic config {text!r}; use n=<N>,clusters=<K>")
        try:
            out[key] = int(value)
        except ValueError:
            raise InputError(f"bad synthetic config {text!r}: {value!r} is not an integer") from None
    if "n" not in out:
        raise InputError("synthetic config needs n=<N>")
    return out


def split_facilities(points, fraction: float, seed: int):
    """Seeded uniform sample of ``round(fraction * len(points))`` facilities."""
    points = np.asarray(points, dtype=float)
    if not 0 < fraction < 1:
        raise InputError(f"facility fraction must be in (0, 1), got {fraction}")
    count = int(round(fraction * len(points)))
    if count < 1:
        raise InputError(f"fraction {fraction} of {len(points)} points yields no facility")
    if count >= len(points):
        raise InputError("no clients left after sampling facilities")
    rng = np.random.default_rng([seed, 1])
    chosen = np.zeros(len(points), dtype=bool)
    chosen[rng.choice(len(points), size=count, replace=False)] = True
    return points[chosen], points[~chosen]


def nearest_distances(facilities, clients, offset: float = 0.0) -> np.ndarray:
    fac = np.atleast_2d(np.asarray(facilities, dtype=float))
    cl = np.atleast_2d(np.asarray(clients, dtype=float))
    best = np.full(len(cl), np.inf)
    for p in fac:
        diff = cl - p
        best = np.minimum(best, np.sqrt(np.einsum("ij,ij->i", diff, diff)))
    return best + offset


def calibrate_costs(facilities, clients, offset: float = 0.0) -> float:
    """100 times the lower median of client distances to their nearest facility."""
    if len(facilities) == 0 or len(clients) == 0:
        raise InputError("calibration needs at least one facility and one client")
    d = np.sort(nearest_distances(facilities, clients, offset))
    return 100.0 * float(d[(len(d) - 1) // 2])


def load_costs(path, m: int) -> np.ndarray:
    """Per-facility opening costs, one value per line, in facility sample order."""
    rows = ingest(path)
    if rows.shape[1] != 1 or rows.shape[0] != m:
        raise InputError(f"{path}: expected {m} single-value lines of opening costs")
    if np.any(rows < 0):
        raise InputError(f"{path}: opening costs must be nonnegative")
    return rows[:, 0]


# -- update streams ----------------------------------------------------------------

@dataclass(frozen=True)
class StreamSpec:
    window: int = 1000
    fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise InputError("window must be at least 1")
        if not 0 < self.fraction < 1:
            raise InputError(f"facility fraction must be in (0, 1), got {self.fraction}")


def update_stream(n: int, window: int, seed: int):
    """``(op, client)`` pairs for a sliding window over a seeded permutation of ``range(n)``."""
    if window < 1 or window > n:
        raise InputError(f"window must be in [1, {n}], got {window}")
    perm = np.random.default_rng([seed, 2]).permutation(n)
    ops = [("insert", int(j)) for j in perm[:window]]
    for t in range(window, n):
        ops.append(("delete", int(perm[t - window])))
        ops.append(("insert", int(perm[t])))
    return ops


# -- drivers ---------------------------------------------------------------------------

class NiceDriver:
    def __init__(self, instance, geometry, **kwargs):
        self.state = ClusteringState(instance, geometry, **kwargs)

    def apply(self, op, j):
        (self.state.insert if op == "insert" else self.state.delete)(j)

    def metrics(self):
        led = self.state.ledger
        return (self.state.solution_cost(), led.client_recourse, led.facility_recourse,
                len(self.state.open_facilities()))


class _StaticDriver:
    """Recompute a static solution after every update and diff consecutive ones."""

    solver = None

    def __init__(self, instance, geometry=None):
        self.instance = instance
        self.active: set[int] = set()
        self.assignment: dict = {}
        self.open: set = set()
        self.cost = 0.0
        self.client_recourse = 0
        self.facility_recourse = 0

    def apply(self, op, j):
        if op == "insert":
            self.instance.activate(j)
            self.active.add(j)
            self.client_recourse += 1
        else:
            self.instance.deactivate(j)
            self.active.discard(j)
        sol = type(self).solver(self.instance, sorted(self.active))
        self.client_recourse += sum(1 for c, i in sol.assignment.items()
                                    if c in self.assignment and self.assignment[c] != i)
        self.facility_recourse += len(self.open.symmetric_difference(sol.open_set))
        self.assignment = sol.assignment
        self.open = set(sol.open_set)
        self.cost = sol.cost

    def metrics(self):
        return self.cost, self.client_recourse, self.facility_recourse, len(self.open)


class GreedyOffDriver(_StaticDriver):
    solver = staticmethod(static_greedy)


class NearestDriver(_StaticDriver):
    solver = staticmethod(nearest_facility)


DRIVERS = {"nice": NiceDriver, "greedy-off": GreedyOffDriver, "nearest": NearestDriver}


# -- runs -------------------------------------------------------------------------------

@dataclass
class RunRecord:
    idx: int
    op: str
    cost: float
    client_recourse: int
    facility_recourse: int
    open: int
    usec: int
    warmup: int


def parse_audit(policy: str) -> int:
    """Audit period: 0 for none, 1 for all, N for every:N."""
    if policy == "none":
        return 0
    if policy == "all":
        return 1
    if policy.startswith("every:"):
        try:
            n = int(policy[len("every:"):])
        except ValueError:
            n = 0
        if n >= 1:
            return n
    raise InputError(f"audit policy must be none, all or every:<N>, got {policy!r}")


def audit_state(state):
    """Raise :class:`AuditFailure` unless the state is nice (and certified when provable)."""
    report = audit(state)
    if not report.ok:
        raise AuditFailure(report)
    if state.geometry.proven_regime:
        check = check_certificate(state, build_dual(state))
        if not check.ok:
            raise AuditFailure(check, f"certificate check failed: {check}")
    return report


def build_instance(points, fraction: float, seed: int, costs=None):
    fac, clients = split_facilities(points, fraction, seed)
    offset = 1.0 / len(points)
    if costs is None:
        costs = np.full(len(fac), calibrate_costs(fac, clients, offset))
    else:
        costs = np.broadcast_to(np.asarray(costs, dtype=float), (len(fac),))
    return MetricInstance.from_points(fac, clients, costs, offset=offset)


def run(points, spec: StreamSpec, algorithm: str = "nice", geometry: LevelGeometry | None = None,
        audit_policy: str = "none", costs=None, instance: MetricInstance | None = None,
        **engine_kwargs) -> list[RunRecord]:
    """Drive one algorithm over the sliding-window stream; one record per update.

    ``instance`` replaces the sampled one (its clients are streamed in id
    order of the permutation).  Audits apply to the ``nice`` algorithm only.
    """
    window, seed = spec.window, spec.seed
    if algorithm not in DRIVERS:
        raise InputError(f"algorithm must be one of {', '.join(ALGORITHMS)}")
    period = parse_audit(audit_policy)
    geometry = geometry or LevelGeometry()
    if instance is None:
        instance = build_instance(points, spec.fraction, seed, costs)
    driver = (NiceDriver(instance, geometry, **engine_kwargs) if algorithm == "nice"
              else DRIVERS[algorithm](instance))
    records = []
    for idx, (op, j) in enumerate(update_stream(instance.n, window, seed)):
        t0 = time.perf_counter_ns()
        driver.apply(op, j)
        usec = (time.perf_counter_ns() - t0) // 1000
        if period and algorithm == "nice" and (idx + 1) % period == 0:
            audit_state(driver.state)
        cost, cr, fr, n_open = driver.metrics()
        records.append(RunRecord(idx, op, cost, cr, fr, n_open, usec, int(idx < window)))
    return records


def write_records(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in records:
            w.writerow([r.idx, r.op, repr(float(r.cost)), r.client_recourse,
                        r.facility_recourse, r.open, r.usec, r.warmup])


def read_records(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(HEADER[:7]) - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(RunRecord(int(row["idx"]), row["op"], float(row["cost"]),
                                     int(row["client_recourse"]), int(row["facility_recourse"]),
                                     int(row["open"]), int(row["usec"]),
                                     int(row.get("warmup") or 0)))
            except (TypeError, ValueError):
                raise InputError(f"{path}: line {lineno}: malformed record") from None
    return out


@dataclass
class Comparison:
    phi: float  # mean cost ratio A / B
    psi: float  # mean (recourse A + 1) / (recourse B + 1)


def compare_runs(a, b) -> Comparison:
    if len(a) != len(b):
        raise InputError(f"runs differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise InputError("cannot compare empty runs")
    ratios, rec = [], []
    for ra, rb in zip(a, b):
        if ra.cost == rb.cost:
            ratios.append(1.0)
        else:
            ratios.append(ra.cost / rb.cost if rb.cost else math.inf)
        ta = ra.client_recourse + ra.facility_recourse
        tb = rb.client_recourse + rb.facility_recourse
        rec.append((ta + 1) / (tb + 1))
    return Comparison(math.fsum(ratios) / len(ratios), math.fsum(rec) / len(rec))

