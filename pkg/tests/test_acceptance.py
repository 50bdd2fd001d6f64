"""Acceptance criteria, each at its stated tolerance; one summary line per criterion."""

import time

import numpy as np
import pytest

from conftest import record_criterion
from dynfl import ClusteringState, LevelGeometry, audit, build_dual, check_certificate, exact_opt
from dynfl.cli import main
from dynfl.cluster import CRITICAL
from dynfl.engine import ORIGIN_BLOCKING
from dynfl.harness import (StreamSpec, build_instance, calibrate_costs, compare_runs, run,
                           split_facilities, synthetic_points, update_stream)
from dynfl.verification import oracle_sweep

PROVEN = LevelGeometry(1.0, 3)


def apply(state, op, j):
    (state.insert if op == "insert" else state.delete)(j)


def churn_instance(seed):
    m = 4 + seed % 17
    n_points = 520 + m
    points = synthetic_points(n_points, clusters=3 + seed % 5, seed=seed)
    fraction = m / n_points
    fac, clients = split_facilities(points, fraction, seed)
    scale = (1.0, 0.1, 0.01)[seed % 3]
    cost = calibrate_costs(fac, clients, 1.0 / n_points) * scale
    return build_instance(points, fraction, seed, np.full(m, cost))


def test_criteria_1_and_2_niceness_and_certificate():
    t0 = time.perf_counter()
    failures, cert_failures, ratio_failures = [], [], []
    worst_ratio, updates, states = 0.0, 0, 0
    for seed in range(50):
        inst = churn_instance(seed)
        assert inst.m <= 20 and inst.n == 520
        state = ClusteringState(inst, PROVEN)
        for op, j in update_stream(inst.n, 40, seed):
            apply(state, op, j)
            updates += 1
            report = audit(state)
            if not report.ok:
                failures.append((seed, updates, str(report)))
            check = check_certificate(state, build_dual(state))
            if not (check.feasible and check.primal_ok):
                cert_failures.append((seed, updates, check))
            if inst.m <= 8 and len(state):
                ratio = check.primal / exact_opt(inst).cost
                worst_ratio = max(worst_ratio, ratio)
                if ratio > 1024:
                    ratio_failures.append((seed, updates, ratio))
            states += 1
    elapsed = time.perf_counter() - t0
    ok1 = record_criterion(1, not failures,
                           f"{updates} audited updates over 50 seeds, {len(failures)} failed "
                           f"audits, {elapsed:.1f} s total (audits, certificates and exact optima)")
    ok2 = record_criterion(2, not cert_failures and not ratio_failures,
                           f"{states} certified states, {len(cert_failures)} certificate failures, "
                           f"max primal/OPT on m<=8 = {worst_ratio:.4f} (bound 1024)")
    assert ok1, failures[:3]
    assert ok2, (cert_failures[:3], ratio_failures[:3])


def test_criterion_3_recourse_bound():
    details, bad = [], []
    for seed in range(10):
        points = synthetic_points(5125, clusters=8, seed=100 + seed)
        inst = build_instance(points, 25 / 5125, seed)
        state = ClusteringState(inst, PROVEN)
        ops = update_stream(inst.n, 200, seed)
        for op, j in ops:
            apply(state, op, j)
        t, lam = len(ops), len(state.levels_seen)
        total = state.ledger.total
        if t != 10_000 or total > t * (1 + 4 * lam):
            bad.append((seed, "recourse", total, t * (1 + 4 * lam)))
        for rec in state.history.values():
            if rec.origin != ORIGIN_BLOCKING:
                continue
            if rec.up_work > rec.opening / 2.0 ** (rec.birth_level - 2):
                bad.append((seed, "up-work", rec))
            if rec.kind == CRITICAL and rec.birth_size < rec.opening / 2.0 ** (rec.birth_level - 3):
                bad.append((seed, "creation size", rec))
        details.append(total / (t * (1 + 4 * lam)))
    ok = record_criterion(3, not bad, f"10 seeds x 10000 updates, worst recourse/bound = "
                                      f"{max(details):.4f}, {len(bad)} accounting violations")
    assert ok, bad[:3]


def test_criterion_4_detector_oracle():
    agree, pairs, first = oracle_sweep(500, seed=2024)
    ok = record_criterion(4, agree == 500,
                          f"{agree}/500 random states agree with subset search")
    assert ok, first


@pytest.fixture(scope="module")
def comparison_runs():
    points = synthetic_points(2000, clusters=10, seed=0)
    spec = StreamSpec(window=400, fraction=0.05, seed=0)
    geom = LevelGeometry(0.05, 3)
    return {alg: run(points, spec, alg, geom) for alg in ("nice", "greedy-off", "nearest")}


def test_criterion_5_greedy_off_parity(comparison_runs):
    cmp = compare_runs(comparison_runs["nice"], comparison_runs["greedy-off"])
    ok = record_criterion(5, 0.90 <= cmp.phi <= 1.10,
                          f"phi(nice, greedy-off) = {cmp.phi:.4f} in [0.90, 1.10], "
                          f"psi = {cmp.psi:.4f}")
    assert ok


def test_criterion_6_cheaper_than_nearest(comparison_runs):
    cmp = compare_runs(comparison_runs["nice"], comparison_runs["nearest"])
    ok = record_criterion(6, cmp.phi < 1, f"phi(nice, nearest) = {cmp.phi:.4f} < 1, "
                                          f"psi = {cmp.psi:.4f}")
    assert ok


def test_criterion_7_determinism(tmp_path):
    def strip_usec(path):
        rows = [line.split(",") for line in path.read_text().splitlines()]
        usec = rows[0].index("usec")
        return [[cell for k, cell in enumerate(row) if k != usec] for row in rows]

    same = []
    for alg in ("nice", "greedy-off", "nearest"):
        args = ["run", "--synthetic", "n=800,clusters=6", "--facility-fraction", "0.05",
                "--window", "120", "--seed", "7", "--algorithm", alg, "--mu", "3",
                "--epsilon", "0.05"]
        a, b = tmp_path / f"{alg}-a.csv", tmp_path / f"{alg}-b.csv"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        same.append(strip_usec(a) == strip_usec(b))
    ok = record_criterion(7, all(same), "repeated runs of nice, greedy-off and nearest are "
                                        "byte-identical apart from the usec column")
    assert ok
