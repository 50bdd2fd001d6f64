import numpy as np
import pytest

from dynfl import CRITICAL, SATELLITE, BlockingDetector, Cluster, LevelGeometry, MetricInstance
from dynfl.errors import InternalInconsistency, UnknownIdError
from dynfl.verification import (blocking_pairs, equivalence_mismatches, oracle_sweep,
                                random_detector_state, subset_blocking)

GEOM = LevelGeometry(1.0, 3)


def make(distances, costs, levels, critical=None):
    inst = MetricInstance.from_matrix(np.asarray(distances, dtype=float), costs)
    det = BlockingDetector(inst, GEOM)
    for j, y in enumerate(levels):
        inst.activate(j)
        det.on_level_change(j, None, y)
    for i, lvl in (critical or {}).items():
        det.set_facility(i, lvl)
    return inst, det


def test_insert_touches_bucket_of_every_facility():
    inst, det = make([[1.0], [3.0], [0.3]], [1, 1, 1], [7])
    assert det.W.entries(0) == [(1, 7, 1)]
    assert det.W.entries(1) == [(2, 7, 1)]
    assert det.W.entries(2) == [(-1, 7, 1)]


def test_level_move_conserves_counts():
    inst, det = make([[1.0, 2.0], [5.0, 0.5]], [1, 1], [4, 4])
    det.on_level_change(0, 4, 5)
    for i in range(2):
        assert det.W.total(i) == 2
    assert det.W.count(0, 1, 5) == 1 and det.W.count(0, 1, 4) == 0


def test_delete_drops_one_count_per_facility():
    inst, det = make([[1.0, 2.0], [5.0, 0.5]], [1, 1], [4, 6])
    det.on_level_change(1, 6, None)
    assert [det.W.total(i) for i in range(2)] == [1, 1]


def test_inconsistent_old_level():
    inst, det = make([[1.0]], [1], [4])
    with pytest.raises(InternalInconsistency):
        det.on_level_change(0, 5, 6)
    with pytest.raises(UnknownIdError):
        det.on_level_change(3, 4, 5)
    with pytest.raises(InternalInconsistency):
        det.on_level_change(0, None, 4)


def two_client_state():
    # facility 1 is closed, f=2, both clients at d=1 and level 6
    return make([[9.0, 9.0], [1.0, 1.0]], [50.0, 2.0], [6, 6], {0: 6})


def test_exists_blocking_two_client_example():
    inst, det = two_client_state()
    levels, crit = {0: 6, 1: 6}, {0: 6}
    assert det.exists_blocking(1, 5)
    assert subset_blocking(inst, GEOM, levels, crit, 1, 5)
    assert not det.exists_blocking(1, 4)
    assert not subset_blocking(inst, GEOM, levels, crit, 1, 4)


def test_no_clients_above_level():
    inst, det = two_client_state()
    assert not det.exists_blocking(1, 6)
    assert not det.exists_blocking(1, 9)


def test_extract_two_client_example():
    inst, det = two_client_state()
    for prefix in ("shortest", "min_average"):
        c = det.extract_blocking(1, 5, prefix=prefix)
        assert c.kind == CRITICAL and sorted(c.clients) == [0, 1]
        assert det.is_blocking(c, 5)


def test_extract_satellite():
    # critical of facility 0 at level 3; a client at level 6 with rounded distance 1 < 2
    inst, det = make([[0.5, 0.1]], [4.0], [6, 3], {0: 3})
    c = det.extract_blocking(0, 4)
    assert c.kind == SATELLITE and list(c.clients) == [0]
    assert not det.exists_blocking(0, 3)  # needs bucket <= -1 at level 3
    assert det.scan_all() == (0, 4)


def test_extract_without_blocking_raises():
    inst, det = two_client_state()
    with pytest.raises(InternalInconsistency):
        det.extract_blocking(1, 4)


def test_shortest_and_min_average_prefixes_differ():
    # rounded distances 1, 1, 4, 4 and f=0.5: averages 1.5, 1.25, 2.17, 2.5 against 4
    inst, det = make([[0.6, 0.7, 3.0, 3.5]], [0.5], [9, 9, 9, 9])
    short = det.extract_blocking(0, 5, prefix="shortest")
    best = det.extract_blocking(0, 5, prefix="min_average")
    assert sorted(short.clients) == [0]
    assert sorted(best.clients) == [0, 1]
    for c in (short, best):
        assert det.is_blocking(c, 5)


def test_is_blocking_rejects():
    inst, det = two_client_state()
    assert not det.is_blocking(Cluster(-1, 1, CRITICAL, 4, {0: 1.0, 1: 1.0}, opening=2.0), 4)
    assert not det.is_blocking(Cluster(-1, 1, CRITICAL, 6, {0: 1.0}, opening=2.0), 6)
    assert not det.is_blocking(Cluster(-1, 1, CRITICAL, 5, {}, opening=2.0), 5)
    # facility 0 is open at level 6, so it cannot host a satellite at level 5
    assert not det.is_blocking(Cluster(-1, 0, SATELLITE, 5, {0: 9.0}), 5)


def test_scan_all_order():
    inst, det = two_client_state()
    assert det.scan_all() == (1, 5)
    nice_inst, nice = make([[1.0]], [2.0], [5], {0: 5})
    assert nice.scan_all() is None
    # a free closed facility next to a client at level 8 adds a violation lower down
    inst, det = make([[9.0, 9.0, 40.0], [1.0, 1.0, 40.0], [40.0, 40.0, 0.1]],
                     [50.0, 2.0, 0.0], [6, 6, 8], {0: 6})
    pairs = blocking_pairs(inst, GEOM, {0: 6, 1: 6, 2: 8}, {0: 6})
    k, i = pairs[0]
    assert (1, 5) in [(f, lvl) for lvl, f in pairs] and k < 5
    assert det.scan_all() == (i, k)


def test_bucket_matrix_grows_both_ways():
    inst, det = make([[1e-6, 1e6]], [1.0], [-20, 60])
    assert det.W.total(0) == 2
    assert det.W.count(0, GEOM.bucket(1e-6), -20) == 1
    assert det.W.count(0, GEOM.bucket(1e6), 60) == 1
    assert all(c > 0 for _, _, c in det.W.entries(0))


def test_profiles_track_churn():
    rng = np.random.default_rng(11)
    det, levels, crit = random_detector_state(rng, max_clients=10)
    for _ in range(40):
        j = int(rng.choice(list(levels)))
        new = levels[j] + int(rng.integers(-3, 4))
        det.on_level_change(j, levels[j], new)
        levels[j] = new
        for i in range(det.m):
            assert det.W.total(i) == len(levels)
        assert equivalence_mismatches(det, levels, crit) == []


def test_random_states_agree_with_subset_search():
    agree, pairs, first = oracle_sweep(200, seed=5)
    assert first is None and agree == 200
