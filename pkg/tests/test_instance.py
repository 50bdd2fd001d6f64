import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynfl import InputError, LevelGeometry, MetricInstance, UnknownIdError


def scan_kappa(d, eps, mu):
    """Linear scan over integer levels with exact rational powers."""
    b, d = 1 + Fraction(eps), Fraction(d)
    for k in range(-200, 200):
        if b ** (k - mu - 1) <= d < b ** (k - mu):
            return k
    raise AssertionError("no level found")


def test_distance_euclidean():
    inst = MetricInstance.from_points([[0, 0]], [[3, 4]], [1.0])
    inst.activate(0)
    assert inst.distance(0, 0) == 5.0


def test_distance_offset_only():
    inst = MetricInstance.from_points([[0, 0]], [[0, 0]], [1.0], offset=1 / 5000)
    inst.activate(0)
    assert inst.distance(0, 0) == pytest.approx(0.0002, rel=1e-12)


def test_distance_repeatable():
    rng = np.random.default_rng(3)
    inst = MetricInstance.from_points(rng.normal(size=(4, 3)), rng.normal(size=(5, 3)),
                                      np.ones(4), offset=0.1)
    inst.activate(2)
    first = [inst.distance(i, 2) for i in range(4)]
    assert first == [inst.distance(i, 2) for i in range(4)]


def test_distance_needs_active_client():
    inst = MetricInstance.from_matrix([[1.0, 2.0]], [1.0])
    with pytest.raises(UnknownIdError):
        inst.distance(0, 0)
    inst.activate(0)
    with pytest.raises(UnknownIdError):
        inst.distance(1, 0)
    with pytest.raises(UnknownIdError):
        inst.distance(0, 7)


@pytest.mark.parametrize("d, eps, mu, expected", [(1, 1, 3, 4), (0.3, 1, 3, 2), (1, 0.05, 1, 2)])
def test_kappa_star_examples(d, eps, mu, expected):
    geom = LevelGeometry(eps, mu)
    assert geom.kappa_star(d) == expected
    assert scan_kappa(d, eps, mu) == expected


@pytest.mark.parametrize("k, eps, expected", [(3, 1, 8.0), (0, 1, 1.0), (0, 0.05, 1.0),
                                              (0, 0.37, 1.0), (-2, 1, 0.25)])
def test_threshold_examples(k, eps, expected):
    assert LevelGeometry(eps, 3).threshold(k) == expected


def test_kappa_star_rejects_nonpositive():
    with pytest.raises(ValueError):
        LevelGeometry().kappa_star(0.0)
    with pytest.raises(ValueError):
        LevelGeometry().kappa_star(-1.0)


def test_boundary_maps_up():
    geom = LevelGeometry(1.0, 3)
    assert geom.kappa_star(2.0) == 5  # d == 2^(4-3) belongs to the next level
    geom = LevelGeometry(0.05, 2)
    k = 7
    assert geom.kappa_star(geom.threshold(k - 2)) == k + 1


def test_geometry_validation():
    with pytest.raises(ValueError):
        LevelGeometry(0.0, 3)
    with pytest.raises(ValueError):
        LevelGeometry(1.0, 0)
    assert LevelGeometry(1.0, 3).proven_regime
    assert LevelGeometry(1.0, 5).proven_regime
    assert not LevelGeometry(1.0, 2).proven_regime
    assert not LevelGeometry(0.05, 3).proven_regime


positive = st.floats(min_value=1e-12, max_value=1e12, allow_nan=False, allow_infinity=False)
eps_values = st.sampled_from([1.0, 0.5, 0.25, 0.05, 0.37])


@given(positive, eps_values, st.integers(1, 5))
def test_kappa_brackets_distance(d, eps, mu):
    geom = LevelGeometry(eps, mu)
    k = geom.kappa_star(d)
    assert geom.threshold(k - mu - 1) <= d < geom.threshold(k - mu)


@given(positive, positive, eps_values)
def test_kappa_monotone(a, b, eps):
    geom = LevelGeometry(eps, 3)
    lo, hi = sorted((a, b))
    assert geom.kappa_star(lo) <= geom.kappa_star(hi)


@given(positive)
def test_kappa_base_two_interval(d):
    k = LevelGeometry(1.0, 3).kappa_star(d)
    assert math.ldexp(1.0, k - 4) <= d < math.ldexp(1.0, k - 3)


@given(st.lists(positive, min_size=1, max_size=30), eps_values)
def test_vector_buckets_match_scalar(ds, eps):
    geom = LevelGeometry(eps, 2)
    assert geom.buckets(ds).tolist() == [geom.bucket(d) for d in ds]


def test_registry_lifecycle():
    inst = MetricInstance.from_matrix(np.ones((2, 3)), [1.0, 2.0])
    assert inst.active_clients() == []
    inst.activate(1)
    assert inst.is_active(1) and inst.active_clients() == [1]
    with pytest.raises(InputError):
        inst.activate(1)
    inst.deactivate(1)
    assert not inst.is_active(1)
    with pytest.raises(InputError):
        inst.activate(1)  # ids are never reused
    with pytest.raises(UnknownIdError):
        inst.deactivate(1)


def test_add_clients_extends_ids():
    inst = MetricInstance.from_points([[0, 0]], np.zeros((0, 2)), [1.0], offset=0.5)
    ids = inst.add_clients([[1, 0], [0, 2]])
    assert ids.tolist() == [0, 1]
    inst.activate(1)
    assert inst.distance(0, 1) == 2.5
    with pytest.raises(InputError):
        inst.add_clients([[1, 2, 3]])


def test_rejects_bad_instances():
    with pytest.raises(InputError):
        MetricInstance.from_matrix([[0.0]], [1.0])  # zero distance, no offset
    with pytest.raises(InputError):
        MetricInstance.from_matrix([[1.0]], [-1.0])
    with pytest.raises(InputError):
        MetricInstance.from_matrix([[1.0], [1.0]], [1.0])
    with pytest.raises(InputError):
        MetricInstance([], distances=np.zeros((0, 0)))
    inst = MetricInstance.from_points([[0, 0]], [[0, 0]], [1.0])
    with pytest.raises(InputError):
        inst.activate(0)  # coincident points need an offset
