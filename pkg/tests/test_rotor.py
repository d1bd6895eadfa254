import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prism_forge import rotor as R

angles = st.floats(-10.0, 10.0, allow_nan=False)
comps = st.floats(-1.0, 1.0, allow_nan=False)
axes = st.tuples(comps, comps, comps).filter(lambda v: np.linalg.norm(v) > 1e-3)


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def test_rot_x_quarter_turn():
    np.testing.assert_allclose(R.rot_x(math.pi / 2).apply([0, 1, 0]), [0, 0, 1], atol=1e-15)


def test_rot_z_quarter_turn():
    np.testing.assert_allclose(R.rot_z(math.pi / 2).apply([1, 0, 0]), [0, 1, 0], atol=1e-15)


def test_compose_applies_right_factor_first():
    a, b = R.rot_x(math.pi / 2), R.rot_z(math.pi / 2)
    np.testing.assert_allclose(R.compose(a, b).apply([1, 0, 0]), a.apply(b.apply([1, 0, 0])),
                               atol=1e-15)


def test_compose_chain_time_order():
    a, b = R.rot_x(0.3), R.rot_z(1.1)
    assert R.compose_chain([a, b]).allclose(R.compose(b, a))


def test_compose_chain_long_stays_orthogonal():
    r = R.rodrigues(unit([1, 2, 3]), 0.123456789)
    out = R.compose_chain([r] * 50_000, reortho_every=1000)
    assert np.max(np.abs(out.m.T @ out.m - np.eye(3))) < 1e-12
    total = (50_000 * 0.123456789) % (2 * math.pi)
    assert out.angle == pytest.approx(min(total, 2 * math.pi - total), abs=1e-8)


def test_rodrigues_rejects_non_unit_axis():
    with pytest.raises(R.RotationError):
        R.rodrigues([1, 1, 0], 0.5)


@given(axes, angles)
@settings(max_examples=200, deadline=None)
def test_rodrigues_is_proper_rotation(axis, angle):
    m = R.rodrigues(unit(axis), angle).m
    assert np.max(np.abs(m.T @ m - np.eye(3))) < 1e-12
    assert abs(np.linalg.det(m) - 1) < 1e-12


@given(axes, st.floats(1e-3, math.pi - 1e-6))
@settings(max_examples=200, deadline=None)
def test_axis_angle_round_trip(axis, angle):
    n, a = R.axis_angle(R.rodrigues(unit(axis), angle))
    np.testing.assert_allclose(n, unit(axis), atol=1e-9)
    assert abs(a - angle) < 1e-10


@given(axes, st.floats(1e-3, math.pi - 1e-3))
@settings(max_examples=100, deadline=None)
def test_invariant_axis_is_fixed(axis, angle):
    r = R.rodrigues(unit(axis), angle)
    n = R.invariant_axis(r)
    np.testing.assert_allclose(r.apply(n), n, atol=1e-12)


def test_negative_angle_flips_axis():
    n, a = R.axis_angle(R.rodrigues([0, 0, 1], -0.5))
    np.testing.assert_allclose(n, [0, 0, -1], atol=1e-15)
    assert abs(a - 0.5) < 1e-15


def test_half_turn_axis():
    n, a = R.axis_angle(R.rot_x(math.pi))
    assert abs(abs(n[0]) - 1) < 1e-12 and abs(a - math.pi) < 1e-12


def test_identity_axis_undefined():
    with pytest.raises(R.AxisUndefinedError):
        R.invariant_axis(R.Rotation3.identity())


def test_rejects_non_orthogonal():
    with pytest.raises(R.RotationError):
        R.Rotation3(np.diag([1.0, 1.0, 1.1]))


def test_rejects_reflection():
    with pytest.raises(R.RotationError):
        R.Rotation3(np.diag([1.0, 1.0, -1.0]))


def test_rejects_non_finite_angle():
    with pytest.raises(R.RotationError):
        R.rodrigues([1, 0, 0], math.nan)


def test_rejects_zero_axis():
    with pytest.raises(R.RotationError):
        R.rodrigues([0, 0, 0], 1.0)


def test_polar_orthogonalize_snaps_perturbation():
    m = R.rodrigues(unit([1, 1, 0]), 0.7).m + 1e-6
    p = R.polar_orthogonalize(m)
    assert np.max(np.abs(p.T @ p - np.eye(3))) < 1e-14
    assert np.max(np.abs(p - m)) < 1e-5


@given(axes, axes)
@settings(max_examples=100, deadline=None)
def test_geodesic_distance_symmetric_and_bounded(a, b):
    d = R.geodesic_distance(unit(a), unit(b))
    assert 0 <= d <= math.pi
    assert d == pytest.approx(R.geodesic_distance(unit(b), unit(a)), abs=1e-15)


def test_geodesic_distance_small_angle_accurate():
    a = np.array([1.0, 0, 0])
    b = np.array([math.cos(1e-9), math.sin(1e-9), 0])
    assert R.geodesic_distance(a, b) == pytest.approx(1e-9, rel=1e-6)


def test_geodesic_distance_rejects_non_unit():
    with pytest.raises(R.RotationError):
        R.geodesic_distance([2, 0, 0], [1, 0, 0])
