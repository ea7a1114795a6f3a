import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from haplobench.geometry import (
    EyeModel,
    GeometryError,
    MissError,
    PlaneMirror,
    Pose,
    Ray3,
    X_AXIS,
    Y_AXIS,
    Z_AXIS,
    angle_between,
    eye_gaze_ray,
    intersect_ray_plane,
    reflect_ray,
    rotate_about_pivot,
    rotation_matrix,
    unit,
    vergence_geometry,
)
from oracles import axis_angle, householder, midline_crossing

finite = st.floats(-1.0, 1.0)
vectors = st.tuples(finite, finite, finite).filter(lambda v: math.hypot(*v) > 1e-3).map(np.array)


def test_45_degree_fold():
    m = PlaneMirror([0, 0, 0], unit([1, 0, 1]))
    out = reflect_ray(Ray3([-1, 0, 0], X_AXIS), m)
    np.testing.assert_allclose(out.direction, [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(out.origin, [0, 0, 0], atol=1e-15)


def test_normal_incidence_reverses():
    m = PlaneMirror([0, 0, 1], -Z_AXIS)
    out = reflect_ray(Ray3([0, 0, 0], Z_AXIS), m)
    np.testing.assert_array_equal(out.direction, -Z_AXIS)


@given(vectors, vectors)
def test_reflection_matches_householder_and_is_involution(n, d):
    n = unit(n)
    d = unit(d)
    assume(abs(d @ n) > 1e-3)
    m = PlaneMirror(np.zeros(3), n)
    start = -d
    once = reflect_ray(Ray3(start, d), m)
    np.testing.assert_allclose(once.direction, householder(n) @ d, atol=1e-12)
    assert np.linalg.norm(once.direction) == pytest.approx(1.0, abs=1e-12)
    back = reflect_ray(Ray3(once.origin - once.direction, once.direction), m)
    np.testing.assert_allclose(householder(n) @ back.direction, once.direction, atol=1e-12)


def test_double_reflection_restores_direction():
    n = unit([0.3, -0.2, 1.0])
    d = unit([0.1, 0.2, -1.0])
    r1 = householder(n) @ d
    m = PlaneMirror(np.zeros(3), n)
    out = reflect_ray(Ray3(-r1, r1), m)
    np.testing.assert_allclose(out.direction, d, atol=1e-12)


def test_intersect_examples():
    p, inside = intersect_ray_plane(Ray3([0, 0, 0], Z_AXIS), PlaneMirror([0, 0, 0.1], -Z_AXIS))
    np.testing.assert_allclose(p, [0, 0, 0.1])
    assert inside
    with pytest.raises(MissError):
        intersect_ray_plane(Ray3([0, 0, 0], X_AXIS), PlaneMirror([0, 0, 0.1], -Z_AXIS))


def test_out_of_extent_is_flagged_and_reflect_misses():
    m = PlaneMirror([0, 0, 1], -Z_AXIS, half_extent=0.01)
    p, inside = intersect_ray_plane(Ray3([0.05, 0, 0], Z_AXIS), m)
    assert not inside
    with pytest.raises(MissError):
        reflect_ray(Ray3([0.05, 0, 0], Z_AXIS), m)
    with pytest.raises(MissError):
        reflect_ray(Ray3([0, 0, 2], Z_AXIS), PlaneMirror([0, 0, 1], -Z_AXIS))


@given(vectors, vectors, vectors, vectors)
def test_intersection_satisfies_both_constraints(o, d, p0, n):
    d, n = unit(d), unit(n)
    assume(abs(d @ n) > 1e-3)
    m = PlaneMirror(p0, n)
    try:
        p, _ = intersect_ray_plane(Ray3(o, d), m)
    except MissError:
        t = (p0 - o) @ n / (d @ n)
        assert t < 0
        return
    assert abs((p - p0) @ n) <= 1e-12 * (1 + np.abs(p).max()) * 10
    along = p - o
    assert np.linalg.norm(np.cross(along, d)) <= 1e-11


def test_rotation_examples():
    pivot = np.array([0.3, -0.1, 0.2])
    pose = Pose(np.eye(3), np.zeros(3))
    same = rotate_about_pivot(pose, pivot, Y_AXIS, 0.0)
    np.testing.assert_array_equal(same.rotation, pose.rotation)
    full = rotate_about_pivot(pose, pivot, Y_AXIS, 360.0)
    np.testing.assert_allclose(full.rotation, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(full.translation, np.zeros(3), atol=1e-10)
    q = rotate_about_pivot(pose, pivot, Y_AXIS, 90.0).apply(pivot + [0.1, 0, 0])
    np.testing.assert_allclose(q, pivot + [0, 0, -0.1], atol=1e-15)


@given(vectors, vectors, st.floats(-720, 720), st.lists(vectors, min_size=2, max_size=5))
def test_pivot_rotation_is_rigid_with_fixed_pivot(pivot, axis, angle, pts):
    pose = rotate_about_pivot(Pose(), pivot, unit(axis), angle)
    np.testing.assert_allclose(pose.apply(pivot), pivot, atol=1e-12)
    moved = [pose.apply(p) for p in pts]
    for i in range(len(pts)):
        for j in range(i):
            assert np.linalg.norm(moved[i] - moved[j]) == pytest.approx(np.linalg.norm(pts[i] - pts[j]), abs=1e-10)


@given(vectors, st.floats(-360, 360))
def test_rodrigues_matches_quaternion(axis, angle):
    np.testing.assert_allclose(rotation_matrix(axis, angle), axis_angle(axis, angle), atol=1e-12)


def test_pose_rejects_reflection():
    with pytest.raises(GeometryError):
        Pose(np.diag([1.0, 1.0, -1.0]))


def test_ray_direction_must_be_unit():
    with pytest.raises(GeometryError):
        Ray3([0, 0, 0], [1.0, 1.0, 0.0])


def test_angle_between_is_accurate_near_zero():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([1.0, 1e-9, 0.0])
    assert angle_between(a, b) == pytest.approx(math.degrees(1e-9), rel=1e-9)


# -- eye and vergence ----------------------------------------------------------


def test_gaze_ray_origin():
    assert np.array_equal(eye_gaze_ray(EyeModel([0.1, 0, 0], nodal_offset=0.0)).origin, [0.1, 0, 0])
    ray = eye_gaze_ray(EyeModel([-0.032, 0, 0], Z_AXIS, 0.006))
    np.testing.assert_allclose(ray.origin, [-0.032, 0, 0.006], atol=1e-15)


@given(st.floats(-60, 60))
def test_rotated_eye_gaze_passes_rotated_nodal_point(angle):
    eye = EyeModel([-0.032, 0.01, 0.0], Z_AXIS, 0.006, 0.003)
    pose = rotate_about_pivot(Pose(), eye.center_of_rotation, Y_AXIS, angle)
    turned = eye.rotated(Y_AXIS, angle)
    ray = eye_gaze_ray(turned)
    np.testing.assert_allclose(ray.origin, pose.apply(eye.nodal_point), atol=1e-15)
    np.testing.assert_allclose(turned.pupil, pose.apply(eye.pupil), atol=1e-15)


def test_vergence_examples():
    v = vergence_geometry(0.064, math.inf)
    assert (v.alpha_from_baseline, v.inward_rotation) == (90.0, 0.0)
    v = vergence_geometry(0.064, 0.032)
    assert v.alpha_from_baseline == pytest.approx(45.0, abs=1e-12)
    assert v.inward_rotation == pytest.approx(45.0, abs=1e-12)
    v = vergence_geometry(0.064, 0.5)
    assert v.inward_rotation == pytest.approx(math.degrees(math.atan(0.032 / 0.5)), abs=1e-12)
    assert v.inward_rotation == pytest.approx(3.662, abs=1e-3)
    assert v.full_vergence == pytest.approx(7.324, abs=1e-3)


def test_alpha_follows_the_printed_formula():
    v = vergence_geometry(0.064, 0.5)
    assert v.alpha_from_baseline == pytest.approx(math.degrees(math.atan(0.5 / 0.032)), abs=1e-12)


@pytest.mark.parametrize("args", [(0.0, 1.0), (-0.06, 1.0), (0.064, 0.0), (0.064, -1.0), (math.nan, 1.0), (0.064, math.nan)])
def test_vergence_rejects_bad_input(args):
    with pytest.raises(GeometryError):
        vergence_geometry(*args)


ipds = st.floats(0.04, 0.08)
dists = st.floats(0.01, 1e4)


@given(ipds, dists)
def test_vergence_closure(ipd, d):
    v = vergence_geometry(ipd, d)
    assert v.alpha_from_baseline + v.inward_rotation == 90.0
    assert 0 <= v.inward_rotation <= 90 and 0 <= v.alpha_from_baseline <= 90
    assert v.full_vergence == 2 * v.inward_rotation
    x, z = midline_crossing(ipd, v.inward_rotation)
    assert abs(x) <= 1e-9
    assert abs(z - d) <= 1e-9


@given(ipds, dists, st.floats(1.001, 10.0))
def test_vergence_monotone(ipd, d, k):
    assert vergence_geometry(ipd, d * k).inward_rotation < vergence_geometry(ipd, d).inward_rotation
    assume(ipd * k <= 0.5)
    assert vergence_geometry(ipd * k, d).inward_rotation > vergence_geometry(ipd, d).inward_rotation


def test_far_target_gaze_is_nearly_parallel():
    assert vergence_geometry(0.064, 1e6).inward_rotation < 2e-5
