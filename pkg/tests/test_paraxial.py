import math
from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from haplobench.paraxial import (
    Gap,
    NonPhysicalStimulusError,
    OpticalTrain,
    OpticsError,
    ParaxialRay,
    RayTransferMatrix,
    ThinLens,
    UnrealizableDistanceError,
    accommodation_power_for,
    collimation_error,
    compose_train,
    element_matrix,
    perceived_focal_distance,
    propagate_vergence,
    thin_lens_image,
    trace_ray,
)
from oracles import abcd, image_chain, vergence_from_image

FRONT_END = [("lens", -10), ("gap", Fraction(5, 100)), ("lens", 10)]


def front_end(monitor_gap=0.10, min_to_col=0.05):
    return OpticalTrain(monitor_gap, (ThinLens(-10.0), Gap(min_to_col), ThinLens(10.0)))


# -- thin lens -----------------------------------------------------------------


def test_minification_lens_virtual_image():
    v, m = thin_lens_image(-10.0, 0.10)
    assert v == pytest.approx(-0.05, abs=1e-15)
    assert m == pytest.approx(0.5, abs=1e-15)


def test_collimated_input_focuses_at_focal_length():
    v, m = thin_lens_image(10.0, math.inf)
    assert v == pytest.approx(0.10, abs=1e-15)


def test_object_at_focus_gives_infinite_image():
    v, _ = thin_lens_image(10.0, 0.10)
    assert math.isinf(v)


@pytest.mark.parametrize("bad", [(math.nan, 0.1), (10.0, math.nan), (10.0, -math.inf), (10.0, 0.0), (2000.0, 0.1)])
def test_thin_lens_rejects_invalid(bad):
    with pytest.raises(OpticsError):
        thin_lens_image(*bad)


def test_virtual_object_is_accepted():
    # converging input meeting the lens 0.1 m before its focus
    v, _ = thin_lens_image(10.0, -0.1)
    assert v == pytest.approx(0.05)


@given(st.floats(-50, 50).filter(lambda p: abs(p) > 0.05), st.floats(0.01, 10.0))
def test_conjugate_symmetry(p, u):
    v, m = thin_lens_image(p, u)
    assume(math.isfinite(v) and v > 1e-3)
    # a real image is itself a real object for the reversed light path
    u_back, _ = thin_lens_image(p, v)
    assert u_back == pytest.approx(u, rel=1e-7)


# -- matrices ------------------------------------------------------------------


def test_element_matrices():
    assert element_matrix(Gap(0.0)).as_tuple() == (1.0, 0.0, 0.0, 1.0)
    assert element_matrix(ThinLens(-10.0)).as_tuple() == (1.0, 0.0, 10.0, 1.0)
    assert element_matrix(Gap(0.05)).as_tuple() == (1.0, 0.05, 0.0, 1.0)


def test_point_source_at_focus_is_collimated():
    m = compose_train([Gap(0.1), ThinLens(10.0)])
    # output angle independent of input angle for a point source on axis
    assert m.d == pytest.approx(0.0, abs=1e-15)


def test_compose_rejects_empty():
    with pytest.raises(OpticsError):
        compose_train([])


def test_single_zero_gap_is_identity():
    assert compose_train([Gap(0.0)]).as_tuple() == (1.0, 0.0, 0.0, 1.0)


train_elements = st.lists(
    st.one_of(
        st.builds(Gap, st.floats(0.0, 0.5)),
        st.builds(ThinLens, st.floats(-40.0, 40.0)),
    ),
    min_size=1,
    max_size=8,
)


bench_scale_elements = st.lists(
    st.one_of(
        st.builds(Gap, st.floats(0.0, 0.3)),
        st.builds(ThinLens, st.floats(-20.0, 20.0)),
    ),
    min_size=1,
    max_size=6,
)


@given(bench_scale_elements)
def test_determinant_is_one(elements):
    assert compose_train(elements).determinant == pytest.approx(1.0, abs=1e-12)


@given(train_elements)
def test_determinant_error_follows_rounding_bound(elements):
    # ad and bc each reach |M|^2, so their difference carries that much rounding
    m = compose_train(elements)
    big = max(1.0, *(abs(x) for x in m.as_tuple()))
    assert abs(m.determinant - 1.0) <= 8 * len(elements) * 2.0**-52 * big * big


@given(train_elements)
def test_train_then_inverse_is_identity(elements):
    m = compose_train(elements)
    ident = m.inverse() @ m
    for got, want in zip(ident.as_tuple(), (1.0, 0.0, 0.0, 1.0)):
        assert got == pytest.approx(want, abs=1e-9)


@given(train_elements)
def test_compose_matches_numpy_oracle(elements):
    pairs = [("gap", e.length) if isinstance(e, Gap) else ("lens", e.power) for e in elements]
    want = abcd(pairs).ravel()
    got = compose_train(elements).as_tuple()
    for g, w in zip(got, want):
        assert g == pytest.approx(w, rel=1e-12, abs=1e-12)


def test_trace_ray_examples():
    r = trace_ray(OpticalTrain(0.0, (ThinLens(10.0),)), ParaxialRay(0.01, 0.0))
    assert (r.height, r.angle) == pytest.approx((0.01, -0.1))
    ident = trace_ray(OpticalTrain(0.0, ()), ParaxialRay(0.003, 0.02))
    assert (ident.height, ident.angle) == (0.003, 0.02)


def test_nominal_front_end_collimates_every_ray_from_the_crosshair():
    for angle in (-0.05, 0.01, 0.07):
        r = trace_ray(front_end(), ParaxialRay(0.0, angle))
        assert r.angle == pytest.approx(0.0, abs=1e-12)


def test_vignetting_is_flagged_not_clipped():
    train = OpticalTrain(0.1, (ThinLens(5.0, aperture_radius=0.01),))
    r = trace_ray(train, ParaxialRay(0.0, 0.2))
    assert r.vignetted
    assert r.height == pytest.approx(0.02)


# -- vergence ------------------------------------------------------------------


def test_vergence_examples():
    assert propagate_vergence(0.0, [ThinLens(-0.5)]) == -0.5
    assert propagate_vergence(-1 / 0.11, [ThinLens(10.0)]) == pytest.approx(0.909, abs=1e-3)
    assert propagate_vergence(-20.0, [Gap(0.05)]) == pytest.approx(-10.0, abs=1e-12)


def test_gap_onto_focus_is_sentinel():
    assert propagate_vergence(10.0, [Gap(0.1)]) == math.inf


def test_nominal_collimation_is_exact():
    assert collimation_error(front_end()) == pytest.approx(0.0, abs=1e-9)
    assert image_chain(Fraction(1, 10), FRONT_END) is None


def test_collimating_lens_one_cm_too_far():
    got = collimation_error(front_end(min_to_col=0.06))
    want = vergence_from_image(image_chain(Fraction(1, 10), [("lens", -10), ("gap", Fraction(6, 100)), ("lens", 10)]))
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(0.909, abs=1e-3)


def test_monitor_too_close_reads_negative():
    got = collimation_error(front_end(monitor_gap=0.09))
    want = vergence_from_image(image_chain(Fraction(9, 100), FRONT_END))
    assert got < 0
    assert got == pytest.approx(want, abs=1e-12)


@given(st.floats(-0.02, 0.02).filter(lambda x: abs(x) > 1e-6))
def test_collimation_sign_follows_displacement(dx):
    err = collimation_error(front_end(min_to_col=0.05 + dx))
    assert math.copysign(1.0, err) == math.copysign(1.0, dx)


rational_trains = st.lists(
    st.tuples(
        st.sampled_from(["gap", "lens"]),
        st.fractions(min_value=Fraction(-20), max_value=Fraction(20), max_denominator=100),
    ).map(lambda kv: (kv[0], abs(kv[1]) / 40 if kv[0] == "gap" else kv[1])),
    min_size=1,
    max_size=6,
)


@given(st.fractions(min_value=Fraction(1, 100), max_value=Fraction(1), max_denominator=100), rational_trains)
def test_vergence_matches_exact_image_chain(offset, pairs):
    pos = image_chain(offset, pairs)
    assume(pos is not None and abs(pos) > Fraction(1, 1000))
    # no intermediate focus on a plane
    elements = [Gap(float(v)) if k == "gap" else ThinLens(float(v)) for k, v in pairs]
    got = propagate_vergence(-math.inf, OpticalTrain(float(offset), tuple(elements)))
    assume(math.isfinite(got))
    assert got == pytest.approx(vergence_from_image(pos), rel=1e-9, abs=1e-9)


@given(st.floats(0.01, 1.0), train_elements)
def test_vergence_agrees_with_two_ray_trace(offset, elements):
    train = OpticalTrain(offset, tuple(elements))
    m = compose_train(train)
    # a ray from the on-axis source crosses the axis again at the image
    h1, u1 = m.apply(0.0, 1.0)
    assume(abs(h1) > 1e-9)
    v_rays = -u1 / h1  # vergence = -angle/height for rays through the source
    got = propagate_vergence(-math.inf, train)
    assume(math.isfinite(got) and abs(got) < 1e6)
    assert got == pytest.approx(v_rays, rel=1e-9, abs=1e-9)


# -- accommodation -------------------------------------------------------------


def test_accommodation_power_examples():
    assert accommodation_power_for(2.0, 0.0) == pytest.approx(-0.5, abs=1e-15)
    assert accommodation_power_for(2.0, 0.15) == pytest.approx(-0.5 / (1 - 0.075), abs=1e-12)
    assert accommodation_power_for(2.0, 0.15) == pytest.approx(-0.54054, abs=1e-5)
    assert accommodation_power_for(math.inf, 0.3) == 0.0


def test_accommodation_power_forward_check():
    p = accommodation_power_for(2.0, 0.15)
    assert propagate_vergence(0.0, [ThinLens(p), Gap(0.15)]) == pytest.approx(-0.5, abs=1e-12)


def test_unrealizable_distance():
    with pytest.raises(UnrealizableDistanceError):
        accommodation_power_for(0.15, 0.15)
    with pytest.raises(OpticsError):
        accommodation_power_for(-1.0, 0.1)


def full_train(power, path):
    return OpticalTrain(0.10, (ThinLens(-10.0), Gap(0.05), ThinLens(10.0), Gap(0.05), ThinLens(power), Gap(path)))


@given(st.floats(0.25, 100.0), st.floats(0.0, 0.3))
def test_accommodation_round_trip(d, path):
    # d == path needs an infinitely strong lens; stay clear of that line
    assume(abs(1.0 - path / d) > 1e-3)
    p = accommodation_power_for(d, path)
    assert perceived_focal_distance(full_train(p, path)) == pytest.approx(d, rel=1e-9)


def test_perceived_focal_sentinel_and_nonphysical():
    assert perceived_focal_distance(full_train(0.0, 0.15)) == math.inf
    with pytest.raises(NonPhysicalStimulusError):
        perceived_focal_distance(full_train(2.0, 0.15))


def test_perceived_half_metre():
    p = accommodation_power_for(0.5, 0.15)
    assert perceived_focal_distance(full_train(p, 0.15)) == pytest.approx(0.5, rel=1e-9)


def test_power_sanity_bound():
    with pytest.raises(OpticsError):
        ThinLens(1e4)
    with pytest.raises(OpticsError):
        Gap(-0.1)


def test_adjacent_gaps_merge():
    t = OpticalTrain(0.0, (Gap(0.1), Gap(0.2), ThinLens(1.0)))
    assert len(t.elements) == 2
    assert t.elements[0].length == pytest.approx(0.3)


def test_matrix_identity_helpers():
    m = RayTransferMatrix(2.0, 0.5, 1.0, 0.75)
    assert (RayTransferMatrix.identity() @ m).as_tuple() == m.as_tuple()
