import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from haplobench.bench import assemble_nominal, configure_for_user
from haplobench.calibration import (
    DIOPTER,
    METRE,
    RADIAN,
    Tolerances,
    check_beamsplitter,
    check_collimation,
    check_element_centering,
    check_ipd,
    check_table_level,
    dof_step,
    residual_blocks,
    residual_vector,
    run_checklist,
    step_slices,
)
from haplobench.config import bench_fingerprint
from haplobench.dofs import CANONICAL_PERTURBATIONS, get_dof, set_dof
from oracles import image_chain, mirror_rotation_deviation, vergence_from_image
from fractions import Fraction


def bump(bench, path, delta):
    return set_dof(bench, path, get_dof(bench, path) + delta)


# -- step 1 --------------------------------------------------------------------


def test_level_nominal(nominal):
    c = check_table_level(nominal)
    assert c.passed and all(v == 0 for v in c.residuals.values())


def test_table_tilted(nominal):
    c = check_table_level(bump(nominal, "table.pitch_deg", 0.2))
    assert c.residuals["table_level_deg"] == pytest.approx(0.2, abs=1e-12)
    # both wings ride the tilted table together
    assert c.residuals["wing_parallelism_deg"] == pytest.approx(0.0, abs=1e-12)
    assert not c.passed and c.failures == ["table_level_deg"]


def test_wing_out_of_plane(nominal):
    c = check_table_level(bump(nominal, "wings.left.roll_deg", 0.2))
    assert c.residuals["left_wing_flat_deg"] == pytest.approx(0.2, abs=1e-12)
    assert c.residuals["wing_parallelism_deg"] == pytest.approx(0.2, abs=1e-12)
    assert c.residuals["table_level_deg"] == 0.0


# -- step 2 --------------------------------------------------------------------


def test_collimating_lens_off_centre(nominal):
    c = check_element_centering(bump(nominal, "wings.left.collimating.lateral_m", 0.001))
    assert c.residuals["left.collimating.lateral_m"] == pytest.approx(0.001, abs=1e-15)
    assert c.failures == ["left.collimating.lateral_m"]


@given(st.floats(-20, 20), st.floats(-0.003, 0.003))
def test_centering_is_rail_relative(az, off):
    b = bump(assemble_nominal(0.064, 1.0, math.inf), "wings.right.accommodation.height_m", off)
    turned = set_dof(b, "wings.right.rail_azimuth_deg", az)
    assert check_element_centering(turned).residuals == check_element_centering(b).residuals


def test_monitor_crosshair_offset(nominal):
    c = check_element_centering(bump(nominal, "wings.right.monitor.height_m", -0.0007))
    assert c.residuals["right.monitor.crosshair_height_m"] == pytest.approx(-0.0007, abs=1e-12)
    assert not c.passed


# -- step 3 --------------------------------------------------------------------


def _collimation(nominal, path, delta):
    return check_collimation(bump(nominal, path, delta)).residuals["left.collimation_diopters"]


def test_collimation_nominal(nominal):
    c = check_collimation(nominal)
    assert c.passed
    assert max(abs(v) for v in c.residuals.values()) < 1e-12


def test_collimating_lens_one_cm_too_far(nominal):
    # the collimating lens sits nearer the eye, so moving it away from the
    # minimiser means decreasing its axial station
    got = _collimation(nominal, "wings.left.collimating.axial_m", -0.01)
    want = vergence_from_image(image_chain(Fraction(1, 10), [("lens", -10), ("gap", Fraction(6, 100)), ("lens", 10)]))
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(0.909, abs=1e-3)
    assert not check_collimation(bump(nominal, "wings.left.collimating.axial_m", -0.01)).passed


def test_monitor_shift_reads_opposite_sign(nominal):
    lens = _collimation(nominal, "wings.left.collimating.axial_m", -0.01)
    monitor = _collimation(nominal, "wings.left.monitor.axial_m", -0.01)
    want = vergence_from_image(image_chain(Fraction(9, 100), [("lens", -10), ("gap", Fraction(5, 100)), ("lens", 10)]))
    assert monitor == pytest.approx(want, abs=1e-12)
    assert monitor * lens < 0


def test_collimation_sentinel_fails_with_flag(nominal):
    # minimiser image lands on the collimating lens focal plane from the wrong side
    b = bump(nominal, "wings.left.collimating.power_diopters", -10.0)
    b = set_dof(b, "wings.left.collimating.power_diopters", 1.0 / 0.1)
    b = bump(b, "wings.left.collimating.axial_m", 0.05 - 1e-12)
    c = check_collimation(b)
    assert not c.passed


# -- step 4 --------------------------------------------------------------------


def test_splitter_nominal(nominal_inf, nominal):
    for b in (nominal, nominal_inf):
        c = check_beamsplitter(b)
        assert c.passed
        assert max(abs(v) for v in c.residuals.values()) < 1e-12


@given(st.floats(-2.0, 2.0).filter(lambda t: abs(t) > 1e-4), st.sampled_from(["left", "right"]))
def test_mirror_doubling(theta, side):
    b = bump(assemble_nominal(0.064, 2.0, 2.0), f"wings.{side}.beamsplitter.yaw_deg", theta)
    got = check_beamsplitter(b).residuals[f"{side}.axis_angle_deg"]
    s = -1 if side == "left" else 1
    n0 = np.array([-s, 0.0, 1.0]) / math.sqrt(2)
    oracle = mirror_rotation_deviation(n0, [0, 1, 0], theta, np.array([0.0, 0.0, 1.0]))
    assert abs(got) == pytest.approx(oracle, abs=1e-9)
    assert abs(got) == pytest.approx(2 * abs(theta), abs=1e-9)


def test_yaw_half_degree_fails(nominal):
    c = check_beamsplitter(bump(nominal, "wings.left.beamsplitter.yaw_deg", 0.5))
    assert abs(c.residuals["left.axis_angle_deg"]) == pytest.approx(1.0, abs=1e-9)
    assert "left.axis_angle_deg" in c.failures


def test_tilt_is_not_a_pure_doubling(nominal):
    # a rotation about an axis lying in the plane of incidence deviates the
    # reflection by less than twice the rotation
    c = check_beamsplitter(bump(nominal, "wings.right.beamsplitter.tilt_deg", 0.5))
    n0 = np.array([-1.0, 0.0, 1.0]) / math.sqrt(2)
    axis = np.cross([0.0, 1.0, 0.0], n0)
    oracle = mirror_rotation_deviation(n0, axis, 0.5, np.array([0.0, 0.0, 1.0]))
    assert abs(c.residuals["right.axis_angle_deg"]) == pytest.approx(oracle, abs=1e-9)
    assert oracle < 1.0


def test_slide_along_rail_keeps_angle(nominal):
    c = check_beamsplitter(bump(nominal, "wings.left.beamsplitter.rail_m", 0.002))
    assert c.residuals["left.axis_angle_deg"] == pytest.approx(0.0, abs=1e-12)
    assert c.residuals["left.crosshair_miss_m"] > 0
    assert c.residuals["left.axis_offset_m"] == pytest.approx(0.002, abs=1e-12)


def test_splitter_turned_away_is_a_miss(nominal):
    c = check_beamsplitter(bump(nominal, "wings.left.beamsplitter.yaw_deg", 60.0))
    assert not c.passed
    assert any("left" in f for f in c.flags)


# -- step 5 --------------------------------------------------------------------


def test_ipd_matches(nominal):
    c = check_ipd(nominal, 0.064)
    assert c.passed and max(abs(v) for v in c.residuals.values()) < 1e-12


def test_ipd_mismatch(nominal):
    c = check_ipd(nominal, 0.060)
    assert c.residuals["ipd_m"] == pytest.approx(0.004, abs=1e-15)
    assert not c.passed


def test_reconfigured_bench_passes_for_new_user(nominal):
    b = configure_for_user(nominal, 0.060, math.inf)
    assert check_ipd(b, 0.060).passed
    assert run_checklist(b, 0.060).passed


# -- checklist -----------------------------------------------------------------


def test_checklist_nominal(nominal):
    r = run_checklist(nominal, 0.064)
    assert r.passed
    assert [c.step for c in r.checks] == [1, 2, 3, 4, 5]
    assert all(not c.annotations for c in r.checks)


def test_checklist_yaw_fault(nominal):
    r = run_checklist(bump(nominal, "wings.left.beamsplitter.yaw_deg", 0.5), 0.064)
    assert [r.step(k).passed for k in (1, 2, 3, 4)] == [True, True, True, False]
    assert r.step(5).annotations == ["upstream-failed: step 4"]
    assert not r.passed


def test_fingerprint_changes_with_content(nominal):
    assert run_checklist(nominal).fingerprint == bench_fingerprint(nominal)
    other = bump(nominal, "wings.left.monitor.lateral_m", 1e-6)
    assert run_checklist(other).fingerprint != run_checklist(nominal).fingerprint


def test_tolerance_overrides():
    t = Tolerances.from_mapping({"ipd_m": 0.01})
    assert t.ipd_m == 0.01 and t.level_deg == 0.05
    with pytest.raises(ValueError):
        Tolerances.from_mapping({"nope": 1.0})
    with pytest.raises(ValueError):
        Tolerances.from_mapping({"ipd_m": -1.0})


# -- residual vector -----------------------------------------------------------


def test_vector_layout(nominal):
    v = residual_vector(nominal)
    assert v.shape == (60,)
    assert np.abs(v).max() < 1e-9
    sl = step_slices(nominal)
    assert [sl[k].stop - sl[k].start for k in range(1, 6)] == [9, 22, 2, 16, 11]


def test_vector_weights(nominal):
    v = residual_vector(bump(nominal, "ipd_m", 0.001), 0.064)
    assert v[-1] == pytest.approx(0.001 * METRE)
    v = residual_vector(bump(nominal, "wings.left.collimating.axial_m", -0.01))
    assert v[step_slices(nominal)[3]][0] == pytest.approx(0.909 * DIOPTER, abs=1e-2)
    assert RADIAN == METRE == 1000.0


@pytest.mark.parametrize("path,delta,step", CANONICAL_PERTURBATIONS)
def test_block_structure(nominal, path, delta, step):
    b = bump(nominal, path, delta)
    assert dof_step(path) == step
    user = 0.064
    v = residual_vector(b, user)
    sl = step_slices(nominal)
    assert np.abs(v[sl[step]]).max() > 0
    for j in range(1, step):
        assert np.abs(v[sl[j]]).max() <= 1e-12
    assert step in run_checklist(b, user).failed_steps


steppable = [p for p, _, _ in CANONICAL_PERTURBATIONS] + [
    "wings.right.accommodation.lateral_m",
    "wings.left.beamsplitter.forward_m",
    "wings.right.beamsplitter.roll_deg",
    "wings.left.axis_forward_m",
    "wings.right.pitch_deg",
    "table.roll_deg",
]


@given(st.sampled_from(steppable), st.floats(-1.0, 1.0).filter(lambda x: abs(x) > 1e-3))
def test_locality(path, frac):
    b0 = assemble_nominal(0.064, 2.0, 2.0)
    step = dof_step(path)
    span = 0.002 if path.endswith("_m") else 0.5
    b = bump(b0, path, frac * span)
    v = residual_vector(b, 0.064)
    sl = step_slices(b0)
    for j in range(1, step):
        assert np.abs(v[sl[j]]).max() <= 1e-12


def _both_sides(b, ipd):
    r = run_checklist(b, ipd)
    checks_zero = max(abs(v) for c in r.checks for v in c.residuals.values()) < 1e-9
    v = residual_vector(b, ipd)
    return checks_zero, bool(np.linalg.norm(v) < len(v) * 1e-9)


@given(st.floats(0.04, 0.08), st.floats(0.3, 20.0), st.floats(0.3, 20.0))
def test_zero_residual_equivalence_on_nominal(ipd, focal, vergence):
    assert _both_sides(assemble_nominal(ipd, focal, vergence), ipd) == (True, True)


@given(st.floats(0.04, 0.08), st.floats(0.3, 20.0), st.sampled_from(steppable), st.floats(1e-5, 1e-3), st.booleans())
def test_zero_residual_equivalence_when_perturbed(ipd, vergence, path, mag, neg):
    b = assemble_nominal(ipd, 2.0, vergence)
    b = bump(b, path, -mag if neg else mag)
    checks_zero, vector_zero = _both_sides(b, ipd)
    assert checks_zero == vector_zero
    # spinning the splitter about its own normal is invisible to every check
    if not path.endswith("beamsplitter.roll_deg"):
        assert not checks_zero


@pytest.mark.parametrize("path", steppable)
def test_norm_is_smooth_near_nominal(nominal, path):
    h = 1e-6 if path.endswith("_m") else 1e-4
    norms = [np.linalg.norm(residual_vector(bump(nominal, path, k * h), 0.064)) for k in (-2, -1, 0, 1, 2)]
    # consecutive differences stay bounded: no jumps
    diffs = np.abs(np.diff(norms))
    assert diffs.max() <= 3 * max(diffs.min(), 1e-15) + 1e-9


def test_blocks_label_every_entry(nominal):
    labels = [lbl for _, lbl, _ in residual_blocks(nominal)]
    assert len(labels) == len(set(labels))
