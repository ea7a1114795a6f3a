import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haplobench.bench import assemble_nominal
from haplobench.calibration import residual_vector
from haplobench.dofs import CANONICAL_PERTURBATIONS, get_dof, set_dof
from haplobench.solver import Adjustable, AdjustableSet, ConvergenceRecord, dof_scale, null_dofs, solve_calibration

NOMINAL_IPD = 0.064


def bump(bench, path, delta):
    return set_dof(bench, path, get_dof(bench, path) + delta)


def test_nominal_needs_no_iterations(nominal):
    out, rec = solve_calibration(nominal, AdjustableSet.around(nominal, ["wings.left.beamsplitter.yaw_deg"]))
    assert rec.converged and rec.iterations == 0
    assert out is nominal
    assert rec.norms == [pytest.approx(np.linalg.norm(residual_vector(nominal)))]


def test_recovers_injected_yaw(nominal):
    path = "wings.left.beamsplitter.yaw_deg"
    b = bump(nominal, path, 0.5)
    out, rec = solve_calibration(b, AdjustableSet.around(b, [path]))
    assert rec.converged, rec.message
    assert abs(get_dof(out, path) - get_dof(nominal, path)) < 1e-6
    assert all(later <= earlier for earlier, later in zip(rec.norms, rec.norms[1:]))


def test_three_dof_round_trip(nominal):
    injected = {
        "wings.left.beamsplitter.tilt_deg": 0.2,
        "wings.right.collimating.lateral_m": 0.001,
        "wings.left.monitor.axial_m": -0.001,
    }
    b = nominal
    for p, d in injected.items():
        b = bump(b, p, d)
    out, rec = solve_calibration(b, AdjustableSet.around(b, list(injected)))
    assert rec.converged
    assert rec.final_norm < 1e-8
    assert np.linalg.norm(residual_vector(out)) < 1e-8


@settings(max_examples=25)
@given(st.sampled_from(CANONICAL_PERTURBATIONS), st.floats(-1.0, 1.0).filter(lambda f: abs(f) > 0.05))
def test_single_dof_soundness(case, frac):
    path, delta, _ = case
    base = assemble_nominal(NOMINAL_IPD, 2.0, 2.0)
    b = bump(base, path, frac * delta)
    out, rec = solve_calibration(b, AdjustableSet.around(b, [path]), user_ipd=NOMINAL_IPD)
    assert rec.converged, rec.message
    assert abs(get_dof(out, path) - get_dof(base, path)) < 1e-6


def test_splitter_roll_is_a_null_dof(nominal):
    paths = ["wings.left.beamsplitter.yaw_deg", "wings.left.beamsplitter.roll_deg"]
    b = bump(nominal, paths[0], 0.3)
    out, rec = solve_calibration(b, AdjustableSet.around(b, paths))
    assert rec.null_dofs == ["wings.left.beamsplitter.roll_deg"]
    assert rec.converged
    # the damping leaves the unobservable roll where it started
    assert get_dof(out, paths[1]) == pytest.approx(get_dof(b, paths[1]), abs=1e-9)


def test_null_dofs_from_matrix():
    jac = np.array([[1.0, 0.0, 2.0], [0.0, 0.0, 0.0]])
    assert null_dofs(jac, ["a", "b", "c"]) == ["a", "b", "c"]
    assert null_dofs(np.eye(2), ["a", "b"]) == []
    assert null_dofs(np.array([[1.0, 0.0], [0.0, 0.0]]), ["a", "b"]) == ["b"]


def test_non_convergence_is_reported_with_best_bench(nominal):
    path = "wings.left.beamsplitter.yaw_deg"
    b = bump(nominal, path, 0.5)
    out, rec = solve_calibration(b, AdjustableSet.around(b, [path]), max_iters=1)
    assert isinstance(rec, ConvergenceRecord)
    assert not rec.converged and rec.status == "max-iters"
    assert rec.final_norm < rec.norms[0]
    assert np.linalg.norm(residual_vector(out)) == pytest.approx(rec.final_norm, rel=1e-12)


def test_unreachable_target_stalls_at_bound(nominal):
    path = "wings.left.beamsplitter.yaw_deg"
    b = bump(nominal, path, 0.5)
    v = get_dof(b, path)
    adjust = AdjustableSet([Adjustable(path, v - 0.1, v + 0.1)])
    out, rec = solve_calibration(b, adjust)
    assert not rec.converged
    assert get_dof(out, path) == pytest.approx(v - 0.1, abs=1e-12)


def test_wrong_fix_cannot_converge(nominal):
    # a left-wing fault cannot be corrected from the right wing
    b = bump(nominal, "wings.left.beamsplitter.yaw_deg", 0.5)
    _, rec = solve_calibration(b, AdjustableSet.around(b, ["wings.right.beamsplitter.yaw_deg"]))
    assert not rec.converged
    assert rec.status in ("stalled", "max-iters")


def test_deterministic(nominal):
    b = bump(nominal, "wings.right.beamsplitter.tilt_deg", 0.4)
    adj = AdjustableSet.around(b, ["wings.right.beamsplitter.tilt_deg", "wings.right.beamsplitter.yaw_deg"])
    _, r1 = solve_calibration(b, adj)
    _, r2 = solve_calibration(b, adj)
    assert r1.to_dict() == r2.to_dict()


def test_adjustable_validation(nominal):
    with pytest.raises(ValueError):
        AdjustableSet(())
    with pytest.raises(ValueError):
        Adjustable("ipd_m", 0.07, 0.06)
    with pytest.raises(ValueError):
        Adjustable("ipd_m", -math.inf, 0.06)
    with pytest.raises(ValueError):
        AdjustableSet([Adjustable("ipd_m", 0.05, 0.07)] * 2)
    with pytest.raises(ValueError):
        solve_calibration(nominal, AdjustableSet([Adjustable("ipd_m", 0.07, 0.08)]))


def test_scales():
    assert dof_scale("ipd_m") == 1000.0
    assert dof_scale("table.pitch_deg") == pytest.approx(1000.0 * math.pi / 180.0)
    assert dof_scale("wings.left.accommodation.power_diopters") == 10.0
