"""The five haploscope calibration steps as executable checks.

Every check produces named residuals with units and a pass/fail against
declared tolerances.  None of the tolerances come from measured lab data;
they are defaults chosen so that a residual a participant could notice
fails its check.

:func:`residual_vector` flattens the signed components behind the checks
into one vector in normalised units (1 mm = 1 mrad = 1 unit, 0.1 D = 1
unit) for the alignment solver.  Entry order is documented in
``docs/config_schema.md``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import kernels
from .bench import (
    LENS_ROLES,
    SIDES,
    Bench,
    Wing,
    _perp_basis,
    _row,
    _wing_rows,
    lens_frame,
    rail_point,
    splitter_center,
    splitter_normal,
    tilt_rotation,
    wing_rotation,
)
from .config import bench_fingerprint
from .geometry import X_AXIS, Y_AXIS, Z_AXIS, angle_between, cross, norm
from .paraxial import Gap, OpticalTrain, ThinLens, collimation_error

STEP_NAMES = {
    1: "tabletop setup",
    2: "optical element mounting",
    3: "collimating the image source",
    4: "beamsplitter calibration",
    5: "IPD calibration and verification",
}

METRE = 1000.0  # 1 mm -> 1 unit
RADIAN = 1000.0  # 1 mrad -> 1 unit
DIOPTER = 10.0  # 0.1 D -> 1 unit

_RAIL_FAR = 1.0  # launch point of the simulated rail laser, metres out along the rail


@dataclass(frozen=True)
class Tolerances:
    level_deg: float = 0.05
    centering_m: float = 0.0005
    squareness_deg: float = 0.1
    collimation_diopters: float = 0.05
    beamsplitter_angle_deg: float = 1.0 / 60.0
    beamsplitter_position_m: float = 0.0005
    ipd_m: float = 0.0005

    @classmethod
    def from_mapping(cls, mapping: dict) -> "Tolerances":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ValueError(f"unknown tolerance names: {', '.join(unknown)}")
        values = {}
        for k, v in mapping.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v >= 0:
                raise ValueError(f"tolerance {k} must be a number >= 0, got {v!r}")
            values[k] = float(v)
        return cls(**values)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class CheckResult:
    step: int
    name: str
    residuals: dict[str, float]
    units: dict[str, str]
    tolerance: dict[str, float]
    flags: list[str] = field(default_factory=list)
    annotations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if self.flags:
            return False
        return all(abs(v) <= self.tolerance[k] for k, v in self.residuals.items())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.residuals.items() if not abs(v) <= self.tolerance[k]]

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "name": self.name,
            "pass": self.passed,
            "residuals": {
                k: {"value": v, "unit": self.units[k], "tolerance": self.tolerance[k]} for k, v in self.residuals.items()
            },
            "flags": list(self.flags),
            "annotations": list(self.annotations),
        }


class _Builder:
    def __init__(self, step: int):
        self.result = CheckResult(step, STEP_NAMES[step], {}, {}, {})

    def add(self, name: str, value: float, unit: str, tol: float) -> None:
        self.result.residuals[name] = float(value)
        self.result.units[name] = unit
        self.result.tolerance[name] = float(tol)


# ---------------------------------------------------------------------------
# signed components shared by the checks and the residual vector


def _step1_components(bench: Bench) -> dict[str, np.ndarray]:
    n = bench.table_normal
    comps = {"table": np.array([n[0], n[2]])}
    ups = {}
    for side in SIDES:
        up = tilt_rotation(bench.wing(side)) @ Y_AXIS
        comps[side] = np.array([up[0], up[2]])
        ups[side] = wing_rotation(bench, side) @ Y_AXIS
    comps["parallel"] = cross(ups["left"], ups["right"])
    return comps


def check_table_level(bench: Bench, tol: Tolerances = Tolerances()) -> CheckResult:
    """Step 1: table level with gravity; each wing flat on it; wings parallel."""
    b = _Builder(1)
    b.add("table_level_deg", angle_between(bench.table_normal, Y_AXIS), "deg", tol.level_deg)
    ups = {}
    for side in SIDES:
        up = tilt_rotation(bench.wing(side)) @ Y_AXIS
        b.add(f"{side}_wing_flat_deg", angle_between(up, Y_AXIS), "deg", tol.level_deg)
        ups[side] = wing_rotation(bench, side) @ Y_AXIS
    b.add("wing_parallelism_deg", angle_between(ups["left"], ups["right"]), "deg", tol.level_deg)
    return b.result


def check_element_centering(bench: Bench, tol: Tolerances = Tolerances()) -> CheckResult:
    """Step 2: every element centred on (and square to) its rail's optical axis.

    Offsets are rail-relative, so they do not depend on how the wing is turned.
    """
    b = _Builder(2)
    for side in SIDES:
        w = bench.wing(side)
        for role in reversed(LENS_ROLES):
            lens = w.lens(role)
            b.add(f"{side}.{role}.lateral_m", lens.lateral_m, "m", tol.centering_m)
            b.add(f"{side}.{role}.height_m", lens.height_m, "m", tol.centering_m)
            b.add(f"{side}.{role}.tilt_deg", lens.tilt_deg, "deg", tol.squareness_deg)
        b.add(f"{side}.monitor.crosshair_lateral_m", w.monitor.lateral_m, "m", tol.centering_m)
        b.add(f"{side}.monitor.crosshair_height_m", w.monitor.height_m, "m", tol.centering_m)
    return b.result


def front_end_train(wing: Wing) -> OpticalTrain:
    """Monitor -> minimization -> collimating sub-train from rail positions."""
    mini = wing.lens("minimization")
    col = wing.lens("collimating")
    return OpticalTrain(
        wing.monitor.axial_m - mini.axial_m,
        (ThinLens(mini.power_diopters), Gap(mini.axial_m - col.axial_m), ThinLens(col.power_diopters)),
    )


def dioptometer_reading(wing: Wing) -> float:
    return collimation_error(front_end_train(wing))


def check_collimation(bench: Bench, tol: Tolerances = Tolerances()) -> CheckResult:
    """Step 3: virtual dioptometer behind each collimating lens reads 0 D."""
    b = _Builder(3)
    for side in SIDES:
        reading = dioptometer_reading(bench.wing(side))
        if math.isinf(reading):
            b.result.flags.append(f"{side}: focus sentinel (image lands on the collimating lens)")
        b.add(f"{side}.collimation_diopters", reading, "D", tol.collimation_diopters)
    return b.result


@dataclass(frozen=True)
class _SplitterProbe:
    direction: np.ndarray  # reflected laser direction (wing frame)
    hit: np.ndarray  # reflection point
    crosshair_miss: np.ndarray  # (height, lateral) miss on the monitor plane
    center_offset: np.ndarray  # beamsplitter centre off the forward axis (rail, height)
    miss: bool


def _probe_splitter(wing: Wing) -> _SplitterProbe | None:
    """Laser from the modelled eye centre along the forward axis, off the splitter and down the rail."""
    if wing.beamsplitter is None:
        return None
    mirror = _wing_rows(wing)[-1]
    origin = (0.0, 0.0, 0.0)
    hit, d, _, flags, _, _ = kernels.trace_path([mirror], origin, (0.0, 0.0, 1.0))
    if flags & kernels.NOT_REACHED:
        return None
    rows = [r for r in reversed(_wing_rows(wing)[:-1])]
    mon = wing.monitor
    crosshair = rail_point(wing, mon.axial_m, mon.lateral_m, mon.height_m)
    rail_dir = np.array([wing.sign, 0.0, 0.0])
    rows.append(_row(kernels.PLANE, crosshair, rail_dir, Y_AXIS, Z_AXIS))
    _, _, _, f2, u, v = kernels.trace_path(rows, hit, d)
    bs = wing.beamsplitter
    return _SplitterProbe(
        direction=np.asarray(d),
        hit=np.asarray(hit),
        crosshair_miss=np.array([u, v]) if not f2 & kernels.NOT_REACHED else np.array([math.inf, math.inf]),
        center_offset=np.array([bs.rail_m, bs.height_m]),
        miss=bool(flags & kernels.EXTENT_MISS) or bool(f2 & kernels.NOT_REACHED),
    )


def _step4_components(wing: Wing, probe: _SplitterProbe) -> np.ndarray:
    d = probe.direction
    along = wing.sign * d[0]
    return np.array(
        [
            math.atan2(d[1], along) * RADIAN,
            math.atan2(d[2], along) * RADIAN,
            probe.hit[1] * METRE,
            (probe.hit[2] - wing.axis_forward_m) * METRE,
            probe.crosshair_miss[0] * METRE,
            probe.crosshair_miss[1] * METRE,
            probe.center_offset[0] * METRE,
            probe.center_offset[1] * METRE,
        ]
    )


def check_beamsplitter(bench: Bench, tol: Tolerances = Tolerances()) -> CheckResult:
    """Step 4: the reflected eye axis runs down the rail axis onto the monitor crosshair.

    Residuals per wing: (a) angle between the reflected laser and the rail
    axis; (b) distance of the reflection point from the rail axis; (c) miss
    of the laser, carried back through the rail lenses, from the monitor
    crosshair; (d) distance of the splitter centre from the pivot's forward
    axis.
    """
    b = _Builder(4)
    for side in SIDES:
        wing = bench.wing(side)
        probe = _probe_splitter(wing)
        if probe is None:
            b.result.flags.append(f"{side}: laser misses the beamsplitter")
            for name, unit, t in _STEP4_FIELDS(tol):
                b.add(f"{side}.{name}", math.inf, unit, t)
            continue
        if probe.miss:
            b.result.flags.append(f"{side}: laser misses the beamsplitter")
        rail_dir = np.array([wing.sign, 0.0, 0.0])
        b.add(f"{side}.axis_angle_deg", angle_between(probe.direction, rail_dir), "deg", tol.beamsplitter_angle_deg)
        b.add(
            f"{side}.axis_offset_m",
            math.hypot(probe.hit[1], probe.hit[2] - wing.axis_forward_m),
            "m",
            tol.beamsplitter_position_m,
        )
        b.add(f"{side}.crosshair_miss_m", float(np.hypot(*probe.crosshair_miss)), "m", tol.beamsplitter_position_m)
        b.add(f"{side}.center_offset_m", float(np.hypot(*probe.center_offset)), "m", tol.beamsplitter_position_m)
    return b.result


def _STEP4_FIELDS(tol: Tolerances):
    return [
        ("axis_angle_deg", "deg", tol.beamsplitter_angle_deg),
        ("axis_offset_m", "m", tol.beamsplitter_position_m),
        ("crosshair_miss_m", "m", tol.beamsplitter_position_m),
        ("center_offset_m", "m", tol.beamsplitter_position_m),
    ]


def folded_axis(bench: Bench, side: str) -> tuple[np.ndarray, np.ndarray] | None:
    """World line (point, direction) of the rail axis after the splitter, wings at zero azimuth."""
    wing = bench.wing(side)
    if wing.beamsplitter is None:
        return None
    start = rail_point(wing, _RAIL_FAR)
    hit, d, _, flags, _, _ = kernels.trace_path([_wing_rows(wing)[-1]], start, (-wing.sign, 0.0, 0.0))
    if flags & kernels.NOT_REACHED:
        return None
    rot = wing_rotation(bench, side, azimuth_deg=0.0)
    return bench.pivot(side) + rot @ np.asarray(hit), rot @ np.asarray(d)


def _line_at_z(point: np.ndarray, direction: np.ndarray, z: float) -> np.ndarray:
    t = (z - point[2]) / direction[2]
    return point + t * direction


def _step5_components(bench: Bench, user_ipd: float) -> tuple[dict[str, np.ndarray], bool]:
    comps: dict[str, np.ndarray] = {}
    ok = True
    zt = bench.target_distance_m
    for side in SIDES:
        s = -1.0 if side == "left" else 1.0
        laser_x = s * user_ipd / 2.0
        pivot = bench.pivot(side)
        comps[f"{side}.pivot"] = np.array([pivot[0] - laser_x])
        axis = folded_axis(bench, side)
        if axis is None or abs(axis[1][2]) < 1e-9:
            ok = False
            comps[f"{side}.axis_eye"] = np.array([math.inf, math.inf])
            comps[f"{side}.axis_target"] = np.array([math.inf, math.inf])
            continue
        at_eye = _line_at_z(axis[0], axis[1], 0.0)
        at_target = _line_at_z(axis[0], axis[1], zt)
        comps[f"{side}.axis_eye"] = np.array([at_eye[0] - laser_x, at_eye[1]])
        comps[f"{side}.axis_target"] = np.array([at_target[0] - laser_x, at_target[1]])
    comps["ipd"] = np.array([bench.ipd_m - user_ipd])
    return comps, ok


def check_ipd(bench: Bench, user_ipd: float, tol: Tolerances = Tolerances()) -> CheckResult:
    """Step 5: two lasers an IPD apart bisect the target, each wing's pivot and its folded axis.

    The wings are evaluated at infinity vergence (zero azimuth), as the
    procedure is run with the rails returned to parallel.
    """
    if not user_ipd > 0:
        raise ValueError(f"user ipd must be > 0, got {user_ipd!r}")
    b = _Builder(5)
    comps, ok = _step5_components(bench, user_ipd)
    if not ok:
        b.result.flags.append("folded optical axis cannot be traced")
    for side in SIDES:
        b.add(f"{side}.pivot_offset_m", abs(comps[f"{side}.pivot"][0]), "m", tol.ipd_m)
        b.add(f"{side}.axis_offset_eye_m", float(np.hypot(*comps[f"{side}.axis_eye"])), "m", tol.ipd_m)
        b.add(f"{side}.axis_offset_target_m", float(np.hypot(*comps[f"{side}.axis_target"])), "m", tol.ipd_m)
    b.add("ipd_m", abs(bench.ipd_m - user_ipd), "m", tol.ipd_m)
    return b.result


# ---------------------------------------------------------------------------
# report


@dataclass
class CalibrationReport:
    checks: list[CheckResult]
    fingerprint: str
    user_ipd: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed_steps(self) -> list[int]:
        return [c.step for c in self.checks if not c.passed]

    def step(self, k: int) -> CheckResult:
        return self.checks[k - 1]

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "passed_steps": sum(c.passed for c in self.checks),
            "failed_steps": self.failed_steps,
            "fingerprint": self.fingerprint,
            "user_ipd_m": self.user_ipd,
            "checks": [c.to_dict() for c in self.checks],
        }


def run_checklist(bench: Bench, user_ipd: float | None = None, tol: Tolerances = Tolerances()) -> CalibrationReport:
    """Run steps 1-5 in order.

    Checks after a failed step are annotated ``upstream-failed`` because
    errors introduced early compound downstream.  Step 5 follows an IPD
    change, so steps 1-4 are always re-evaluated on the same bench.
    """
    if user_ipd is None:
        user_ipd = bench.ipd_m
    checks = [
        check_table_level(bench, tol),
        check_element_centering(bench, tol),
        check_collimation(bench, tol),
        check_beamsplitter(bench, tol),
        check_ipd(bench, user_ipd, tol),
    ]
    failed_before: list[int] = []
    for c in checks:
        if failed_before:
            c.annotations.append("upstream-failed: step " + ", ".join(map(str, failed_before)))
        if not c.passed:
            failed_before.append(c.step)
    return CalibrationReport(checks, bench_fingerprint(bench), float(user_ipd))


# ---------------------------------------------------------------------------
# residual vector


def residual_blocks(bench: Bench, user_ipd: float | None = None) -> list[tuple[int, str, np.ndarray]]:
    """Signed residual components grouped as ``(step, label, values)`` in vector order."""
    if user_ipd is None:
        user_ipd = bench.ipd_m
    blocks: list[tuple[int, str, np.ndarray]] = []
    c1 = _step1_components(bench)
    blocks.append((1, "table.level", c1["table"] * RADIAN))
    for side in SIDES:
        blocks.append((1, f"{side}.wing_flat", c1[side] * RADIAN))
    blocks.append((1, "wing_parallelism", np.asarray(c1["parallel"]) * RADIAN))
    for side in SIDES:
        w = bench.wing(side)
        for role in reversed(LENS_ROLES):
            lens = w.lens(role)
            blocks.append(
                (2, f"{side}.{role}", np.array([lens.lateral_m * METRE, lens.height_m * METRE, math.radians(lens.tilt_deg) * RADIAN]))
            )
        blocks.append((2, f"{side}.monitor", np.array([w.monitor.lateral_m * METRE, w.monitor.height_m * METRE])))
    for side in SIDES:
        blocks.append((3, f"{side}.collimation", np.array([dioptometer_reading(bench.wing(side)) * DIOPTER])))
    for side in SIDES:
        w = bench.wing(side)
        probe = _probe_splitter(w)
        if probe is None:
            blocks.append((4, f"{side}.beamsplitter", np.full(8, math.inf)))
        else:
            blocks.append((4, f"{side}.beamsplitter", _step4_components(w, probe)))
    c5, _ = _step5_components(bench, user_ipd)
    for side in SIDES:
        blocks.append((5, f"{side}.pivot", c5[f"{side}.pivot"] * METRE))
        blocks.append((5, f"{side}.axis_eye", c5[f"{side}.axis_eye"] * METRE))
        blocks.append((5, f"{side}.axis_target", c5[f"{side}.axis_target"] * METRE))
    blocks.append((5, "ipd", c5["ipd"] * METRE))
    return blocks


def residual_vector(bench: Bench, user_ipd: float | None = None) -> np.ndarray:
    return np.concatenate([v for _, _, v in residual_blocks(bench, user_ipd)])


def residual_labels(bench: Bench) -> list[tuple[int, str]]:
    """``(step, label)`` for every vector entry, in order."""
    out = []
    for step, label, v in residual_blocks(bench):
        out += [(step, f"{label}[{i}]") for i in range(len(v))]
    return out


def step_slices(bench: Bench) -> dict[int, slice]:
    out: dict[int, list[int]] = {}
    i = 0
    for step, _, v in residual_blocks(bench):
        out.setdefault(step, [i, i])
        i += len(v)
        out[step][1] = i
    return {k: slice(a, b) for k, (a, b) in out.items()}


# which step's check first sees each DOF; None = no check observes it
def dof_step(path: str) -> int | None:
    parts = path.split(".")
    if path == "ipd_m":
        return 5
    if parts[0] == "table":
        return 1
    if parts[0] != "wings" or len(parts) < 3:
        return None
    rest = parts[2:]
    if rest[0] in ("pitch_deg", "roll_deg"):
        return 1
    if rest[0] == "axis_forward_m":
        return 4
    if rest[0] == "beamsplitter":
        return 4
    if rest[0] in ("monitor", "minimization", "collimating", "accommodation") and len(rest) == 2:
        role, attr = rest
        if attr in ("lateral_m", "height_m", "tilt_deg"):
            return 2
        if attr in ("axial_m", "power_diopters") and role != "accommodation":
            return 3
    return None


__all__ = [
    "CalibrationReport",
    "CheckResult",
    "Tolerances",
    "check_beamsplitter",
    "check_collimation",
    "check_element_centering",
    "check_ipd",
    "check_table_level",
    "dof_step",
    "residual_vector",
    "run_checklist",
]
