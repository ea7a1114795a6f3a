"""The assembled two-wing haploscope and end-to-end stimulus simulation.

Wing frame
----------
Each wing is described in a local frame with its origin on the pivot (the
modelled eye centre of rotation) and axes aligned with the world frame when
the wing is un-rotated: ``+z`` is the forward (gaze) axis, ``+y`` is up and
the rail runs outward along ``s * x`` where ``s = -1`` for the left wing and
``+1`` for the right.  The rail's optical axis is the line ``y = 0,
z = axis_forward_m``.  Rail coordinates (``axial_m``) are measured outward
along that line from the point where it crosses the forward axis, which is
where a nominal beamsplitter folds the light toward the eye.

``lateral_m`` offsets move an element along ``+z`` (forward), ``height_m``
along ``+y``.  ``rail_azimuth_deg`` is the inward turn of a wing about the
vertical axis through its pivot, positive toward the midline on both sides.

World pose of a wing: ``p_world = pivot + R_table @ R_y(inward) @ R_tilt @ p_local``.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import (
    EyeModel,
    GeometryError,
    Ray3,
    Y_AXIS,
    Z_AXIS,
    cross,
    norm,
    rot_x,
    rot_y,
    rot_z,
    rotation_matrix,
    vergence_geometry,
)
from .paraxial import (
    Gap,
    OpticalTrain,
    ThinLens,
    accommodation_power_for,
    compose_train,
    source_vergence_through,
)

SIDES = ("left", "right")
LENS_ROLES = ("accommodation", "collimating", "minimization")
IPD_RANGE = (0.04, 0.08)
# values below this are numerical noise of the first-order model
NOISE_FLOOR = 1e-12

# nominal layout: metres along the rail from the fold point, unless noted
NOMINAL_MONITOR_GAP = 0.10
NOMINAL_MIN_TO_COL = 0.05
NOMINAL_COL_TO_ACC = 0.05
NOMINAL_ACC_TO_SPLITTER = 0.05
NOMINAL_EYE_RELIEF = 0.10  # nodal point to beamsplitter
MINIMIZATION_POWER = -10.0
COLLIMATING_POWER = 10.0


class BenchInvariantError(ValueError):
    """A bench or wing violates a structural invariant.  ``path`` names the part."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class FoldFailure(RuntimeError):
    """The chief ray cannot be carried from the monitor to the eye."""


def side_sign(side: str) -> int:
    if side == "left":
        return -1
    if side == "right":
        return 1
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _finite(path: str, value: float, *, positive: bool = False, nonneg: bool = False) -> None:
    if not math.isfinite(value):
        raise BenchInvariantError(path, f"must be finite, got {value!r}")
    if positive and not value > 0:
        raise BenchInvariantError(path, f"must be > 0, got {value!r}")
    if nonneg and value < 0:
        raise BenchInvariantError(path, f"must be >= 0, got {value!r}")


@dataclass(frozen=True)
class RailLens:
    role: str
    power_diopters: float
    axial_m: float
    aperture_radius_m: float = 0.0254
    lateral_m: float = 0.0
    height_m: float = 0.0
    tilt_deg: float = 0.0


@dataclass(frozen=True)
class Monitor:
    axial_m: float
    lateral_m: float = 0.0
    height_m: float = 0.0
    pixel_pitch_m: float = 2.7e-4


@dataclass(frozen=True)
class Beamsplitter:
    """Ideal zero-thickness reflector; ``reflectance`` is carried but unused at first order."""

    forward_m: float
    rail_m: float = 0.0
    height_m: float = 0.0
    yaw_deg: float = 0.0
    tilt_deg: float = 0.0
    roll_deg: float = 0.0
    half_extent_m: float = 0.03
    reflectance: float = 0.5


@dataclass(frozen=True)
class Wing:
    side: str
    monitor: Monitor
    lenses: tuple[RailLens, ...]
    beamsplitter: Beamsplitter | None
    axis_forward_m: float = 0.106
    rail_azimuth_deg: float = 0.0
    pitch_deg: float = 0.0
    roll_deg: float = 0.0

    def __post_init__(self):
        where = f"wings.{self.side}"
        side_sign(self.side)
        lenses = tuple(self.lenses)
        roles = [lens.role for lens in lenses]
        for role in LENS_ROLES:
            if roles.count(role) != 1:
                raise BenchInvariantError(where, f"exactly one {role} lens required, found {roles.count(role)}")
        if len(lenses) != len(LENS_ROLES):
            extra = sorted(set(roles) - set(LENS_ROLES))
            raise BenchInvariantError(where, f"unknown lens roles {extra}")
        object.__setattr__(self, "lenses", tuple(sorted(lenses, key=lambda lens: LENS_ROLES.index(lens.role))))
        for name in ("axis_forward_m", "rail_azimuth_deg", "pitch_deg", "roll_deg"):
            _finite(f"{where}.{name}", getattr(self, name))
        for lens in self.lenses:
            p = f"{where}.{lens.role}"
            for name in ("power_diopters", "axial_m", "lateral_m", "height_m", "tilt_deg"):
                _finite(f"{p}.{name}", getattr(lens, name))
            if not lens.aperture_radius_m > 0:
                raise BenchInvariantError(f"{p}.aperture_radius_m", "must be > 0")
        for name in ("axial_m", "lateral_m", "height_m"):
            _finite(f"{where}.monitor.{name}", getattr(self.monitor, name))
        _finite(f"{where}.monitor.pixel_pitch_m", self.monitor.pixel_pitch_m, positive=True)
        fold = 0.0
        if self.beamsplitter is not None:
            bs = self.beamsplitter
            for name in ("forward_m", "rail_m", "height_m", "yaw_deg", "tilt_deg", "roll_deg"):
                _finite(f"{where}.beamsplitter.{name}", getattr(bs, name))
            if not bs.half_extent_m > 0:
                raise BenchInvariantError(f"{where}.beamsplitter.half_extent_m", "must be > 0")
            if not 0 <= bs.reflectance <= 1:
                raise BenchInvariantError(f"{where}.beamsplitter.reflectance", "must be in [0, 1]")
            fold = bs.rail_m
        order = [fold] + [self.lens(r).axial_m for r in LENS_ROLES] + [self.monitor.axial_m]
        if any(b <= a for a, b in zip(order, order[1:])):
            raise BenchInvariantError(
                where,
                "rail order must be fold point < accommodation < collimating < minimization < monitor, "
                f"got {order}",
            )

    @property
    def sign(self) -> int:
        return side_sign(self.side)

    def lens(self, role: str) -> RailLens:
        for lens in self.lenses:
            if lens.role == role:
                return lens
        raise KeyError(role)


@dataclass(frozen=True)
class Table:
    pitch_deg: float = 0.0
    roll_deg: float = 0.0


@dataclass(frozen=True)
class EyeParams:
    nodal_offset_m: float = 0.006
    pupil_offset_m: float = 0.003


@dataclass(frozen=True)
class Bench:
    """Full haploscope state.  Pivots sit at ``(-ipd/2, 0, 0)`` and ``(+ipd/2, 0, 0)``.

    ``focal_distance_m`` and ``vergence_distance_m`` record the intended
    presentation the bench was set up for; tolerance studies compare
    against them.
    """

    left: Wing
    right: Wing
    ipd_m: float
    table: Table = field(default_factory=Table)
    eye: EyeParams = field(default_factory=EyeParams)
    focal_distance_m: float = math.inf
    vergence_distance_m: float = math.inf
    target_distance_m: float = 1.0

    def __post_init__(self):
        if self.left.side != "left" or self.right.side != "right":
            raise BenchInvariantError("wings", "left/right wings are swapped")
        _finite("ipd_m", self.ipd_m, positive=True)
        _finite("table.pitch_deg", self.table.pitch_deg)
        _finite("table.roll_deg", self.table.roll_deg)
        _finite("eye.nodal_offset_m", self.eye.nodal_offset_m, nonneg=True)
        _finite("eye.pupil_offset_m", self.eye.pupil_offset_m, nonneg=True)
        _finite("target_distance_m", self.target_distance_m, positive=True)
        for name in ("focal_distance_m", "vergence_distance_m"):
            v = getattr(self, name)
            if math.isnan(v) or v <= 0:
                raise BenchInvariantError(name, f"must be > 0 or inf, got {v!r}")

    @property
    def ipd(self) -> float:
        return self.ipd_m

    @property
    def wings(self) -> dict[str, Wing]:
        return {"left": self.left, "right": self.right}

    def wing(self, side: str) -> Wing:
        side_sign(side)
        return self.left if side == "left" else self.right

    def pivot(self, side: str) -> np.ndarray:
        return np.array([side_sign(side) * self.ipd_m / 2.0, 0.0, 0.0])

    @property
    def table_rotation(self) -> np.ndarray:
        return rot_x(self.table.pitch_deg) @ rot_z(self.table.roll_deg)

    @property
    def table_normal(self) -> np.ndarray:
        return self.table_rotation @ Y_AXIS

    @property
    def laser_rig(self) -> list[Ray3]:
        """The two IPD laser levels, run back from the calibration target."""
        return [
            Ray3(np.array([side_sign(s) * self.ipd_m / 2.0, 0.0, self.target_distance_m]), -Z_AXIS)
            for s in SIDES
        ]

    def replace_wing(self, wing: Wing) -> "Bench":
        return dataclasses.replace(self, **{wing.side: wing})


# ---------------------------------------------------------------------------
# wing-frame geometry


def tilt_rotation(wing: Wing) -> np.ndarray:
    return rot_x(wing.pitch_deg) @ rot_z(wing.sign * wing.roll_deg)


def wing_rotation(bench: Bench, side: str, azimuth_deg: float | None = None) -> np.ndarray:
    wing = bench.wing(side)
    az = wing.rail_azimuth_deg if azimuth_deg is None else azimuth_deg
    return bench.table_rotation @ rot_y(-wing.sign * az) @ tilt_rotation(wing)


def rail_point(wing: Wing, axial: float, lateral: float = 0.0, height: float = 0.0) -> np.ndarray:
    return np.array([wing.sign * axial, height, wing.axis_forward_m + lateral])


def lens_frame(wing: Wing, lens: RailLens) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Centre, optical axis (pointing toward the fold), and transverse axes of a rail lens."""
    center = rail_point(wing, lens.axial_m, lens.lateral_m, lens.height_m)
    axis = rot_y(lens.tilt_deg) @ np.array([-wing.sign, 0.0, 0.0])
    e1 = Y_AXIS.copy()
    e2 = cross(axis, e1)
    return center, axis, e1, e2


def splitter_normal(wing: Wing) -> np.ndarray:
    """Unit normal of the beamsplitter in the wing frame (faces the eye and the rail)."""
    bs = wing.beamsplitter
    n0 = np.array([-wing.sign, 0.0, 1.0]) / math.sqrt(2.0)
    tilt_axis = cross(Y_AXIS, n0)
    tilt_axis /= norm(tilt_axis)
    n = rot_y(bs.yaw_deg) @ (rotation_matrix(tilt_axis, bs.tilt_deg) @ n0)
    return n / norm(n)


def splitter_center(wing: Wing) -> np.ndarray:
    bs = wing.beamsplitter
    return np.array([wing.sign * bs.rail_m, bs.height_m, bs.forward_m])


def _row(kind, point, normal, e1, e2, power=0.0, radius=math.inf) -> list[float]:
    return [float(kind), *map(float, point), *map(float, normal), *map(float, e1), *map(float, e2), float(power), float(radius), 0.0]


def _perp_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = Y_AXIS if abs(n[1]) < 0.9 else Z_AXIS
    e1 = cross(ref, n)
    e1 /= norm(e1)
    e2 = cross(n, e1)
    return e1, e2


@functools.lru_cache(maxsize=4096)
def _wing_rows(wing: Wing) -> tuple[tuple[float, ...], ...]:
    """Kernel rows for the rail lenses (monitor side first) and the beamsplitter."""
    rows = []
    for role in reversed(LENS_ROLES):
        lens = wing.lens(role)
        c, a, e1, e2 = lens_frame(wing, lens)
        rows.append(tuple(_row(kernels.LENS, c, a, e1, e2, lens.power_diopters, lens.aperture_radius_m)))
    if wing.beamsplitter is not None:
        n = splitter_normal(wing)
        e1, e2 = _perp_basis(n)
        rows.append(tuple(_row(kernels.MIRROR, splitter_center(wing), n, e1, e2, 0.0, wing.beamsplitter.half_extent_m)))
    return tuple(rows)


def wing_eye(bench: Bench, side: str) -> EyeModel:
    """Eye centred on the wing pivot, looking along the wing's forward axis."""
    g = wing_rotation(bench, side) @ Z_AXIS
    return EyeModel(bench.pivot(side), g / norm(g), bench.eye.nodal_offset_m, bench.eye.pupil_offset_m)


def aligned_eyes(bench: Bench) -> tuple[EyeModel, EyeModel]:
    return wing_eye(bench, "left"), wing_eye(bench, "right")


def user_eyes(ipd: float, vergence_distance: float, eye: EyeParams = EyeParams()) -> tuple[EyeModel, EyeModel]:
    """A user's eyes fixating a midline target at ``vergence_distance``."""
    inward = vergence_geometry(ipd, vergence_distance).inward_rotation
    out = []
    for side in SIDES:
        s = side_sign(side)
        g = rot_y(-s * inward) @ Z_AXIS
        out.append(EyeModel(np.array([s * ipd / 2.0, 0.0, 0.0]), g, eye.nodal_offset_m, eye.pupil_offset_m))
    return tuple(out)


@dataclass(frozen=True)
class ChiefRay:
    """Monitor-crosshair ray that reaches the eye's nodal point, in world coordinates."""

    lengths: tuple[float, ...]
    arrival_direction: np.ndarray
    vignetted: bool
    flags: int
    points: tuple[np.ndarray, ...]


def trace_chief(
    bench: Bench, side: str, eye: EyeModel | None = None, *, source_offset=(0.0, 0.0), with_points: bool = False
) -> ChiefRay:
    """Solve for the ray from the monitor crosshair through the eye's nodal point.

    The solve runs in the wing frame, so a joint rotation of wing and eye
    leaves the result unchanged.  ``source_offset`` shifts the launch point
    on the monitor by ``(lateral, height)`` metres, for marginal rays.
    """
    wing = bench.wing(side)
    if wing.beamsplitter is None:
        raise FoldFailure(f"wings.{side}: no beamsplitter to fold the light into the eye")
    if eye is None:
        eye = wing_eye(bench, side)
    rot = wing_rotation(bench, side)
    pivot = bench.pivot(side)
    nodal = rot.T @ (eye.nodal_point - pivot)
    gaze = rot.T @ eye.gaze
    e1, e2 = _perp_basis(gaze)
    rows = list(_wing_rows(wing))
    rows.append(_row(kernels.PLANE, nodal, gaze, e1, e2))
    mon = wing.monitor
    origin = rail_point(wing, mon.axial_m, mon.lateral_m + source_offset[0], mon.height_m + source_offset[1])
    base = np.array([-wing.sign, 0.0, 0.0])
    flags, s1, s2, d_end, lengths, _ = kernels.solve_chief(
        rows, origin.tolist(), base.tolist(), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
    )
    if flags & (kernels.NOT_REACHED | kernels.NOT_CONVERGED):
        raise FoldFailure(f"wings.{side}: chief ray from the monitor never reaches the eye")
    if flags & kernels.EXTENT_MISS:
        raise FoldFailure(f"wings.{side}: chief ray misses the beamsplitter")
    world_pts: tuple[np.ndarray, ...] = ()
    if with_points:
        d = base + s1 * Y_AXIS + s2 * Z_AXIS
        d /= norm(d)
        p = origin
        pts = [origin]
        for row in rows:
            p, d, _, _, _, _ = kernels.trace_path([row], p, d)
            pts.append(np.asarray(p))
        world_pts = tuple(pivot + rot @ q for q in pts)
    return ChiefRay(
        lengths=tuple(float(x) for x in lengths),
        arrival_direction=rot @ np.asarray(d_end),
        vignetted=bool(flags & kernels.VIGNETTED),
        flags=flags,
        points=world_pts,
    )


def _train_from_lengths(wing: Wing, lengths) -> OpticalTrain:
    mon_to_min, min_to_col, col_to_acc, acc_to_bs, bs_to_eye = lengths
    return OpticalTrain(
        mon_to_min,
        (
            ThinLens(wing.lens("minimization").power_diopters, wing.lens("minimization").aperture_radius_m),
            Gap(min_to_col),
            ThinLens(wing.lens("collimating").power_diopters, wing.lens("collimating").aperture_radius_m),
            Gap(col_to_acc),
            ThinLens(wing.lens("accommodation").power_diopters, wing.lens("accommodation").aperture_radius_m),
            Gap(acc_to_bs + bs_to_eye),
        ),
    )


def unfolded_train(bench: Bench, side: str, eye: EyeModel | None = None) -> OpticalTrain:
    """Monitor-to-eye train with gaps equal to the 3D path lengths along the chief ray."""
    chief = trace_chief(bench, side, eye)
    return _train_from_lengths(bench.wing(side), chief.lengths)


# ---------------------------------------------------------------------------
# assembly and user setup


def nominal_wing(
    side: str,
    accommodation_power: float,
    rail_azimuth_deg: float = 0.0,
    *,
    accommodation_gap: float = NOMINAL_COL_TO_ACC,
    acc_to_splitter: float = NOMINAL_ACC_TO_SPLITTER,
    eye_relief: float = NOMINAL_EYE_RELIEF,
    nodal_offset: float = 0.006,
    aperture_radius: float = 0.0254,
    half_extent: float = 0.03,
) -> Wing:
    # rounded so configs print the design values
    acc = round(acc_to_splitter, 12)
    col = round(acc + accommodation_gap, 12)
    mini = round(col + NOMINAL_MIN_TO_COL, 12)
    mon = round(mini + NOMINAL_MONITOR_GAP, 12)
    forward = round(nodal_offset + eye_relief, 12)
    return Wing(
        side=side,
        monitor=Monitor(axial_m=mon),
        lenses=(
            RailLens("accommodation", accommodation_power, acc, aperture_radius),
            RailLens("collimating", COLLIMATING_POWER, col, aperture_radius),
            RailLens("minimization", MINIMIZATION_POWER, mini, aperture_radius),
        ),
        beamsplitter=Beamsplitter(forward_m=forward, half_extent_m=half_extent),
        axis_forward_m=forward,
        rail_azimuth_deg=rail_azimuth_deg,
    )


def assemble_nominal(
    ipd: float,
    focal_distance: float,
    vergence_distance: float,
    *,
    accommodation_gap: float = NOMINAL_COL_TO_ACC,
    acc_to_splitter: float = NOMINAL_ACC_TO_SPLITTER,
    eye_relief: float = NOMINAL_EYE_RELIEF,
    eye: EyeParams = EyeParams(),
) -> Bench:
    """Build the reference haploscope for one user and one presentation.

    The accommodation lens is chosen for the lens-to-nodal-point path
    ``acc_to_splitter + eye_relief`` (0.15 m by default); both wings are
    turned inward for ``vergence_distance``.
    """
    if not ipd > 0:
        raise ValueError(f"ipd must be > 0, got {ipd!r}")
    power = accommodation_power_for(focal_distance, acc_to_splitter + eye_relief)
    inward = vergence_geometry(ipd, vergence_distance).inward_rotation
    wings = {
        side: nominal_wing(
            side,
            power,
            inward,
            accommodation_gap=accommodation_gap,
            acc_to_splitter=acc_to_splitter,
            eye_relief=eye_relief,
            nodal_offset=eye.nodal_offset_m,
        )
        for side in SIDES
    }
    return Bench(
        left=wings["left"],
        right=wings["right"],
        ipd_m=float(ipd),
        eye=eye,
        focal_distance_m=float(focal_distance),
        vergence_distance_m=float(vergence_distance),
    )


def configure_for_user(bench: Bench, ipd: float, vergence_distance: float, ipd_range=IPD_RANGE) -> Bench:
    """Move the pivots to ``+-ipd/2`` and turn both wings for ``vergence_distance``.

    Elements keep their rail-relative placement, so they move rigidly with
    their wing.
    """
    lo, hi = ipd_range
    if not lo <= ipd <= hi:
        raise ValueError(f"ipd {ipd!r} m is outside the configured range [{lo}, {hi}] m")
    inward = vergence_geometry(ipd, vergence_distance).inward_rotation
    left = dataclasses.replace(bench.left, rail_azimuth_deg=inward)
    right = dataclasses.replace(bench.right, rail_azimuth_deg=inward)
    return dataclasses.replace(bench, left=left, right=right, ipd_m=float(ipd), vergence_distance_m=float(vergence_distance))


def set_focal_distance(bench: Bench, focal_distance: float) -> Bench:
    """Re-power both accommodation lenses for a new presented focal distance."""
    for side in SIDES:
        wing = bench.wing(side)
        try:
            path = unfolded_train(bench, side).elements[-1].length
        except FoldFailure:
            acc = wing.lens("accommodation")
            path = acc.axial_m + wing.axis_forward_m - bench.eye.nodal_offset_m
        power = accommodation_power_for(focal_distance, path)
        lenses = tuple(
            dataclasses.replace(lens, power_diopters=power) if lens.role == "accommodation" else lens
            for lens in wing.lenses
        )
        bench = bench.replace_wing(dataclasses.replace(wing, lenses=lenses))
    return dataclasses.replace(bench, focal_distance_m=float(focal_distance))


# ---------------------------------------------------------------------------
# stimulus


@dataclass(frozen=True)
class EyeStimulus:
    focal_demand: float
    gaze_direction: np.ndarray
    image_center_offset: float
    offset_horizontal: float
    offset_vertical: float
    angular_magnification: float
    vignetted: bool

    def to_dict(self) -> dict:
        return {
            "focal_demand_diopters": self.focal_demand,
            "gaze_direction": [float(x) for x in self.gaze_direction],
            "image_center_offset_deg": self.image_center_offset,
            "offset_horizontal_deg": self.offset_horizontal,
            "offset_vertical_deg": self.offset_vertical,
            "angular_magnification": self.angular_magnification,
            "vignetted": self.vignetted,
        }


@dataclass(frozen=True)
class PerceivedStimulus:
    """What each simulated eye sees.

    ``gaze_direction`` is the direction from the nodal point toward the
    perceived image centre, i.e. where the eye has to look to fixate it;
    ``image_center_offset`` is its angle (deg) from the eye's current gaze.
    """

    left: EyeStimulus
    right: EyeStimulus

    def eye(self, side: str) -> EyeStimulus:
        return self.left if side == "left" else self.right

    def to_dict(self) -> dict:
        return {"left": self.left.to_dict(), "right": self.right.to_dict()}


def _eye_stimulus(bench: Bench, side: str, eye: EyeModel) -> EyeStimulus:
    chief = trace_chief(bench, side, eye)
    train = _train_from_lengths(bench.wing(side), chief.lengths)
    demand = float(source_vergence_through(train))
    toward = -chief.arrival_direction
    toward = toward / norm(toward)
    g = eye.gaze
    right = cross(Y_AXIS, g)
    right /= norm(right)
    up = cross(g, right)
    along = float(toward @ g)
    offset = math.degrees(math.atan2(float(norm(cross(g, toward))), along))
    horiz = math.degrees(math.atan2(float(toward @ right), along))
    vert = math.degrees(math.atan2(float(toward @ up), along))
    m = compose_train(train)
    magnification = float(train.length / m.b) if m.b != 0 else math.inf
    return EyeStimulus(demand, toward, offset, horiz, vert, magnification, chief.vignetted)


def simulate_stimulus(bench: Bench, eye_left: EyeModel | None = None, eye_right: EyeModel | None = None) -> PerceivedStimulus:
    """Per-eye focal demand and image direction for eyes placed at the pivots.

    Eyes default to :func:`aligned_eyes` (centred on the pivots and looking
    down each wing's forward axis).  Raises :class:`FoldFailure` when a
    chief ray cannot reach an eye.
    """
    if eye_left is None or eye_right is None:
        al, ar = aligned_eyes(bench)
        eye_left = eye_left or al
        eye_right = eye_right or ar
    return PerceivedStimulus(_eye_stimulus(bench, "left", eye_left), _eye_stimulus(bench, "right", eye_right))


@dataclass(frozen=True)
class MismatchMetrics:
    focal_error: float
    vergence_error: float
    vertical_disparity: float
    lateral_image_shift: float

    FIELDS = ("focal_error", "vergence_error", "vertical_disparity", "lateral_image_shift")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.focal_error, self.vergence_error, self.vertical_disparity, self.lateral_image_shift)

    def to_dict(self) -> dict:
        return {
            "focal_error_diopters": self.focal_error,
            "vergence_error_deg": self.vergence_error,
            "vertical_disparity_deg": self.vertical_disparity,
            "lateral_image_shift_deg": self.lateral_image_shift,
        }


def _floor(x: float) -> float:
    return 0.0 if abs(x) <= NOISE_FLOOR else x


def _azimuth_elevation(v: np.ndarray) -> tuple[float, float]:
    az = math.degrees(math.atan2(float(v[0]), float(v[2])))
    el = math.degrees(math.atan2(float(v[1]), math.hypot(float(v[0]), float(v[2]))))
    return az, el


def stimulus_mismatch(actual: PerceivedStimulus, focal_distance: float, vergence_distance: float, ipd: float) -> MismatchMetrics:
    """Errors of a simulated stimulus against the intended presentation.

    ``focal_error`` is the signed error (D) of whichever eye is worse;
    ``vergence_error`` is the convergence between the two fixation
    directions minus the binocular angle for the intended target;
    ``vertical_disparity`` is left minus right elevation and
    ``lateral_image_shift`` the mean azimuth (version).  All in degrees
    except the focal error.  Values at the model's noise floor are zeroed.
    """
    intended = 0.0 if math.isinf(focal_distance) else -1.0 / focal_distance
    errs = [actual.left.focal_demand - intended, actual.right.focal_demand - intended]
    focal = errs[0] if abs(errs[0]) >= abs(errs[1]) else errs[1]
    az_l, el_l = _azimuth_elevation(actual.left.gaze_direction)
    az_r, el_r = _azimuth_elevation(actual.right.gaze_direction)
    full = vergence_geometry(ipd, vergence_distance).full_vergence
    return MismatchMetrics(
        _floor(focal),
        _floor((az_l - az_r) - full),
        _floor(el_l - el_r),
        _floor((az_l + az_r) / 2.0),
    )


def intended_mismatch(bench: Bench, stimulus: PerceivedStimulus) -> MismatchMetrics:
    return stimulus_mismatch(stimulus, bench.focal_distance_m, bench.vergence_distance_m, bench.ipd_m)


__all__ = [
    "Beamsplitter",
    "Bench",
    "BenchInvariantError",
    "ChiefRay",
    "EyeParams",
    "EyeStimulus",
    "FoldFailure",
    "GeometryError",
    "MismatchMetrics",
    "Monitor",
    "PerceivedStimulus",
    "RailLens",
    "Table",
    "Wing",
    "aligned_eyes",
    "assemble_nominal",
    "configure_for_user",
    "set_focal_distance",
    "simulate_stimulus",
    "stimulus_mismatch",
    "trace_chief",
    "unfolded_train",
    "user_eyes",
    "wing_eye",
]
