"""Rigid 3D geometry for the folded haploscope.

Frame: right-handed, origin midway between the eye centres, ``+x`` toward
the user's right, ``+y`` up (against gravity), ``+z`` straight ahead.
Vectors are ``numpy`` arrays of shape ``(3,)``.  Angles crossing the public
API are in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNIT_ATOL = 1e-12
PARALLEL_ATOL = 1e-12

X_AXIS = np.array([1.0, 0.0, 0.0])
Y_AXIS = np.array([0.0, 1.0, 0.0])
Z_AXIS = np.array([0.0, 0.0, 1.0])


class GeometryError(ValueError):
    pass


class MissError(GeometryError):
    """A ray does not reach a surface (parallel, behind, or outside the extent)."""


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        out = np.asarray(x, dtype=float).reshape(3).copy()
    else:
        out = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(out)):
        raise GeometryError(f"vector components must be finite, got {out}")
    return out


def cross(a, b) -> np.ndarray:
    """3-vector cross product without ``np.cross``'s broadcasting overhead."""
    a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
    b0, b1, b2 = float(b[0]), float(b[1]), float(b[2])
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def norm(v) -> float:
    return math.sqrt(float(v[0]) ** 2 + float(v[1]) ** 2 + float(v[2]) ** 2)


def unit(v) -> np.ndarray:
    v = vec3(v)
    n = math.sqrt(float(v @ v))
    if n == 0:
        raise GeometryError("cannot normalise a zero vector")
    return v / n


def angle_between(a, b) -> float:
    """Unsigned angle in degrees, accurate near 0 and 180."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.degrees(math.atan2(float(norm(cross(a, b))), float(a @ b)))


def rotation_matrix(axis, angle_deg: float) -> np.ndarray:
    """Right-handed rotation about a unit axis (Rodrigues)."""
    k = unit(axis)
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return c * np.eye(3) + s * kx + (1.0 - c) * np.outer(k, k)


def rot_x(angle_deg: float) -> np.ndarray:
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle_deg: float) -> np.ndarray:
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle_deg: float) -> np.ndarray:
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _check_unit(v: np.ndarray, what: str) -> None:
    if abs(float(v @ v) - 1.0) > 2 * UNIT_ATOL:
        raise GeometryError(f"{what} must be unit-norm, got |v| = {np.linalg.norm(v)!r}")


@dataclass(frozen=True)
class Ray3:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", vec3(self.origin))
        object.__setattr__(self, "direction", vec3(self.direction))
        _check_unit(self.direction, "ray direction")

    @classmethod
    def towards(cls, origin, direction) -> "Ray3":
        return cls(vec3(origin), unit(direction))

    def point_at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class PlaneMirror:
    """Front-surface plane reflector, modelled as a disc of radius ``half_extent``."""

    point: np.ndarray
    normal: np.ndarray
    half_extent: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "point", vec3(self.point))
        object.__setattr__(self, "normal", vec3(self.normal))
        _check_unit(self.normal, "mirror normal")
        if not self.half_extent > 0:
            raise GeometryError(f"half_extent must be > 0, got {self.half_extent!r}")


def intersect_ray_plane(ray: Ray3, mirror: PlaneMirror) -> tuple[np.ndarray, bool]:
    """Point where ``ray`` meets the mirror plane and whether it lies within the extent.

    Raises :class:`MissError` for a ray parallel to the plane or one that
    would have to travel backwards to reach it.
    """
    denom = float(ray.direction @ mirror.normal)
    if abs(denom) <= PARALLEL_ATOL:
        raise MissError("ray is parallel to the plane")
    t = float((mirror.point - ray.origin) @ mirror.normal) / denom
    if t < 0:
        raise MissError("plane lies behind the ray origin")
    p = ray.point_at(t)
    r = p - mirror.point
    inside = float(r @ r) <= mirror.half_extent**2
    return p, inside


def reflect_direction(d: np.ndarray, n: np.ndarray) -> np.ndarray:
    return d - 2.0 * float(d @ n) * n


def reflect_ray(ray: Ray3, mirror: PlaneMirror) -> Ray3:
    p, inside = intersect_ray_plane(ray, mirror)
    if not inside:
        raise MissError("ray meets the mirror plane outside its extent")
    d = reflect_direction(ray.direction, mirror.normal)
    return Ray3(p, d / math.sqrt(float(d @ d)))


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3).copy()
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-10, rtol=0) or np.linalg.det(r) < 0:
            raise GeometryError("pose rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", vec3(self.translation))

    def apply(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def apply_direction(self, direction) -> np.ndarray:
        return self.rotation @ np.asarray(direction, dtype=float)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)


def rotate_about_pivot(pose: Pose, pivot, axis, angle_deg: float) -> Pose:
    """Rotate ``pose`` rigidly about the line through ``pivot`` along ``axis``."""
    axis = vec3(axis)
    _check_unit(axis, "rotation axis")
    pivot = vec3(pivot)
    r = rotation_matrix(axis, angle_deg)
    return Pose(r @ pose.rotation, r @ (pose.translation - pivot) + pivot)


@dataclass(frozen=True)
class EyeModel:
    """Schematic eye: centre of rotation, nodal point and pupil on one gaze line."""

    center_of_rotation: np.ndarray
    gaze: np.ndarray = field(default_factory=lambda: Z_AXIS.copy())
    nodal_offset: float = 0.006
    pupil_offset: float = 0.003

    def __post_init__(self):
        object.__setattr__(self, "center_of_rotation", vec3(self.center_of_rotation))
        object.__setattr__(self, "gaze", vec3(self.gaze))
        _check_unit(self.gaze, "gaze")
        if self.nodal_offset < 0 or self.pupil_offset < 0:
            raise GeometryError("eye offsets must be >= 0")

    @property
    def nodal_point(self) -> np.ndarray:
        return self.center_of_rotation + self.nodal_offset * self.gaze

    @property
    def pupil(self) -> np.ndarray:
        return self.center_of_rotation + (self.nodal_offset + self.pupil_offset) * self.gaze

    def rotated(self, axis, angle_deg: float) -> "EyeModel":
        """Eye turned about its own centre of rotation."""
        r = rotation_matrix(axis, angle_deg)
        g = r @ self.gaze
        return EyeModel(self.center_of_rotation, g / norm(g), self.nodal_offset, self.pupil_offset)


def eye_gaze_ray(eye: EyeModel) -> Ray3:
    return Ray3(eye.nodal_point, eye.gaze)


@dataclass(frozen=True)
class VergenceGeometry:
    """Binocular fixation angles for a midline target, in degrees.

    ``alpha_from_baseline`` is measured from the interocular axis (90 for
    parallel gaze); ``inward_rotation`` is the per-eye turn from straight
    ahead; ``full_vergence`` is the angle between the two gaze lines.
    """

    alpha_from_baseline: float
    inward_rotation: float
    full_vergence: float


def vergence_geometry(ipd: float, target_distance: float) -> VergenceGeometry:
    ipd = float(ipd)
    d = float(target_distance)
    if not (math.isfinite(ipd) and ipd > 0):
        raise GeometryError(f"ipd must be finite and > 0, got {ipd!r}")
    if math.isnan(d) or d <= 0:
        raise GeometryError(f"target distance must be > 0, got {target_distance!r}")
    half = ipd / 2.0
    if math.isinf(d):
        return VergenceGeometry(90.0, 0.0, 0.0)
    # take the smaller angle directly from atan2; its complement by subtraction
    if d >= half:
        inward = math.degrees(math.atan2(half, d))
        alpha = 90.0 - inward
    else:
        alpha = math.degrees(math.atan2(d, half))
        inward = 90.0 - alpha
    return VergenceGeometry(alpha, inward, 2.0 * inward)
