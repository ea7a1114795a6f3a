"""First-order (paraxial) optics along an unfolded optical train.

Sign conventions
----------------
Distances follow the real-is-positive form of the thin lens equation:
``1/f = 1/u + 1/v`` with ``u > 0`` for a real object and ``v < 0`` for a
virtual image on the object side of the lens.

Vergences are in diopters and are the reciprocal of the signed distance from
the current plane to the point the light converges toward.  Light diverging
from a point behind the plane has negative vergence; collimated light has
zero vergence.  A point source sitting on the current plane has vergence
``-inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

MAX_POWER = 1000.0
# |1/v| below this fraction of the inputs is treated as an image at infinity
_INFINITY_RTOL = 1e-12
# Eye-plane vergence below this magnitude is treated as collimated
COLLIMATED_ATOL = 1e-12


class OpticsError(ValueError):
    """Invalid argument passed to a paraxial operation."""


class UnrealizableDistanceError(OpticsError):
    """No finite lens power presents the requested focal distance."""


class NonPhysicalStimulusError(OpticsError):
    """Light converges at the eye: the image would sit behind the head."""


def check_power(power: float) -> float:
    power = float(power)
    if not math.isfinite(power):
        raise OpticsError(f"optical power must be finite, got {power!r}")
    if abs(power) > MAX_POWER:
        raise OpticsError(
            f"optical power {power} D exceeds the {MAX_POWER:g} D sanity bound "
            "(check units: powers are in diopters)"
        )
    return power


@dataclass(frozen=True)
class ParaxialRay:
    """Ray height (m) and paraxial slope (rad) relative to the optical axis."""

    height: float
    angle: float
    vignetted: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.height) and math.isfinite(self.angle)):
            raise OpticsError(f"ray must be finite, got {self!r}")


@dataclass(frozen=True)
class RayTransferMatrix:
    a: float
    b: float
    c: float
    d: float

    @classmethod
    def identity(cls) -> "RayTransferMatrix":
        return cls(1.0, 0.0, 0.0, 1.0)

    def __matmul__(self, other: "RayTransferMatrix") -> "RayTransferMatrix":
        return RayTransferMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    @property
    def determinant(self) -> float:
        return self.a * self.d - self.b * self.c

    def inverse(self) -> "RayTransferMatrix":
        det = self.determinant
        return RayTransferMatrix(self.d / det, -self.b / det, -self.c / det, self.a / det)

    def apply(self, height: float, angle: float) -> tuple[float, float]:
        return self.a * height + self.b * angle, self.c * height + self.d * angle

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


@dataclass(frozen=True)
class Gap:
    """Free propagation over ``length`` metres."""

    length: float

    def __post_init__(self):
        if not math.isfinite(self.length) or self.length < 0:
            raise OpticsError(f"gap length must be finite and >= 0, got {self.length!r}")


@dataclass(frozen=True)
class ThinLens:
    power: float
    aperture_radius: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "power", check_power(self.power))
        if not self.aperture_radius > 0:
            raise OpticsError(f"aperture radius must be > 0, got {self.aperture_radius!r}")


TrainElement = Union[Gap, ThinLens]


def _merge_gaps(elements: Iterable[TrainElement]) -> tuple[TrainElement, ...]:
    merged: list[TrainElement] = []
    for el in elements:
        if not isinstance(el, (Gap, ThinLens)):
            raise OpticsError(f"not a train element: {el!r}")
        if isinstance(el, Gap) and merged and isinstance(merged[-1], Gap):
            merged[-1] = Gap(merged[-1].length + el.length)
        else:
            merged.append(el)
    return tuple(merged)


@dataclass(frozen=True)
class OpticalTrain:
    """Source plane followed by an ordered list of gaps and thin lenses.

    ``source_offset`` is the axial distance from the source plane (the
    monitor, for a haploscope wing) to the first element.  Adjacent gaps are
    merged on construction.
    """

    source_offset: float = 0.0
    elements: tuple[TrainElement, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not math.isfinite(self.source_offset) or self.source_offset < 0:
            raise OpticsError(f"source offset must be finite and >= 0, got {self.source_offset!r}")
        object.__setattr__(self, "elements", _merge_gaps(self.elements))

    @property
    def lenses(self) -> list[ThinLens]:
        return [el for el in self.elements if isinstance(el, ThinLens)]

    def full_elements(self) -> tuple[TrainElement, ...]:
        """Elements with the source offset prepended as a gap."""
        if self.source_offset == 0:
            return self.elements
        return _merge_gaps((Gap(self.source_offset),) + self.elements)

    @property
    def length(self) -> float:
        return sum(el.length for el in self.full_elements() if isinstance(el, Gap))


def thin_lens_image(power: float, object_distance: float) -> tuple[float, float]:
    """Image distance and lateral magnification of a thin lens.

    Parameters
    ----------
    power : float
        Lens power in diopters.
    object_distance : float
        Distance from the object to the lens in metres, positive for a real
        object.  ``math.inf`` stands for collimated input.

    Returns
    -------
    (float, float)
        ``(v, m)``.  ``v > 0`` is a real image downstream, ``v < 0`` a virtual
        image on the object side; ``v = inf`` means the output is collimated.
        ``m = -v/u``; for collimated input the magnification is reported as 0.
    """
    power = check_power(power)
    u = float(object_distance)
    if math.isnan(u) or u == -math.inf:
        raise OpticsError(f"object distance must be finite or +inf, got {object_distance!r}")
    if u == 0:
        raise OpticsError("object distance must be non-zero")
    if math.isinf(u):
        v = math.inf if power == 0 else 1.0 / power
        return v, 0.0
    inv_v = power - 1.0 / u
    if abs(inv_v) <= _INFINITY_RTOL * max(abs(power), abs(1.0 / u)):
        return math.inf, -math.inf
    v = 1.0 / inv_v
    return v, -v / u


def element_matrix(element: TrainElement) -> RayTransferMatrix:
    if isinstance(element, Gap):
        return RayTransferMatrix(1.0, element.length, 0.0, 1.0)
    if isinstance(element, ThinLens):
        return RayTransferMatrix(1.0, 0.0, -element.power, 1.0)
    raise OpticsError(f"not a train element: {element!r}")


def compose_train(train: OpticalTrain | Sequence[TrainElement]) -> RayTransferMatrix:
    """System matrix from the source plane to the end of the train.

    Matrices are multiplied right to left in propagation order, so the first
    element acts first on an input ray.
    """
    elements = train.full_elements() if isinstance(train, OpticalTrain) else tuple(train)
    if not elements:
        raise OpticsError("cannot compose an empty train")
    m = RayTransferMatrix.identity()
    for el in elements:
        m = element_matrix(el) @ m
    return m


def trace_ray(train: OpticalTrain, ray: ParaxialRay) -> ParaxialRay:
    """Propagate a ray from the source plane through the train.

    The returned ray carries ``vignetted=True`` when its height exceeded the
    aperture radius at any lens; the ray is never clipped.
    """
    h, u = ray.height, ray.angle
    vignetted = ray.vignetted
    for el in train.full_elements():
        if isinstance(el, Gap):
            h = h + el.length * u
        else:
            if abs(h) > el.aperture_radius:
                vignetted = True
            u = u - el.power * h
    return ParaxialRay(h, u, vignetted)


def _gap_vergence(v: float, length: float) -> float:
    if length == 0:
        return v
    if math.isinf(v):
        # a focus on the input plane diverges from it afterwards, whichever side
        return -1.0 / length
    denom = 1.0 - length * v
    if denom == 0:
        # focus lands exactly on the far plane
        return math.copysign(math.inf, v)
    return v / denom


def propagate_vergence(v: float, train: OpticalTrain | Sequence[TrainElement]) -> float:
    """Carry a vergence (D) from the input plane through each element.

    A lens adds its power; a gap of length ``L`` maps ``V`` to
    ``V / (1 - L V)``.  When a gap ends exactly on a focus the result is an
    infinite sentinel of the incoming sign.  An infinite input (point source
    on the input plane) becomes ``-1/L`` after the first non-zero gap.
    """
    v = float(v)
    if math.isnan(v):
        raise OpticsError("vergence must not be NaN")
    elements = train.full_elements() if isinstance(train, OpticalTrain) else tuple(train)
    for el in elements:
        if isinstance(el, Gap):
            v = _gap_vergence(v, el.length)
        else:
            if math.isinf(v):
                continue
            v = v + el.power
    return v


def source_vergence_through(train: OpticalTrain) -> float:
    """Vergence at the end of the train for an on-axis point on the source plane."""
    return propagate_vergence(-math.inf, train)


def collimation_error(train: OpticalTrain) -> float:
    """Virtual dioptometer reading right after the last lens of ``train``.

    The train must start at the monitor plane.  Zero means the monitor image
    is collimated.  Trailing gaps after the last lens are ignored.
    """
    elements = list(train.full_elements())
    last_lens = max((i for i, el in enumerate(elements) if isinstance(el, ThinLens)), default=None)
    if last_lens is None:
        raise OpticsError("collimation needs at least one lens in the train")
    return propagate_vergence(-math.inf, elements[: last_lens + 1])


def accommodation_power_for(target_focal_distance: float, path_to_eye: float) -> float:
    """Accommodation lens power presenting a collimated image at a distance.

    ``path_to_eye`` is the optical path from the lens to the eye's nodal
    point, beamsplitter fold included.  Returns 0 for an infinite target.
    """
    d = float(target_focal_distance)
    length = float(path_to_eye)
    if math.isnan(d) or d <= 0:
        raise OpticsError(f"target focal distance must be > 0, got {target_focal_distance!r}")
    if not math.isfinite(length) or length < 0:
        raise OpticsError(f"path to eye must be finite and >= 0, got {path_to_eye!r}")
    if math.isinf(d):
        return 0.0
    v_eye = -1.0 / d
    denom = 1.0 + length * v_eye
    if denom == 0:
        raise UnrealizableDistanceError(
            f"focal distance {d} m equals the lens-to-eye path; no finite power works"
        )
    return check_power(v_eye / denom)


def perceived_focal_distance(train: OpticalTrain) -> float:
    """Distance (m) in front of the eye at which the monitor image appears.

    ``train`` is the full unfolded monitor-to-eye path.  Returns ``inf`` for
    collimated light at the eye.
    """
    v_eye = source_vergence_through(train)
    if abs(v_eye) <= COLLIMATED_ATOL:
        return math.inf
    if v_eye > 0:
        raise NonPhysicalStimulusError(
            f"eye-plane vergence {v_eye:+.6g} D is converging; no virtual image in front of the eye"
        )
    return -1.0 / v_eye
