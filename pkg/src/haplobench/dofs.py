"""Degree-of-freedom paths into a :class:`~haplobench.bench.Bench`.

A path names one scalar field, for example ``wings.left.collimating.axial_m``,
``wings.right.monitor.lateral_m``, ``wings.left.beamsplitter.yaw_deg``,
``wings.left.roll_deg``, ``table.pitch_deg`` or ``ipd_m``.  Setting a value
rebuilds the frozen dataclasses, so every bench invariant is re-checked.
"""

from __future__ import annotations

import dataclasses

from .bench import LENS_ROLES, SIDES, Bench, Wing


class DofPathError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


_WING_SCALARS = ("axis_forward_m", "rail_azimuth_deg", "pitch_deg", "roll_deg")
_LENS_FIELDS = ("power_diopters", "axial_m", "aperture_radius_m", "lateral_m", "height_m", "tilt_deg")
_MONITOR_FIELDS = ("axial_m", "lateral_m", "height_m", "pixel_pitch_m")
_SPLITTER_FIELDS = ("forward_m", "rail_m", "height_m", "yaw_deg", "tilt_deg", "roll_deg", "half_extent_m")
_TOP = ("ipd_m", "focal_distance_m", "vergence_distance_m", "target_distance_m")


def _split(path: str) -> list[str]:
    parts = path.split(".")
    if parts[0] in _TOP and len(parts) == 1:
        return parts
    if parts[0] in ("table", "eye") and len(parts) == 2:
        ok = parts[1] in (("pitch_deg", "roll_deg") if parts[0] == "table" else ("nodal_offset_m", "pupil_offset_m"))
        if ok:
            return parts
    if parts[0] == "wings" and len(parts) >= 3 and parts[1] in SIDES:
        rest = parts[2:]
        if len(rest) == 1 and rest[0] in _WING_SCALARS:
            return parts
        if len(rest) == 2:
            group, name = rest
            if group in LENS_ROLES and name in _LENS_FIELDS:
                return parts
            if group == "monitor" and name in _MONITOR_FIELDS:
                return parts
            if group == "beamsplitter" and name in _SPLITTER_FIELDS:
                return parts
    raise DofPathError(f"unknown DOF path {path!r}")


def validate_path(path: str) -> str:
    _split(path)
    return path


def get_dof(bench: Bench, path: str) -> float:
    parts = _split(path)
    if len(parts) == 1:
        return float(getattr(bench, parts[0]))
    if parts[0] in ("table", "eye"):
        return float(getattr(getattr(bench, parts[0]), parts[1]))
    wing = bench.wing(parts[1])
    rest = parts[2:]
    if len(rest) == 1:
        return float(getattr(wing, rest[0]))
    group, name = rest
    if group == "monitor":
        return float(getattr(wing.monitor, name))
    if group == "beamsplitter":
        if wing.beamsplitter is None:
            raise DofPathError(f"{path}: wing has no beamsplitter")
        return float(getattr(wing.beamsplitter, name))
    return float(getattr(wing.lens(group), name))


def _set_in_wing(wing: Wing, rest: list[str], value: float) -> Wing:
    if len(rest) == 1:
        return dataclasses.replace(wing, **{rest[0]: value})
    group, name = rest
    if group == "monitor":
        return dataclasses.replace(wing, monitor=dataclasses.replace(wing.monitor, **{name: value}))
    if group == "beamsplitter":
        if wing.beamsplitter is None:
            raise DofPathError(f"wings.{wing.side}.beamsplitter: wing has no beamsplitter")
        return dataclasses.replace(wing, beamsplitter=dataclasses.replace(wing.beamsplitter, **{name: value}))
    lenses = tuple(dataclasses.replace(l, **{name: value}) if l.role == group else l for l in wing.lenses)
    return dataclasses.replace(wing, lenses=lenses)


def set_dof(bench: Bench, path: str, value: float) -> Bench:
    """Copy of ``bench`` with one field replaced; raises ``BenchInvariantError`` if that breaks it."""
    parts = _split(path)
    value = float(value)
    if len(parts) == 1:
        return dataclasses.replace(bench, **{parts[0]: value})
    if parts[0] in ("table", "eye"):
        sub = getattr(bench, parts[0])
        return dataclasses.replace(bench, **{parts[0]: dataclasses.replace(sub, **{parts[1]: value})})
    return bench.replace_wing(_set_in_wing(bench.wing(parts[1]), parts[2:], value))


def set_dofs(bench: Bench, values: dict[str, float]) -> Bench:
    """Apply several DOFs.  Wing fields are replaced together so the invariant check sees the final state."""
    by_wing: dict[str, list[tuple[list[str], float]]] = {}
    for path, value in values.items():
        parts = _split(path)
        if parts[0] == "wings":
            by_wing.setdefault(parts[1], []).append((parts[2:], float(value)))
        else:
            bench = set_dof(bench, path, value)
    for side, edits in by_wing.items():
        wing = bench.wing(side)
        # build field dicts so intermediate orderings are never validated
        wing_kw: dict = {}
        monitor_kw: dict = {}
        splitter_kw: dict = {}
        lens_kw: dict[str, dict] = {}
        for rest, value in edits:
            if len(rest) == 1:
                wing_kw[rest[0]] = value
            elif rest[0] == "monitor":
                monitor_kw[rest[1]] = value
            elif rest[0] == "beamsplitter":
                if wing.beamsplitter is None:
                    raise DofPathError(f"wings.{side}.beamsplitter: wing has no beamsplitter")
                splitter_kw[rest[1]] = value
            else:
                lens_kw.setdefault(rest[0], {})[rest[1]] = value
        if monitor_kw:
            wing_kw["monitor"] = dataclasses.replace(wing.monitor, **monitor_kw)
        if splitter_kw:
            wing_kw["beamsplitter"] = dataclasses.replace(wing.beamsplitter, **splitter_kw)
        if lens_kw:
            wing_kw["lenses"] = tuple(dataclasses.replace(l, **lens_kw.get(l.role, {})) for l in wing.lenses)
        bench = bench.replace_wing(dataclasses.replace(wing, **wing_kw))
    return bench


# one representative DOF per calibration step, with the step whose check first sees it
CANONICAL_PERTURBATIONS: tuple[tuple[str, float, int], ...] = (
    ("table.pitch_deg", 0.2, 1),
    ("wings.left.roll_deg", 0.2, 1),
    ("wings.left.collimating.lateral_m", 0.001, 2),
    ("wings.right.minimization.height_m", 0.001, 2),
    ("wings.left.monitor.lateral_m", 0.001, 2),
    ("wings.left.collimating.axial_m", -0.01, 3),
    ("wings.right.monitor.axial_m", 0.005, 3),
    ("wings.left.beamsplitter.yaw_deg", 0.5, 4),
    ("wings.right.beamsplitter.tilt_deg", 0.5, 4),
    ("ipd_m", 0.004, 5),
)

__all__ = ["CANONICAL_PERTURBATIONS", "DofPathError", "get_dof", "set_dof", "set_dofs", "validate_path"]
