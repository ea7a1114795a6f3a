"""Bench configuration files.

The format is TOML with SI unit suffixes on every dimensioned key
(``_m``, ``_deg``, ``_diopters``).  Parsing is strict: unknown keys, wrong
types, non-SI suffixes and structural violations are all reported with the
dotted path of the offending field and, where it can be located, its line.
See ``docs/config_schema.md`` for the field inventory.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bench import (
    SIDES,
    Beamsplitter,
    Bench,
    BenchInvariantError,
    EyeParams,
    Monitor,
    RailLens,
    Table,
    Wing,
)

SCHEMA_VERSION = 1

_UNIT_SUFFIXES = ("_m", "_deg", "_diopters", "_mm", "_cm", "_rad", "_in", "_d", "_um", "_arcmin")
_SI_SUFFIXES = ("_m", "_deg", "_diopters")

# field -> (type, default); a default of ... means required
_TOP = {
    "schema_version": (int, ...),
    "units": (str, ...),
    "ipd_m": (float, ...),
    "focal_distance_m": (float, math.inf),
    "vergence_distance_m": (float, math.inf),
    "target_distance_m": (float, 1.0),
}
_TABLE = {"pitch_deg": (float, 0.0), "roll_deg": (float, 0.0)}
_EYE = {"nodal_offset_m": (float, 0.006), "pupil_offset_m": (float, 0.003)}
_WING = {
    "rail_azimuth_deg": (float, 0.0),
    "pitch_deg": (float, 0.0),
    "roll_deg": (float, 0.0),
    "axis_forward_m": (float, ...),
}
_BEAMSPLITTER = {
    "forward_m": (float, ...),
    "rail_m": (float, 0.0),
    "height_m": (float, 0.0),
    "yaw_deg": (float, 0.0),
    "tilt_deg": (float, 0.0),
    "roll_deg": (float, 0.0),
    "half_extent_m": (float, 0.03),
    "reflectance": (float, 0.5),
}
_MONITOR = {
    "kind": (str, ...),
    "axial_m": (float, ...),
    "lateral_m": (float, 0.0),
    "height_m": (float, 0.0),
    "pixel_pitch_m": (float, 2.7e-4),
}
_LENS = {
    "kind": (str, ...),
    "role": (str, ...),
    "power_diopters": (float, ...),
    "aperture_radius_m": (float, 0.0254),
    "axial_m": (float, ...),
    "lateral_m": (float, 0.0),
    "height_m": (float, 0.0),
    "tilt_deg": (float, 0.0),
}


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # syntax | unknown-field | unit | invariant | missing-field
    path: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"{self.path}" + (f" (line {self.line})" if self.line else "")
        return f"{self.kind}: {where}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))

    @property
    def kind(self) -> str:
        return self.diagnostics[0].kind

    @property
    def path(self) -> str:
        return self.diagnostics[0].path


@dataclass
class BenchConfig:
    """Validated, fully-defaulted bench description (nested plain data)."""

    data: dict = field(default_factory=dict)

    def to_bench(self) -> Bench:
        return bench_from_config(self)


# ---------------------------------------------------------------------------
# line lookup


def _line_index(text: str) -> dict[str, int]:
    """Map dotted field paths to 1-based line numbers (best effort)."""
    index: dict[str, int] = {}
    prefix = ""
    counts: dict[str, int] = {}
    header = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.\-\"]+)\s*\]\]?")
    keyline = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")
    for no, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            name = m.group(2).replace('"', "")
            if m.group(1) == "[[":
                i = counts.get(name, 0)
                counts[name] = i + 1
                prefix = f"{name}[{i}]"
            else:
                prefix = name
            index.setdefault(prefix, no)
            continue
        m = keyline.match(line)
        if m:
            path = f"{prefix}.{m.group(1)}" if prefix else m.group(1)
            index.setdefault(path, no)
    return index


# ---------------------------------------------------------------------------
# parsing


class _Checker:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines
        self.diags: list[Diagnostic] = []

    def line(self, path: str) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rsplit(".", 1)[0] if "." in path else ""
        return None

    def add(self, kind: str, path: str, message: str) -> None:
        self.diags.append(Diagnostic(kind, path, message, self.line(path)))

    def section(self, raw, schema: dict, path: str) -> dict:
        if not isinstance(raw, dict):
            self.add("syntax", path, "expected a table")
            return {}
        out = {}
        known_stems = {k.rsplit("_", 1)[0]: k for k in schema if k.endswith(_SI_SUFFIXES)}
        for key, value in raw.items():
            p = f"{path}.{key}" if path else key
            if key not in schema:
                stem, _, suffix = key.rpartition("_")
                if f"_{suffix}" in _UNIT_SUFFIXES and stem in known_stems:
                    self.add("unit", p, f"non-SI unit suffix; use {known_stems[stem]}")
                else:
                    self.add("unknown-field", p, "unknown field")
                continue
            typ, _ = schema[key]
            out[key] = self._typed(value, typ, p)
        for key, (typ, default) in schema.items():
            if key in raw:
                continue
            if default is ...:
                self.add("missing-field", f"{path}.{key}" if path else key, "required field is missing")
            else:
                out[key] = default
        return out

    def _typed(self, value, typ, path):
        if typ is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.add("syntax", path, f"expected a number, got {value!r}")
                return math.nan
            return float(value)
        if typ is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.add("syntax", path, f"expected an integer, got {value!r}")
                return 0
            return value
        if not isinstance(value, str):
            self.add("syntax", path, f"expected a string, got {value!r}")
            return ""
        return value


def parse_bench_config(text: str) -> BenchConfig:
    """Parse and validate config text.  Raises :class:`ConfigError` with diagnostics."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError([Diagnostic("syntax", "<document>", str(exc), int(m.group(1)) if m else None)]) from None
    chk = _Checker(_line_index(text))
    top_schema = dict(_TOP)
    sections = {"table", "eye", "wings"}
    top_raw = {k: v for k, v in raw.items() if k not in sections}
    data = chk.section(top_raw, top_schema, "")
    if data.get("schema_version") not in (None, SCHEMA_VERSION) and "schema_version" in raw:
        chk.add("invariant", "schema_version", f"unsupported schema version {raw['schema_version']!r}")
    if "units" in raw and data.get("units") != "SI":
        chk.add("unit", "units", f"only 'SI' is supported, got {raw['units']!r}")
    data["table"] = chk.section(raw.get("table", {}), _TABLE, "table")
    data["eye"] = chk.section(raw.get("eye", {}), _EYE, "eye")
    wings_raw = raw.get("wings")
    data["wings"] = {}
    if not isinstance(wings_raw, dict):
        chk.add("missing-field", "wings", "a [wings.left] and [wings.right] section are required")
        wings_raw = {}
    for key in wings_raw:
        if key not in SIDES:
            chk.add("unknown-field", f"wings.{key}", "wings must be 'left' or 'right'")
    for side in SIDES:
        if side not in wings_raw:
            chk.add("missing-field", f"wings.{side}", "wing section is missing")
            continue
        data["wings"][side] = _parse_wing(chk, wings_raw[side], f"wings.{side}")
    if chk.diags:
        raise ConfigError(chk.diags)
    cfg = BenchConfig(data)
    try:
        bench_from_config(cfg)
    except BenchInvariantError as exc:
        raise ConfigError([Diagnostic("invariant", exc.path, exc.message, chk.line(exc.path))]) from None
    return cfg


def _parse_wing(chk: _Checker, raw, path: str) -> dict:
    if not isinstance(raw, dict):
        chk.add("syntax", path, "expected a table")
        return {}
    schema = dict(_WING)
    body = {k: v for k, v in raw.items() if k not in ("beamsplitter", "elements")}
    wing = chk.section(body, schema, path)
    if "beamsplitter" in raw:
        wing["beamsplitter"] = chk.section(raw["beamsplitter"], _BEAMSPLITTER, f"{path}.beamsplitter")
    else:
        chk.add("invariant", path, "exactly one beamsplitter is required, found 0")
    elements = raw.get("elements")
    if not isinstance(elements, list):
        chk.add("missing-field", f"{path}.elements", "an [[elements]] list is required")
        elements = []
    parsed = []
    for i, el in enumerate(elements):
        p = f"{path}.elements[{i}]"
        kind = el.get("kind") if isinstance(el, dict) else None
        if kind == "monitor":
            parsed.append(chk.section(el, _MONITOR, p))
        elif kind == "lens":
            parsed.append(chk.section(el, _LENS, p))
        else:
            chk.add("syntax", f"{p}.kind", f"kind must be 'monitor' or 'lens', got {kind!r}")
    monitors = sum(1 for el in parsed if el.get("kind") == "monitor")
    if monitors != 1:
        chk.add("invariant", path, f"exactly one monitor is required, found {monitors}")
    wing["elements"] = parsed
    return wing


# ---------------------------------------------------------------------------
# conversion


def bench_from_config(cfg: BenchConfig | dict) -> Bench:
    d = cfg.data if isinstance(cfg, BenchConfig) else cfg
    wings = {}
    for side in SIDES:
        w = d["wings"][side]
        monitor = None
        lenses = []
        for el in w["elements"]:
            fields = {k: v for k, v in el.items() if k != "kind"}
            if el["kind"] == "monitor":
                monitor = Monitor(**fields)
            else:
                lenses.append(RailLens(**fields))
        bs = Beamsplitter(**w["beamsplitter"]) if w.get("beamsplitter") is not None else None
        wings[side] = Wing(
            side=side,
            monitor=monitor,
            lenses=tuple(lenses),
            beamsplitter=bs,
            axis_forward_m=w["axis_forward_m"],
            rail_azimuth_deg=w["rail_azimuth_deg"],
            pitch_deg=w["pitch_deg"],
            roll_deg=w["roll_deg"],
        )
    return Bench(
        left=wings["left"],
        right=wings["right"],
        ipd_m=d["ipd_m"],
        table=Table(**d["table"]),
        eye=EyeParams(**d["eye"]),
        focal_distance_m=d["focal_distance_m"],
        vergence_distance_m=d["vergence_distance_m"],
        target_distance_m=d["target_distance_m"],
    )


def config_from_bench(bench: Bench) -> BenchConfig:
    wings = {}
    for side in SIDES:
        w = bench.wing(side)
        elements = [{"kind": "monitor", **_fields(w.monitor, _MONITOR)}]
        for lens in sorted(w.lenses, key=lambda lens: -lens.axial_m):
            elements.append({"kind": "lens", **_fields(lens, _LENS)})
        wing = {k: getattr(w, k) for k in _WING}
        if w.beamsplitter is not None:
            wing["beamsplitter"] = _fields(w.beamsplitter, _BEAMSPLITTER)
        wing["elements"] = elements
        wings[side] = wing
    data = {
        "schema_version": SCHEMA_VERSION,
        "units": "SI",
        "ipd_m": bench.ipd_m,
        "focal_distance_m": bench.focal_distance_m,
        "vergence_distance_m": bench.vergence_distance_m,
        "target_distance_m": bench.target_distance_m,
        "table": _fields(bench.table, _TABLE),
        "eye": _fields(bench.eye, _EYE),
        "wings": wings,
    }
    return BenchConfig(data)


def _fields(obj, schema) -> dict:
    return {k: getattr(obj, k) for k in schema if k != "kind"}


# ---------------------------------------------------------------------------
# serialisation


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialise {value!r}")


def _emit(lines: list[str], mapping: dict, order) -> None:
    for key in order:
        if key in mapping:
            lines.append(f"{key} = {_fmt(mapping[key])}")


def serialize_bench_config(cfg: BenchConfig | Bench) -> str:
    """Canonical text for a config; ``parse(serialize(c))`` reproduces ``c``."""
    if isinstance(cfg, Bench):
        cfg = config_from_bench(cfg)
    d = cfg.data
    lines = [f"# haplobench bench configuration (schema {SCHEMA_VERSION})"]
    _emit(lines, d, _TOP)
    lines += ["", "[table]"]
    _emit(lines, d["table"], _TABLE)
    lines += ["", "[eye]"]
    _emit(lines, d["eye"], _EYE)
    for side in SIDES:
        w = d["wings"][side]
        lines += ["", f"[wings.{side}]"]
        _emit(lines, w, _WING)
        if w.get("beamsplitter") is not None:
            lines += ["", f"[wings.{side}.beamsplitter]"]
            _emit(lines, w["beamsplitter"], _BEAMSPLITTER)
        for el in w["elements"]:
            lines += ["", f"[[wings.{side}.elements]]"]
            _emit(lines, el, _MONITOR if el["kind"] == "monitor" else _LENS)
    return "\n".join(lines) + "\n"


def fingerprint(text_or_bytes) -> str:
    data = text_or_bytes.encode("utf-8") if isinstance(text_or_bytes, str) else bytes(text_or_bytes)
    return hashlib.sha256(data).hexdigest()


def bench_fingerprint(bench: Bench) -> str:
    return fingerprint(serialize_bench_config(bench))


def load_bench(path) -> Bench:
    return parse_bench_config(Path(path).read_text(encoding="utf-8")).to_bench()


def save_bench(bench: Bench, path) -> None:
    Path(path).write_text(serialize_bench_config(bench), encoding="utf-8")
