"""Perturbation injection and Monte Carlo tolerance analysis.

Random draws come from a counter-based generator (Philox 4x64) keyed by
the seed.  Trial ``t`` owns counter block ``t`` and DOF ``i`` always reads
the same two raw words of that block, so every draw is a pure function of
``(seed, trial, dof)``.  Trials can therefore run in any order or on any
number of threads without changing the result.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bench import (
    Bench,
    BenchInvariantError,
    FoldFailure,
    MismatchMetrics,
    simulate_stimulus,
    stimulus_mismatch,
    user_eyes,
)
from .config import ConfigError, Diagnostic, _line_index
from .dofs import DofPathError, get_dof, set_dofs, validate_path

DISTRIBUTIONS = ("gaussian", "uniform")
_TWO_53 = 2.0**-53


class RejectedDraw(ValueError):
    """A perturbation broke a structural bench invariant."""

    def __init__(self, trial: int, cause: BenchInvariantError):
        self.trial = trial
        self.cause = cause
        super().__init__(f"trial {trial}: {cause}")


class EmptyStatsError(RuntimeError):
    pass


@dataclass(frozen=True)
class DofPerturbation:
    path: str
    distribution: str
    magnitude: float  # sigma for gaussian, half width for uniform

    def __post_init__(self):
        validate_path(self.path)
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"{self.path}: distribution must be one of {DISTRIBUTIONS}")
        if not (math.isfinite(self.magnitude) and self.magnitude >= 0):
            raise ValueError(f"{self.path}: magnitude must be finite and >= 0, got {self.magnitude!r}")

    @property
    def units(self) -> str:
        return "m" if self.path.endswith("_m") else "deg" if self.path.endswith("_deg") else "D"


@dataclass(frozen=True)
class PerturbationSpec:
    dofs: tuple[DofPerturbation, ...]

    def __post_init__(self):
        object.__setattr__(self, "dofs", tuple(self.dofs))

    def scaled(self, factor: float) -> "PerturbationSpec":
        return PerturbationSpec(tuple(DofPerturbation(d.path, d.distribution, d.magnitude * factor) for d in self.dofs))

    def to_dict(self) -> dict:
        return {
            "dof": [
                {"path": d.path, "distribution": d.distribution, ("sigma" if d.distribution == "gaussian" else "half_width"): d.magnitude}
                for d in self.dofs
            ]
        }


def parse_perturbation_spec(text: str) -> PerturbationSpec:
    """Parse a perturbation file::

        schema_version = 1
        units = "SI"

        [[dof]]
        path = "wings.left.beamsplitter.yaw_deg"
        distribution = "gaussian"
        sigma = 0.1
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = getattr(exc, "lineno", None)
        raise ConfigError([Diagnostic("syntax", "<file>", str(exc), m)]) from None
    lines = _line_index(text)
    diags: list[Diagnostic] = []

    def bad(kind, path, msg):
        diags.append(Diagnostic(kind, path, msg, lines.get(path)))

    for key in raw:
        if key not in ("schema_version", "units", "dof"):
            bad("unknown-field", key, "unknown field")
    if raw.get("schema_version", 1) != 1:
        bad("invariant", "schema_version", "only schema_version 1 is supported")
    if raw.get("units", "SI") != "SI":
        bad("unit", "units", 'units must be "SI"')
    entries = raw.get("dof", [])
    if not isinstance(entries, list):
        bad("syntax", "dof", "expected an array of [[dof]] tables")
        entries = []
    out = []
    for i, e in enumerate(entries):
        p = f"dof[{i}]"
        if not isinstance(e, dict):
            bad("syntax", p, "expected a table")
            continue
        for key in e:
            if key not in ("path", "distribution", "sigma", "half_width", "units"):
                bad("unknown-field", f"{p}.{key}", "unknown field")
        path = e.get("path")
        dist = e.get("distribution", "gaussian")
        if not isinstance(path, str):
            bad("missing-field", f"{p}.path", "DOF path required")
            continue
        try:
            validate_path(path)
        except DofPathError as exc:
            bad("invariant", f"{p}.path", str(exc))
            continue
        if dist not in DISTRIBUTIONS:
            bad("invariant", f"{p}.distribution", f"must be one of {', '.join(DISTRIBUTIONS)}")
            continue
        key = "sigma" if dist == "gaussian" else "half_width"
        other = "half_width" if key == "sigma" else "sigma"
        if other in e:
            bad("invariant", f"{p}.{other}", f"not valid for a {dist} distribution; use {key}")
            continue
        mag = e.get(key)
        if isinstance(mag, bool) or not isinstance(mag, (int, float)):
            bad("missing-field" if mag is None else "syntax", f"{p}.{key}", "expected a number")
            continue
        if not (math.isfinite(mag) and mag >= 0):
            bad("invariant", f"{p}.{key}", "must be finite and >= 0")
            continue
        d = DofPerturbation(path, dist, float(mag))
        if "units" in e and e["units"] != d.units:
            bad("unit", f"{p}.units", f"{path} is in {d.units}, not {e['units']!r}")
            continue
        out.append(d)
    if diags:
        raise ConfigError(diags)
    return PerturbationSpec(tuple(out))


def load_perturbation_spec(path) -> PerturbationSpec:
    return parse_perturbation_spec(Path(path).read_text(encoding="utf-8"))


class TrialStream:
    """Draws for one Monte Carlo trial; DOF ``i`` is independent of every other ``(trial, i)``."""

    def __init__(self, seed: int, trial: int, n_dofs: int):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        bg = np.random.Philox(key=np.array([seed, 0], dtype=np.uint64), counter=np.array([0, 0, trial, 0], dtype=np.uint64))
        self._raw = bg.random_raw(2 * max(n_dofs, 1))
        self.trial = trial

    def _uniforms(self, i: int) -> tuple[float, float]:
        a = int(self._raw[2 * i]) >> 11
        b = int(self._raw[2 * i + 1]) >> 11
        return (a + 1) * _TWO_53, b * _TWO_53  # (0, 1] and [0, 1)

    def normal(self, i: int) -> float:
        u1, u2 = self._uniforms(i)
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def uniform(self, i: int) -> float:
        """Uniform on [-1, 1)."""
        return 2.0 * self._uniforms(i)[1] - 1.0


def perturbation_offsets(spec: PerturbationSpec, stream: TrialStream) -> dict[str, float]:
    out: dict[str, float] = {}
    for i, d in enumerate(spec.dofs):
        z = stream.normal(i) if d.distribution == "gaussian" else stream.uniform(i)
        out[d.path] = out.get(d.path, 0.0) + d.magnitude * z
    return out


def apply_perturbation(bench: Bench, spec: PerturbationSpec, stream: TrialStream) -> Bench:
    """Offset each listed DOF by its draw; raises :class:`RejectedDraw` instead of clamping."""
    offsets = perturbation_offsets(spec, stream)
    try:
        return set_dofs(bench, {p: get_dof(bench, p) + v for p, v in offsets.items()})
    except BenchInvariantError as exc:
        raise RejectedDraw(stream.trial, exc) from None


@dataclass(frozen=True)
class MetricStats:
    mean: float
    std: float
    p5: float
    p50: float
    p95: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "p5": self.p5, "p50": self.p50, "p95": self.p95}


UNITS = {
    "focal_error": "D",
    "vergence_error": "deg",
    "vertical_disparity": "deg",
    "lateral_image_shift": "deg",
}


@dataclass
class ToleranceStats:
    metrics: dict[str, MetricStats]
    trials: int
    requested: int
    fold_failures: int
    rejected_draws: int
    seed: int
    samples: np.ndarray = field(repr=False)  # (trials, 4) in trial order

    def __getitem__(self, name: str) -> MetricStats:
        return self.metrics[name]

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "requested": self.requested,
            "fold_failures": self.fold_failures,
            "rejected_draws": self.rejected_draws,
            "seed": self.seed,
            "metrics": {k: {**v.to_dict(), "unit": UNITS[k]} for k, v in self.metrics.items()},
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, ToleranceStats):
            return NotImplemented
        return self.to_dict() == other.to_dict() and np.array_equal(self.samples, other.samples)


_OK, _FOLD, _REJECT = 0, 1, 2


def _trial(bench, spec, seed, t, eyes, intent) -> tuple[int, tuple[float, ...] | None]:
    stream = TrialStream(seed, t, len(spec.dofs))
    try:
        pb = apply_perturbation(bench, spec, stream)
    except RejectedDraw:
        return _REJECT, None
    try:
        stim = simulate_stimulus(pb, *eyes)
    except FoldFailure:
        return _FOLD, None
    return _OK, stimulus_mismatch(stim, *intent).as_tuple()


def monte_carlo_tolerance(bench: Bench, spec: PerturbationSpec, n: int, seed: int, *, workers: int = 1) -> ToleranceStats:
    """Mismatch statistics of ``n`` perturbed copies of ``bench``.

    Each copy is viewed by the user the nominal bench was set up for (eyes
    at the nominal pivots, converged on the intended vergence distance)
    and compared with the intended focal and vergence distances.  Fold
    failures and rejected draws are counted and left out of the stats.
    """
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n!r}")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    eyes = user_eyes(bench.ipd_m, bench.vergence_distance_m, bench.eye)
    intent = (bench.focal_distance_m, bench.vergence_distance_m, bench.ipd_m)

    def chunk(rng: range):
        return [_trial(bench, spec, seed, t, eyes, intent) for t in rng]

    if workers == 1:
        results = chunk(range(n))
    else:
        size = -(-n // workers)
        parts = [range(i, min(i + size, n)) for i in range(0, n, size)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(chunk, parts) for r in part]
    samples = np.array([r for status, r in results if status == _OK], dtype=float).reshape(-1, 4)
    folds = sum(1 for status, _ in results if status == _FOLD)
    rejects = sum(1 for status, _ in results if status == _REJECT)
    if samples.shape[0] == 0:
        raise EmptyStatsError(f"all {n} trials failed ({folds} fold failures, {rejects} rejected draws)")
    metrics = {}
    for j, name in enumerate(MismatchMetrics.FIELDS):
        col = samples[:, j]
        p5, p50, p95 = (float(v) for v in np.percentile(col, [5.0, 50.0, 95.0]))
        metrics[name] = MetricStats(
            float(np.mean(col)),
            float(np.std(col, ddof=1)) if col.size > 1 else 0.0,
            p5,
            p50,
            p95,
        )
    return ToleranceStats(metrics, int(samples.shape[0]), n, folds, rejects, int(seed), samples)


__all__ = [
    "DofPerturbation",
    "EmptyStatsError",
    "MetricStats",
    "PerturbationSpec",
    "RejectedDraw",
    "ToleranceStats",
    "TrialStream",
    "apply_perturbation",
    "load_perturbation_spec",
    "monte_carlo_tolerance",
    "parse_perturbation_spec",
]
