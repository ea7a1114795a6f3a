"""Least-squares auto-calibration over selected DOFs.

Levenberg-Marquardt on ``||residual_vector||^2`` with a central-difference
Jacobian.  DOFs are scaled into the residual's normalised units (1 mm, 1
mrad, 0.1 D = 1) so the damping term treats them evenly.  Bounds are
enforced by projecting each trial step back into the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bench import Bench, BenchInvariantError
from .calibration import DIOPTER, METRE, RADIAN, residual_vector
from .dofs import get_dof, set_dofs, validate_path

FD_STEP = 1e-6
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 200
RANK_RTOL = 1e-9

_DEFAULT_SPAN = {"m": 0.01, "deg": 5.0, "D": 2.0}


def dof_scale(path: str) -> float:
    """Multiplier taking a DOF value into normalised units."""
    if path.endswith("_m"):
        return METRE
    if path.endswith("_deg"):
        return RADIAN * math.pi / 180.0
    if path.endswith("_diopters"):
        return DIOPTER
    raise ValueError(f"no unit scale for {path!r}")


def _unit(path: str) -> str:
    return "m" if path.endswith("_m") else "deg" if path.endswith("_deg") else "D"


@dataclass(frozen=True)
class Adjustable:
    path: str
    lower: float
    upper: float

    def __post_init__(self):
        validate_path(self.path)
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or not self.lower < self.upper:
            raise ValueError(f"{self.path}: bounds must be finite with lower < upper, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class AdjustableSet:
    items: tuple[Adjustable, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ValueError("adjustable set is empty")
        paths = [a.path for a in self.items]
        if len(set(paths)) != len(paths):
            raise ValueError("adjustable set lists a DOF twice")

    @property
    def paths(self) -> list[str]:
        return [a.path for a in self.items]

    @classmethod
    def around(cls, bench: Bench, paths, span: dict[str, float] | None = None) -> "AdjustableSet":
        """Bounds centred on the current values: +-1 cm, +-5 deg, +-2 D by default."""
        span = {**_DEFAULT_SPAN, **(span or {})}
        items = []
        for p in paths:
            v = get_dof(bench, p)
            w = span[_unit(p)]
            items.append(Adjustable(p, v - w, v + w))
        return cls(tuple(items))


@dataclass
class ConvergenceRecord:
    converged: bool
    status: str  # converged | max-iters | stalled
    iterations: int
    norms: list[float]
    null_dofs: list[str]
    values: dict[str, float]
    evaluations: int = 0
    message: str = ""
    rejected_steps: int = field(default=0)

    @property
    def final_norm(self) -> float:
        return self.norms[-1]

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "rejected_steps": self.rejected_steps,
            "norms": list(self.norms),
            "final_norm": self.final_norm,
            "null_dofs": list(self.null_dofs),
            "values": dict(self.values),
            "message": self.message,
        }


class _Problem:
    def __init__(self, bench: Bench, adjust: AdjustableSet, user_ipd: float):
        self.bench = bench
        self.adjust = adjust
        self.user_ipd = user_ipd
        self.scale = np.array([dof_scale(p) for p in adjust.paths])
        self.lo = np.array([a.lower for a in adjust.items]) * self.scale
        self.hi = np.array([a.upper for a in adjust.items]) * self.scale
        self.evaluations = 0

    def bench_at(self, x: np.ndarray) -> Bench:
        return set_dofs(self.bench, {p: float(v) for p, v in zip(self.adjust.paths, x / self.scale)})

    def residual(self, x: np.ndarray) -> np.ndarray | None:
        self.evaluations += 1
        try:
            r = residual_vector(self.bench_at(x), self.user_ipd)
        except BenchInvariantError:
            return None
        return r if np.all(np.isfinite(r)) else None

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        cols = []
        for i in range(len(x)):
            h = FD_STEP
            xp = x.copy()
            xm = x.copy()
            xp[i] = min(x[i] + h, self.hi[i])
            xm[i] = max(x[i] - h, self.lo[i])
            rp = self.residual(xp)
            rm = self.residual(xm)
            if rp is None or rm is None:
                raise BenchInvariantError(self.adjust.paths[i], "finite-difference probe leaves the valid bench region")
            cols.append((rp - rm) / (xp[i] - xm[i]))
        return np.column_stack(cols)


def null_dofs(jac: np.ndarray, paths: list[str]) -> list[str]:
    """DOFs with significant weight in the numerical null space of ``jac``."""
    _, s, vt = np.linalg.svd(jac, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > RANK_RTOL * max(smax, 1e-300))) if smax > 0 else 0
    null = vt[rank:]
    out = []
    for i, p in enumerate(paths):
        if null.size and np.max(np.abs(null[:, i])) > 1e-6:
            out.append(p)
    return out


def solve_calibration(
    bench: Bench,
    adjust: AdjustableSet,
    *,
    user_ipd: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> tuple[Bench, ConvergenceRecord]:
    """Drive the residual norm below ``tol`` by moving only the ``adjust`` DOFs.

    Accepted iterates never increase the norm.  On failure the record has
    ``converged=False`` and the returned bench is the best one found.
    DOFs the residual cannot see (e.g. a beamsplitter roll) are listed in
    ``null_dofs``; the damping keeps them where they started.
    """
    if user_ipd is None:
        user_ipd = bench.ipd_m
    if max_iters < 0:
        raise ValueError("max_iters must be >= 0")
    prob = _Problem(bench, adjust, user_ipd)
    x = np.array([get_dof(bench, p) for p in adjust.paths]) * prob.scale
    if np.any(x < prob.lo) or np.any(x > prob.hi):
        raise ValueError("starting bench lies outside the adjustable bounds")
    r = prob.residual(x)
    if r is None:
        raise ValueError("residual vector is not finite at the starting bench")
    cost = float(r @ r)
    norms = [math.sqrt(cost)]
    lam = 1e-3
    it = 0
    rejected = 0
    status = "max-iters"
    nulls: list[str] = []
    jac = None
    need_jac = True
    while True:
        if norms[-1] < tol:
            status = "converged"
            break
        if it >= max_iters:
            break
        if need_jac:
            jac = prob.jacobian(x)
            if it == 0:
                nulls = null_dofs(jac, adjust.paths)
            g = jac.T @ r
            a = jac.T @ jac
            need_jac = False
        it += 1
        n = len(x)
        try:
            step = np.linalg.solve(a + lam * (np.diag(np.diag(a)) + np.eye(n)), -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            rejected += 1
            continue
        x_new = np.clip(x + step, prob.lo, prob.hi)
        if np.array_equal(x_new, x):
            status = "stalled"
            break
        r_new = prob.residual(x_new)
        cost_new = float(r_new @ r_new) if r_new is not None else math.inf
        if cost_new < cost:
            x, r, cost = x_new, r_new, cost_new
            norms.append(math.sqrt(cost))
            lam = max(lam / 3.0, 1e-12)
            need_jac = True
        else:
            rejected += 1
            lam *= 4.0
            if lam > 1e16:
                status = "stalled"
                break
    values = {p: float(v) for p, v in zip(adjust.paths, x / prob.scale)}
    record = ConvergenceRecord(
        converged=status == "converged",
        status=status,
        iterations=it,
        norms=norms,
        null_dofs=nulls,
        values=values,
        evaluations=prob.evaluations,
        rejected_steps=rejected,
        message={
            "converged": f"residual norm {norms[-1]:.3g} below {tol:.3g}",
            "max-iters": f"stopped after {it} iterations at norm {norms[-1]:.3g}",
            "stalled": f"no further decrease possible at norm {norms[-1]:.3g}",
        }[status],
    )
    return prob.bench_at(x) if it else bench, record


__all__ = ["Adjustable", "AdjustableSet", "ConvergenceRecord", "dof_scale", "null_dofs", "solve_calibration"]
