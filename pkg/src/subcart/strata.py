"""Declared stratifications and their sampled checks.

A stratified space here is a total constraint space together with named
sub-spaces (the strata) that are supposed to partition it.  Nothing is
inferred: partitions, dimensions, and local triviality are declared, and
this module measures how well the declarations hold up on samples.

Three checks matter downstream.  The frontier check estimates, pair by
pair, whether one stratum touches another's closure and, if so, whether it
is wholly contained in that closure.  The strongly-stratified check flows a
candidate field from stratum samples without any membership clamping and
measures how far the trajectories drift from the stratum's constraint
locus.  The orbit check explores the orbit of a family of such fields and
hard-asserts that no sampled orbit point leaves its seed's stratum.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .expr import Const, DomainError, Expr, Var, add, compile_scalar, cut, div, mul, sub
from .field import TangentField
from .flow import FlowOptions, integrate
from .orbit import FieldFamily, sample_orbit, span_dimension
from .space import (
    Rel,
    SubcartesianSpace,
    project_to_equalities,
    sample_cell_box,
    sample_near,
)

FRONTIER_TOL = 1e-4
DRIFT_TOL = 1e-8
TANGENCY_TOL = 1e-8
COVER_RADIUS = 0.35


class StrataError(ValueError):
    pass


@dataclass(frozen=True)
class Stratum:
    name: str
    space: SubcartesianSpace
    dim: int


class StratifiedSpace:
    """A total space with declared strata and a declared triviality flag."""

    def __init__(
        self,
        total: SubcartesianSpace,
        strata: Sequence[Stratum],
        locally_trivial: bool = False,
    ):
        if not strata:
            raise StrataError("a stratified space needs at least one stratum")
        names = [s.name for s in strata]
        if len(set(names)) != len(names):
            raise StrataError(f"duplicate stratum names in {names}")
        for s in strata:
            if s.space.ambient_dim != total.ambient_dim:
                raise StrataError(
                    f"stratum {s.name!r} lives in dimension {s.space.ambient_dim}, "
                    f"total space in {total.ambient_dim}"
                )
        self.total = total
        self.strata: tuple[Stratum, ...] = tuple(strata)
        self.locally_trivial = bool(locally_trivial)

    def stratum_index(self, name: str) -> int:
        for i, s in enumerate(self.strata):
            if s.name == name:
                return i
        raise StrataError(f"no stratum named {name!r}; have {[s.name for s in self.strata]}")

    def stratum_of(self, point: Sequence[float]) -> Optional[int]:
        for i, s in enumerate(self.strata):
            if s.space.contains(point):
                return i
        return None


def sample_space_box(
    space: SubcartesianSpace,
    lo: Sequence[float],
    hi: Sequence[float],
    count: int,
    rng: random.Random,
) -> list[np.ndarray]:
    """Box sampling across all cells of a space, round-robin."""
    k = len(space.cells)
    per = [count // k + (1 if i < count % k else 0) for i in range(k)]
    out: list[np.ndarray] = []
    for i, c in enumerate(per):
        if c:
            out.extend(sample_cell_box(space, i, lo, hi, c, rng))
    return out


def closure_contains(space: SubcartesianSpace, point: Sequence[float], tol: Optional[float] = None) -> bool:
    """Membership in the topological closure: strict relations relaxed."""
    t = space.tol if tol is None else tol
    for cell, evals in zip(space.cells, space._evals):
        ok = True
        for c, ev in zip(cell, evals):
            try:
                v = ev(point)
            except DomainError:
                ok = False
                break
            rel = c.rel
            if rel is Rel.GT:
                rel = Rel.GE
            elif rel is Rel.LT:
                rel = Rel.LE
            if rel is Rel.EQ and not abs(v) <= t:
                ok = False
                break
            if rel is Rel.GE and not v >= -t:
                ok = False
                break
            if rel is Rel.LE and not v <= t:
                ok = False
                break
        if ok:
            return True
    return False


def closure_distance(
    space: SubcartesianSpace,
    point: Sequence[float],
    cloud: Optional[np.ndarray] = None,
) -> float:
    """Estimated distance from a point to the closure of a space.

    Combines Gauss-Newton projection onto each cell's equality locus
    (followed by a closure-membership check of the projected point) with
    the nearest sampled point of the space as a fallback.  Caller-level
    tolerances should stay coarse: these are sampling estimates.
    """
    p = np.asarray(point, dtype=float)
    best = math.inf
    for ci in range(len(space.cells)):
        z = project_to_equalities(space, ci, p)
        if z is None:
            continue
        if closure_contains(space, z):
            best = min(best, float(np.linalg.norm(p - z)))
    if cloud is not None and cloud.size:
        best = min(best, float(np.min(np.linalg.norm(cloud - p, axis=1))))
    return best


@dataclass
class FrontierReport:
    passed: bool
    coverage_failures: list[dict]
    disjointness_failures: list[dict]
    contacts: list[dict]
    frontier_violations: list[dict]
    samples_per_stratum: dict
    frontier_tol: float

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "coverage_failures": self.coverage_failures,
            "disjointness_failures": self.disjointness_failures,
            "contacts": self.contacts,
            "frontier_violations": self.frontier_violations,
            "samples_per_stratum": self.samples_per_stratum,
            "frontier_tol": self.frontier_tol,
        }


def frontier_check(
    ss: StratifiedSpace,
    lo: Sequence[float],
    hi: Sequence[float],
    budget_per_stratum: int = 60,
    coverage_budget: int = 120,
    rng_seed: int = 0,
    frontier_tol: float = FRONTIER_TOL,
) -> FrontierReport:
    """Sampled partition and frontier-condition audit.

    Coverage: total-space samples must land in exactly one stratum.
    Frontier: whenever some sample of stratum M sits within frontier_tol of
    the closure of stratum N, every M sample must.
    """
    rng = random.Random(rng_seed)
    clouds: list[list[np.ndarray]] = []
    for s in ss.strata:
        pts = sample_space_box(s.space, lo, hi, budget_per_stratum, rng)
        if not pts:
            raise StrataError(f"stratum {s.name!r} produced no samples in the given box")
        clouds.append(pts)
    arrays = [np.array(c) for c in clouds]

    coverage_failures: list[dict] = []
    disjointness_failures: list[dict] = []
    total_pts = sample_space_box(ss.total, lo, hi, coverage_budget, rng)
    for p in total_pts:
        owners = [s.name for s in ss.strata if s.space.contains(p)]
        if not owners:
            coverage_failures.append({"point": [float(v) for v in p], "strata": owners})
        elif len(owners) > 1:
            disjointness_failures.append({"point": [float(v) for v in p], "strata": owners})
    for i, pts in enumerate(clouds):
        for p in pts:
            owners = [s.name for s in ss.strata if s.space.contains(p)]
            if len(owners) > 1:
                disjointness_failures.append({"point": [float(v) for v in p], "strata": owners})

    contacts: list[dict] = []
    violations: list[dict] = []
    for i, m in enumerate(ss.strata):
        for j, n in enumerate(ss.strata):
            if i == j:
                continue
            dists = [closure_distance(n.space, p, arrays[j]) for p in clouds[i]]
            touch = min(dists) <= frontier_tol
            if not touch:
                continue
            contacts.append({"m": m.name, "n": n.name, "min_distance": min(dists)})
            for p, d in zip(clouds[i], dists):
                if d > frontier_tol:
                    violations.append(
                        {"m": m.name, "n": n.name, "point": [float(v) for v in p], "distance": d}
                    )
    passed = not coverage_failures and not disjointness_failures and not violations
    return FrontierReport(
        passed=passed,
        coverage_failures=coverage_failures,
        disjointness_failures=disjointness_failures,
        contacts=contacts,
        frontier_violations=violations,
        samples_per_stratum={s.name: len(c) for s, c in zip(ss.strata, clouds)},
        frontier_tol=frontier_tol,
    )


def bump_expr(center: Sequence[float], r_inner: float, r_outer: float, n: int) -> Expr:
    """Smooth bump of the squared distance to center: 1 inside, 0 outside.

    Built from the flat-at-zero gate exp(-1/t), so values are exactly 1.0
    for radius <= r_inner and exactly 0.0 for radius >= r_outer.
    """
    if not 0.0 < r_inner < r_outer:
        raise StrataError(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    rho2: Optional[Expr] = None
    for i in range(n):
        term = mul(sub(Var(i), Const(float(center[i]))), sub(Var(i), Const(float(center[i]))))
        rho2 = term if rho2 is None else add(rho2, term)
    outer = cut(0, sub(Const(r_outer**2), rho2))
    inner = cut(0, sub(rho2, Const(r_inner**2)))
    return div(outer, add(outer, inner))


def extend_stratum_field(
    ss: StratifiedSpace,
    stratum_name: str,
    x_m: TangentField,
    x: Sequence[float],
    r_inner: float,
    r_outer: float,
    tangency_tol: float = TANGENCY_TOL,
    n_checks: int = 20,
    rng_seed: int = 0,
) -> TangentField:
    """Extend a stratum-tangent field by a smooth cutoff around x.

    The result agrees with the input inside r_inner of x and is exactly
    zero outside r_outer, hence defines a candidate strongly stratified
    field on the whole space.  Tangency of the input to the stratum's
    equality constraints is sampled near x first.
    """
    idx = ss.stratum_index(stratum_name)
    stratum = ss.strata[idx]
    stratum.space.require_member(x, "extension center")
    x = np.asarray(x, dtype=float)
    rng = random.Random(rng_seed)
    pts = [x] + sample_near(stratum.space, x, r_outer, n_checks, rng)
    worst = 0.0
    for p in pts:
        ci = stratum.space.member_cell(p)
        if ci is None:
            continue
        for con in stratum.space.cells[ci]:
            if con.rel is not Rel.EQ:
                continue
            derivative = x_m.apply(con.expr)
            try:
                worst = max(worst, abs(compile_scalar(derivative)(list(map(float, p)))))
            except DomainError:
                raise StrataError(
                    f"tangency check of {x_m.label!r} hit an undefined constraint "
                    f"derivative at {p.tolist()}"
                ) from None
    if worst > tangency_tol:
        raise StrataError(
            f"field {x_m.label!r} is not tangent to stratum {stratum_name!r} near "
            f"{x.tolist()}: sampled residual {worst:.3e} > {tangency_tol:.1e}"
        )
    b = bump_expr(x, r_inner, r_outer, ss.total.ambient_dim)
    label = f"bump({stratum_name})*{x_m.label}"
    return TangentField(label, [mul(b, c) for c in x_m.components])


@dataclass
class StrongStratReport:
    passed: bool
    field_label: str
    horizon: float
    drift_tol: float
    max_drift: float
    witness: Optional[dict]
    per_stratum: dict

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "field": self.field_label,
            "horizon": self.horizon,
            "drift_tol": self.drift_tol,
            "max_drift": self.max_drift,
            "witness": self.witness,
            "per_stratum": self.per_stratum,
        }


def strongly_stratified_check(
    ss: StratifiedSpace,
    fld: TangentField,
    lo: Sequence[float],
    hi: Sequence[float],
    horizon: float = 0.5,
    budget_per_stratum: int = 15,
    rng_seed: int = 0,
    drift_tol: float = DRIFT_TOL,
    options: Optional[FlowOptions] = None,
) -> StrongStratReport:
    """Flow the field from stratum samples and measure stratum drift.

    Integration is unconstrained (ambient space), so a field that pushes
    points off their stratum shows up as constraint-residual growth rather
    than being clipped at the membership boundary.  Drift of a point is the
    worst violation of its stratum's constraints along the trajectory; the
    check passes when max drift <= drift_tol * horizon.
    """
    rng = random.Random(rng_seed)
    ambient = SubcartesianSpace.whole_space(ss.total.ambient_dim)
    threshold = drift_tol * horizon
    max_drift = 0.0
    witness: Optional[dict] = None
    per_stratum: dict[str, float] = {}
    for s in ss.strata:
        pts = sample_space_box(s.space, lo, hi, budget_per_stratum, rng)
        if not pts:
            raise StrataError(f"stratum {s.name!r} produced no samples in the given box")
        worst_here = 0.0
        for p in pts:
            curve = integrate(ambient, fld, p, horizon=horizon, options=options)
            for t, q in curve.samples:
                violation = max(0.0, -s.space.slack(q))
                if violation > worst_here:
                    worst_here = violation
                    if violation > max_drift:
                        max_drift = violation
                        witness = {
                            "stratum": s.name,
                            "start": [float(v) for v in p],
                            "t": t,
                            "point": [float(v) for v in q],
                            "drift": violation,
                        }
        per_stratum[s.name] = worst_here
    return StrongStratReport(
        passed=max_drift <= threshold,
        field_label=fld.label,
        horizon=horizon,
        drift_tol=drift_tol,
        max_drift=max_drift,
        witness=witness if max_drift > threshold else None,
        per_stratum=per_stratum,
    )


@dataclass
class OrbitStrataReport:
    passed: bool
    per_seed: list[dict]
    cover_radius: float
    precondition: list[dict]

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "per_seed": self.per_seed,
            "cover_radius": self.cover_radius,
            "precondition": self.precondition,
        }


def orbit_vs_strata(
    ss: StratifiedSpace,
    family: FieldFamily,
    seeds: Sequence[Sequence[float]],
    lo: Sequence[float],
    hi: Sequence[float],
    budget: int = 400,
    step_scale: float = 0.3,
    rng_seed: int = 0,
    cover_radius: float = COVER_RADIUS,
    coverage_budget: int = 60,
    horizon: float = 0.5,
    drift_tol: float = DRIFT_TOL,
    options: Optional[FlowOptions] = None,
) -> OrbitStrataReport:
    """Sampled two-sided comparison of family orbits with strata.

    Preconditions gate hard: every family field must pass the strongly
    stratified check first.  Containment is then asserted per seed (no
    sampled orbit point may leave the seed's stratum); coverage of the
    stratum by the orbit cloud is reported as evidence at cover_radius
    resolution, far coarser than the orbit merge radius.
    """
    precondition: list[dict] = []
    for f in family.fields:
        rep = strongly_stratified_check(
            ss, f, lo, hi, horizon=horizon, rng_seed=rng_seed,
            drift_tol=drift_tol, options=options,
        )
        precondition.append({"field": f.label, "passed": rep.passed, "max_drift": rep.max_drift})
        if not rep.passed:
            raise StrataError(
                f"field {f.label!r} is not strongly stratified "
                f"(drift {rep.max_drift:.3e} over horizon {horizon}); witness {rep.witness}"
            )

    rng = random.Random(rng_seed)
    per_seed: list[dict] = []
    all_ok = True
    for seed in seeds:
        si = ss.stratum_of(seed)
        if si is None:
            raise StrataError(f"seed {list(map(float, seed))} lies in no declared stratum")
        stratum = ss.strata[si]
        cloud = sample_orbit(
            family, seed, budget, step_scale=step_scale, rng_seed=rng_seed, options=options
        )
        escapes = [
            [float(v) for v in p]
            for p in cloud.points
            if not stratum.space.contains(p)
        ]
        stratum_pts = sample_space_box(stratum.space, lo, hi, coverage_budget, rng)
        arr = cloud.as_array()
        covered = 0
        for q in stratum_pts:
            if arr.size and float(np.min(np.linalg.norm(arr - q, axis=1))) <= cover_radius:
                covered += 1
        frac = covered / len(stratum_pts) if stratum_pts else float("nan")
        ok = not escapes
        all_ok = all_ok and ok
        per_seed.append(
            {
                "seed": [float(v) for v in np.asarray(seed, dtype=float)],
                "stratum": stratum.name,
                "n_orbit_points": len(cloud.points),
                "escapes": escapes,
                "contained": ok,
                "est_dimension": cloud.est_dimension,
                "declared_dimension": stratum.dim,
                "coverage_fraction": frac,
            }
        )
    return OrbitStrataReport(
        passed=all_ok,
        per_seed=per_seed,
        cover_radius=cover_radius,
        precondition=precondition,
    )


@dataclass
class DimensionAudit:
    passed: bool
    per_stratum: list[dict]


def dimension_audit(
    ss: StratifiedSpace,
    frames: dict,
    lo: Sequence[float],
    hi: Sequence[float],
    budget_per_stratum: int = 20,
    rng_seed: int = 0,
    tol_rank: float = 1e-8,
) -> DimensionAudit:
    """Check declared stratum dimensions against supplied tangent frames."""
    rng = random.Random(rng_seed)
    rows: list[dict] = []
    ok = True
    for s in ss.strata:
        frame = frames.get(s.name)
        if frame is None:
            rows.append({"stratum": s.name, "checked": False, "declared": s.dim})
            continue
        fam = FieldFamily(ss.total, list(frame))
        pts = sample_space_box(s.space, lo, hi, budget_per_stratum, rng)
        if not pts:
            raise StrataError(f"stratum {s.name!r} produced no samples in the given box")
        ranks = sorted({span_dimension(fam, p, tol_rank) for p in pts})
        match = ranks == [s.dim]
        ok = ok and match
        rows.append(
            {
                "stratum": s.name,
                "checked": True,
                "declared": s.dim,
                "frame_ranks": ranks,
                "match": match,
            }
        )
    return DimensionAudit(passed=ok, per_stratum=rows)
