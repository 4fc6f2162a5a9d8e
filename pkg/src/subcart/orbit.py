"""Orbits of finite vector-field families.

A flow word is a finite program [(field_index, t1), ...]; replaying it from
a seed composes the individual flow maps left to right.  The orbit of a
family through a seed is everything reachable by such words.  Orbits are
explored breadth-first with random word extensions; every collected point
keeps its generating word so reachability claims stay reproducible.

Only explicit finite families are handled.  Questions that quantify over
all vector fields of the space are exercised through nested finite
families; orbit equality of two seeds is only ever answered "Connected"
(with a joining word) or "Unknown", never "different".
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .field import TangentField
from .flow import FlowDomainError, FlowOptions, IntegrationError, flow_map, transport_vector
from .space import SubcartesianSpace

MERGE_RADIUS = 1e-6
RANK_TOL = 1e-8
REPLAY_TOL = 1e-6

FlowWord = tuple[tuple[int, float], ...]


class OrbitError(ValueError):
    pass


class DependentBasisError(OrbitError):
    """Chart basis fields are linearly dependent at the basepoint."""


class ReachError(RuntimeError):
    """A word segment left the space before its full duration."""

    def __init__(self, message: str, segment: int, achieved_t: float, partial: list[np.ndarray]):
        super().__init__(message)
        self.segment = segment
        self.achieved_t = achieved_t
        self.partial = partial


class FieldFamily:
    """A finite list of tangent fields sharing one space."""

    def __init__(self, space: SubcartesianSpace, fields: Sequence[TangentField]):
        if not fields:
            raise OrbitError("a family needs at least one field")
        for f in fields:
            if f.dim != space.ambient_dim:
                raise OrbitError(
                    f"field {f.label!r} has dimension {f.dim}, space has {space.ambient_dim}"
                )
        self.space = space
        self.fields: tuple[TangentField, ...] = tuple(fields)

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, i: int) -> TangentField:
        return self.fields[i]

    def labels(self) -> list[str]:
        return [f.label for f in self.fields]

    def value_matrix(self, point: Sequence[float]) -> np.ndarray:
        """Columns are the member fields evaluated at the point (n x m)."""
        n = self.space.ambient_dim
        if not self.fields:
            return np.zeros((n, 0))
        return np.column_stack([f(point) for f in self.fields])


def check_word(family: FieldFamily, word: Sequence[tuple[int, float]]) -> FlowWord:
    out = []
    for k, (idx, t) in enumerate(word):
        idx = int(idx)
        if not 0 <= idx < len(family):
            raise OrbitError(f"word step {k} names field {idx}, family has {len(family)}")
        out.append((idx, float(t)))
    return tuple(out)


def reach(
    family: FieldFamily,
    x0: Sequence[float],
    word: Sequence[tuple[int, float]],
    options: Optional[FlowOptions] = None,
) -> np.ndarray:
    """Replay a flow word from x0; the empty word is the identity."""
    word = check_word(family, word)
    family.space.require_member(x0, "basepoint")
    y = np.asarray(x0, dtype=float)
    trail = [y.copy()]
    for k, (idx, t) in enumerate(word):
        try:
            y = flow_map(family.space, family.fields[idx], y, t, options)
        except FlowDomainError as exc:
            trail.append(exc.partial_point)
            raise ReachError(
                f"segment {k} (field {family.fields[idx].label!r}) exits at "
                f"t={exc.achieved_t:.6g} before t={t:.6g}",
                segment=k,
                achieved_t=exc.achieved_t,
                partial=trail,
            ) from None
        trail.append(y.copy())
    return y


def span_dimension(
    family: FieldFamily, point: Sequence[float], tol_rank: float = RANK_TOL
) -> int:
    """Numerical rank of the family's value matrix at the point."""
    m = family.value_matrix(point)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.sum(s > tol_rank * s[0]))


@dataclass
class OrbitSample:
    """A reachable point cloud with the words that produced it."""

    seed: np.ndarray
    points: list[np.ndarray]
    words: list[FlowWord]
    est_dimension: int
    diagnostics: dict = dc_field(default_factory=dict)

    def entries(self) -> list[tuple[np.ndarray, FlowWord]]:
        return list(zip(self.points, self.words))

    def as_array(self) -> np.ndarray:
        return np.array(self.points)


def sample_orbit(
    family: FieldFamily,
    x0: Sequence[float],
    budget: int,
    step_scale: float = 0.3,
    rng_seed: int = 0,
    merge_radius: float = MERGE_RADIUS,
    tol_rank: float = RANK_TOL,
    options: Optional[FlowOptions] = None,
) -> OrbitSample:
    """Breadth-first random orbit exploration, deterministic per rng_seed.

    Frontier points are expanded with one random duration per family field;
    candidates of a round are sorted canonically before dedup so the result
    does not depend on expansion interleaving.  Points closer than
    merge_radius to an already collected point are merged away.
    """
    if budget < 1:
        raise OrbitError(f"budget must be at least 1, got {budget}")
    family.space.require_member(x0, "seed")
    rng = random.Random(rng_seed)
    seed = np.asarray(x0, dtype=float)
    points: list[np.ndarray] = [seed.copy()]
    words: list[FlowWord] = [()]
    buf = seed.reshape(1, -1).copy()
    frontier: deque[int] = deque([0])
    attempts = 0
    merged = 0
    failures = 0
    max_attempts = 40 * budget

    while frontier and len(points) < budget and attempts < max_attempts:
        i = frontier.popleft()
        base = points[i]
        word = words[i]
        candidates: list[tuple[np.ndarray, FlowWord]] = []
        for fi in range(len(family)):
            dt = rng.uniform(-step_scale, step_scale)
            attempts += 1
            try:
                y = flow_map(family.space, family.fields[fi], base, dt, options)
            except (FlowDomainError, IntegrationError):
                failures += 1
                continue
            candidates.append((y, word + ((fi, dt),)))
        candidates.sort(key=lambda c: tuple(c[0]))
        accepted_any = False
        for y, w in candidates:
            if len(points) >= budget:
                break
            d = np.linalg.norm(buf - y, axis=1)
            if float(d.min()) <= merge_radius:
                merged += 1
                continue
            points.append(y)
            words.append(w)
            buf = np.vstack([buf, y.reshape(1, -1)])
            frontier.append(len(points) - 1)
            accepted_any = True
        # a barren expansion must not starve the frontier: retry the point
        # with fresh durations while the attempt cap allows
        if not accepted_any and len(points) < budget:
            frontier.append(i)

    dims = [span_dimension(family, p, tol_rank) for p in points]
    return OrbitSample(
        seed=seed,
        points=points,
        words=words,
        est_dimension=max(dims) if dims else 0,
        diagnostics={
            "attempts": attempts,
            "merged": merged,
            "flow_failures": failures,
            "span_dimensions": sorted(set(dims)),
            "rng_seed": rng_seed,
            "step_scale": step_scale,
            "merge_radius": merge_radius,
        },
    )


@dataclass
class Chart:
    """A composite-flow chart at a basepoint, with its rank certificate.

    jacobian0 stacks the basis field values at the basepoint; fd_jacobian
    differentiates the word map T -> flows(T)(basepoint) at T=0 through the
    integrator.  Their agreement is the checkable content of the chart
    construction: both are the derivative of the same map, computed by
    independent routes.
    """

    basis: tuple[int, ...]
    basepoint: np.ndarray
    box: list[tuple[float, float]]
    jacobian0: np.ndarray
    fd_jacobian: np.ndarray
    agreement: float
    rank: int
    singular_values: list[float]


def chart_jacobian(
    family: FieldFamily,
    basis: Sequence[int],
    x: Sequence[float],
    fd_step: float = 1e-6,
    tol_rank: float = RANK_TOL,
    options: Optional[FlowOptions] = None,
) -> Chart:
    """Build the chart differential at T=0 for the chosen basis fields."""
    basis = tuple(int(b) for b in basis)
    for b in basis:
        if not 0 <= b < len(family):
            raise OrbitError(f"basis index {b} out of range for family of {len(family)}")
    family.space.require_member(x, "basepoint")
    x = np.asarray(x, dtype=float)
    m = len(basis)
    cols = [family.fields[b](x) for b in basis]
    jac = np.column_stack(cols) if m else np.zeros((x.size, 0))
    if m:
        s = np.linalg.svd(jac, compute_uv=False)
        rank = 0 if s[0] <= 0.0 else int(np.sum(s > tol_rank * s[0]))
    else:
        s = np.array([])
        rank = 0
    if rank < m:
        raise DependentBasisError(
            f"basis fields {[family.fields[b].label for b in basis]} span only "
            f"rank {rank} at {x.tolist()}"
        )

    fd_cols = []
    box = []
    for b in basis:
        fld = family.fields[b]
        plus = flow_map(family.space, fld, x, fd_step, options)
        minus = flow_map(family.space, fld, x, -fd_step, options)
        fd_cols.append((plus - minus) / (2.0 * fd_step))
        box.append((-fd_step, fd_step))
    fd_jac = np.column_stack(fd_cols)
    agreement = float(np.max(np.abs(fd_jac - jac)))
    return Chart(
        basis=basis,
        basepoint=x,
        box=box,
        jacobian0=jac,
        fd_jacobian=fd_jac,
        agreement=agreement,
        rank=rank,
        singular_values=[float(v) for v in s],
    )


@dataclass
class DimensionReport:
    seed: np.ndarray
    dimensions: list[int]
    constant: bool
    n_points: int
    per_dimension_counts: dict


def dimension_constancy_report(
    family: FieldFamily,
    x0: Sequence[float],
    n_probes: int = 100,
    rng_seed: int = 0,
    step_scale: float = 0.3,
    tol_rank: float = RANK_TOL,
    options: Optional[FlowOptions] = None,
) -> DimensionReport:
    """Distinct span dimensions along a sampled orbit.

    A singleton answer is consistent with local completeness of the family;
    multiple values certify that the pointwise span dimension is not an
    orbit invariant for this family.
    """
    cloud = sample_orbit(
        family, x0, n_probes, step_scale=step_scale, rng_seed=rng_seed,
        tol_rank=tol_rank, options=options,
    )
    dims = [span_dimension(family, p, tol_rank) for p in cloud.points]
    counts: dict[int, int] = {}
    for d in dims:
        counts[d] = counts.get(d, 0) + 1
    distinct = sorted(counts)
    return DimensionReport(
        seed=cloud.seed,
        dimensions=distinct,
        constant=len(distinct) == 1,
        n_points=len(cloud.points),
        per_dimension_counts=counts,
    )


@dataclass
class CompletenessReport:
    passed: bool
    n_probes: int
    skipped: int
    max_residual: float
    witness: Optional[dict]
    records: list[dict]

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_probes": self.n_probes,
            "skipped": self.skipped,
            "max_residual": self.max_residual,
            "witness": self.witness,
        }


def _span_residual(matrix: np.ndarray, w: np.ndarray) -> float:
    """Distance from w to the column span of matrix."""
    if matrix.size == 0 or not np.any(matrix):
        return float(np.linalg.norm(w))
    coef, *_ = np.linalg.lstsq(matrix, w, rcond=None)
    return float(np.linalg.norm(w - matrix @ coef))


def local_completeness_probe(
    family: FieldFamily,
    probes: Optional[Sequence[tuple[Sequence[float], float, int, int]]] = None,
    rng_seed: int = 0,
    n_random: int = 20,
    centers: Optional[Sequence[Sequence[float]]] = None,
    radius: float = 1.0,
    t_scale: float = 1.0,
    tol: float = 1e-6,
    options: Optional[FlowOptions] = None,
) -> CompletenessReport:
    """Test the pointwise completeness condition on sampled probes.

    Each probe (x, t, i, j) carries field j's value at x along field i's
    flow for time t and measures the distance of the carried vector from
    the family's span at the image point.  Probes whose flow exits are
    skipped and counted.  Explicit probes take precedence; otherwise
    probes are drawn near the given centers (or the seed of the family's
    first field's domain must be supplied via centers).
    """
    from .space import sample_near

    rng = random.Random(rng_seed)
    todo: list[tuple[np.ndarray, float, int, int]] = []
    if probes is not None:
        for (x, t, i, j) in probes:
            todo.append((np.asarray(x, dtype=float), float(t), int(i), int(j)))
    else:
        if centers is None:
            raise OrbitError("randomized probing needs center points")
        pts: list[np.ndarray] = []
        for c in centers:
            pts.extend(sample_near(family.space, np.asarray(c, dtype=float), radius, n_random, rng))
        for x in pts:
            i = rng.randrange(len(family))
            j = rng.randrange(len(family))
            t = rng.uniform(-t_scale, t_scale)
            todo.append((x, t, i, j))

    records: list[dict] = []
    skipped = 0
    worst: Optional[dict] = None
    max_res = 0.0
    for (x, t, i, j) in todo:
        try:
            image, w = transport_vector(
                family.space, family.fields[i], t, family.fields[j], x, options
            )
        except (FlowDomainError, IntegrationError):
            skipped += 1
            continue
        residual = _span_residual(family.value_matrix(image), w)
        rec = {
            "point": [float(v) for v in x],
            "t": t,
            "flow_field": family.fields[i].label,
            "carried_field": family.fields[j].label,
            "image": [float(v) for v in image],
            "carried_vector": [float(v) for v in w],
            "residual": residual,
        }
        records.append(rec)
        if residual > max_res:
            max_res = residual
            if residual > tol:
                worst = rec
    return CompletenessReport(
        passed=worst is None,
        n_probes=len(records),
        skipped=skipped,
        max_residual=max_res,
        witness=worst,
        records=records,
    )


def orbits_connected(
    family: FieldFamily,
    x0: Sequence[float],
    y0: Sequence[float],
    budget: int = 300,
    step_scale: float = 0.3,
    rng_seed: int = 0,
    merge_radius: float = MERGE_RADIUS,
    options: Optional[FlowOptions] = None,
) -> tuple[str, Optional[FlowWord]]:
    """Sampled reachability between two seeds: ("Connected", word) or ("Unknown", None).

    A crossing of the two sampled clouds within merge_radius yields a word
    from x0 to (near) y0: x0's word to the crossing followed by the reverse
    of y0's word, times negated.  Absence of a crossing proves nothing.
    """
    a = sample_orbit(family, x0, budget, step_scale, rng_seed, merge_radius, options=options)
    b = sample_orbit(family, y0, budget, step_scale, rng_seed + 1, merge_radius, options=options)
    arr_b = b.as_array()
    best: Optional[tuple[float, int, int]] = None
    for ia, p in enumerate(a.points):
        d = np.linalg.norm(arr_b - p, axis=1)
        ib = int(np.argmin(d))
        if float(d[ib]) <= merge_radius and (best is None or float(d[ib]) < best[0]):
            best = (float(d[ib]), ia, ib)
    if best is None:
        return "Unknown", None
    _, ia, ib = best
    back = tuple((fi, -dt) for (fi, dt) in reversed(b.words[ib]))
    return "Connected", a.words[ia] + back
