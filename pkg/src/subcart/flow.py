"""Maximal integral curves clipped to a constrained subset.

The integrator is an adaptive Dormand-Prince 5(4) pair with a quartic dense
interpolant.  Membership in the space is monitored along every accepted
step; on the first violation the exit time is located by bisection on the
dense output down to 1e-12 in time.  Domain-guard failures inside the
derivative (logs, roots, quotients) are treated as leaving the chart: the
step is retried at half size down to 1e-14, then the curve ends.

An exit comes in two flavours.  When the limit point still satisfies the
membership predicate under a relaxed tolerance the interval endpoint is
attained inside the set (the curve ran into a closed face), otherwise the
interval is open on that side.  Attained endpoints are exactly what the
vector-field classifier looks for on locally closed spaces: a derivation
whose curve stops at an interior-reachable member point admits no local
one-parameter group there.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .field import TangentField
from .expr import DomainError
from .space import SubcartesianSpace, sample_near

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
DEFAULT_HORIZON = 10.0
BISECT_TOL = 1e-12
MIN_STEP = 1e-14
ATTAINED_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Numerical failure of the stepper itself (not a domain exit)."""

    def __init__(self, message: str, t: Optional[float] = None, samples=None):
        super().__init__(message)
        self.t = t
        self.samples = samples or []


class FlowDomainError(RuntimeError):
    """Requested flow time lies outside the maximal interval."""

    def __init__(self, message: str, achieved_t: float, partial_point: np.ndarray, exit_witness):
        super().__init__(message)
        self.achieved_t = achieved_t
        self.partial_point = partial_point
        self.exit_witness = exit_witness


@dataclass(frozen=True)
class FlowOptions:
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    horizon: float = DEFAULT_HORIZON
    bisect_tol: float = BISECT_TOL
    min_step: float = MIN_STEP
    max_steps: int = 1_000_000
    attained_factor: float = ATTAINED_FACTOR
    interior_checks: int = 3
    max_sample_dt: float = 0.1


@dataclass(frozen=True)
class ExitWitness:
    """Where and how a curve left the set.

    ``point`` is the first excluded point found by bisection, ``attained``
    records whether the exit limit still satisfies membership under a
    relaxed tolerance (a closed, attained endpoint).  ``guard`` marks exits
    forced by domain-guard failures rather than constraint violations.
    """

    t: float
    point: tuple[float, ...]
    attained: bool
    guard: bool = False
    cell_index: Optional[int] = None
    constraint_index: Optional[int] = None
    constraint: Optional[str] = None

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "point": list(self.point),
            "attained": self.attained,
            "guard": self.guard,
            "cell_index": self.cell_index,
            "constraint_index": self.constraint_index,
            "constraint": self.constraint,
        }


@dataclass
class IntegralCurve:
    """One maximal (horizon-clipped) integral curve through a basepoint."""

    basepoint: np.ndarray
    field_label: str
    t_minus: float
    t_plus: float
    clipped_minus: bool
    clipped_plus: bool
    samples: list[tuple[float, np.ndarray]]
    exit_minus: Optional[ExitWitness] = None
    exit_plus: Optional[ExitWitness] = None

    def interval_radius(self) -> float:
        return min(-self.t_minus, self.t_plus)

    def to_json_dict(self) -> dict:
        return {
            "basepoint": [float(v) for v in self.basepoint],
            "field": self.field_label,
            "t_minus": self.t_minus,
            "t_plus": self.t_plus,
            "clipped_minus": self.clipped_minus,
            "clipped_plus": self.clipped_plus,
            "n_samples": len(self.samples),
            "exit_minus": self.exit_minus.to_json_dict() if self.exit_minus else None,
            "exit_plus": self.exit_plus.to_json_dict() if self.exit_plus else None,
        }


# Dormand-Prince 5(4) tableau with the classic quartic dense interpolant.

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
_D = (
    -12715105075 / 11282082432,
    0.0,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)


def _initial_step(y: np.ndarray, f0: np.ndarray, rtol: float, atol: float, limit: float) -> float:
    sk = atol + rtol * np.abs(y)
    d0 = math.sqrt(float(np.mean((y / sk) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / sk) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    return min(h0, limit) if limit > 0 else h0


@dataclass
class _DriveResult:
    t_end: float
    y_end: np.ndarray
    reached: bool
    samples: list[tuple[float, np.ndarray]]
    exit_witness: Optional[ExitWitness]
    n_steps: int = 0


def _drive(
    f: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    target: float,
    opts: FlowOptions,
    member: Optional[Callable[[np.ndarray], bool]],
    member_relaxed: Optional[Callable[[np.ndarray], bool]],
    witness_info: Optional[Callable[[np.ndarray, np.ndarray], tuple]],
) -> _DriveResult:
    """Integrate from x0 toward signed time ``target`` with membership exits."""
    direction = 1.0 if target >= 0 else -1.0
    span = abs(target)
    y = np.array(x0, dtype=float)
    n = y.size
    t = 0.0
    samples: list[tuple[float, np.ndarray]] = [(0.0, y.copy())]
    if span == 0.0:
        return _DriveResult(0.0, y, True, samples, None)
    try:
        k1 = f(y)
    except DomainError:
        raise IntegrationError(f"field undefined at basepoint {y.tolist()}") from None
    h = direction * _initial_step(y, k1, opts.rtol, opts.atol, span)
    n_steps = 0

    def guard_exit() -> _DriveResult:
        witness = ExitWitness(t=t, point=tuple(float(v) for v in y), attained=True, guard=True)
        return _DriveResult(t, y, False, samples, witness, n_steps)

    while True:
        n_steps += 1
        if n_steps > opts.max_steps:
            raise IntegrationError(f"exceeded {opts.max_steps} steps at t={t}", t=t, samples=samples)
        landing = False
        remaining = target - t
        if abs(h) >= abs(remaining):
            h = remaining
            landing = True

        # Stages; a domain-guard failure anywhere in the step means the step
        # wandered out of the chart, so retry shorter.
        try:
            k = [k1]
            for i in range(1, 7):
                yi = y + h * sum(_A[i][j] * k[j] for j in range(i))
                k.append(f(yi))
            ynew = yi  # stage 7 node is the step endpoint
        except DomainError:
            h *= 0.5
            if abs(h) < opts.min_step:
                return guard_exit()
            continue

        err_vec = h * sum(_E[i] * k[i] for i in range(7))
        sk = opts.atol + opts.rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = math.sqrt(float(np.mean((err_vec / sk) ** 2)))
        if err > 1.0:
            h *= max(0.2, 0.9 * err**-0.2)
            if abs(h) < opts.min_step:
                raise IntegrationError(f"step size underflow at t={t}", t=t, samples=samples)
            continue

        ydiff = ynew - y
        bspl = h * k[0] - ydiff
        r4 = ydiff - h * k[6] - bspl
        r5 = h * sum(_D[i] * k[i] for i in range(7))

        def dense(theta: float) -> np.ndarray:
            return y + theta * (ydiff + (1.0 - theta) * (bspl + theta * (r4 + (1.0 - theta) * r5)))

        # The scan grid doubles as the sample grid, keeping recorded sample
        # spacing at or below max_sample_dt.
        n_sub = max(opts.interior_checks + 1, math.ceil(abs(h) / opts.max_sample_dt))
        thetas = [i / n_sub for i in range(1, n_sub + 1)]
        theta_out = None
        theta_in = 0.0
        passed: list[tuple[float, np.ndarray]] = []
        for th in thetas:
            p = dense(th)
            if member is not None and not member(p):
                theta_out = th
                break
            theta_in = th
            passed.append((th, p))
        if theta_out is None:
            for th, p in passed:
                tt = target if (landing and th == thetas[-1]) else t + th * h
                samples.append((tt, p))
            t = target if landing else t + h
            y = ynew
            k1 = k[6]
            if landing:
                return _DriveResult(t, y, True, samples, None, n_steps)
            grow = 10.0 if err == 0.0 else min(10.0, 0.9 * err**-0.2)
            h *= max(0.2, grow)
            continue

        # Exit inside this step: bisect membership on the dense output.
        for th, p in passed:
            samples.append((t + th * h, p))
        while (theta_out - theta_in) * abs(h) > opts.bisect_tol:
            mid = 0.5 * (theta_in + theta_out)
            if member(dense(mid)):
                theta_in = mid
            else:
                theta_out = mid
        p_in = dense(theta_in)
        p_out = dense(theta_out)
        attained = bool(member_relaxed(p_out)) if member_relaxed is not None else False
        info = witness_info(p_in, p_out) if witness_info is not None else (None, None, None)
        witness = ExitWitness(
            t=t + theta_out * h,
            point=tuple(float(v) for v in p_out),
            attained=attained,
            cell_index=info[0],
            constraint_index=info[1],
            constraint=info[2],
        )
        t_end = t + theta_in * h
        if not samples or samples[-1][0] != t_end:
            samples.append((t_end, p_in.copy()))
        return _DriveResult(t_end, p_in, False, samples, witness, n_steps)


def _field_eval(fld: TangentField) -> Callable[[np.ndarray], np.ndarray]:
    vf = fld._value

    def f(y: np.ndarray) -> np.ndarray:
        return np.array(vf(y.tolist()), dtype=float)

    return f


def _membership(space: Optional[SubcartesianSpace], opts: FlowOptions, n_head: Optional[int] = None):
    if space is None:
        return None, None, None

    def member(p: np.ndarray) -> bool:
        q = p[:n_head] if n_head is not None else p
        return space.contains(q.tolist())

    def member_relaxed(p: np.ndarray) -> bool:
        q = p[:n_head] if n_head is not None else p
        return space.contains(q.tolist(), tol=space.tol * opts.attained_factor)

    def witness_info(p_in: np.ndarray, p_out: np.ndarray) -> tuple:
        q_in = (p_in[:n_head] if n_head is not None else p_in).tolist()
        q_out = (p_out[:n_head] if n_head is not None else p_out).tolist()
        ci = space.member_cell(q_in)
        if ci is None:
            return None, None, None
        for ki, (con, ev) in enumerate(zip(space.cells[ci], space._evals[ci])):
            try:
                v = ev(q_out)
            except DomainError:
                return ci, ki, con.text()
            if not con.satisfied(v, space.tol):
                return ci, ki, con.text()
        return ci, None, None

    return member, member_relaxed, witness_info


def integrate(
    space: SubcartesianSpace,
    fld: TangentField,
    x0: Sequence[float],
    horizon: Optional[float] = None,
    options: Optional[FlowOptions] = None,
) -> IntegralCurve:
    """Maximal integral curve through x0, clipped to [-horizon, horizon].

    The curve is the connected component through time zero of the in-set
    times of the ambient trajectory, so every recorded sample satisfies
    membership at the space's tolerance.
    """
    opts = options or FlowOptions()
    h = opts.horizon if horizon is None else float(horizon)
    if h <= 0:
        raise ValueError(f"horizon must be positive, got {h}")
    x0 = np.asarray(x0, dtype=float)
    space.require_member(x0, "basepoint")
    f = _field_eval(fld)
    member, member_relaxed, witness_info = _membership(space, opts)
    fwd = _drive(f, x0, h, opts, member, member_relaxed, witness_info)
    bwd = _drive(f, x0, -h, opts, member, member_relaxed, witness_info)
    samples = [(t, p) for t, p in reversed(bwd.samples) if t < 0.0] + fwd.samples
    return IntegralCurve(
        basepoint=x0,
        field_label=fld.label,
        t_minus=bwd.t_end,
        t_plus=fwd.t_end,
        clipped_minus=bwd.reached,
        clipped_plus=fwd.reached,
        samples=samples,
        exit_minus=bwd.exit_witness,
        exit_plus=fwd.exit_witness,
    )


def flow_map(
    space: Optional[SubcartesianSpace],
    fld: TangentField,
    x0: Sequence[float],
    t: float,
    options: Optional[FlowOptions] = None,
) -> np.ndarray:
    """Time-t flow of the field applied to x0, erroring if t is out of range."""
    opts = options or FlowOptions()
    x0 = np.asarray(x0, dtype=float)
    if space is not None:
        space.require_member(x0, "basepoint")
    if t == 0.0:
        return x0.copy()
    f = _field_eval(fld)
    member, member_relaxed, witness_info = _membership(space, opts)
    res = _drive(f, x0, float(t), opts, member, member_relaxed, witness_info)
    if not res.reached:
        raise FlowDomainError(
            f"flow of {fld.label} from {x0.tolist()} leaves the space at "
            f"t={res.t_end:.6g}, requested t={t:.6g}",
            achieved_t=res.t_end,
            partial_point=res.y_end,
            exit_witness=res.exit_witness,
        )
    return res.y_end


def transport_vector(
    space: Optional[SubcartesianSpace],
    x_field: TangentField,
    t: float,
    y_field: TangentField,
    x0: Sequence[float],
    options: Optional[FlowOptions] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Carry y_field(x0) along the flow of x_field for time t.

    The carried vector solves the variational system v' = (Dx_field) v along
    the base trajectory, which is exactly the derivative of the flow map
    applied to the initial vector.  Returns (image_point, vector).
    """
    if x_field.dim != y_field.dim:
        raise ValueError("fields must share a dimension")
    opts = options or FlowOptions()
    x0 = np.asarray(x0, dtype=float)
    if space is not None:
        space.require_member(x0, "basepoint")
    n = x_field.dim
    v0 = y_field(x0)
    if t == 0.0:
        return x0.copy(), v0
    base = _field_eval(x_field)

    def joint(z: np.ndarray) -> np.ndarray:
        y = z[:n]
        v = z[n:]
        dy = base(y)
        dv = x_field.jacobian_at(y.tolist()) @ v
        return np.concatenate([dy, dv])

    member, member_relaxed, witness_info = _membership(space, opts, n_head=n)
    z0 = np.concatenate([x0, v0])
    res = _drive(joint, z0, float(t), opts, member, member_relaxed, witness_info)
    if not res.reached:
        raise FlowDomainError(
            f"flow of {x_field.label} from {x0.tolist()} leaves the space at "
            f"t={res.t_end:.6g}, requested t={t:.6g}",
            achieved_t=res.t_end,
            partial_point=res.y_end[:n],
            exit_witness=res.exit_witness,
        )
    return res.y_end[:n], res.y_end[n:]


# Classification ---------------------------------------------------------------

VECTOR_FIELD = "VectorField"
NOT_VECTOR_FIELD = "NotVectorField"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ProbeOptions:
    """Seed points and shrinking-neighborhood schedule for the probes."""

    seeds: tuple[tuple[float, ...], ...] = ()
    radius0: float = 0.5
    decay: float = 0.25
    levels: int = 6
    samples_per_level: int = 20
    eps_factor: float = 4.0
    probe_horizon: float = 1.0
    rng_seed: int = 0
    fail_ratio: float = 0.3
    pass_ratio: float = 0.5
    abs_fraction: float = 0.1
    injectivity_floor: float = 1e-3


@dataclass
class VectorFieldVerdict:
    classification: str
    witness: Optional[dict]
    probes_run: int
    notes: list[str] = dc_field(default_factory=list)
    diagnostics: dict = dc_field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "classification": self.classification,
            "witness": self.witness,
            "probes_run": self.probes_run,
            "notes": self.notes,
            "diagnostics": self.diagnostics,
        }


def classify_vector_field(
    space: SubcartesianSpace,
    fld: TangentField,
    probe: ProbeOptions,
    options: Optional[FlowOptions] = None,
) -> VectorFieldVerdict:
    """Decide whether a derivation generates a local flow on the space.

    Negative answers are certified by a witness.  On declared locally closed
    spaces an integral curve whose interval endpoint is attained inside the
    set at probe-commensurate times settles the question immediately.  The
    direct probe measures the minimal interval radius over shrinking sampled
    neighborhoods of the seeds: radii bounded away from zero (with sampled
    injectivity) support a probabilistic positive, radii collapsing toward
    zero certify a negative, anything in between is inconclusive.
    """
    pr = probe
    opts = options or FlowOptions()
    rng = random.Random(pr.rng_seed)
    seeds = [np.asarray(s, dtype=float) for s in pr.seeds]
    if not seeds:
        raise ValueError("classification needs at least one seed point")
    for s in seeds:
        space.require_member(s, "seed")
    probes_run = 0
    m_levels: list[float] = []
    radii: list[float] = []
    min_witness: Optional[dict] = None
    last_level_points: list[np.ndarray] = []

    for level in range(pr.levels):
        r = pr.radius0 * pr.decay**level
        radii.append(r)
        pts: list[np.ndarray] = list(seeds)
        for s in seeds:
            pts.extend(sample_near(space, s, r, pr.samples_per_level, rng))
        m_here = math.inf
        for y in pts:
            try:
                curve = integrate(space, fld, y, horizon=pr.probe_horizon, options=opts)
            except IntegrationError as exc:
                return VectorFieldVerdict(
                    INCONCLUSIVE,
                    None,
                    probes_run,
                    notes=[f"integrator failure during probing: {exc}"],
                    diagnostics={"radii": radii, "min_interval_radius": m_levels},
                )
            probes_run += 1
            if space.locally_closed:
                for t_end, clipped, wit, side in (
                    (curve.t_minus, curve.clipped_minus, curve.exit_minus, 0),
                    (curve.t_plus, curve.clipped_plus, curve.exit_plus, -1),
                ):
                    if clipped or wit is None or not wit.attained:
                        continue
                    if abs(t_end) <= pr.eps_factor * r:
                        endpoint = curve.samples[side][1]
                        return VectorFieldVerdict(
                            NOT_VECTOR_FIELD,
                            witness={
                                "kind": "attained-endpoint",
                                "point": [float(v) for v in endpoint],
                                "endpoint_time": t_end,
                                "probe_point": [float(v) for v in y],
                                "level_radius": r,
                            },
                            probes_run=probes_run,
                            notes=["interval endpoint attained inside the set"],
                            diagnostics={"radii": radii, "min_interval_radius": m_levels},
                        )
            radius = curve.interval_radius()
            if curve.clipped_minus and curve.clipped_plus:
                radius = pr.probe_horizon
            if radius < m_here:
                m_here = radius
                if min_witness is None or level == pr.levels - 1:
                    min_witness = {
                        "kind": "shrinking-intervals",
                        "point": [float(v) for v in y],
                        "interval_radius": radius,
                        "level_radius": r,
                    }
        m_levels.append(m_here if math.isfinite(m_here) else pr.probe_horizon)
        if level == pr.levels - 1:
            last_level_points = pts

    m_first, m_last = m_levels[0], m_levels[-1]
    diagnostics = {"radii": radii, "min_interval_radius": m_levels}
    notes: list[str] = []

    if m_last <= pr.abs_fraction * pr.probe_horizon and m_last <= pr.fail_ratio * max(m_first, 1e-300):
        return VectorFieldVerdict(
            NOT_VECTOR_FIELD,
            witness=min_witness,
            probes_run=probes_run,
            notes=["no uniform flow time: interval radii collapse under refinement"],
            diagnostics=diagnostics,
        )

    # Injectivity of the sampled time-eps flow at the finest level.
    t_eps = 0.5 * min(m_last, pr.probe_horizon)
    inj = math.inf
    if t_eps > 0 and len(last_level_points) >= 2:
        images = []
        for y in last_level_points:
            try:
                images.append((y, flow_map(space, fld, y, t_eps, opts)))
                probes_run += 1
            except (FlowDomainError, IntegrationError):
                images.append((y, None))
        for i in range(len(images)):
            for j in range(i + 1, len(images)):
                yi, zi = images[i]
                yj, zj = images[j]
                if zi is None or zj is None:
                    continue
                d0 = float(np.linalg.norm(yi - yj))
                if d0 < 1e-12:
                    continue
                inj = min(inj, float(np.linalg.norm(zi - zj)) / d0)
    diagnostics["injectivity_min_ratio"] = None if math.isinf(inj) else inj

    if m_last >= pr.pass_ratio * m_first and (math.isinf(inj) or inj >= pr.injectivity_floor):
        notes.append("uniform flow time with sampled injectivity; positive answers are probabilistic")
        return VectorFieldVerdict(VECTOR_FIELD, None, probes_run, notes, diagnostics)

    notes.append("refinement exhausted without a certificate either way")
    return VectorFieldVerdict(INCONCLUSIVE, None, probes_run, notes, diagnostics)
