"""Poisson brackets from coordinate bivectors, and invariant-based reduction.

The bracket of two expressions is the contraction {f,g} = sum_ij P^ij
d_i f d_j g against an antisymmetric matrix of coefficient expressions.
Structural properties the axiomatic treatment takes as definitions
(antisymmetry, Leibniz, Jacobi) become measurable residuals here, with the
Jacobi residual doubling as the acceptance gate for candidate bivectors.

Reduction works with an explicit generating set of invariants sigma on a
canonical ambient space: pairwise upstairs brackets are matched against
polynomials in sigma by least squares over sampled points, integer-snapped,
and certified on fresh samples.  The result is a bivector on sigma-space
whose Hamiltonian dynamics mirror the invariant dynamics upstairs.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .expr import (
    Const,
    Expr,
    Var,
    add,
    as_expr,
    compile_scalar,
    compile_vector,
    diff,
    max_var_index,
    mul,
    neg,
    pow_int,
    to_text,
    ZERO,
)
from .field import TangentField
from .flow import FlowOptions, flow_map
from .orbit import FieldFamily, OrbitSample, sample_orbit
from .space import SubcartesianSpace

FIT_TOL = 1e-10
SNAP_TOL = 1e-9
CERTIFY_TOL = 1e-10


class PoissonError(ValueError):
    pass


class ReductionError(PoissonError):
    """A pairwise invariant bracket has no representation in the invariants."""


class PoissonStructure:
    """An antisymmetric coefficient matrix of expressions on R^n."""

    def __init__(self, dim: int, bivector: Sequence[Sequence[Expr]], label: str = "poisson"):
        if dim < 1:
            raise PoissonError(f"dimension must be positive, got {dim}")
        rows = [tuple(as_expr(e) for e in row) for row in bivector]
        if len(rows) != dim or any(len(r) != dim for r in rows):
            raise PoissonError(f"bivector must be {dim}x{dim}")
        for row in rows:
            for e in row:
                if max_var_index(e) >= dim:
                    raise PoissonError(
                        f"bivector entry {to_text(e)!r} uses a variable beyond x{dim}"
                    )
        self.dim = dim
        self.bivector: tuple[tuple[Expr, ...], ...] = tuple(rows)
        self.label = str(label)
        self.meta: dict = {}
        flat = [e for row in self.bivector for e in row]
        self._value = compile_vector(flat)

    def matrix_at(self, point: Sequence[float]) -> np.ndarray:
        return np.array(self._value(point), dtype=float).reshape(self.dim, self.dim)

    def antisymmetry_residual(self, points: Sequence[Sequence[float]]) -> float:
        worst = 0.0
        for p in points:
            m = self.matrix_at(p)
            worst = max(worst, float(np.max(np.abs(m + m.T))))
        return worst

    @classmethod
    def canonical(cls, k: int, label: str = "canonical") -> "PoissonStructure":
        """Canonical structure on R^{2k} with coordinates (q1..qk, p1..pk)."""
        n = 2 * k
        rows = [[ZERO for _ in range(n)] for _ in range(n)]
        for i in range(k):
            rows[i][k + i] = Const(1.0)
            rows[k + i][i] = Const(-1.0)
        return cls(n, rows, label)

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "bivector": [[to_text(e) for e in row] for row in self.bivector],
            "label": self.label,
        }


def bracket(p: PoissonStructure, f: Expr, g: Expr) -> Expr:
    """Symbolic bracket {f,g} = sum_ij P^ij d_i f d_j g."""
    f = as_expr(f)
    g = as_expr(g)
    for e, what in ((f, "first"), (g, "second")):
        if max_var_index(e) >= p.dim:
            raise PoissonError(
                f"{what} argument {to_text(e)!r} uses a variable beyond x{p.dim}"
            )
    df = [diff(f, i) for i in range(p.dim)]
    dg = [diff(g, j) for j in range(p.dim)]
    total: Expr = ZERO
    for i in range(p.dim):
        for j in range(p.dim):
            total = add(total, mul(p.bivector[i][j], mul(df[i], dg[j])))
    return total


def hamiltonian_field(p: PoissonStructure, f: Expr, label: Optional[str] = None) -> TangentField:
    """The field X_f with X_f . h = {f,h}: components sum_i P^ij d_i f."""
    f = as_expr(f)
    if max_var_index(f) >= p.dim:
        raise PoissonError(f"hamiltonian {to_text(f)!r} uses a variable beyond x{p.dim}")
    df = [diff(f, i) for i in range(p.dim)]
    comps = []
    for j in range(p.dim):
        c: Expr = ZERO
        for i in range(p.dim):
            c = add(c, mul(p.bivector[i][j], df[i]))
        comps.append(c)
    return TangentField(label if label is not None else f"X[{to_text(f)}]", comps)


def jacobi_residual(
    p: PoissonStructure,
    f1: Expr,
    f2: Expr,
    f3: Expr,
    points: Sequence[Sequence[float]],
) -> float:
    """Max over points of the cyclic nested-bracket sum for the triple."""
    s = add(
        bracket(p, f1, bracket(p, f2, f3)),
        add(bracket(p, f2, bracket(p, f3, f1)), bracket(p, f3, bracket(p, f1, f2))),
    )
    ev = compile_scalar(s)
    return max(abs(ev(list(map(float, x)))) for x in points)


def jacobi_sample_residual(
    p: PoissonStructure,
    n_triples: int = 50,
    n_points: int = 10,
    degree: int = 2,
    scale: float = 1.0,
    rng_seed: int = 0,
) -> float:
    """Jacobi residual over random polynomial triples at random points."""
    rng = random.Random(rng_seed)
    worst = 0.0
    monos = monomials(p.dim, degree)
    for _ in range(n_triples):
        triple = [_random_poly(monos, rng) for _ in range(3)]
        pts = [[rng.uniform(-scale, scale) for _ in range(p.dim)] for _ in range(n_points)]
        worst = max(worst, jacobi_residual(p, triple[0], triple[1], triple[2], pts))
    return worst


def _random_poly(monos: Sequence[tuple[int, ...]], rng: random.Random) -> Expr:
    e: Expr = ZERO
    for exps in monos:
        c = rng.uniform(-1.0, 1.0)
        if abs(c) < 0.3:
            continue
        e = add(e, mul(Const(round(c, 3)), _monomial_expr(exps)))
    return e


@dataclass
class InvarianceReport:
    """Residual of bracket invariance under a Hamiltonian flow.

    value is the Richardson-extrapolated residual of the pulled-back
    bracket against the bracket at the image point; error_bar estimates the
    finite-difference truncation left in it.
    """

    value: float
    error_bar: float
    t: float
    image: list[float]

    def __float__(self) -> float:
        return self.value


def invariance_residual(
    p: PoissonStructure,
    h: Expr,
    f1: Expr,
    f2: Expr,
    t: float,
    x: Sequence[float],
    space: Optional[SubcartesianSpace] = None,
    fd_step: float = 1e-5,
    options: Optional[FlowOptions] = None,
) -> InvarianceReport:
    """|{f1 o phi_t, f2 o phi_t}(x) - {f1,f2}(phi_t(x))| by numeric pullback.

    The base trajectory respects the given space; the finite-difference
    probe trajectories from perturbed basepoints are integrated in the
    ambient space, since coordinate perturbations leave thin varieties.
    """
    x = np.asarray(x, dtype=float)
    xh = hamiltonian_field(p, h)
    image = flow_map(space, xh, x, t, options)
    target = compile_scalar(bracket(p, f1, f2))(image.tolist())
    ef1 = compile_scalar(as_expr(f1))
    ef2 = compile_scalar(as_expr(f2))
    pm = p.matrix_at(x)

    def pulled_bracket(step: float) -> float:
        d1 = np.zeros(p.dim)
        d2 = np.zeros(p.dim)
        for i in range(p.dim):
            e = np.zeros(p.dim)
            e[i] = step
            plus = flow_map(None, xh, x + e, t, options)
            minus = flow_map(None, xh, x - e, t, options)
            d1[i] = (ef1(plus.tolist()) - ef1(minus.tolist())) / (2.0 * step)
            d2[i] = (ef2(plus.tolist()) - ef2(minus.tolist())) / (2.0 * step)
        return float(d1 @ pm @ d2)

    b_h = pulled_bracket(fd_step)
    b_h2 = pulled_bracket(fd_step / 2.0)
    extrapolated = b_h2 + (b_h2 - b_h) / 3.0
    return InvarianceReport(
        value=abs(extrapolated - target),
        error_bar=abs(b_h2 - b_h) / 3.0,
        t=float(t),
        image=[float(v) for v in image],
    )


# Reduction ---------------------------------------------------------------------

def monomials(n_vars: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of total degree <= degree, ordered by (degree, lex)."""
    out: list[tuple[int, ...]] = []
    for total in range(degree + 1):
        for exps in itertools.product(range(total + 1), repeat=n_vars):
            if sum(exps) == total:
                out.append(exps)
    return out


def _monomial_expr(exps: Sequence[int]) -> Expr:
    e: Expr = Const(1.0)
    for i, k in enumerate(exps):
        if k:
            e = mul(e, pow_int(Var(i), k))
    return e


@dataclass(frozen=True)
class ReductionSetup:
    """Ambient structure plus an explicit generating set of invariants."""

    ambient: PoissonStructure
    invariants: tuple[Expr, ...]
    degree: int = 2
    sample_count: int = 120
    sample_scale: float = 1.5
    rng_seed: int = 0
    fit_tol: float = FIT_TOL
    snap_tol: float = SNAP_TOL
    certify_count: int = 200
    certify_tol: float = CERTIFY_TOL


def reduce(setup: ReductionSetup) -> PoissonStructure:
    """Bivector on invariant space reproducing the upstairs bracket table.

    For each invariant pair the upstairs bracket is matched by least
    squares against monomials in the invariants (minimum-norm solution on
    the sampled image variety), snapped to nearby integers, and certified
    on fresh sample points.  Pairs with no representation within fit_tol
    are rejected by name.
    """
    amb = setup.ambient
    sigma = [as_expr(s) for s in setup.invariants]
    m = len(sigma)
    if m < 1:
        raise ReductionError("need at least one invariant")
    for s in sigma:
        if max_var_index(s) >= amb.dim:
            raise ReductionError(f"invariant {to_text(s)!r} uses a variable beyond x{amb.dim}")
    rng = random.Random(setup.rng_seed)
    sigma_eval = compile_vector(sigma)

    def draw(count: int) -> list[list[float]]:
        return [
            [rng.uniform(-setup.sample_scale, setup.sample_scale) for _ in range(amb.dim)]
            for _ in range(count)
        ]

    fit_points = draw(setup.sample_count)
    sig_vals = np.array([sigma_eval(x) for x in fit_points])
    monos = monomials(m, setup.degree)
    design = np.column_stack(
        [np.prod(sig_vals ** np.array(exps), axis=1) for exps in monos]
    )

    pair_exprs: dict[tuple[int, int], Expr] = {}
    pair_brackets: dict[tuple[int, int], Expr] = {}
    for a in range(m):
        for b in range(a + 1, m):
            upstairs = bracket(amb, sigma[a], sigma[b])
            pair_brackets[(a, b)] = upstairs
            rhs = np.array([compile_scalar(upstairs)(x) for x in fit_points])
            coef, *_ = np.linalg.lstsq(design, rhs, rcond=None)
            fit = float(np.max(np.abs(design @ coef - rhs))) if len(rhs) else 0.0
            if fit > setup.fit_tol:
                raise ReductionError(
                    f"bracket of invariants {a + 1} and {b + 1} "
                    f"({to_text(sigma[a])!r}, {to_text(sigma[b])!r}) is not expressible "
                    f"in the invariants up to degree {setup.degree}: fit residual {fit:.3e}"
                )
            snapped = np.array(
                [round(c) if abs(c - round(c)) <= setup.snap_tol else c for c in coef]
            )
            if float(np.max(np.abs(design @ snapped - rhs))) <= setup.fit_tol:
                coef = snapped
            e: Expr = ZERO
            for c, exps in zip(coef, monos):
                if c == 0.0:
                    continue
                e = add(e, mul(Const(float(c)), _monomial_expr(exps)))
            pair_exprs[(a, b)] = e

    rows = [[ZERO for _ in range(m)] for _ in range(m)]
    for (a, b), e in pair_exprs.items():
        rows[a][b] = e
        rows[b][a] = neg(e)
    reduced = PoissonStructure(m, rows, label=f"reduced[{amb.label}]")

    certify_points = draw(setup.certify_count)
    worst = 0.0
    for (a, b), e in pair_exprs.items():
        upstairs_eval = compile_scalar(pair_brackets[(a, b)])
        reduced_eval = compile_scalar(e)
        for x in certify_points:
            lhs = reduced_eval(sigma_eval(x))
            rhs = upstairs_eval(x)
            worst = max(worst, abs(lhs - rhs))
    if worst > setup.certify_tol:
        raise ReductionError(
            f"certification failed: replay residual {worst:.3e} > {setup.certify_tol:.1e}"
        )
    reduced.meta = {
        "certified_points": setup.certify_count,
        "certified_residual": worst,
        "fit_points": setup.sample_count,
        "degree": setup.degree,
        "table": {
            f"{{s{a + 1},s{b + 1}}}": to_text(e) for (a, b), e in sorted(pair_exprs.items())
        },
    }
    return reduced


def leaf_sample(
    space: SubcartesianSpace,
    p: PoissonStructure,
    generators: Sequence[Expr],
    x0: Sequence[float],
    budget: int,
    rng_seed: int = 0,
    step_scale: float = 0.3,
    casimirs: Sequence[Expr] = (),
    options: Optional[FlowOptions] = None,
) -> OrbitSample:
    """Orbit of the Hamiltonian fields of the generators through x0.

    Casimir expressions are evaluated along the cloud; their maximal drift
    from the seed value lands in the sample's diagnostics.
    """
    fields = [hamiltonian_field(p, g) for g in generators]
    family = FieldFamily(space, fields)
    cloud = sample_orbit(
        family, x0, budget, step_scale=step_scale, rng_seed=rng_seed, options=options
    )
    drifts = []
    for c in casimirs:
        ev = compile_scalar(as_expr(c))
        base = ev(list(map(float, x0)))
        drift = max(abs(ev(pt.tolist()) - base) for pt in cloud.points)
        drifts.append({"casimir": to_text(as_expr(c)), "seed_value": base, "max_drift": drift})
    cloud.diagnostics["casimirs"] = drifts
    cloud.diagnostics["generators"] = [to_text(as_expr(g)) for g in generators]
    return cloud
