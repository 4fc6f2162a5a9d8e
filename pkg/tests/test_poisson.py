"""Poisson brackets, invariance, reduction by invariants, leaf sampling."""

from __future__ import annotations

import numpy as np
import pytest

from subcart.expr import compile_scalar, parse, to_text
from subcart.poisson import (
    PoissonError,
    PoissonStructure,
    ReductionError,
    ReductionSetup,
    bracket,
    hamiltonian_field,
    invariance_residual,
    jacobi_residual,
    jacobi_sample_residual,
    leaf_sample,
    monomials,
    reduce,
)
from subcart.space import Constraint, Rel, SubcartesianSpace

JACOBI_TOL = 1e-8
CASIMIR_TOL = 1e-9

R4_INVARIANTS = ("x1^2+x2^2", "x3^2+x4^2", "x1*x3+x2*x4", "x1*x4-x2*x3")

REDUCED_ROWS = [
    ["0", "4*x3", "2*x1", "0"],
    ["-4*x3", "0", "-2*x2", "0"],
    ["-2*x1", "2*x2", "0", "0"],
    ["0", "0", "0", "0"],
]

BROKEN_ROWS = [
    ["0", "x3", "0"],
    ["-x3", "0", "x2"],
    ["0", "-x2", "0"],
]


def reduced_structure() -> PoissonStructure:
    return PoissonStructure(
        4, [[parse(e, 4) for e in row] for row in REDUCED_ROWS], label="reduced"
    )


def broken_structure() -> PoissonStructure:
    return PoissonStructure(
        3, [[parse(e, 3) for e in row] for row in BROKEN_ROWS], label="broken"
    )


def rng_points(n: int, count: int, seed: int = 0, scale: float = 1.0):
    rng = np.random.default_rng(seed)
    return [rng.uniform(-scale, scale, size=n) for _ in range(count)]


def test_canonical_matrix():
    p = PoissonStructure.canonical(1)
    assert np.allclose(p.matrix_at([0.3, -0.7]), [[0.0, 1.0], [-1.0, 0.0]])
    q = PoissonStructure.canonical(2)
    m = q.matrix_at([0.0] * 4)
    assert np.allclose(m, [[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]])
    assert q.antisymmetry_residual(rng_points(4, 5)) == 0.0


def test_structure_validation():
    with pytest.raises(PoissonError):
        PoissonStructure(2, [[parse("0", 2)]])
    with pytest.raises(PoissonError):
        PoissonStructure(2, [[parse("x3", 3)] * 2] * 2)


def test_bracket_canonical_pairs():
    p = PoissonStructure.canonical(1)
    qp = bracket(p, parse("x1", 2), parse("x2", 2))
    for pt in rng_points(2, 4):
        assert compile_scalar(qp)(pt) == 1.0
    f = parse("x1^2+x2^2", 2)
    g = parse("x1", 2)
    fg = compile_scalar(bracket(p, f, g))
    for pt in rng_points(2, 4, seed=1):
        assert abs(fg(pt) - (-2.0 * pt[1])) <= 1e-12


def test_hamiltonian_field_canonical():
    p = PoissonStructure.canonical(1)
    h = parse("(x1^2+x2^2)/2", 2)
    xh = hamiltonian_field(p, h)
    for pt in rng_points(2, 4, seed=2):
        assert np.allclose(xh(pt), [-pt[1], pt[0]], atol=1e-13)


def test_reduced_table_brackets():
    lam = reduced_structure()
    s = [parse(f"x{i}", 4) for i in (1, 2, 3, 4)]
    pts = rng_points(4, 5, seed=3)
    expected = {
        (0, 1): lambda x: 4.0 * x[2],
        (0, 2): lambda x: 2.0 * x[0],
        (1, 2): lambda x: -2.0 * x[1],
        (0, 3): lambda x: 0.0,
        (1, 3): lambda x: 0.0,
        (2, 3): lambda x: 0.0,
    }
    for (a, b), want in expected.items():
        got = compile_scalar(bracket(lam, s[a], s[b]))
        for pt in pts:
            assert abs(got(pt) - want(pt)) <= 1e-12


def test_casimirs_of_reduced_structure():
    lam = reduced_structure()
    c = parse("x1*x2-x3^2-x4^2", 4)
    s4 = parse("x4", 4)
    pts = rng_points(4, 8, seed=4)
    for a in range(4):
        sa = parse(f"x{a + 1}", 4)
        for cas in (c, s4):
            g = compile_scalar(bracket(lam, sa, cas))
            for pt in pts:
                assert abs(g(pt)) <= CASIMIR_TOL


def test_jacobi_residuals():
    s = [parse(f"x{i}", 3) for i in (1, 2, 3)]
    lam = reduced_structure()
    s4 = [parse(f"x{i}", 4) for i in (1, 2, 3, 4)]
    pts4 = rng_points(4, 6, seed=5)
    assert jacobi_residual(lam, s4[0], s4[1], s4[2], pts4) <= 1e-12
    broken = broken_structure()
    # jacobiator of the coordinate triple is x3 for this bivector
    assert jacobi_residual(broken, s[0], s[1], s[2], [np.array([0.5, 0.25, 0.75])]) == 0.75
    assert jacobi_sample_residual(PoissonStructure.canonical(1), n_triples=20) <= 1e-10
    assert jacobi_sample_residual(lam, n_triples=20) <= JACOBI_TOL
    assert jacobi_sample_residual(broken, n_triples=20) >= 0.1


def test_invariance_residual_canonical():
    p = PoissonStructure.canonical(1)
    h = parse("(x1^2+x2^2)/2", 2)
    space = SubcartesianSpace.whole_space(2)
    for t in (0.1, 1.0):
        rep = invariance_residual(
            p, h, parse("x1", 2), parse("x2", 2), t, [0.7, -0.2], space=space
        )
        assert rep.value <= 1e-6
        assert rep.error_bar < 1e-6
        assert float(rep) == rep.value
        assert abs(np.linalg.norm(rep.image) - np.linalg.norm([0.7, -0.2])) <= 1e-8


def test_invariance_residual_reduced():
    lam = reduced_structure()
    h = parse("x1+x2", 4)
    rep = invariance_residual(
        lam, h, parse("x3", 4), parse("x4", 4), 0.5, [1.0, 1.0, 1.0, 0.0]
    )
    assert rep.value <= 1e-6


def test_monomials_order_and_count():
    assert monomials(2, 0) == [(0, 0)]
    assert monomials(2, 2) == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    assert len(monomials(3, 2)) == 10


def test_reduce_reproduces_bracket_table():
    setup = ReductionSetup(
        ambient=PoissonStructure.canonical(2),
        invariants=tuple(parse(s, 4) for s in R4_INVARIANTS),
    )
    red = reduce(setup)
    assert red.dim == 4
    assert red.meta["certified_points"] == 200
    assert red.meta["certified_residual"] <= 1e-10
    want = reduced_structure()
    for pt in rng_points(4, 6, seed=6, scale=1.2):
        assert np.allclose(red.matrix_at(pt), want.matrix_at(pt), atol=1e-9)
    assert red.meta["table"]["{s1,s2}"] == "4.0*x3"


def test_reduce_rejects_non_invariant_pair():
    setup = ReductionSetup(
        ambient=PoissonStructure.canonical(1),
        invariants=(parse("x1^2", 2), parse("x2", 2)),
    )
    with pytest.raises(ReductionError) as exc:
        reduce(setup)
    msg = str(exc.value)
    assert "1" in msg and "2" in msg
    assert "x1^2" in msg


def sigma_space() -> SubcartesianSpace:
    rel = Constraint(parse("x1*x2-x3^2-x4^2", 4), Rel.EQ)
    pos1 = Constraint(parse("x1", 4), Rel.GE)
    pos2 = Constraint(parse("x2", 4), Rel.GE)
    return SubcartesianSpace(4, [[rel, pos1, pos2]], locally_closed=True, tol=1e-6)


def test_leaf_sample_stays_on_symplectic_leaf():
    lam = reduced_structure()
    gens = [parse(f"x{i}", 4) for i in (1, 2, 3)]
    cas = [parse("x1*x2-x3^2-x4^2", 4), parse("x4", 4)]
    sample = leaf_sample(
        sigma_space(), lam, gens, [1.0, 1.0, 1.0, 0.0], budget=150, rng_seed=0,
        casimirs=cas,
    )
    pts = np.asarray(sample.points)
    assert len(pts) == 150
    assert sample.est_dimension == 2
    drifts = [d["max_drift"] for d in sample.diagnostics["casimirs"]]
    assert max(drifts) <= 1e-6
    assert pts[:, 0].min() >= -1e-9
    assert pts[:, 1].min() >= -1e-9
    rel = np.abs(pts[:, 0] * pts[:, 1] - pts[:, 2] ** 2 - pts[:, 3] ** 2)
    assert rel.max() <= 1e-6
    assert to_text(gens[0]) in sample.diagnostics["generators"]
