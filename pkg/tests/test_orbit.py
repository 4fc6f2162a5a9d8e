"""Orbit sampling, charts, dimension reports, completeness probes."""

from __future__ import annotations

import numpy as np
import pytest

from subcart.orbit import (
    DependentBasisError,
    FieldFamily,
    OrbitError,
    ReachError,
    chart_jacobian,
    check_word,
    dimension_constancy_report,
    local_completeness_probe,
    orbits_connected,
    reach,
    sample_orbit,
    span_dimension,
)
from subcart.space import SubcartesianSpace

from conftest import halfline, make_field, punctured_plane

REPLAY_TOL = 1e-6


def shear_family() -> FieldFamily:
    plane = SubcartesianSpace.whole_space(2)
    ddx = make_field("ddx", ["1", "0"], 2)
    xddy = make_field("xddy", ["0", "x1"], 2)
    return FieldFamily(plane, [ddx, xddy])


def rotation_family(with_radial: bool = False) -> FieldFamily:
    pp = punctured_plane()
    fields = [make_field("rot", ["-x2", "x1"], 2)]
    if with_radial:
        fields.append(make_field("rad", ["x1", "x2"], 2))
    return FieldFamily(pp, fields)


def test_family_validation():
    plane = SubcartesianSpace.whole_space(2)
    with pytest.raises(OrbitError):
        FieldFamily(plane, [])
    with pytest.raises(OrbitError):
        FieldFamily(plane, [make_field("bad", ["1"], 1)])


def test_check_word_rejects_bad_index():
    fam = shear_family()
    with pytest.raises(OrbitError):
        check_word(fam, [(2, 1.0)])
    with pytest.raises(OrbitError):
        check_word(fam, [(-1, 1.0)])


def test_reach_known_word():
    fam = shear_family()
    assert np.allclose(reach(fam, [0.0, 0.0], []), [0.0, 0.0])
    y = reach(fam, [0.0, 0.0], [(0, 1.0), (1, 0.5)])
    assert np.allclose(y, [1.0, 0.5], atol=1e-9)
    # shear first does nothing at x1 = 0
    z = reach(fam, [0.0, 0.0], [(1, 0.5), (0, 1.0)])
    assert np.allclose(z, [1.0, 0.0], atol=1e-9)


def test_reach_error_reports_segment():
    hl = halfline()
    fam = FieldFamily(hl, [make_field("ddx", ["1"], 1)])
    with pytest.raises(ReachError) as exc:
        reach(fam, [1.0], [(0, 0.5), (0, -3.0)])
    assert exc.value.segment == 1
    assert abs(exc.value.achieved_t - (-1.5)) <= 1e-6
    assert len(exc.value.partial) == 3


def test_sample_orbit_replay_and_dimension():
    fam = shear_family()
    cloud = sample_orbit(fam, [0.0, 0.0], 60, rng_seed=0)
    assert len(cloud.points) == 60
    assert len(cloud.words) == 60
    assert cloud.est_dimension == 2
    for k in (0, 7, 31, 59):
        replay = reach(fam, cloud.seed, cloud.words[k])
        assert np.linalg.norm(replay - cloud.points[k]) <= REPLAY_TOL


def test_sample_orbit_respects_space():
    fam = rotation_family()
    cloud = sample_orbit(fam, [1.0, 0.0], 40, rng_seed=1)
    radii = [p[0] ** 2 + p[1] ** 2 for p in cloud.points]
    assert max(abs(r - 1.0) for r in radii) <= 1e-6
    assert cloud.est_dimension == 1


def test_span_dimension_values():
    fam = shear_family()
    assert span_dimension(fam, [0.0, 0.0]) == 1
    assert span_dimension(fam, [1.0, 0.0]) == 2


def test_chart_jacobian_agreement():
    fam = shear_family()
    ch = chart_jacobian(fam, [0, 1], (1.0, 0.0))
    assert ch.rank == 2
    assert ch.agreement <= 1e-5
    assert ch.jacobian0.shape == (2, 2)
    assert np.allclose(ch.jacobian0[:, 0], [1.0, 0.0], atol=1e-9)


def test_chart_jacobian_dependent_basis():
    fam = shear_family()
    with pytest.raises(DependentBasisError):
        chart_jacobian(fam, [0, 1], (0.0, 0.0))


def test_chart_jacobian_validates_basis():
    fam = shear_family()
    with pytest.raises(OrbitError):
        chart_jacobian(fam, [0, 5], (1.0, 0.0))


def test_dimension_constancy():
    singleton = dimension_constancy_report(rotation_family(), (1.0, 0.0), n_probes=40)
    assert singleton.constant
    assert singleton.dimensions == [1]
    pair = dimension_constancy_report(rotation_family(True), (1.0, 0.0), n_probes=40)
    assert pair.constant
    assert pair.dimensions == [2]
    shear = dimension_constancy_report(shear_family(), (0.0, 0.0), n_probes=60)
    assert not shear.constant
    assert shear.dimensions == [1, 2]
    assert shear.per_dimension_counts[1] >= 1
    assert shear.per_dimension_counts[2] >= 1


def test_completeness_singleton_passes():
    rep = local_completeness_probe(
        rotation_family(), centers=[(1.0, 0.0)], rng_seed=0, n_random=15
    )
    assert rep.passed
    assert rep.max_residual <= 1e-6
    assert rep.n_probes == 15


def test_completeness_random_mode_needs_centers():
    with pytest.raises(OrbitError):
        local_completeness_probe(rotation_family(), rng_seed=0)


def test_completeness_shear_fails_on_witness_probe():
    rep = local_completeness_probe(shear_family(), probes=[((1.0, 0.0), -1.0, 0, 1)])
    assert not rep.passed
    w = rep.witness
    assert w is not None
    assert np.allclose(w["image"], [0.0, 0.0], atol=1e-8)
    assert np.allclose(w["carried_vector"], [0.0, 1.0], atol=1e-8)
    assert w["residual"] >= 0.5


def test_orbits_connected_translation():
    line = SubcartesianSpace.whole_space(1)
    fam = FieldFamily(line, [make_field("ddx", ["1"], 1)])
    verdict, word = orbits_connected(
        fam, [0.0], [0.5], budget=120, merge_radius=0.05, rng_seed=0
    )
    assert verdict == "Connected"
    assert word is not None
    end = reach(fam, [0.0], word)
    assert abs(end[0] - 0.5) <= 0.15


def test_orbits_connected_unknown_for_distinct_circles():
    fam = rotation_family()
    verdict, word = orbits_connected(
        fam, [1.0, 0.0], [2.0, 0.0], budget=80, merge_radius=0.05, rng_seed=0
    )
    assert verdict == "Unknown"
    assert word is None
