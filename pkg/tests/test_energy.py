import math

import numpy as np
import pytest

from dislocate import energy as en
from dislocate import geometry as g

import oracles


@pytest.fixture(scope="module")
def f1(disk):
    return g.constant_strain(disk, 1)


@pytest.fixture(scope="module")
def f2(disk):
    return g.constant_strain(disk, 2)


def cfg(disk, pts, mult=None):
    return g.make_config(disk, pts, mult)


def test_centered_point_has_zero_energy(disk, f1):
    rep = en.renormalized_energy(disk, f1, cfg(disk, [[0, 0]]))
    assert abs(rep.total) <= 1e-12
    for eps in (0.1, 0.05, 0.01):
        assert abs(en.core_energy(disk, f1, cfg(disk, [[0, 0]]), eps).total) <= 1e-8


@pytest.mark.parametrize("pts", [
    [[0.5, 0.0]], [[0.0, -0.9]], [[0.4, 0.0], [-0.4, 0.0]], [[0.3, 0.2], [-0.5, 0.1], [0.1, -0.6]],
    [[0.1, 0.0], [0.0, 0.1], [-0.1, 0.0], [0.0, -0.1]]])
@pytest.mark.parametrize("method", ["series", "boundary"])
def test_limit_energy_matches_closed_form(disk, pts, method):
    n = len(pts)
    rep = en.renormalized_energy(disk, g.constant_strain(disk, n), cfg(disk, pts), method=method)
    tol = 1e-10 if method == "series" else 1e-7
    assert rep.total == pytest.approx(oracles.constant_strain_energy(pts), abs=tol * max(1, abs(rep.total)))


def test_report_terms_sum_to_total(disk):
    rep = en.renormalized_energy(disk, g.half_strain(disk), cfg(disk, [[0.3, -0.2]]))
    parts = rep.log_term + rep.regular_energy + rep.k_self + rep.cross + rep.pair
    assert rep.total == pytest.approx(parts, abs=1e-12)
    assert rep.error_estimate >= 0


def test_rotation_of_single_point(disk, f1):
    a = en.renormalized_energy(disk, f1, cfg(disk, [[0.5, 0.0]])).total
    b = en.renormalized_energy(disk, f1, cfg(disk, [[0.0, 0.5]])).total
    assert a == pytest.approx(b, abs=1e-6)
    assert a == pytest.approx(-math.pi * math.log(0.75), abs=1e-12)


def test_rotation_and_permutation_invariance(disk):
    rng = np.random.default_rng(0)
    f3 = g.constant_strain(disk, 3)
    pts = np.array([[0.3, 0.2], [-0.5, 0.1], [0.1, -0.6]])
    base = en.renormalized_energy(disk, f3, cfg(disk, pts)).total
    for _ in range(5):
        t = rng.uniform(0, 2 * math.pi)
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        assert en.renormalized_energy(disk, f3, cfg(disk, pts @ rot.T)).total == pytest.approx(base, abs=1e-6)
        perm = rng.permutation(3)
        assert en.renormalized_energy(disk, f3, cfg(disk, pts[perm])).total == base


def test_limit_agrees_with_extrapolated_core_energy(disk, f1):
    c = cfg(disk, [[0.5, 0.0]])
    eps = np.array([0.04, 0.02, 0.01])
    vals = np.array([en.core_energy(disk, f1, c, e).total for e in eps])
    # exact quadratic through the three points, evaluated at eps = 0
    extrap = np.polyfit(eps, vals, 2)[-1]
    limit = en.renormalized_energy(disk, f1, c).total
    assert extrap == pytest.approx(limit, rel=0.01)


def test_divergence_toward_boundary(disk, f1):
    vals = [en.renormalized_energy(disk, f1, cfg(disk, [[1 - d, 0.0]])).total for d in (0.1, 0.05, 0.02)]
    assert vals[0] < vals[1] < vals[2]
    assert en.limit_energy(disk, f1, [[1.0, 0.0]]) == math.inf


def test_divergence_under_collision(disk, f2):
    vals = [en.renormalized_energy(disk, f2, cfg(disk, [[s / 2, 0.1], [-s / 2, 0.1]])).total for s in (0.2, 0.1, 0.05)]
    assert vals[0] < vals[1] < vals[2]
    rep = en.renormalized_energy(disk, f2, cfg(disk, [[0.1, 0.1], [0.1, 0.1]]))
    assert not rep.finite and rep.total == math.inf


def test_infinite_report_row(disk, f1):
    rep = en.renormalized_energy(disk, f1, cfg(disk, [[1.0, 0.0]]))
    assert not rep.finite
    assert rep.csv_row().split(",")[3] == "inf"


def test_csv_row_format(disk, f1):
    rep = en.core_energy(disk, f1, cfg(disk, [[0.5, 0.0]]), 0.05)
    assert en.csv_header() == "mode,epsilon,n,total,log_term,regular_energy,k_self,cross,pair,error_estimate"
    row = rep.csv_row().split(",")
    assert row[0] == "core_radius" and float(row[1]) == 0.05 and row[2] == "1"
    assert float(row[3]) == rep.total


def test_cross_term_boundary_and_quadrature_agree(disk):
    for strain, pts in ((g.constant_strain(disk, 2), [[0.4, 0.0], [-0.3, 0.2]]), (g.half_strain(disk), [[0.6, 0.1]])):
        rep = en.renormalized_energy(disk, strain, cfg(disk, pts), crosscheck=True)
        assert rep.details["quadrature_cross"] == pytest.approx(rep.cross, rel=1e-4)
        assert rep.details["quadrature_pair"] == pytest.approx(rep.pair, rel=1e-4, abs=1e-8)


def test_series_and_boundary_routes_on_ellipse_vs_disk(ellipse):
    # general-domain route on a near-circular sampled domain approaches the disk value
    s, x, y = g.ellipse_samples(1.0, 1.0, 2048)
    circle = g.domain_from_samples(s, x, y)
    pts = [[0.5, 0.0]]
    val = en.renormalized_energy(circle, g.constant_strain(circle, 1), g.make_config(circle, pts)).total
    assert val == pytest.approx(-math.pi * math.log(0.75), rel=1e-5)
    rep = en.renormalized_energy(ellipse, g.constant_strain(ellipse, 1), g.make_config(ellipse, [[0.2, 0.1]]))
    assert rep.finite


def test_self_energy_centered(disk, f1):
    assert abs(en.self_energy(disk, f1, cfg(disk, [[0, 0]]), 0)) <= 1e-10


def test_self_and_interaction_sum(disk, f2):
    c = cfg(disk, [[0.4, 0.0], [-0.4, 0.0]])
    e01 = en.interaction_energy(disk, f2, c, 0, 1)
    e10 = en.interaction_energy(disk, f2, c, 1, 0)
    assert e01 == pytest.approx(e10, abs=1e-10)
    total = en.self_interaction_total(disk, f2, c)
    assert total == pytest.approx(en.renormalized_energy(disk, f2, c).total, abs=1e-6)
    assert total == pytest.approx(1.5649965279237241, abs=1e-6)


def test_core_energy_coincident_identity(disk, f2):
    for eps in (0.1, 0.05):
        rep = en.core_energy(disk, f2, cfg(disk, [[0, 0], [0, 0]]), eps)
        assert rep.total == pytest.approx(2 * math.pi * abs(math.log(eps)), abs=1e-8)
    a = [[0.3, 0.1]]
    eps = 0.05
    single = en.core_energy(disk, g.constant_strain(disk, 1), cfg(disk, a), eps).total
    double = en.core_energy(disk, f2, cfg(disk, a * 2), eps).total
    assert double == pytest.approx(4 * single + 2 * math.pi * abs(math.log(eps)), rel=1e-8)


def test_core_energy_monotone_in_eps(disk, f2):
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 5:
        pts = rng.uniform(-0.7, 0.7, (2, 2))
        c = cfg(disk, pts)
        if np.min(c.d) <= 0.1:
            continue
        big = en.full_core_energy(disk, f2, c, 0.05)
        small = en.full_core_energy(disk, f2, c, 0.02)
        assert small >= big
        checked += 1


def test_core_energy_guard(disk, f1):
    with pytest.raises(ValueError):
        en.core_energy(disk, f1, cfg(disk, [[0.5, 0.0]]), 0.3)
    rep = en.core_energy(disk, f1, cfg(disk, [[0.5, 0.0]]), 0.3, allow_large=True)
    assert rep.finite


def test_core_energy_against_finite_differences(disk, f2):
    pts = [[0.4, 0.0], [-0.4, 0.0]]
    E = en.full_core_energy(disk, f2, cfg(disk, pts), 0.05)
    fd = oracles.fd_core_energy(pts, [1, 1], 0.05, oracles.degree_matched_exterior(pts, [1, 1]), n=384)
    assert E == pytest.approx(fd, rel=0.01)


def test_decomposition_identity(disk, f2):
    c = cfg(disk, [[0.4, 0.0], [-0.4, 0.0]])
    dec = en.decomposition(disk, f2, c, 0.02)
    full = en.core_energy(disk, f2, c, 0.02).total
    assert dec["total"] == pytest.approx(full, rel=1e-6)
    assert set(dec["interaction"]) == {(0, 1)}


def test_remainder_decreases(disk, f2):
    c = cfg(disk, [[0.4, 0.0], [-0.4, 0.0]])
    r = [abs(en.remainder(disk, f2, c, e, 0)) for e in (0.04, 0.02, 0.01)]
    assert r[0] > r[1] > r[2]


def test_interaction_converges(disk, f2):
    c = cfg(disk, [[0.4, 0.0], [-0.4, 0.0]])
    G = en.interaction_eps(disk, f2, c, 0.01, 0, 1)
    assert G == pytest.approx(en.limit_interaction(disk, f2, c, 0, 1), rel=0.02)
    with pytest.raises(ValueError):
        en.interaction_eps(disk, f2, c, 0.01, 0, 0)


def test_cut_invariance_exact_case(disk, f1):
    c = cfg(disk, [[0.0, 0.0]])
    a = g.datum_for_config(disk, f1, c, exits=[math.pi])
    b = g.datum_for_config(disk, f1, c, exits=[math.pi / 3])
    assert en.cut_invariance_check(disk, a, b, c, eps=0.05)["discrepancy"] <= 1e-8


def test_cut_invariance_off_center(disk, f1):
    c = cfg(disk, [[0.5, 0.0]])
    a = g.datum_for_config(disk, f1, c, exits=[math.pi / 2])
    b = g.datum_for_config(disk, f1, c, exits=[4.0])
    assert en.cut_invariance_check(disk, a, b, c, eps=0.05)["discrepancy"] <= 1e-5
    assert en.cut_invariance_check(disk, a, b, c)["discrepancy"] <= 1e-6


def test_composite_trace_is_continuous(disk):
    c = cfg(disk, [[0.3, 0.2], [-0.4, -0.1]])
    bd = g.datum_for_config(disk, g.constant_strain(disk, 2), c)
    h = en.composite_trace(disk, bd, c)
    s = np.linspace(0, 2 * math.pi, 200001)
    assert np.max(np.abs(np.diff(h(s)))) < 1e-3
