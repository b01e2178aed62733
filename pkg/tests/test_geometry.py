import json
import math

import numpy as np
import pytest

from dislocate import geometry as g


def test_unit_disk_parametrization(disk):
    assert np.allclose(disk.point(0.0), [[1.0, 0.0]])
    assert np.allclose(disk.normal(0.0), [[1.0, 0.0]])
    assert disk.diameter == 2.0
    inside = disk.contains(np.array([[0.5, 0.0], [1.5, 0.0]]))
    assert inside.tolist() == [True, False]


def test_boundary_distance_examples(disk, ellipse):
    assert g.boundary_distance(disk, [0.3, 0.4]) == pytest.approx(0.5, abs=1e-15)
    assert g.boundary_distance(disk, [0.0, 0.0]) == pytest.approx(1.0)
    spacing = ellipse.length / 2048
    assert g.boundary_distance(ellipse, ellipse.point(np.array([1.234]))[0]) <= spacing


def test_disk_distance_plus_radius(disk):
    x = np.random.default_rng(0).uniform(-0.7, 0.7, (500, 2))
    assert np.max(np.abs(disk.distance(x) + np.hypot(x[:, 0], x[:, 1]) - 1.0)) <= 1e-12


def test_ellipse_distance_against_dense_polygon(ellipse):
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, (50, 2))
    t = np.linspace(0, 2 * math.pi, 200000, endpoint=False)
    poly = np.stack([1.2 * np.cos(t), 0.8 * np.sin(t)], axis=-1)
    ref = np.min(np.hypot(*(x[:, None, :] - poly[None]).transpose(2, 0, 1)), axis=1)
    assert np.max(np.abs(ellipse.distance(x) - ref)) < 1e-6


def test_separation_radii_examples(disk):
    assert np.allclose(g.separation_radii(disk, [[0, 0], [0.5, 0]]), [0.25, 0.25])
    assert np.allclose(g.separation_radii(disk, [[0, 0]]), [1.0])
    assert np.allclose(g.separation_radii(disk, [[0.9, 0], [-0.9, 0]]), [0.1, 0.1])
    with pytest.raises(ValueError):
        g.separation_radii(disk, [[0.1, 0], [0.1, 0]])


def test_separation_radii_permutation_and_rotation(disk):
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = rng.uniform(-0.6, 0.6, (6, 2))
        perm = rng.permutation(6)
        d = g.separation_radii(disk, p)
        assert np.allclose(g.separation_radii(disk, p[perm]), d[perm], atol=1e-14)
        t = rng.uniform(0, 2 * math.pi)
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        assert np.allclose(g.separation_radii(disk, p @ rot.T), d, atol=1e-12)


def test_make_config_folds_duplicates(disk):
    cfg = g.make_config(disk, [[0.2, 0], [0.2, 0], [-0.3, 0.1], [1.0, 0.0]])
    assert cfg.n == 4 and cfg.ell == 3
    assert sorted(cfg.multiplicities.tolist()) == [1, 1, 2]
    assert sorted(cfg.omega.tolist()) == [1, 1, 2]


def test_build_primitive_unit_strain(disk):
    f = g.constant_strain(disk, 1)
    bd = g.build_primitive(disk, f, 0.0, [(math.pi, 1)])
    vals = bd.g(np.array([math.pi / 2, 3 * math.pi / 2]))
    assert np.allclose(vals, [math.pi / 2, -math.pi / 2], atol=1e-12)
    assert bd.g(np.array([1e-9]))[0] == pytest.approx(0.0, abs=1e-8)


def test_build_primitive_double_jump(disk):
    f = g.constant_strain(disk, 2)
    bd = g.build_primitive(disk, f, 0.0, [(math.pi, 2)])
    below, above = bd.g(np.array([math.pi - 1e-9, math.pi + 1e-9]))
    assert below - above == pytest.approx(4 * math.pi, abs=1e-6)


def test_build_primitive_closure_and_errors(disk):
    f = g.constant_strain(disk, 1)
    with pytest.raises(ValueError):
        g.build_primitive(disk, f, 0.0, [(1.0, 1), (2.0, 1)])  # jumps exceed the circulation
    f2 = g.constant_strain(disk, 2)
    with pytest.raises(ValueError):
        g.build_primitive(disk, f2, 0.0, [(2.0, 1), (1.0, 1)])  # out of order
    with pytest.raises(ValueError):
        g.build_primitive(disk, f, 1.0, [(1.0, 1)])  # base on a jump


def test_primitive_total_variation_and_base_change(disk):
    f = g.half_strain(disk)
    s = np.linspace(0, 2 * math.pi, 20001)[:-1]
    a = g.build_primitive(disk, f, 0.1, [(3.0, 1)])
    b = g.build_primitive(disk, f, 0.5, [(3.0, 1)])
    arc = (s > 0.6) & (s < 2.9)
    assert np.ptp(a.g(s[arc]) - b.g(s[arc])) < 1e-10
    # the continuous part of the variation equals the integral of |f| = 2 * pi
    vals = a.g(s)
    steps = np.diff(np.append(vals, vals[0]))
    assert np.sum(np.abs(steps[np.abs(steps) < 1.0])) == pytest.approx(2 * math.pi, rel=1e-3)


def test_arc_order(disk):
    b = disk.point(np.array([0.0]))[0]
    p = lambda t: disk.point(np.array([t]))[0]
    assert g.arc_order(disk, b, p(math.pi / 4), p(math.pi / 2))
    assert not g.arc_order(disk, b, p(3 * math.pi / 2), p(math.pi / 2))
    assert g.arc_order(disk, b, p(1.0), p(1.0))
    with pytest.raises(ValueError):
        g.arc_order(disk, b, [0.2, 0.0], p(1.0))


def test_half_strain_matches_piecewise_form(disk):
    f = g.half_strain(disk)
    t = np.linspace(0, 2 * math.pi, 1001)[:-1]
    assert np.allclose(f.primitive(t), g.half_strain_primitive(t))
    assert f.total == pytest.approx(2 * math.pi)


def test_cut_exits_interior_and_boundary(disk):
    cfg = g.make_config(disk, [[0.0, 0.0], [0.0, 1.0]])
    ex = g.cut_exits(disk, cfg)
    anchor = g.default_anchor(disk)
    centre = int(np.argmin(np.hypot(*cfg.points.T)))
    assert math.isclose(ex[centre], math.atan2(anchor[1], anchor[0]) % (2 * math.pi), abs_tol=1e-9)
    assert math.isclose(ex[1 - centre], math.pi / 2, abs_tol=1e-9)
    bd = g.datum_for_config(disk, g.constant_strain(disk, 2), cfg)
    assert sorted(bd.owners) == [0, 1]


def test_domain_files_round_trip(tmp_path):
    s, x, y = g.ellipse_samples(1.0, 0.6, 1024)
    g.write_boundary_csv(tmp_path / "b.csv", s, x, y)
    text = (tmp_path / "b.csv").read_text()
    assert text.startswith("s,x,y\n") and "\r" not in text
    s2, x2, y2 = g.read_boundary_csv(tmp_path / "b.csv")
    assert np.array_equal(s, s2) and np.array_equal(x, x2)
    (tmp_path / "d.json").write_text(json.dumps({"kind": "samples", "boundary_samples": "b.csv"}))
    dom = g.load_domain(tmp_path / "d.json")
    assert dom.diameter == pytest.approx(2.0, rel=1e-4)
    (tmp_path / "disk.json").write_text(json.dumps({"kind": "disk", "radius": 2.0}))
    assert g.load_domain(tmp_path / "disk.json").diameter == 4.0


def test_nonconvex_and_bad_tables_rejected():
    t = np.linspace(0, 2 * math.pi, 4097)[:-1]
    r = 1 + 0.3 * np.cos(5 * t)
    x, y = r * np.cos(t), r * np.sin(t)
    seg = np.hypot(np.diff(np.append(x, x[0])), np.diff(np.append(y, y[0])))
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    with pytest.raises(ValueError):
        g.domain_from_samples(s, x, y)
    s0, x0, y0 = g.ellipse_samples(1.0, 0.6, 1024)
    with pytest.raises(ValueError):
        g.domain_from_samples(s0, x0[::-1].copy(), y0[::-1].copy())
    with pytest.raises(ValueError):
        g.domain_from_samples(s0[:500], x0[:500], y0[:500])
