import math

import numpy as np
import pytest

from dislocate import fields as fl

import oracles


def test_k_field_examples():
    assert np.allclose(fl.k_field([0, 0], [[1, 0]]), [[0, 1]])
    assert np.allclose(fl.k_field([0, 0], [[0, 2]]), [[-0.5, 0]])
    k1 = fl.k_field([-1, 0], [[0, 0]])[0]
    k2 = fl.k_field([1, 0], [[0, 0]])[0]
    assert k1 @ k2 == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        fl.k_field([0.3, 0.1], [[0.3, 0.1]])


def test_circulation_and_divergence():
    rng = np.random.default_rng(0)
    a = np.array([0.2, -0.1])
    for r in (1e-3, 0.1, 2.0, 50.0):
        t = np.arange(512) * 2 * math.pi / 512
        x = a + r * np.stack([np.cos(t), np.sin(t)], axis=-1)
        tau = np.stack([-np.sin(t), np.cos(t)], axis=-1)
        circ = np.sum(np.sum(fl.k_field(a, x) * tau, axis=1)) * r * 2 * math.pi / 512
        assert circ == pytest.approx(2 * math.pi, abs=1e-8)
    h = 1e-4
    x = rng.uniform(-1, 1, (200, 2))
    x = x[np.hypot(*(x - a).T) > 0.3]  # central-difference truncation grows like h^2 / rho^4
    ex, ey = np.array([h, 0]), np.array([0, h])
    div = ((fl.k_field(a, x + ex) - fl.k_field(a, x - ex))[:, 0]
           + (fl.k_field(a, x + ey) - fl.k_field(a, x - ey))[:, 1]) / (2 * h)
    assert np.max(np.abs(div)) <= 1e-5


def test_theta_branch_examples():
    cut = fl.BranchCut((0.0, 0.0), (1.0, 0.0))
    assert fl.theta_branch(cut, [[0, 1]])[0] == pytest.approx(math.pi / 2)
    up, down = fl.theta_branch(cut, [[1, 1e-12], [1, -1e-12]])
    assert abs(up - down) == pytest.approx(2 * math.pi, abs=1e-9)
    with pytest.raises(ValueError):
        fl.theta_branch(cut, [[2.0, 0.0]])
    with pytest.raises(ValueError):
        fl.theta_branch(cut, [[0.0, 0.0]])


def test_theta_gradient_is_k_field():
    rng = np.random.default_rng(1)
    cut = fl.BranchCut((0.1, 0.2), (-1.0, 1.0))
    x = rng.uniform(-1, 1, (400, 2))
    d = x - np.array(cut.anchor)
    along = d @ np.array(cut.direction)
    across = d[:, 0] * cut.direction[1] - d[:, 1] * cut.direction[0]
    x = x[(np.hypot(*d.T) > 0.05) & ~((along > 0) & (np.abs(across) < 0.01))][:100]
    h = 1e-6
    gx = (fl.theta_branch(cut, x + [h, 0]) - fl.theta_branch(cut, x - [h, 0])) / (2 * h)
    gy = (fl.theta_branch(cut, x + [0, h]) - fl.theta_branch(cut, x - [0, h])) / (2 * h)
    assert np.max(np.abs(np.stack([gx, gy], axis=-1) - fl.k_field(cut.anchor, x))) <= 1e-6


def test_annulus_energy():
    assert fl.annulus_k_energy(0.1, 1.0) == pytest.approx(2 * math.pi * math.log(10))
    assert fl.annulus_k_energy(1 / math.e, 1.0) == pytest.approx(2 * math.pi)
    assert fl.annulus_k_energy(0.01, 3.0) == pytest.approx(fl.annulus_k_energy(0.01, 0.7) + fl.annulus_k_energy(0.7, 3.0))
    with pytest.raises(ValueError):
        fl.annulus_k_energy(1.0, 1.0)


def test_k_energy_centered_is_annulus(disk):
    assert fl.k_energy_in_domain(disk, [0, 0], 0.1) == pytest.approx(2 * math.pi * math.log(10), rel=1e-10)


def test_k_energy_matches_midpoint_oracle(disk):
    ref = oracles.k_energy_unit_disk((0.5, 0.0), 0.01, n=2000)
    val = fl.k_energy_in_domain(disk, [0.5, 0.0], 0.01)
    assert val == pytest.approx(ref, rel=1e-3)
    # chords through a satisfy R(psi) R(psi + pi) = 1 - |a|^2, so the mean of log R is log(0.75) / 2
    assert val == pytest.approx(2 * math.pi * (math.log(100) + 0.5 * math.log(0.75)), rel=1e-8)


def test_k_energy_with_exclusion(disk):
    # excluding a disk B_r(b) far from a removes roughly |K_a|^2 * area
    full = fl.k_energy_in_domain(disk, [0.0, 0.0], 0.05)
    part = fl.k_energy_in_domain(disk, [0.0, 0.0], 0.05, exclusions=[((0.6, 0.0), 0.05)])
    exact_removed = oracles.midpoint_disk_integral(lambda X, Y: 1 / (X ** 2 + Y ** 2), (0.6, 0.0), 0.05, n=400)
    assert full - part == pytest.approx(exact_removed, rel=1e-4)


def test_k_energy_bounds(disk, ellipse):
    rng = np.random.default_rng(2)
    for dom in (disk, ellipse):
        checked = 0
        while checked < 25:
            a = rng.uniform(-1, 1, 2) * np.array([1.2, 0.8])
            if not dom.contains(a[None], closed=False)[0]:
                continue
            d = float(dom.distance(a[None])[0])
            eps = 0.5 * d * rng.uniform(0.01, 1.0)
            val = fl.k_energy_in_domain(dom, a, eps)
            lo = 2 * math.pi * abs(math.log(eps)) + 2 * math.pi * math.log(d)
            hi = 2 * math.pi * abs(math.log(eps)) + 2 * math.pi * math.log(dom.diameter)
            assert lo - 1e-6 <= val <= hi + 1e-6
            checked += 1
        for _ in range(25):
            s = rng.uniform(0, dom.length)
            b = dom.point(np.array([s]))[0]
            eps = 10 ** rng.uniform(-3, -1)
            val = fl.k_energy_in_domain(dom, b, eps)
            assert val <= math.pi * abs(math.log(eps)) + math.pi * math.log(dom.diameter) + 1e-6


def test_boundary_point_upper_bound(disk):
    val = fl.k_energy_in_domain(disk, [1.0, 0.0], 0.01)
    assert val <= math.pi * abs(math.log(0.01)) + math.pi * math.log(2)


def test_sign_structure():
    rng = np.random.default_rng(3)
    y1, y2, x = rng.uniform(-1, 1, (3, 10000, 2))
    k1 = np.vstack([fl.k_field(a, b[None]) for a, b in zip(y1, x)])
    k2 = np.vstack([fl.k_field(a, b[None]) for a, b in zip(y2, x)])
    dots = np.sum(k1 * k2, axis=1)
    mid, r = 0.5 * (y1 + y2), 0.5 * np.hypot(*(y1 - y2).T)
    side = np.sum((x - mid) ** 2, axis=1) - r ** 2
    on = np.abs(side) <= 1e-12
    assert np.all((np.sign(dots) == np.sign(side)) | on)


def test_k_dot_examples():
    y1, y2 = np.array([-0.5, 0.0]), np.array([0.5, 0.0])
    val = fl.k_dot_integral(y1, y2, fl.DiskRegion((0.0, 0.0), 0.5))
    assert -2 * math.pi <= val <= 0
    probe = lambda x: float(fl.k_field(y1, [x])[0] @ fl.k_field(y2, [x])[0])
    assert probe([0, 0]) < 0
    assert abs(probe([0, 0.5])) <= 1e-10
    assert probe([0, 1]) > 0


def test_k_dot_unit_disk_oracles(disk):
    y1, y2 = (-0.5, 0.0), (0.5, 0.0)
    val = fl.k_dot_integral(y1, y2, disk)
    assert val == pytest.approx(oracles.pair_closed_form(y1, y2), rel=1e-6)
    assert val == pytest.approx(oracles.k_dot_unit_disk(y1, y2, n=2000), rel=2e-3)


def test_k_dot_random_pair_bounds():
    rng = np.random.default_rng(4)
    for _ in range(100):
        y1, y2 = rng.uniform(-1, 1, (2, 2))
        r = 0.5 * float(np.hypot(*(y1 - y2)))
        mid = tuple(0.5 * (y1 + y2))
        assert fl.k_dot_integral(y1, y2, fl.DiskRegion(mid, r)) >= -2 * math.pi - 1e-3
        assert fl.k_dot_integral(y1, y2, fl.DiskRegion(tuple(y1), r)) <= 2 * math.pi + 1e-3


def test_k_dot_rejects_equal_points():
    with pytest.raises(ValueError):
        fl.k_dot_integral([0.1, 0], [0.1, 0], fl.DiskRegion((0, 0), 1))


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        fl.QuadratureSpec(rtol=0)


def test_quadrature_is_deterministic(disk):
    a = fl.k_dot_integral([0.1, 0.2], [-0.3, 0.1], disk)
    b = fl.k_dot_integral([0.1, 0.2], [-0.3, 0.1], disk)
    assert a == b
