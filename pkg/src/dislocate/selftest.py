"""Quick invariant suites run by ``dislocate selftest``."""

from __future__ import annotations

import math
import traceback
from typing import Callable

import numpy as np

from . import energy, fields, geometry, harmonic, optimize


def _geometry():
    D = geometry.make_unit_disk()
    d = geometry.separation_radii(D, [[0, 0], [0.5, 0]])
    assert np.allclose(d, [0.25, 0.25])
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.7, 0.7, (200, 2))
    assert np.allclose(D.distance(x) + np.hypot(x[:, 0], x[:, 1]), 1.0, atol=1e-12)
    p = rng.uniform(-0.6, 0.6, (5, 2))
    assert np.allclose(np.sort(geometry.separation_radii(D, p)), np.sort(geometry.separation_radii(D, p[::-1])))


def _fields():
    rng = np.random.default_rng(1)
    y1, y2, x = rng.uniform(-1, 1, (3, 2000, 2))
    dots = np.einsum("nk,nk->n", *[np.vstack([fields.k_field(a, b[None]) for a, b in zip(y, x)]) for y in (y1, y2)])
    mid, r = 0.5 * (y1 + y2), 0.5 * np.hypot(*(y1 - y2).T)
    side = np.sum((x - mid) ** 2, axis=1) - r ** 2
    ok = np.abs(side) < 1e-9
    assert np.all((np.sign(dots) == np.sign(side)) | ok)
    val = fields.k_dot_integral([-0.5, 0], [0.5, 0], fields.DiskRegion((0.0, 0.0), 0.5))
    assert -2 * math.pi - 1e-3 <= val <= 1e-3


def _harmonic():
    D = geometry.make_unit_disk()

    def datum(s):
        p = D.point(s)
        return np.log(np.hypot(p[:, 0] - 2, p[:, 1]))

    for method in ("fourier", "mfs"):
        sol = harmonic.solve_dirichlet(D, datum, method=method)
        assert abs(sol.evaluate([[0.0, 0.0]])[0] - math.log(2)) < 1e-8
    rng = np.random.default_rng(2)
    c = rng.normal(size=(2, 6))
    k = np.arange(1, 7)

    def smooth(s):
        return np.cos(np.outer(s, k)) @ c[0] + np.sin(np.outer(s, k)) @ c[1]

    a = harmonic.solve_dirichlet(D, smooth, method="fourier")
    b = harmonic.solve_dirichlet(D, smooth, method="mfs")
    probes = rng.uniform(-0.6, 0.6, (50, 2))
    assert np.max(np.abs(a.evaluate(probes) - b.evaluate(probes))) < 1e-7


def _energy():
    D = geometry.make_unit_disk()
    g1 = geometry.constant_strain(D, 1)
    assert abs(energy.renormalized_energy(D, g1, geometry.make_config(D, [[0, 0]])).total) < 1e-10
    assert abs(energy.core_energy(D, g1, geometry.make_config(D, [[0, 0]]), 0.05).total) < 1e-8
    f2 = geometry.constant_strain(D, 2)
    rep = energy.core_energy(D, f2, geometry.make_config(D, [[0, 0], [0, 0]], tol=0.0), 0.1)
    assert abs(rep.total - 2 * math.pi * math.log(10)) < 1e-8
    cfg = geometry.make_config(D, [[0.4, 0], [-0.4, 0]])
    dec = energy.decomposition(D, f2, cfg, 0.05)
    full = energy.core_energy(D, f2, cfg, 0.05).total
    assert abs(dec["total"] - full) <= 1e-6 * abs(full)


def _coarsen():
    D = geometry.make_unit_disk()
    tr = optimize.coarsen(np.array([[-0.05, 0], [0.05, 0]]), 0.1, D)
    assert [s.action for s in tr.iterations] == [optimize.MERGE] and abs(tr.final_radius - 0.15) < 1e-12
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 9))
        r, t = np.sqrt(rng.uniform(0, 1, n)), rng.uniform(0, 2 * math.pi, n)
        p = np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)
        eps = 10 ** rng.uniform(-3, -0.7)
        tr = optimize.coarsen(p, eps, D)
        assert len(tr.iterations) <= n * n
        assert tr.final_radius <= 2.0 ** (n * n) * max(eps, tr.s_bar)


SUITES: dict = {"geometry": _geometry, "fields": _fields, "harmonic": _harmonic, "energy": _energy,
                "coarsen": _coarsen}


def run(emit: Callable[[str], None] = print) -> list:
    """Run every suite; returns the names of failing suites."""
    failed = []
    for name, fn in SUITES.items():
        try:
            fn()
            emit(f"PASS {name}")
        except Exception as exc:  # report and continue with the other suites
            failed.append(name)
            emit(f"FAIL {name}: {exc!r}")
            emit(traceback.format_exc().rstrip())
    return failed
