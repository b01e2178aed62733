"""Singular fields of a screw dislocation and quadrature of their products.

``K_a(x) = (-(x2 - a2), x1 - a1) / |x - a|^2`` is the rotated gradient of
``log|x - a|`` and the absolutely continuous gradient of the angle ``theta_a``.
Integrals over regions containing the singular points are taken in polar
coordinates about each point, where ``rho * |K|`` stays bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad as _quad

from .geometry import TWO_PI, DomainSpec, _as_points


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-6
    max_depth: int = 14
    patch_fraction: float = 0.5

    def __post_init__(self):
        if self.rtol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_depth < 1:
            raise ValueError("max depth must be at least 1")

    @property
    def limit(self) -> int:
        """Subinterval budget handed to the adaptive outer rule."""
        return 16 * self.max_depth


DEFAULT_QUAD = QuadratureSpec()


class QuadratureError(RuntimeError):
    pass


def k_field(a, x) -> np.ndarray:
    """The field ``K_a`` at the rows of ``x``."""
    a = np.asarray(a, dtype=float)
    pts = _as_points(x)
    dx = pts[:, 0] - a[0]
    dy = pts[:, 1] - a[1]
    r2 = dx * dx + dy * dy
    if np.any(r2 == 0):
        raise ValueError("K_a is singular at a")
    return np.stack([-dy / r2, dx / r2], axis=-1)


def log_potential(a, x) -> np.ndarray:
    """``log|x - a|``."""
    a = np.asarray(a, dtype=float)
    pts = _as_points(x)
    return 0.5 * np.log((pts[:, 0] - a[0]) ** 2 + (pts[:, 1] - a[1]) ** 2)


def log_gradient(a, x) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    pts = _as_points(x)
    d = pts - a
    r2 = np.sum(d * d, axis=1)
    return d / r2[:, None]


@dataclass(frozen=True)
class BranchCut:
    """Half-line from ``anchor`` along the unit vector ``direction``."""

    anchor: tuple
    direction: tuple

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        nrm = math.hypot(d[0], d[1])
        if nrm == 0:
            raise ValueError("cut direction must be nonzero")
        object.__setattr__(self, "direction", (float(d[0] / nrm), float(d[1] / nrm)))
        object.__setattr__(self, "anchor", (float(self.anchor[0]), float(self.anchor[1])))

    @property
    def angle(self) -> float:
        return math.atan2(self.direction[1], self.direction[0])

    @classmethod
    def toward(cls, a, target) -> "BranchCut":
        a = np.asarray(a, dtype=float)
        return cls(tuple(a), tuple(np.asarray(target, dtype=float) - a))


def theta_values(a, cut_angle: float, x) -> np.ndarray:
    """Angle about ``a`` taking values in ``(cut_angle, cut_angle + 2*pi)``; no checks."""
    a = np.asarray(a, dtype=float)
    pts = _as_points(x)
    raw = np.arctan2(pts[:, 1] - a[1], pts[:, 0] - a[0])
    return cut_angle + np.mod(raw - cut_angle, TWO_PI)


def theta_branch(cut: BranchCut, x) -> np.ndarray:
    """Continuous angle about the cut anchor, jumping by 2*pi across the cut."""
    pts = _as_points(x)
    a = np.asarray(cut.anchor)
    d = pts - a
    r = np.hypot(d[:, 0], d[:, 1])
    if np.any(r == 0):
        raise ValueError("angle undefined at the anchor")
    t = cut.direction
    along = d[:, 0] * t[0] + d[:, 1] * t[1]
    across = d[:, 0] * t[1] - d[:, 1] * t[0]
    if np.any((along > 0) & (np.abs(across) <= 1e-14 * r)):
        raise ValueError("point lies on the branch cut")
    return theta_values(a, cut.angle, pts)


def annulus_k_energy(eps: float, R: float) -> float:
    """Integral of |K|^2 over the annulus eps < |x - a| < R: 2*pi*log(R/eps)."""
    if not (0 < eps < R):
        raise ValueError("need 0 < eps < R")
    return TWO_PI * math.log(R / eps)


# ---------------------------------------------------------------------------
# regions and polar quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiskRegion:
    center: tuple
    radius: float

    def ray_interval(self, origin, directions):
        o = np.asarray(origin, dtype=float) - np.asarray(self.center, dtype=float)
        d = _as_points(directions)
        b = d @ o
        c = o @ o - self.radius ** 2
        disc = b * b - c
        ok = disc >= 0
        root = np.sqrt(np.where(ok, disc, 0.0))
        t0 = np.where(ok, -b - root, 0.0)
        t1 = np.maximum(np.where(ok, -b + root, 0.0), 0.0)
        return np.clip(t0, 0.0, t1), t1

    def tangent_angles(self, origin) -> list:
        o = np.asarray(origin, dtype=float)
        c = np.asarray(self.center, dtype=float)
        v = c - o
        dist = math.hypot(*v)
        if dist < self.radius * (1 - 1e-12):
            return []
        base = math.atan2(v[1], v[0])
        half = math.asin(min(1.0, self.radius / dist))
        return [base - half, base + half]


def _tangent_angles(region, origin) -> list:
    if isinstance(region, DiskRegion):
        return region.tangent_angles(origin)
    if region.is_disk:
        return DiskRegion((0.0, 0.0), region.radius).tangent_angles(origin)
    o = np.asarray(origin, dtype=float)
    if region.contains(o, closed=False)[0]:
        return []
    poly = region._poly
    ang = np.arctan2(poly[:, 1] - o[1], poly[:, 0] - o[0])
    ref = math.atan2(*(region.center - o)[::-1])
    rel = np.mod(ang - ref + math.pi, TWO_PI) - math.pi
    return [ref + float(rel.min()), ref + float(rel.max())]


_GL_CACHE: dict = {}


def _gauss(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = leggauss(n)
    return _GL_CACHE[n]


def _graded_panels(a: float, b: float, focus: float, levels: int = 10, ratio: float = 0.2) -> list:
    """Panels on [a, b] refined geometrically toward ``focus`` (which must lie in [a, b])."""
    edges = {a, b}
    if a < focus < b or focus in (a, b):
        edges.add(focus)
        for side_end in (a, b):
            span = side_end - focus
            step = span
            for _ in range(levels):
                step *= ratio
                edges.add(focus + step)
    e = np.array(sorted(edges))
    return [(float(lo), float(hi)) for lo, hi in zip(e[:-1], e[1:]) if hi - lo > 1e-15 * max(1.0, abs(b))]


def _radial_rule(t0: float, t1: float, foci: Sequence[float], order: int = 16):
    if t1 <= t0:
        return np.zeros(0), np.zeros(0)
    x, w = _gauss(order)
    edges = {t0, t1}
    for f in foci:
        if t0 < f < t1:
            for lo, hi in _graded_panels(t0, t1, f):
                edges.add(lo)
                edges.add(hi)
    e = np.array(sorted(edges))
    lo, hi = e[:-1], e[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def polar_integral(region, origin, integrand: Callable, quad: QuadratureSpec = DEFAULT_QUAD,
                   rho_min: float = 0.0, foci: Sequence = (), angle_breaks: Sequence[float] = ()) -> float:
    """Integral over ``region`` minus ``B_{rho_min}(origin)`` in polar coordinates about ``origin``.

    ``integrand(x, rho, u)`` receives points, radii and unit directions and must
    return values of ``rho * F(x)`` (the Jacobian is folded in by the caller).
    ``foci`` are points whose closest approach along each ray is resolved with
    graded panels.
    """
    o = np.asarray(origin, dtype=float)
    foci = [np.asarray(f, dtype=float) for f in foci]

    def inner(psi: float) -> float:
        u = np.array([math.cos(psi), math.sin(psi)])
        t0, t1 = region.ray_interval(o, u)
        t0 = max(float(t0[0]), rho_min)
        t1 = float(t1[0])
        if t1 <= t0:
            return 0.0
        marks = [float((f - o) @ u) for f in foci]
        nodes, weights = _radial_rule(t0, t1, marks)
        x = o[None, :] + nodes[:, None] * u[None, :]
        return float(np.dot(weights, integrand(x, nodes, u)))

    breaks = set()
    for f in foci:
        breaks.add(math.atan2(f[1] - o[1], f[0] - o[0]))
    breaks.update(angle_breaks)
    breaks.update(_tangent_angles(region, o))
    start = -math.pi
    pts = sorted(start + np.mod(b - start, TWO_PI) for b in breaks)
    pts = [p for p in pts if start < p < start + TWO_PI]
    val, err = _quad(inner, start, start + TWO_PI, points=pts or None, limit=quad.limit,
                     epsabs=quad.rtol * 1e-3, epsrel=quad.rtol)
    if not np.isfinite(val) or err > max(10 * quad.rtol * abs(val), 1e-9):
        raise QuadratureError(f"polar quadrature did not converge (estimate {val}, error {err})")
    return float(val)


def k_energy_in_domain(domain, a, eps: float, exclusions: Sequence = (),
                       quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Integral of |K_a|^2 over the domain minus B_eps(a) and the exclusion disks.

    Along each ray from ``a`` the radial integral of ``1/rho`` is exact, so only
    the angular integral is numerical.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    a = np.asarray(a, dtype=float)
    excl = [DiskRegion(tuple(c), float(r)) for c, r in exclusions]

    def along(psi: float) -> float:
        u = np.array([math.cos(psi), math.sin(psi)])
        t0, t1 = domain.ray_interval(a, u)
        lo, hi = max(float(t0[0]), eps), float(t1[0])
        if hi <= lo:
            return 0.0
        cuts = []
        for dsk in excl:
            e0, e1 = dsk.ray_interval(a, u)
            e0, e1 = float(e0[0]), float(e1[0])
            if e1 > e0:
                cuts.append((max(e0, lo), min(e1, hi)))
        cuts = sorted(c for c in cuts if c[1] > c[0])
        total = 0.0
        cur = lo
        for c0, c1 in cuts:
            if c0 > cur:
                total += math.log(c0 / cur)
            cur = max(cur, c1)
        if hi > cur:
            total += math.log(hi / cur)
        return total

    breaks = []
    for dsk in excl:
        breaks.extend(dsk.tangent_angles(a))
    breaks.extend(_tangent_angles(domain, a))
    if isinstance(domain, DomainSpec) and domain.on_boundary(a, tol=1e-9 * domain.diameter)[0]:
        s, _ = domain.project(a)
        nrm = domain.normal(s)[0]
        base = math.atan2(-nrm[1], -nrm[0])
        breaks.extend([base - math.pi / 2, base + math.pi / 2])
    start = -math.pi
    pts = sorted(start + np.mod(b - start, TWO_PI) for b in breaks)
    pts = [p for p in pts if start < p < start + TWO_PI]
    val, err = _quad(along, start, start + TWO_PI, points=pts or None, limit=quad.limit,
                     epsabs=quad.rtol * 1e-3, epsrel=quad.rtol)
    if err > max(10 * quad.rtol * abs(val), 1e-9):
        raise QuadratureError(f"angular quadrature did not converge (error {err})")
    return float(val)


def k_dot_integral(y1, y2, region, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Integral of ``K_{y1} . K_{y2}`` over a disk region or a domain.

    A smooth partition of unity ``|x-y2|^2 / (|x-y1|^2 + |x-y2|^2)`` and its
    complement split the integrand into two pieces, each singular at one point
    only; each piece is integrated in polar coordinates about its point.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.all(y1 == y2):
        raise ValueError("the two points must differ")

    def piece(own, other):
        def f(x, rho, u):
            k_own = np.stack([-u[1] * np.ones_like(rho), u[0] * np.ones_like(rho)], axis=-1)  # rho * K_own
            d = x - other
            r2 = np.sum(d * d, axis=1)
            k_other = np.stack([-d[:, 1], d[:, 0]], axis=-1) / r2[:, None]
            chi = r2 / (rho * rho + r2)
            return chi * np.sum(k_own * k_other, axis=1)

        return polar_integral(region, own, f, quad, foci=[other])

    return piece(y1, y2) + piece(y2, y1)
