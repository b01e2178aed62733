"""Domains, dislocation configurations and boundary data.

A domain is either a disk centred at the origin or a convex region given by a
dense table of boundary samples.  Boundary points are addressed by their
counterclockwise arclength ``s`` in ``[0, L)``; for the disk ``s = 0`` is the
point ``(radius, 0)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

TWO_PI = 2.0 * math.pi


def _as_points(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2)
    return arr


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Bounded convex planar domain with an arclength-parametrized boundary."""

    kind: str
    length: float
    diameter: float
    cone_angle: float
    cone_radius: float
    radius: Optional[float] = None
    _sx: Optional[CubicSpline] = field(default=None, repr=False)
    _sy: Optional[CubicSpline] = field(default=None, repr=False)
    _poly: Optional[np.ndarray] = field(default=None, repr=False)
    _poly_s: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_disk(self) -> bool:
        return self.kind == "disk"

    @property
    def center(self) -> np.ndarray:
        if self.is_disk:
            return np.zeros(2)
        return self._poly.mean(axis=0)

    # -- boundary parametrization ------------------------------------------
    def point(self, s) -> np.ndarray:
        s = np.mod(np.asarray(s, dtype=float), self.length)
        if self.is_disk:
            t = s / self.radius
            return self.radius * np.stack([np.cos(t), np.sin(t)], axis=-1)
        return np.stack([self._sx(s), self._sy(s)], axis=-1)

    def tangent(self, s) -> np.ndarray:
        s = np.mod(np.asarray(s, dtype=float), self.length)
        if self.is_disk:
            t = s / self.radius
            return np.stack([-np.sin(t), np.cos(t)], axis=-1)
        tx, ty = self._sx(s, 1), self._sy(s, 1)
        nrm = np.hypot(tx, ty)
        return np.stack([tx / nrm, ty / nrm], axis=-1)

    def normal(self, s) -> np.ndarray:
        """Outward unit normal (tangent rotated clockwise)."""
        tau = self.tangent(s)
        return np.stack([tau[..., 1], -tau[..., 0]], axis=-1)

    def speed(self, s) -> np.ndarray:
        s = np.mod(np.asarray(s, dtype=float), self.length)
        if self.is_disk:
            return np.ones_like(s)
        return np.hypot(self._sx(s, 1), self._sy(s, 1))

    def nodes(self, count: int, offset: float = 0.0):
        """Equispaced trapezoid nodes: (s, points, normals, weights)."""
        h = self.length / count
        s = (np.arange(count) + offset) * h
        return s, self.point(s), self.normal(s), h * self.speed(s)

    # -- metric queries -----------------------------------------------------
    def project(self, x):
        """Nearest boundary parameter and point for each row of ``x``."""
        pts = _as_points(x)
        if self.is_disk:
            ang = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
            s = ang * self.radius
            return s, self.point(s)
        out_s = np.empty(len(pts))
        for k, p in enumerate(pts):
            d2 = np.sum((self._poly - p) ** 2, axis=1)
            j = int(np.argmin(d2))
            h = self._poly_s[1] - self._poly_s[0]
            s0 = self._poly_s[j]

            def dist2(t, p=p):
                q = self.point(t)
                return float(np.sum((q - p) ** 2))

            res = minimize_scalar(dist2, bounds=(s0 - 2 * h, s0 + 2 * h), method="bounded",
                                  options={"xatol": 1e-13 * self.length})
            out_s[k] = np.mod(res.x, self.length)
        return out_s, self.point(out_s)

    def distance(self, x) -> np.ndarray:
        """Distance to the boundary (nonnegative, inside or outside)."""
        pts = _as_points(x)
        if self.is_disk:
            return np.abs(self.radius - np.hypot(pts[:, 0], pts[:, 1]))
        _, q = self.project(pts)
        return np.hypot(*(pts - q).T)

    def contains(self, x, closed: bool = True) -> np.ndarray:
        pts = _as_points(x)
        tol = 1e-12 * self.diameter
        if self.is_disk:
            r = np.hypot(pts[:, 0], pts[:, 1])
            return r <= self.radius + tol if closed else r < self.radius - tol
        s, q = self.project(pts)
        side = np.sum((pts - q) * self.normal(s), axis=1)
        return side <= tol if closed else side < -tol

    def on_boundary(self, x, tol: Optional[float] = None) -> np.ndarray:
        tol = 1e-12 * self.diameter if tol is None else tol
        return self.distance(x) <= tol

    def ray_interval(self, origin, directions):
        """Entry and exit distances of rays ``origin + t*dir`` with the closed domain.

        Rays that miss the domain return ``t_in = t_out = 0``.  Entry distances are
        clipped at zero, so an origin inside the domain gives ``t_in = 0``.
        """
        o = np.asarray(origin, dtype=float)
        d = _as_points(directions)
        if self.is_disk:
            b = d @ o
            c = o @ o - self.radius ** 2
            disc = b * b - c
            ok = disc >= 0
            root = np.sqrt(np.where(ok, disc, 0.0))
            t0 = np.where(ok, -b - root, 0.0)
            t1 = np.where(ok, -b + root, 0.0)
        else:
            p = self._poly
            q = np.roll(p, -1, axis=0)
            e = q - p
            w = p - o
            # solve o + t d = p + u e for each ray / edge pair
            den = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
            safe = np.where(np.abs(den) > 1e-300, den, np.inf)
            t = (w[None, :, 0] * e[None, :, 1] - w[None, :, 1] * e[None, :, 0]) / safe
            u = (w[None, :, 0] * d[:, None, 1] - w[None, :, 1] * d[:, None, 0]) / safe
            hit = (u >= 0) & (u <= 1) & np.isfinite(t)
            t0 = np.where(hit, t, np.inf).min(axis=1)
            t1 = np.where(hit, t, -np.inf).max(axis=1)
            miss = ~np.isfinite(t0)
            t0 = np.where(miss, 0.0, t0)
            t1 = np.where(miss, 0.0, t1)
        t1 = np.maximum(t1, 0.0)
        t0 = np.clip(t0, 0.0, t1)
        return t0, t1

    def exit_parameter(self, origin, direction) -> float:
        """Arclength of the point where the ray from an interior point leaves the domain."""
        d = np.asarray(direction, dtype=float)
        d = d / np.hypot(*d)
        _, t1 = self.ray_interval(origin, d)
        hit = np.asarray(origin, dtype=float) + t1[0] * d
        s, _ = self.project(hit)
        return float(s[0])


def make_disk(radius: float = 1.0, cone_angle: float = 0.75 * math.pi) -> DomainSpec:
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not (math.pi / 2 < cone_angle < math.pi):
        raise ValueError("cone angle must lie in (pi/2, pi)")
    # a cone of opening alpha with apex on the circle and axis along the inward
    # normal stays inside the disk up to height 2 r cos(alpha / 2)
    return DomainSpec(kind="disk", length=TWO_PI * radius, diameter=2.0 * radius,
                      cone_angle=cone_angle, cone_radius=2.0 * radius * math.cos(cone_angle / 2),
                      radius=radius)


def make_unit_disk() -> DomainSpec:
    """The unit disk centred at the origin."""
    return make_disk(1.0)


def domain_from_samples(s, x, y, cone_angle: float = 0.75 * math.pi,
                        cone_radius: Optional[float] = None) -> DomainSpec:
    """Convex domain from a boundary sample table ``(s, x, y)``.

    ``s`` must be (close to) arclength and the samples must run counterclockwise
    without repeating the first point.  Closure, orientation, convexity and
    arclength consistency are validated.
    """
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(s) < 1024:
        raise ValueError("boundary table needs at least 1024 samples")
    if np.any(np.diff(s) <= 0):
        raise ValueError("arclength column must be strictly increasing")
    if not (math.pi / 2 < cone_angle < math.pi):
        raise ValueError("cone angle must lie in (pi/2, pi)")
    close = math.hypot(x[0] - x[-1], y[0] - y[-1])
    length = float(s[-1] - s[0] + close)
    s0 = s - s[0]
    ss = np.append(s0, length)
    sx = CubicSpline(ss, np.append(x, x[0]), bc_type="periodic")
    sy = CubicSpline(ss, np.append(y, y[0]), bc_type="periodic")

    # arclength consistency: the spline speed should be one
    probe = np.linspace(0, length, 8 * len(s), endpoint=False)
    speed = np.hypot(sx(probe, 1), sy(probe, 1))
    if np.max(np.abs(speed - 1.0)) > 1e-2:
        raise ValueError("s column is not an arclength parametrization")

    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if area2 <= 0:
        raise ValueError("boundary must be counterclockwise")
    # convexity: every sample lies on the inner side of every tangent line
    dense_s = np.linspace(0, length, 4096, endpoint=False)
    poly = np.stack([sx(dense_s), sy(dense_s)], axis=-1)
    e = np.roll(poly, -1, axis=0) - poly
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    if np.any(cross < -1e-9 * length ** 2 / 4096):
        raise ValueError("boundary is not convex")
    diam = float(np.max(np.hypot(*(poly[:, None, :] - poly[None, ::8, :]).transpose(2, 0, 1))))
    cr = 0.25 * diam if cone_radius is None else float(cone_radius)
    return DomainSpec(kind="convex", length=length, diameter=diam, cone_angle=cone_angle,
                      cone_radius=cr, _sx=sx, _sy=sy, _poly=poly, _poly_s=dense_s)


def read_boundary_csv(path) -> tuple:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["s", "x", "y"]:
            raise ValueError("boundary sample file must have header s,x,y")
        for row in reader:
            rows.append((float(row["s"]), float(row["x"]), float(row["y"])))
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def write_boundary_csv(path, s, x, y) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("s,x,y\n")
        for a, b, c in zip(s, x, y):
            fh.write(f"{float(a)!r},{float(b)!r},{float(c)!r}\n")


def load_domain(path) -> DomainSpec:
    """Read a JSON domain file with keys kind, radius or boundary_samples, cone_angle."""
    path = Path(path)
    spec = json.loads(path.read_text())
    kind = spec.get("kind")
    cone = float(spec.get("cone_angle", 0.75 * math.pi))
    if kind == "disk":
        return make_disk(float(spec.get("radius", 1.0)), cone)
    if kind == "samples":
        csv_path = Path(spec["boundary_samples"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        s, x, y = read_boundary_csv(csv_path)
        return domain_from_samples(s, x, y, cone, spec.get("cone_radius"))
    raise ValueError(f"unknown domain kind {kind!r}")


def ellipse_samples(a: float, b: float, count: int = 4096):
    """Arclength-sampled ellipse table, handy for tests and demo domain files."""
    t = np.linspace(0, TWO_PI, 64 * count + 1)
    xs, ys = a * np.cos(t), b * np.sin(t)
    seg = np.hypot(np.diff(xs), np.diff(ys))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0, arc[-1], count, endpoint=False)
    tt = np.interp(target, arc, t)
    return target, a * np.cos(tt), b * np.sin(tt)


# ---------------------------------------------------------------------------
# Points
# ---------------------------------------------------------------------------


def boundary_distance(domain: DomainSpec, x) -> float:
    return float(domain.distance(x)[0])


def separation_radii(domain: DomainSpec, points) -> np.ndarray:
    """Separation radii: half the distance to the nearest other point, capped by
    the distance to the boundary.  A lone point gets its boundary distance."""
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("need at least one point")
    dist = domain.distance(pts)
    if len(pts) == 1:
        return dist
    gap = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(gap, np.inf)
    if np.any(gap == 0):
        raise ValueError("coincident points: fold them into multiplicities first")
    return np.minimum(gap.min(axis=1) / 2.0, dist)


def arc_order(domain: DomainSpec, b, x, y) -> bool:
    """True when ``x`` precedes or equals ``y`` going counterclockwise from ``b``."""
    pts = _as_points([b, x, y])
    tol = 1e-9 * domain.diameter
    if np.any(domain.distance(pts) > tol):
        raise ValueError("arc_order needs boundary points")
    s, _ = domain.project(pts)
    sx = np.mod(s[1] - s[0], domain.length)
    sy = np.mod(s[2] - s[0], domain.length)
    return bool(sx <= sy + 1e-12 * domain.length)


@dataclass(frozen=True, eq=False)
class DislocationConfig:
    """Distinct dislocation positions with multiplicities."""

    points: np.ndarray
    multiplicities: np.ndarray
    d: np.ndarray
    omega: np.ndarray

    @property
    def n(self) -> int:
        return int(self.multiplicities.sum())

    @property
    def ell(self) -> int:
        return len(self.points)

    def all_points(self) -> np.ndarray:
        """Positions repeated by multiplicity."""
        return np.repeat(self.points, self.multiplicities, axis=0)


def make_config(domain: DomainSpec, points, multiplicities=None, tol: float = 0.0) -> DislocationConfig:
    """Build a configuration, folding coincident inputs into multiplicities."""
    pts = _as_points(points)
    mult = np.ones(len(pts), dtype=int) if multiplicities is None else np.asarray(multiplicities, dtype=int)
    if np.any(mult < 1):
        raise ValueError("multiplicities must be positive")
    if np.any(~domain.contains(pts)):
        raise ValueError("points must lie in the closed domain")
    uniq: list = []
    umult: list = []
    for p, m in zip(pts, mult):
        for k, q in enumerate(uniq):
            if math.hypot(p[0] - q[0], p[1] - q[1]) <= tol:
                umult[k] += int(m)
                break
        else:
            uniq.append(p.copy())
            umult.append(int(m))
    up = np.array(uniq)
    d = separation_radii(domain, up)
    omega = np.where(domain.on_boundary(up), 2, 1)
    return DislocationConfig(points=up, multiplicities=np.array(umult), d=d, omega=omega)


# ---------------------------------------------------------------------------
# Strain data and the boundary primitive
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StrainDatum:
    """Boundary strain ``f(s)`` with its primitive and optional Fourier data.

    ``fourier(k)`` (disk only) returns complex coefficients of ``f`` as a
    function of the polar angle, for integer ``k >= 1``.
    """

    length: float
    value: Callable[[np.ndarray], np.ndarray]
    primitive: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    fourier: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def total(self) -> float:
        return float(self.primitive(np.array([self.length]))[0])

    def circulation_count(self) -> float:
        return self.total / TWO_PI


def constant_strain(domain: DomainSpec, n: int) -> StrainDatum:
    """``f = 2*pi*n / L``; on the unit disk this is ``f = n``."""
    c = TWO_PI * n / domain.length
    return StrainDatum(length=domain.length, value=lambda s: np.full(np.shape(s), c),
                       primitive=lambda s: c * np.asarray(s, dtype=float), name=f"const{n}",
                       fourier=(lambda k: np.zeros(np.shape(k), dtype=complex)) if domain.is_disk else None)


def half_strain(domain: DomainSpec) -> StrainDatum:
    """The second landscape datum: ``f = 2`` on the right half circle, 0 on the left."""
    if not (domain.is_disk and domain.radius == 1.0):
        raise ValueError("the half-circle datum is defined on the unit disk")

    def value(s):
        return np.where(np.cos(np.asarray(s, dtype=float)) > 0, 2.0, 0.0)

    def primitive(s):
        s = np.asarray(s, dtype=float)
        full, t = np.divmod(s, TWO_PI)
        part = np.where(t < math.pi / 2, 2 * t,
                        np.where(t < 1.5 * math.pi, math.pi, 2 * t - 2 * math.pi))
        return full * TWO_PI + part

    def fourier(k):
        k = np.asarray(k, dtype=float)
        return (2.0 / (math.pi * k)) * np.sin(k * math.pi / 2) + 0j

    return StrainDatum(length=TWO_PI, value=value, primitive=primitive, name="g2", fourier=fourier)


def half_strain_primitive(theta) -> np.ndarray:
    """Explicit piecewise form of the second datum, polar angle in [0, 2pi)."""
    t = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    return np.where(t < math.pi / 2, 2 * t, np.where(t < 1.5 * math.pi, math.pi, 2 * t - TWO_PI))


def strain_from_samples(domain: DomainSpec, s, f) -> StrainDatum:
    """Strain from samples; the primitive uses a periodic cubic interpolant."""
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    ss = np.append(s, s[0] + domain.length)
    spline = CubicSpline(ss, np.append(f, f[0]), bc_type="periodic")
    anti = spline.antiderivative()
    total = float(anti(ss[-1]) - anti(ss[0]))

    def primitive(x):
        x = np.asarray(x, dtype=float)
        full, t = np.divmod(x - ss[0], domain.length)
        return full * total + anti(ss[0] + t) - anti(ss[0])

    return StrainDatum(length=domain.length, value=lambda x: spline(np.mod(np.asarray(x) - ss[0], domain.length) + ss[0]),
                       primitive=primitive, name="samples")


@dataclass(frozen=True, eq=False)
class BoundaryDatum:
    """Strain ``f`` plus the primitive ``g`` with jumps of ``2*pi*m_i`` at ``b_i``.

    ``jumps`` holds arclength positions sorted counterclockwise from the base
    point ``base``; ``owners[k]`` is the configuration index of jump ``k`` (or
    -1 when the datum was built without a configuration).
    """

    strain: StrainDatum
    base: float
    jumps: tuple
    owners: tuple
    n: int

    def _offset(self, s) -> np.ndarray:
        return np.mod(np.asarray(s, dtype=float) - self.base, self.strain.length)

    def g(self, s) -> np.ndarray:
        """Primitive with the convention g(b+) = 0."""
        s = np.asarray(s, dtype=float)
        off = self._offset(s)
        acc = self.strain.primitive(self.base + off) - self.strain.primitive(np.array(self.base))
        for sj, m in self.jumps:
            passed = off > self._offset(sj)
            acc = acc - TWO_PI * m * passed
        return acc

    def share(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        """``g_{b_k}``: the primitive of ``f/n`` dropping by 2*pi after jump ``k``."""
        sk = self.jumps[k][0]

        def gk(s):
            off = self._offset(s)
            acc = (self.strain.primitive(self.base + off) - self.strain.primitive(np.array(self.base))) / self.n
            return acc - TWO_PI * (off > self._offset(sk))

        return gk


def build_primitive(domain: DomainSpec, f: StrainDatum, base: float, jumps: Sequence,
                    owners: Optional[Sequence[int]] = None, rtol: float = 1e-8) -> BoundaryDatum:
    """Boundary primitive of ``f`` from base ``b`` with jumps ``[(s_i, m_i), ...]``.

    The jumps must already be in counterclockwise order starting after ``b``;
    ties (equal positions) are allowed.
    """
    n = int(sum(int(m) for _, m in jumps))
    if n <= 0:
        raise ValueError("need at least one jump")
    total = f.total
    if abs(total - TWO_PI * n) > rtol * max(1.0, abs(total)):
        raise ValueError(f"circulation mismatch: integral of f is {total}, expected {TWO_PI * n}")
    L = domain.length
    offs = [float(np.mod(sj - base, L)) for sj, _ in jumps]
    tol = 1e-12 * L
    if any(o <= tol or o >= L - tol for o in offs):
        raise ValueError("base point must differ from every jump point")
    if any(b < a - tol for a, b in zip(offs, offs[1:])):
        raise ValueError("jump points are not in counterclockwise order from the base")
    own = tuple(-1 for _ in jumps) if owners is None else tuple(int(o) for o in owners)
    return BoundaryDatum(strain=f, base=float(base), jumps=tuple((float(sj), int(m)) for sj, m in jumps),
                         owners=own, n=n)


# ---------------------------------------------------------------------------
# Cuts tied to a configuration
# ---------------------------------------------------------------------------


def default_anchor(domain: DomainSpec) -> np.ndarray:
    """Fixed exterior point a* used to draw the cuts."""
    c = domain.center
    return c + 2.0 * domain.diameter * np.array([math.cos(3.0), math.sin(3.0)])


def cut_exits(domain: DomainSpec, config: DislocationConfig, anchor=None) -> np.ndarray:
    """Arclength of the jump point of each configuration point.

    Interior points cut toward the exterior anchor; boundary points jump at
    themselves (their cut runs along the outward normal, outside the domain).
    """
    anchor = default_anchor(domain) if anchor is None else np.asarray(anchor, dtype=float)
    if domain.contains(anchor, closed=True)[0]:
        raise ValueError("anchor must lie outside the closed domain")
    exits = np.empty(config.ell)
    for i, (p, w) in enumerate(zip(config.points, config.omega)):
        if w == 2:
            exits[i] = domain.project(p)[0][0]
        else:
            exits[i] = domain.exit_parameter(p, anchor - p)
    return exits


def datum_for_config(domain: DomainSpec, f: StrainDatum, config: DislocationConfig,
                     anchor=None, exits=None) -> BoundaryDatum:
    """Boundary primitive whose jumps sit where the configuration's cuts leave the domain."""
    exits = cut_exits(domain, config, anchor) if exits is None else np.asarray(exits, dtype=float)
    L = domain.length
    srt = np.sort(np.mod(exits, L))
    gaps = np.diff(np.append(srt, srt[0] + L))
    k = int(np.argmax(gaps))
    base = float(np.mod(srt[k] + gaps[k] / 2.0, L))
    order = sorted(range(config.ell), key=lambda i: np.mod(exits[i] - base, L))
    jumps = [(float(exits[i]), int(config.multiplicities[i])) for i in order]
    return build_primitive(domain, f, base, jumps, owners=order)
