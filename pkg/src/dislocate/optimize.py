"""Configuration search, n-gon sweeps and the coarsening procedure."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize as _scipy_minimize
from scipy.optimize import minimize_scalar
from scipy.stats import qmc

from .energy import limit_energy
from .geometry import TWO_PI, DislocationConfig, DomainSpec, StrainDatum, constant_strain, make_config

MERGE, PROJECT, RELABEL = "MergeMidpoint", "ProjectToBoundary", "Relabel"


def thread_count() -> int:
    try:
        cap = int(os.environ.get("DISLOCATE_THREADS", "0"))
    except ValueError:
        cap = 0
    avail = os.cpu_count() or 1
    return max(1, min(cap, avail) if cap > 0 else avail)


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map, threaded up to DISLOCATE_THREADS workers."""
    workers = thread_count()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# coarsening
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoarsenStep:
    action: str
    s_hat: float
    eta: float
    points: np.ndarray
    multiplicities: np.ndarray


@dataclass
class CoarsenTrace:
    iterations: list
    final_points: np.ndarray
    final_multiplicities: np.ndarray
    final_radius: float
    initial_radius: float
    s_bar: float
    clusters: list
    final_config: Optional[DislocationConfig] = None

    def log_lines(self) -> list:
        out = [f"start eta={self.initial_radius!r} s_bar={self.s_bar!r} clusters={len(self.clusters)}"]
        for k, it in enumerate(self.iterations, start=1):
            pts = ";".join(f"{float(p[0])!r},{float(p[1])!r}x{int(m)}" for p, m in zip(it.points, it.multiplicities))
            out.append(f"step {k} {it.action} s_hat={it.s_hat!r} eta={it.eta!r} points={pts}")
        pts = ";".join(f"{float(p[0])!r},{float(p[1])!r}x{int(m)}" for p, m in zip(self.final_points, self.final_multiplicities))
        out.append(f"stop eta={self.final_radius!r} points={pts}")
        return out


def _single_linkage(points: np.ndarray, threshold: float) -> list:
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if math.hypot(*(points[i] - points[j])) <= threshold:
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: min(g))


class _Cluster:
    """Points of one cluster with multiplicities and an on-boundary flag per point.

    The flag is set when a point is projected, rather than re-derived from the
    geometry, because sampled boundaries only locate projected points to ~1e-11.
    """

    def __init__(self, pts, mult, boundary: bool, on):
        self.pts = [np.asarray(p, dtype=float) for p in pts]
        self.mult = [int(m) for m in mult]
        self.on = [bool(b) for b in on]
        self.boundary = boundary
        self._fold()

    def _fold(self):
        pts, mult, on = [], [], []
        for p, m, b in zip(self.pts, self.mult, self.on):
            for k, q in enumerate(pts):
                if p[0] == q[0] and p[1] == q[1]:
                    mult[k] += m
                    on[k] = on[k] or b
                    break
            else:
                pts.append(p)
                mult.append(m)
                on.append(b)
        order = sorted(range(len(pts)), key=lambda k: (pts[k][0], pts[k][1]))
        self.pts = [pts[k] for k in order]
        self.mult = [mult[k] for k in order]
        self.on = [on[k] for k in order]


def _s_values(cl: _Cluster, domain: DomainSpec):
    """``(s, kind, partner)`` for each distinct point of the cluster."""
    pts = cl.pts
    if len(pts) == 1:
        if cl.boundary:
            d = 0.0 if cl.on[0] else float(domain.distance(pts[0][None])[0])
            return [(d, "d", None)]
        return [(0.0, None, None)]
    out = []
    for j, p in enumerate(pts):
        best, partner = math.inf, None
        for k, q in enumerate(pts):
            if k != j:
                h = 0.5 * math.hypot(*(p - q))
                if h < best:
                    best, partner = h, k
        kind = "half"
        if not cl.on[j]:
            d = float(domain.distance(p[None])[0])
            if d < best:
                best, kind, partner = d, "d", None
        out.append((best, kind, partner))
    return out


def coarsen(config, eps: float, domain: DomainSpec, clusters: Optional[Sequence[Sequence[int]]] = None,
            boundary_clusters: Optional[Sequence[bool]] = None) -> CoarsenTrace:
    """Merge-or-project iteration producing disjoint cores of a larger radius.

    Points are grouped by single-linkage at distance ``2*eps`` unless explicit
    ``clusters`` (lists of point indices) are given; a cluster counts as
    converging to the boundary when one of its points lies within ``eps`` of it.
    """
    if eps <= 0:
        raise ValueError("core radius must be positive")
    if isinstance(config, DislocationConfig):
        pts, mult = config.points, config.multiplicities
    else:
        pts, mult = np.asarray(config, dtype=float).reshape(-1, 2), np.ones(len(config), dtype=int)
    pts = np.asarray(pts, dtype=float)
    n = int(np.sum(mult))
    groups = _single_linkage(pts, 2 * eps) if clusters is None else [list(g) for g in clusters]
    if boundary_clusters is None:
        dist = domain.distance(pts)
        boundary_clusters = [bool(np.any(dist[g] <= eps)) for g in groups]
    on = domain.on_boundary(pts)
    cls = [_Cluster(pts[g], np.asarray(mult)[g], b, on[g]) for g, b in zip(groups, boundary_clusters)]

    s_bar = max(s for cl in cls for s, _, _ in _s_values(cl, domain))
    eta = float(eps)
    steps = []
    for _ in range(n * n + 1):
        svals = [_s_values(cl, domain) for cl in cls]
        first = [min(sv, key=lambda t: t[0]) for sv in svals]
        positive = [f[0] for f in first if f[0] > 0]
        if not positive:
            break
        s_hat = min(positive)
        if s_hat > eta:
            eta = s_hat
            action = RELABEL
        else:
            merged = projected = False
            for cl, sv in zip(cls, svals):
                ties = [j for j, (s, _, _) in enumerate(sv) if s == s_hat]
                if not ties:
                    continue
                j = ties[0]  # clusters are kept lexicographically sorted
                s, kind, partner = sv[j]
                if kind == "half":
                    mid = 0.5 * (cl.pts[j] + cl.pts[partner])
                    m = cl.mult[j] + cl.mult[partner]
                    keep = [k for k in range(len(cl.pts)) if k not in (j, partner)]
                    cl.pts = [cl.pts[k] for k in keep] + [mid]
                    cl.mult = [cl.mult[k] for k in keep] + [m]
                    cl.on = [cl.on[k] for k in keep] + [bool(domain.on_boundary(mid[None])[0])]
                    merged = True
                else:
                    cl.pts[j] = domain.project(cl.pts[j][None])[1][0]
                    cl.on[j] = True
                    projected = True
                cl._fold()
            eta = eta + s_hat
            action = MERGE if merged else PROJECT
        snap_p = np.array([p for cl in cls for p in cl.pts])
        snap_m = np.array([m for cl in cls for m in cl.mult])
        steps.append(CoarsenStep(action, float(s_hat), float(eta), snap_p, snap_m))
    final_p = np.array([p for cl in cls for p in cl.pts])
    final_m = np.array([m for cl in cls for m in cl.mult])
    try:
        final_cfg = make_config(domain, final_p, final_m)
    except ValueError:
        final_cfg = None
    return CoarsenTrace(iterations=steps, final_points=final_p, final_multiplicities=final_m,
                        final_radius=eta, initial_radius=float(eps), s_bar=float(s_bar),
                        clusters=groups, final_config=final_cfg)


# ---------------------------------------------------------------------------
# n-gon sweep and multistart search
# ---------------------------------------------------------------------------


@dataclass
class OptimizationResult:
    points: np.ndarray
    energy: float
    evaluations: int
    converged: bool
    history: list = field(default_factory=list)
    radius: Optional[float] = None
    message: str = ""

    @property
    def dist_to_boundary(self) -> Optional[float]:
        return None if self.radius is None else 1.0 - self.radius


def ngon_points(n: int, radius: float, center=(0.0, 0.0), phase: float = 0.0) -> np.ndarray:
    t = phase + TWO_PI * np.arange(n) / n
    return np.asarray(center) + radius * np.stack([np.cos(t), np.sin(t)], axis=-1)


def default_radii(count: int = 160) -> np.ndarray:
    """Radius grid graded toward the boundary, where large-n optima sit."""
    return np.concatenate([[0.0], 1.0 - np.geomspace(0.999, 5e-4, count)])


def ngon_sweep(domain: DomainSpec, strain: Optional[StrainDatum], n: int, radii=None,
               tol: float = 1e-4) -> OptimizationResult:
    """Energy of regular n-gons centered in the disk, grid scan then golden-section refinement."""
    if not domain.is_disk:
        raise ValueError("the n-gon sweep needs a disk")
    strain = constant_strain(domain, n) if strain is None else strain
    R = domain.radius
    radii = default_radii() if radii is None else np.asarray(radii, dtype=float)
    evals = 0

    def energy(r):
        nonlocal evals
        evals += 1
        if r < 0 or r >= 1:
            return math.inf
        if n > 1 and r == 0:
            return math.inf
        return limit_energy(domain, strain, ngon_points(n, r * R, domain.center))

    vals = np.array([energy(r) for r in radii])
    history = [{"radius": float(r), "energy": float(v)} for r, v in zip(radii, vals)]
    k = int(np.argmin(vals))
    best_r, best_e = float(radii[k]), float(vals[k])
    converged = True
    if 0 < k < len(radii) - 1:
        res = minimize_scalar(energy, bracket=(radii[k - 1], radii[k], radii[k + 1]), method="golden",
                              tol=tol, options={"xtol": tol})
        if res.fun <= best_e:
            best_r, best_e = float(res.x), float(res.fun)
        converged = bool(res.success)
    return OptimizationResult(points=ngon_points(n, best_r * R, domain.center), energy=best_e, evaluations=evals,
                              converged=converged, history=history, radius=best_r)


def _start_points(domain: DomainSpec, n: int, starts: int, seed: int, margin: float = 0.1) -> np.ndarray:
    """Low-discrepancy starts inside the set of points at distance >= margin from the boundary."""
    sampler = qmc.Halton(d=2 * n, scramble=True, seed=seed)
    u = sampler.random(starts).reshape(starts, n, 2)
    if domain.is_disk:
        rho = (domain.radius - margin) * np.sqrt(u[..., 0])
        ang = TWO_PI * u[..., 1]
        return domain.center + np.stack([rho * np.cos(ang), rho * np.sin(ang)], axis=-1)
    lo = domain.center - 0.5 * domain.diameter
    out = lo + domain.diameter * u
    c = domain.center
    for s in range(starts):
        for i in range(n):
            p = out[s, i]
            for _ in range(60):
                if domain.contains(p[None], closed=False)[0] and domain.distance(p[None])[0] >= margin:
                    break
                p = c + 0.8 * (p - c)
            out[s, i] = p
    return out


def minimize(domain: DomainSpec, strain: Optional[StrainDatum], n: int, starts: int = 8, seed: int = 0,
             floor: float = 1e-4, maxiter: Optional[int] = None, xatol: float = 1e-6,
             fatol: float = 1e-10) -> OptimizationResult:
    """Multistart Nelder-Mead over all coordinates; +inf below the separation floor."""
    if n < 1:
        raise ValueError("need n >= 1")
    strain = constant_strain(domain, n) if strain is None else strain
    x0s = _start_points(domain, n, starts, seed)

    def objective(x):
        p = x.reshape(n, 2)
        if np.any(~domain.contains(p, closed=False)):
            return math.inf
        dist = domain.distance(p)
        if np.any(dist < floor):
            return math.inf
        if n > 1:
            diff = p[:, None, :] - p[None, :, :]
            sep = np.hypot(diff[..., 0], diff[..., 1])
            np.fill_diagonal(sep, np.inf)
            if np.any(0.5 * sep < floor):
                return math.inf
        return limit_energy(domain, strain, p)

    def run(x0):
        x0 = x0.ravel()
        simplex = np.vstack([x0] + [x0 + 0.05 * e for e in np.eye(len(x0))])
        res = _scipy_minimize(objective, x0, method="Nelder-Mead",
                              options={"initial_simplex": simplex, "xatol": xatol, "fatol": fatol,
                                       "maxiter": maxiter or 400 * len(x0), "maxfev": 800 * len(x0)})
        return {"start": x0.reshape(n, 2), "points": res.x.reshape(n, 2), "energy": float(res.fun),
                "evals": int(res.nfev), "converged": bool(res.success)}

    history = parallel_map(run, list(x0s))
    evals = sum(h["evals"] for h in history)
    finite = [h for h in history if math.isfinite(h["energy"])]
    if not finite:
        return OptimizationResult(points=np.full((n, 2), np.nan), energy=math.inf, evaluations=evals,
                                  converged=False, history=history, message="all starts diverged")
    best = min(finite, key=lambda h: h["energy"])
    pts = best["points"]
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    return OptimizationResult(points=pts, energy=best["energy"], evaluations=evals,
                              converged=best["converged"], history=history)


# ---------------------------------------------------------------------------
# asymptotics of the n-gon optimum
# ---------------------------------------------------------------------------


ASYMPTOTICS_COLUMNS = ("n", "radius", "energy", "dist_to_boundary", "evals")


def _slope(x, y) -> float:
    A = np.vstack([np.log(x), np.ones(len(x))]).T
    return float(np.linalg.lstsq(A, np.log(y), rcond=None)[0][0])


def asymptotics_study(domain: DomainSpec, n_range: Sequence[int], out=None,
                      fit_range: Optional[tuple] = None) -> dict:
    """n-gon optimum for each n with the n-fold constant datum, and log-log slopes.

    The fit uses ``fit_range`` (inclusive) when given, else the upper half of ``n_range``.
    """
    ns = [int(n) for n in n_range]
    results = parallel_map(lambda n: ngon_sweep(domain, constant_strain(domain, n), n), ns)
    rows = []
    for n, res in zip(ns, results):
        dist = domain.radius * (1.0 - res.radius)
        rows.append({"n": n, "radius": res.radius * domain.radius, "energy": res.energy,
                     "dist_to_boundary": dist, "evals": res.evaluations})
    if fit_range is None:
        upper = sorted(ns)[len(ns) // 2:]
        lo, hi = upper[0], upper[-1]
    else:
        lo, hi = fit_range
    sel = [r for r in rows if lo <= r["n"] <= hi and r["energy"] != 0]
    x = np.array([r["n"] for r in sel], dtype=float)
    dist_slope = _slope(x, np.array([r["dist_to_boundary"] for r in sel])) if len(sel) > 1 else math.nan
    energy_slope = _slope(x, np.abs([r["energy"] for r in sel])) if len(sel) > 1 else math.nan
    if out is not None:
        write_asymptotics_csv(out, rows)
    return {"rows": rows, "dist_slope": dist_slope, "energy_slope": energy_slope, "fit_range": (lo, hi)}


def write_asymptotics_csv(path, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(ASYMPTOTICS_COLUMNS) + "\n")
        for r in rows:
            fh.write(f"{r['n']},{float(r['radius'])!r},{float(r['energy'])!r},"
                     f"{float(r['dist_to_boundary'])!r},{r['evals']}\n")


# ---------------------------------------------------------------------------
# energy landscapes
# ---------------------------------------------------------------------------


def landscape(domain: DomainSpec, strain: StrainDatum, radial: int = 64, angular: int = 128):
    """Single-dislocation energy on the polar grid r_i = i R / radial, t_j = 2 pi j / angular."""
    if not domain.is_disk:
        raise ValueError("landscapes use a polar grid on a disk")
    if radial < 2 or angular < 2:
        raise ValueError("grid resolution must be at least 2 in each direction")
    radii = domain.radius * np.arange(radial) / radial
    angles = TWO_PI * np.arange(angular) / angular
    cells = [(i, j) for i in range(radial) for j in range(angular)]

    def value(cell):
        i, j = cell
        p = domain.center + radii[i] * np.array([math.cos(angles[j]), math.sin(angles[j])])
        return limit_energy(domain, strain, p[None])

    vals = np.array(parallel_map(value, cells)).reshape(radial, angular)
    return radii, angles, vals
