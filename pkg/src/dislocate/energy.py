"""Renormalized and core-radius dislocation energies.

Limit mode evaluates

    F(a) = sum pi log d_i + 1/2 int |grad v|^2 + sum 1/2 int_{Omega_{d_i}} |K_i|^2
           + sum int_{Omega_{d_i}} grad v . K_i + sum_{i<j} int K_i . K_j

with ``v`` harmonic and equal to ``g - sum theta_i`` on the boundary.  On a
disk every term has an exact series; on other domains the terms are reduced
to boundary integrals.  Both are checked against direct area quadrature when
``crosscheck=True``.

Core-radius mode solves the perforated problem and integrates over the
boundary of the perforated domain, since every field involved is harmonic
there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .fields import (DEFAULT_QUAD, QuadratureSpec, k_dot_integral, k_energy_in_domain, k_field,
                     log_gradient, log_potential, polar_integral, theta_values)
from .geometry import (TWO_PI, BoundaryDatum, DislocationConfig, DomainSpec, StrainDatum, cut_exits,
                       datum_for_config, make_config)
from .harmonic import (FourierDisk, HarmonicSolution, MFSField, check_cores, fourier_from_derivative,
                       solve_dirichlet, solve_mixed_perforated, solve_neumann)

LIMIT, CORE = "limit", "core_radius"
CSV_COLUMNS = ("mode", "epsilon", "n", "total", "log_term", "regular_energy", "k_self", "cross", "pair",
               "error_estimate")


@dataclass(frozen=True)
class EnergyReport:
    mode: str
    epsilon: Optional[float]
    n: int
    total: float
    log_term: float
    regular_energy: float
    k_self: float
    cross: float
    pair: float
    error_estimate: float = 0.0
    note: str = ""
    details: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def build(cls, mode, epsilon, n, log_term, regular_energy, k_self, cross, pair, error_estimate=0.0,
              details=None) -> "EnergyReport":
        total = log_term + regular_energy + k_self + cross + pair
        return cls(mode, epsilon, n, float(total), float(log_term), float(regular_energy), float(k_self),
                   float(cross), float(pair), float(abs(error_estimate)), details=details or {})

    @classmethod
    def infinite(cls, mode, epsilon, n, note) -> "EnergyReport":
        nan = float("nan")
        return cls(mode, epsilon, n, math.inf, nan, nan, nan, nan, nan, 0.0, note=note)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.total)

    def csv_row(self) -> str:
        eps = "" if self.epsilon is None else repr(float(self.epsilon))
        vals = [self.total, self.log_term, self.regular_energy, self.k_self, self.cross, self.pair,
                self.error_estimate]
        return ",".join([self.mode, eps, str(self.n)] + [repr(float(v)) for v in vals])


def csv_header() -> str:
    return ",".join(CSV_COLUMNS)


# ---------------------------------------------------------------------------
# the composite boundary trace g - sum m omega theta
# ---------------------------------------------------------------------------


def _jump_owners(domain: DomainSpec, datum: BoundaryDatum, config: DislocationConfig) -> list:
    if all(o >= 0 for o in datum.owners):
        return list(datum.owners)
    # pair jumps with points in the order of their default cuts
    L = domain.length
    exits = cut_exits(domain, config)
    order = sorted(range(config.ell), key=lambda i: np.mod(exits[i] - datum.base, L))
    if [int(config.multiplicities[i]) for i in order] != [m for _, m in datum.jumps]:
        raise ValueError("cannot match jump points to configuration points")
    return order


def angle_trace(domain: DomainSpec, a, omega: int, jump: float, base: float) -> Callable:
    """``theta_a`` along the boundary, cut along the ray from ``a`` through the jump point.

    Boundary points are cut along the outward normal.  The branch follows the
    convention of the primitive: the 2*pi drop happens just after ``jump``
    when walking counterclockwise from ``base``.
    """
    L = domain.length
    a = np.asarray(a, dtype=float)
    if omega == 2:
        nu = domain.normal(np.array([jump]))[0]
        ang = math.atan2(nu[1], nu[0])
    else:
        b = domain.point(np.array([jump]))[0]
        ang = math.atan2(b[1] - a[1], b[0] - a[0])
    joff = float(np.mod(jump - base, L))

    def theta(s):
        s = np.asarray(s, dtype=float)
        th = theta_values(a, ang, domain.point(s))
        off = np.mod(s - base, L)
        # nodes sitting on the cut take the branch matching the jump of g
        near = (th - ang < 1e-9) | (ang + TWO_PI - th < 1e-9)
        return np.where(near, np.where(off > joff, ang, ang + TWO_PI), th)

    return theta


def composite_trace(domain: DomainSpec, datum: BoundaryDatum, config: DislocationConfig,
                    check: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """``g - sum m_i omega_i theta_i`` on the boundary, as a function of arclength.

    Each angle is cut along the ray from its point through its jump point
    (along the outward normal for boundary points), so the jumps cancel.
    """
    if datum.n != config.n:
        raise ValueError(f"datum carries {datum.n} dislocations, configuration has {config.n}")
    owners = _jump_owners(domain, datum, config)
    pieces = [(int(m) * int(config.omega[i]),
               angle_trace(domain, config.points[i], int(config.omega[i]), sj, datum.base))
              for (sj, m), i in zip(datum.jumps, owners)]

    def h(s):
        out = datum.g(s)
        for w, theta in pieces:
            out = out - w * theta(s)
        return out

    if check:
        _check_continuity(h, [sj for sj, _ in datum.jumps], domain.length)
    return h


def share_trace(domain: DomainSpec, datum: BoundaryDatum, config: DislocationConfig, i: int) -> Callable:
    """``g_{b_i} - omega_i theta_i``: the outer data of point ``i`` alone."""
    owners = _jump_owners(domain, datum, config)
    k = owners.index(i)
    share = datum.share(k)
    w = int(config.omega[i])
    theta = angle_trace(domain, config.points[i], w, datum.jumps[k][0], datum.base)

    def h(s):
        return share(s) - w * theta(s)

    _check_continuity(h, [datum.jumps[k][0]], domain.length)
    return h


def _check_continuity(h, jumps, L) -> None:
    dl = 1e-10 * L
    for sj in jumps:
        gap = h(np.array([sj + dl]))[0] - h(np.array([sj - dl]))[0]
        if abs(gap) > 1e-8 * max(1.0, L):
            raise ValueError(f"composite trace jumps by {gap:.3e} at a jump point")


# ---------------------------------------------------------------------------
# limit energy on the disk: exact series
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _strain_coefficients(strain: StrainDatum, radius: float, K: int) -> np.ndarray:
    """Coefficients of dg/dt (t the polar angle) for k = 1..K."""
    k = np.arange(1, K + 1)
    if strain.fourier is not None:
        return radius * np.asarray(strain.fourier(k), dtype=complex)
    N = max(1 << 16, 4 * K)
    t = np.arange(N) * TWO_PI / N
    c = np.fft.fft(radius * strain.value(radius * t)) / N
    out = np.zeros(K, dtype=complex)
    m = min(K, N // 2 - 1)
    out[:m] = c[1:m + 1]
    return out


def _is_flat(strain: StrainDatum) -> bool:
    if strain.fourier is None:
        return False
    return bool(np.all(np.asarray(strain.fourier(np.arange(1, 65))) == 0))


def series_length(strain: StrainDatum, rmax: float) -> int:
    K = 64 if rmax <= 0 else int(math.ceil(60.0 / -math.log(rmax)))
    if not _is_flat(strain):
        K = max(K, 1 << 14)
    return int(min(max(K, 64), 1 << 20))


def _conj_power_matrix(z: np.ndarray, K: int) -> np.ndarray:
    """Rows conj(z_i)^k for k = 1..K (zero rows for z_i = 0)."""
    out = np.zeros((len(z), K), dtype=complex)
    k = np.arange(1, K + 1)
    nz = z != 0
    if np.any(nz):
        out[nz] = np.exp(np.outer(np.log(np.conj(z[nz])), k))
    return out


def _disk_series_terms(domain: DomainSpec, strain: StrainDatum, config: DislocationConfig, K: int) -> dict:
    R = domain.radius
    z = (config.points[:, 0] - domain.center[0] + 1j * (config.points[:, 1] - domain.center[1])) / R
    P = _conj_power_matrix(z, K)
    hd = _strain_coefficients(strain, float(R), K) - 0.5 * P.sum(axis=0)
    k = np.arange(1, K + 1)
    reg_terms = TWO_PI * np.abs(hd) ** 2 / k
    reg = float(np.sum(reg_terms))
    d = config.d
    r2 = np.abs(z) ** 2
    k_self = float(np.sum(0.5 * (math.pi * np.log(1 - r2) - TWO_PI * np.log(d / R))))
    terms = np.conj(P) * (hd / k)[None, :]
    cross = -TWO_PI * float(np.sum(terms).real)
    cross_half = -TWO_PI * float(np.sum(terms[:, : K // 2]).real)
    pair = 0.0
    if len(z) > 1:
        iu, ju = np.triu_indices(len(z), 1)
        pair = float(np.sum(math.pi * np.log(np.abs(1 - np.conj(z[iu]) * z[ju]))
                            - TWO_PI * np.log(np.abs(z[iu] - z[ju]))))
    err = float(np.sum(reg_terms[K // 2:])) + abs(cross - cross_half)
    return dict(log_term=float(math.pi * np.sum(np.log(d))), regular_energy=reg, k_self=k_self,
                cross=cross, pair=pair, error=err, hcoef=hd)


# ---------------------------------------------------------------------------
# limit energy on any domain: boundary reduction
# ---------------------------------------------------------------------------


def _normal_log(a, x, nu) -> np.ndarray:
    return np.sum(log_gradient(a, x) * nu, axis=1)


def _k_normal(a, x, nu) -> np.ndarray:
    return np.sum(k_field(a, x) * nu, axis=1)


def _boundary_terms(domain: DomainSpec, datum: BoundaryDatum, config: DislocationConfig, nodes: int = 4096,
                    tol: float = 1e-8) -> dict:
    h = composite_trace(domain, datum, config)
    v = solve_dirichlet(domain, h, tol=tol)
    s, x, nu, w = domain.nodes(nodes)
    hv = h(s)
    reg = 0.5 * float(np.sum(w * hv * np.sum(v.gradient(x) * nu, axis=1)))
    pts = config.points
    k_self = cross = pair = 0.0
    for i, a in enumerate(pts):
        k_self += 0.5 * (float(np.sum(w * log_potential(a, x) * _normal_log(a, x, nu))) - TWO_PI * math.log(config.d[i]))
        cross += float(np.sum(w * hv * _k_normal(a, x, nu)))
        for j in range(i + 1, len(pts)):
            b = pts[j]
            ij = float(np.sum(w * log_potential(a, x) * _normal_log(b, x, nu))) - TWO_PI * float(log_potential(a, b[None])[0])
            ji = float(np.sum(w * log_potential(b, x) * _normal_log(a, x, nu))) - TWO_PI * float(log_potential(b, a[None])[0])
            pair += 0.5 * (ij + ji)
    return dict(log_term=float(math.pi * np.sum(np.log(config.d))), regular_energy=reg, k_self=k_self,
                cross=cross, pair=pair, error=float(v.residual), solution=v)


def _quadrature_terms(domain: DomainSpec, config: DislocationConfig, v: HarmonicSolution,
                      quad: QuadratureSpec) -> dict:
    """Area quadrature of the cross, self and pair terms (independent of the boundary reduction)."""
    pts = config.points
    k_self = cross = pair = 0.0
    for i, a in enumerate(pts):
        k_self += 0.5 * k_energy_in_domain(domain, a, float(config.d[i]), quad=quad)

        def f(x, rho, u, a=a):
            return rho * np.sum(k_field(a, x) * v.gradient(x), axis=1)

        cross += polar_integral(domain, a, f, quad)
        for j in range(i + 1, len(pts)):
            pair += k_dot_integral(a, pts[j], domain, quad)
    return dict(k_self=k_self, cross=cross, pair=pair)


def _limit_guard(domain: DomainSpec, config: DislocationConfig) -> Optional[str]:
    if np.any(config.multiplicities > 1):
        return "coincident dislocations"
    if np.any(config.omega == 2) or np.any(config.d <= 0):
        return "dislocation on the boundary"
    return None


def _canonical(config: DislocationConfig) -> DislocationConfig:
    """Same configuration with points in lexicographic order, so sums do not depend on input order."""
    order = np.lexsort((config.points[:, 1], config.points[:, 0]))
    return DislocationConfig(points=config.points[order], multiplicities=config.multiplicities[order],
                             d=config.d[order], omega=config.omega[order])


def renormalized_energy(domain: DomainSpec, datum, config: DislocationConfig,
                        quad: QuadratureSpec = DEFAULT_QUAD, method: str = "auto",
                        crosscheck: bool = False) -> EnergyReport:
    """Limit energy with its term breakdown.

    ``datum`` is a BoundaryDatum, or a StrainDatum from which the cuts are
    built for this configuration.  ``method`` is "series" (disk only),
    "boundary" or "auto".
    """
    why = _limit_guard(domain, config)
    if why:
        return EnergyReport.infinite(LIMIT, None, config.n, why)
    if not isinstance(datum, BoundaryDatum):
        config = _canonical(config)
    strain = datum.strain if isinstance(datum, BoundaryDatum) else datum
    if method == "auto":
        method = "series" if domain.is_disk else "boundary"
    if method == "series":
        if not domain.is_disk:
            raise ValueError("series evaluation needs a disk")
        if abs(strain.total - TWO_PI * config.n) > 1e-8 * max(1.0, strain.total):
            raise ValueError("circulation of the datum does not match the number of dislocations")
        rmax = float(np.max(np.hypot(*(config.points - domain.center).T))) / domain.radius
        K = series_length(strain, rmax)
        t = _disk_series_terms(domain, strain, config, K)
        v = None
    else:
        bd = datum if isinstance(datum, BoundaryDatum) else datum_for_config(domain, strain, config)
        t = _boundary_terms(domain, bd, config)
        v = t["solution"]
    err = t["error"]
    details = {"method": method}
    if crosscheck:
        if v is None:
            v = fourier_from_derivative(domain.radius, t["hcoef"])
        q = _quadrature_terms(domain, config, v, quad)
        details.update({f"quadrature_{k}": q[k] for k in q})
        err = max(err, *(abs(q[k] - t[k]) for k in q))
    return EnergyReport.build(LIMIT, None, config.n, t["log_term"], t["regular_energy"], t["k_self"],
                              t["cross"], t["pair"], err, details)


def limit_energy(domain: DomainSpec, strain: StrainDatum, points) -> float:
    """Total limit energy for raw points; +inf for coincident or boundary points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if np.any(~domain.contains(pts, closed=False)):
        return math.inf
    if len(pts) > 1:
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist, np.inf)
        if np.any(dist == 0):
            return math.inf
    cfg = make_config(domain, pts)
    return renormalized_energy(domain, strain, cfg).total


# ---------------------------------------------------------------------------
# self and interaction energies (rotated form)
# ---------------------------------------------------------------------------


def _corrector(domain: DomainSpec, strain: StrainDatum, n: int, a) -> HarmonicSolution:
    def flux(s):
        x = domain.point(s)
        return strain.value(s) / n - _normal_log(a, x, domain.normal(s))

    return solve_neumann(domain, flux, tol=1e-7)


def _strain_of(datum) -> StrainDatum:
    return datum.strain if isinstance(datum, BoundaryDatum) else datum


def self_energy(domain: DomainSpec, datum, config: DislocationConfig, i: int,
                quad: QuadratureSpec = DEFAULT_QUAD, nodes: int = 4096, _cache=None) -> float:
    """Self energy of point ``i`` (its separation radius cancels out exactly)."""
    a = config.points[i]
    w = _cache[i] if _cache is not None else _corrector(domain, _strain_of(datum), config.n, a)
    s, x, nu, wt = domain.nodes(nodes)
    dphi = _normal_log(a, x, nu)
    wv = w.evaluate(x)
    dist = float(domain.distance(a[None])[0])
    d = dist
    phi_part = 0.5 * (float(np.sum(wt * log_potential(a, x) * dphi)) - TWO_PI * math.log(d))
    mixed = float(np.sum(wt * wv * dphi)) - TWO_PI * float(w.evaluate(a[None])[0])
    ww = 0.5 * float(np.sum(wt * wv * np.sum(w.gradient(x) * nu, axis=1)))
    return math.pi * math.log(dist) + phi_part + mixed + ww


def interaction_energy(domain: DomainSpec, datum, config: DislocationConfig, i: int, j: int,
                       quad: QuadratureSpec = DEFAULT_QUAD, nodes: int = 4096, _cache=None) -> float:
    if i == j:
        raise ValueError("interaction needs two different points")
    strain = _strain_of(datum)
    a, b = config.points[i], config.points[j]
    wi = _cache[i] if _cache is not None else _corrector(domain, strain, config.n, a)
    wj = _cache[j] if _cache is not None else _corrector(domain, strain, config.n, b)
    s, x, nu, wt = domain.nodes(nodes)

    def phiphi(p, q):
        return float(np.sum(wt * log_potential(p, x) * _normal_log(q, x, nu))) - TWO_PI * float(log_potential(p, q[None])[0])

    def phiw(p, wq):
        return float(np.sum(wt * wq.evaluate(x) * _normal_log(p, x, nu))) - TWO_PI * float(wq.evaluate(p[None])[0])

    def ww(u1, u2):
        return float(np.sum(wt * u1.evaluate(x) * np.sum(u2.gradient(x) * nu, axis=1)))

    return (0.5 * (phiphi(a, b) + phiphi(b, a)) + phiw(a, wj) + phiw(b, wi) + 0.5 * (ww(wi, wj) + ww(wj, wi)))


def self_interaction_total(domain: DomainSpec, datum, config: DislocationConfig) -> float:
    """Sum of self energies plus pairwise interactions over i < j."""
    if _limit_guard(domain, config):
        return math.inf
    strain = _strain_of(datum)
    cache = [_corrector(domain, strain, config.n, a) for a in config.points]
    total = sum(self_energy(domain, datum, config, i, _cache=cache) for i in range(config.ell))
    for i in range(config.ell):
        for j in range(i + 1, config.ell):
            total += interaction_energy(domain, datum, config, i, j, _cache=cache)
    return total


# ---------------------------------------------------------------------------
# core-radius energies
# ---------------------------------------------------------------------------


@dataclass
class _Piece:
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray


def _pieces(domain: DomainSpec, centers: np.ndarray, eps: float, n_outer: int, n_core: int) -> list:
    s, p, nu, w = domain.nodes(n_outer)
    out = [_Piece(p, nu, w)]
    t = (np.arange(n_core) + 0.5) * TWO_PI / n_core
    rad = np.stack([np.cos(t), np.sin(t)], axis=-1)
    for c in centers:
        out.append(_Piece(np.asarray(c) + eps * rad, -rad, np.full(n_core, TWO_PI * eps / n_core)))
    return out


class _Field:
    """``sum_k m_k K_{a_k} + grad u`` on a perforated domain."""

    def __init__(self, centers, mult, u: HarmonicSolution):
        self.centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        self.mult = np.asarray(mult, dtype=float)
        self.u = u


def _phi_form(a, b, pieces) -> float:
    """Integral of grad phi_a . grad phi_b over the region bounded by ``pieces``."""
    return sum(float(np.sum(pc.weights * log_potential(a, pc.points) * _normal_log(b, pc.points, pc.normals)))
               for pc in pieces)


def _bilinear(F1: _Field, F2: _Field, pieces) -> float:
    """Symmetrized boundary form of the integral of F1 . F2."""
    total = 0.0
    for a, m1 in zip(F1.centers, F1.mult):
        for b, m2 in zip(F2.centers, F2.mult):
            total += m1 * m2 * 0.5 * (_phi_form(a, b, pieces) + _phi_form(b, a, pieces))
    for pc in pieces:
        x, nu, w = pc.points, pc.normals, pc.weights
        u1, u2 = F1.u.evaluate(x), F2.u.evaluate(x)
        g1 = np.sum(F1.u.gradient(x) * nu, axis=1)
        g2 = np.sum(F2.u.gradient(x) * nu, axis=1)
        total += 0.5 * float(np.sum(w * (u1 * g2 + u2 * g1)))
        for a, m in zip(F1.centers, F1.mult):
            total += m * float(np.sum(w * u2 * _k_normal(a, x, nu)))
        for b, m in zip(F2.centers, F2.mult):
            total += m * float(np.sum(w * u1 * _k_normal(b, x, nu)))
    return total


def _core_guard(config: DislocationConfig, eps: float, allow_large: bool) -> None:
    if np.any(config.omega == 2):
        raise ValueError("core-radius energies need interior points; coarsen the configuration first")
    if not allow_large and eps >= 0.5 * float(np.min(config.d)):
        raise ValueError(f"core radius {eps} not below half the smallest separation radius; "
                         "pass allow_large=True to override")


def _neumann_of(centers, mult) -> Callable:
    def neumann(j, x, rad):
        out = np.zeros(len(x))
        for a, m in zip(centers, mult):
            if np.allclose(a, centers[j]):
                continue  # K_a is tangent to its own core
            out -= m * np.sum(k_field(a, x) * rad, axis=1)
        return out

    return neumann


def _resolve_datum(domain, datum, config) -> BoundaryDatum:
    if isinstance(datum, BoundaryDatum):
        return datum
    return datum_for_config(domain, datum, config)


def perforated_solution(domain: DomainSpec, datum, config: DislocationConfig, eps: float) -> MFSField:
    """The regular part of the displacement on the perforated domain."""
    bd = _resolve_datum(domain, datum, config)
    h = composite_trace(domain, bd, config)
    return solve_mixed_perforated(domain, config, eps, h, _neumann_of(config.points, config.multiplicities))


def core_energy(domain: DomainSpec, datum, config: DislocationConfig, eps: float,
                quad: QuadratureSpec = DEFAULT_QUAD, allow_large: bool = False,
                n_outer: int = 2048, n_core: int = 256) -> EnergyReport:
    """Core-radius energy, reported as its renormalization with the full energy in ``details``."""
    _core_guard(config, eps, allow_large)
    sol = perforated_solution(domain, datum, config, eps)
    centers, mult = config.points, config.multiplicities.astype(float)

    def terms(no, nc):
        pcs = _pieces(domain, centers, eps, no, nc)
        reg = cross = 0.0
        for pc in pcs:
            x, nu, w = pc.points, pc.normals, pc.weights
            u = sol.evaluate(x)
            reg += 0.5 * float(np.sum(w * u * np.sum(sol.gradient(x) * nu, axis=1)))
            for a, m in zip(centers, mult):
                cross += m * float(np.sum(w * u * _k_normal(a, x, nu)))
        ks = sum(m * m * 0.5 * _phi_form(a, a, pcs) for a, m in zip(centers, mult))
        pr = 0.0
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                pr += mult[i] * mult[j] * 0.5 * (_phi_form(centers[i], centers[j], pcs)
                                                  + _phi_form(centers[j], centers[i], pcs))
        return reg, ks, cross, pr

    fine = terms(n_outer, n_core)
    coarse = terms(n_outer // 2, n_core // 2)
    log_term = -math.pi * config.n * abs(math.log(eps))
    err = abs(sum(fine) - sum(coarse)) + sol.residual * (domain.length + TWO_PI * eps * config.ell)
    rep = EnergyReport.build(CORE, eps, config.n, log_term, *fine, error_estimate=err,
                             details={"residual": sol.residual})
    rep.details["core_energy"] = float(sum(fine))
    return rep


def full_core_energy(domain: DomainSpec, datum, config: DislocationConfig, eps: float, **kw) -> float:
    """The unrenormalized core-radius energy."""
    return core_energy(domain, datum, config, eps, **kw).details["core_energy"]


# ---------------------------------------------------------------------------
# remainder and interaction at finite core radius
# ---------------------------------------------------------------------------


def _distinct_only(config: DislocationConfig) -> None:
    if np.any(config.multiplicities != 1):
        raise ValueError("remainder and interaction terms are defined for distinct points")


def _share_solutions(domain, datum, config, eps):
    """Outer data ``g_{b_i} - theta_i`` for each point."""
    bd = _resolve_datum(domain, datum, config)
    return [(share_trace(domain, bd, config, i), None) for i in range(config.ell)]


def _finite_pieces(domain, datum, config, eps, n_outer=2048, n_core=256):
    _distinct_only(config)
    _core_guard(config, eps, allow_large=False)
    data = _share_solutions(domain, datum, config, eps)
    fields = []
    for i, (dir_i, _) in enumerate(data):
        a = config.points[i]

        def neu(j, x, rad, a=a):
            return -np.sum(k_field(a, x) * rad, axis=1) if not np.allclose(config.points[j], a) else np.zeros(len(x))

        u = solve_mixed_perforated(domain, config, eps, dir_i, neu)
        fields.append(_Field(a, [1.0], u))
    pcs = _pieces(domain, config.points, eps, n_outer, n_core)
    return data, fields, pcs


def single_core_energy(domain: DomainSpec, dirichlet: Callable, a, eps: float, n_outer=2048, n_core=256) -> float:
    """Renormalized energy of one dislocation at ``a`` with the given outer data."""
    sub = DislocationConfig(points=np.asarray(a, dtype=float).reshape(1, 2), multiplicities=np.ones(1, dtype=int),
                            d=np.array([float(domain.distance(np.asarray(a)[None])[0])]), omega=np.ones(1, dtype=int))
    u = solve_mixed_perforated(domain, sub, eps, dirichlet, lambda j, x, rad: np.zeros(len(x)))
    F = _Field(a, [1.0], u)
    return 0.5 * _bilinear(F, F, _pieces(domain, sub.points, eps, n_outer, n_core)) - math.pi * abs(math.log(eps))


def decomposition(domain: DomainSpec, datum, config: DislocationConfig, eps: float) -> dict:
    """Per-point renormalized energies, remainders and pairwise interactions at core radius ``eps``."""
    data, fields, pcs = _finite_pieces(domain, datum, config, eps)
    single = []
    rem = []
    for i, F in enumerate(fields):
        fi = single_core_energy(domain, data[i][0], config.points[i], eps)
        single.append(fi)
        whole = 0.5 * _bilinear(F, F, pcs)
        rem.append(whole - (fi + math.pi * abs(math.log(eps))))
    inter = {}
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            inter[(i, j)] = _bilinear(fields[i], fields[j], pcs)
    total = sum(single) + sum(rem) + sum(inter.values())
    return {"single": single, "remainder": rem, "interaction": inter, "total": total}


def remainder(domain: DomainSpec, datum, config: DislocationConfig, eps: float, i: int,
              quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    data, fields, pcs = _finite_pieces(domain, datum, config, eps)
    fi = single_core_energy(domain, data[i][0], config.points[i], eps)
    return 0.5 * _bilinear(fields[i], fields[i], pcs) - (fi + math.pi * abs(math.log(eps)))


def interaction_eps(domain: DomainSpec, datum, config: DislocationConfig, eps: float, i: int, j: int,
                    quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    if i == j:
        raise ValueError("interaction needs two different points")
    _, fields, pcs = _finite_pieces(domain, datum, config, eps)
    return _bilinear(fields[i], fields[j], pcs)


def limit_interaction(domain: DomainSpec, datum, config: DislocationConfig, i: int, j: int) -> float:
    """Integral over the domain of (K_i + grad v_i) . (K_j + grad v_j), v_i the single-point regular parts."""
    _distinct_only(config)
    bd = _resolve_datum(domain, datum, config)
    sol = {idx: solve_dirichlet(domain, share_trace(domain, bd, config, idx)) for idx in (i, j)}
    s, x, nu, w = domain.nodes(4096)
    a, b = config.points[i], config.points[j]
    vi, vj = sol[i].evaluate(x), sol[j].evaluate(x)
    kk = 0.5 * (_phi_form(a, b, [_Piece(x, nu, w)]) - TWO_PI * float(log_potential(a, b[None])[0])
                + _phi_form(b, a, [_Piece(x, nu, w)]) - TWO_PI * float(log_potential(b, a[None])[0]))
    cross = float(np.sum(w * vj * _k_normal(a, x, nu))) + float(np.sum(w * vi * _k_normal(b, x, nu)))
    vv = 0.5 * float(np.sum(w * (vi * np.sum(sol[j].gradient(x) * nu, axis=1)
                                 + vj * np.sum(sol[i].gradient(x) * nu, axis=1))))
    return kk + cross + vv


def cut_invariance_check(domain: DomainSpec, variant_a: BoundaryDatum, variant_b: BoundaryDatum,
                         config: DislocationConfig, eps: Optional[float] = None) -> dict:
    """Energy with two different cut choices; returns both values and the discrepancy."""
    if eps is None:
        ea = renormalized_energy(domain, variant_a, config, method="boundary").total
        eb = renormalized_energy(domain, variant_b, config, method="boundary").total
    else:
        ea = core_energy(domain, variant_a, config, eps, allow_large=True).total
        eb = core_energy(domain, variant_b, config, eps, allow_large=True).total
    return {"energy_a": ea, "energy_b": eb, "discrepancy": abs(ea - eb)}
