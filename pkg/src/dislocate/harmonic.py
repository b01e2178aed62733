"""Harmonic solvers.

Two exact harmonic families are used:

* ``FourierDisk``: ``v = c0 + 2 Re sum_k c_k (z/R)^k`` on a disk of radius R.
* ``MFSField``: a constant plus logarithmic charges placed outside the region
  of validity, optionally added to a base solution.  On the disk the charges
  inside the cores can carry their image across the circle, so the outer
  boundary condition holds exactly.

Every solve reports the sup-norm boundary residual measured on validation
nodes that are offset from the collocation nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import TWO_PI, DislocationConfig, DomainSpec, _as_points
from .fields import DEFAULT_QUAD, QuadratureSpec, DiskRegion, polar_integral


class HarmonicSolverError(RuntimeError):
    pass


FREE, DIRICHLET_IMAGE, NEUMANN_IMAGE = 0, 1, 2


# ---------------------------------------------------------------------------
# solution types
# ---------------------------------------------------------------------------


class HarmonicSolution:
    residual: float = 0.0
    normalization: str = ""

    def evaluate(self, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def dirichlet_energy(self, region=None, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
        raise NotImplementedError  # pragma: no cover

    def _polar_energy(self, region, quad: QuadratureSpec) -> float:
        if isinstance(region, DiskRegion):
            origin = np.asarray(region.center, dtype=float)
        else:
            origin = region.center

        def f(x, rho, u):
            g = self.gradient(x)
            return 0.5 * rho * np.sum(g * g, axis=1)

        return polar_integral(region, origin, f, quad)


def _powers_apply(w: np.ndarray, coeffs: np.ndarray, shift: int = 0, chunk: int = 2048) -> np.ndarray:
    """sum_k coeffs[k-1] * w^(k-1+shift) for k = 1..K, chunked to bound memory."""
    out = np.zeros(w.shape, dtype=complex)
    K = len(coeffs)
    if K == 0:
        return out
    cur = w ** shift if shift else np.ones_like(w)
    for start in range(0, K, chunk):
        stop = min(K, start + chunk)
        width = stop - start
        block = np.empty((len(w), width), dtype=complex)
        block[:, 0] = cur
        if width > 1:
            block[:, 1:] = cur[:, None] * np.cumprod(np.broadcast_to(w[:, None], (len(w), width - 1)), axis=1)
        out += block @ coeffs[start:stop]
        cur = block[:, -1] * w
    return out


@dataclass(eq=False)
class FourierDisk(HarmonicSolution):
    radius: float
    c0: float
    coeffs: np.ndarray
    residual: float = 0.0
    normalization: str = "boundary data"

    def _w(self, x) -> np.ndarray:
        pts = _as_points(x)
        w = (pts[:, 0] + 1j * pts[:, 1]) / self.radius
        if np.any(np.abs(w) > 1 + 1e-9):
            raise ValueError("evaluation outside the disk")
        return w

    def evaluate(self, x) -> np.ndarray:
        w = self._w(x)
        return self.c0 + 2.0 * np.real(w * _powers_apply(w, self.coeffs))

    def gradient(self, x) -> np.ndarray:
        w = self._w(x)
        k = np.arange(1, len(self.coeffs) + 1)
        d = 2.0 * _powers_apply(w, k * self.coeffs) / self.radius
        return np.stack([d.real, -d.imag], axis=-1)

    def dirichlet_energy(self, region=None, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
        k = np.arange(1, len(self.coeffs) + 1)
        a2 = np.abs(self.coeffs) ** 2
        if region is None:
            return float(TWO_PI * np.sum(k * a2))
        if isinstance(region, DiskRegion) and region.center[0] == 0 and region.center[1] == 0:
            q = min(region.radius / self.radius, 1.0)
            return float(TWO_PI * np.sum(k * a2 * q ** (2 * k)))
        return self._polar_energy(region, quad)

    def records(self) -> list:
        out = [f"kind fourier_disk", f"radius {self.radius!r}", f"c0 {self.c0!r}"]
        out += [f"coef {k} {c.real!r} {c.imag!r}" for k, c in enumerate(self.coeffs, start=1)]
        return out


@dataclass(eq=False)
class MFSField(HarmonicSolution):
    """Constant plus logarithmic charges, optionally on top of a base solution."""

    sources: np.ndarray
    strengths: np.ndarray
    kinds: np.ndarray
    constant: float = 0.0
    base: Optional[HarmonicSolution] = None
    domain: Optional[DomainSpec] = None
    cores: tuple = ()
    residual: float = 0.0
    condition: float = 1.0
    normalization: str = ""
    extras: dict = field(default_factory=dict)

    def _R(self) -> float:
        return self.domain.radius if (self.domain is not None and self.domain.is_disk) else 1.0

    def basis_values(self, x) -> np.ndarray:
        return _basis(_as_points(x), self.sources, self.kinds, self._R())[0]

    def evaluate(self, x) -> np.ndarray:
        pts = _as_points(x)
        val, _ = _basis(pts, self.sources, self.kinds, self._R(), need_grad=False)
        out = self.constant + val @ self.strengths
        if self.base is not None:
            out = out + self.base.evaluate(pts)
        return out

    def gradient(self, x) -> np.ndarray:
        pts = _as_points(x)
        _, grad = _basis(pts, self.sources, self.kinds, self._R(), need_value=False)
        out = np.einsum("nmk,m->nk", grad, self.strengths)
        if self.base is not None:
            out = out + self.base.gradient(pts)
        return out

    def boundary_nodes(self, n_outer: int = 2048, n_core: int = 256):
        """Quadrature nodes on the region boundary with normals pointing out of the region."""
        pieces = []
        s, p, nu, w = self.domain.nodes(n_outer)
        pieces.append((p, nu, w))
        for c, r in self.cores:
            t = (np.arange(n_core) + 0.5) * TWO_PI / n_core
            rad = np.stack([np.cos(t), np.sin(t)], axis=-1)
            pieces.append((np.asarray(c) + r * rad, -rad, np.full(n_core, TWO_PI * r / n_core)))
        return pieces

    def dirichlet_energy(self, region=None, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
        if region is not None:
            return self._polar_energy(region, quad)
        total = 0.0
        for p, nu, w in self.boundary_nodes():
            total += 0.5 * np.sum(w * self.evaluate(p) * np.sum(self.gradient(p) * nu, axis=1))
        return float(total)

    def records(self) -> list:
        out = ["kind mfs", f"constant {self.constant!r}", f"residual {self.residual!r}"]
        names = {FREE: "free", DIRICHLET_IMAGE: "dirichlet_image", NEUMANN_IMAGE: "neumann_image"}
        out += [f"source {y[0]!r} {y[1]!r} {s!r} {names[int(k)]}"
                for y, s, k in zip(self.sources, self.strengths, self.kinds)]
        if self.base is not None:
            out += ["base"] + ["  " + r for r in self.base.records()]
        return out


def dump_solution(sol: HarmonicSolution, path) -> None:
    """Write one record per line after a header naming the record types."""
    header = ("# dislocate harmonic solution; records: kind <tag> | radius <R> | c0 <v> | "
              "coef <k> <re> <im> | constant <v> | residual <v> | source <x> <y> <strength> <kind> | base")
    lines = [header, f"residual {sol.residual!r}"] + sol.records()
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# basis functions
# ---------------------------------------------------------------------------


def _basis(x: np.ndarray, sources: np.ndarray, kinds: np.ndarray, R: float,
           need_value: bool = True, need_grad: bool = True):
    """Values (N, M) and gradients (N, M, 2) of the charge basis."""
    d = x[:, None, :] - sources[None, :, :]
    r2 = np.sum(d * d, axis=2)
    val = 0.5 * np.log(r2) if need_value else None
    grad = d / r2[:, :, None] if need_grad else None
    img = kinds != FREE
    if np.any(img):
        # image term through u = |y| x - R^2 y/|y|, finite as y -> 0; on the
        # circle |u| = R|x - y|, so log|x-y| - log|u| + log R vanishes there
        ys = sources[img]
        ny = np.hypot(ys[:, 0], ys[:, 1])
        safe = np.where(ny > 0, ny, 1.0)
        yhat = np.where(ny[:, None] > 0, ys / safe[:, None], np.array([1.0, 0.0]))
        u = ny[None, :, None] * x[:, None, :] - (R * R) * yhat[None, :, :]
        u2 = np.sum(u * u, axis=2)
        sign = np.where(kinds[img] == DIRICHLET_IMAGE, -1.0, 1.0)
        if need_value:
            shift = np.where(kinds[img] == DIRICHLET_IMAGE, math.log(R), 0.0)
            val[:, img] += sign[None, :] * 0.5 * np.log(u2) + shift[None, :]
        if need_grad:
            grad[:, img, :] += (sign * ny)[None, :, None] * u / u2[:, :, None]
    return val, grad


# ---------------------------------------------------------------------------
# disk Fourier solvers
# ---------------------------------------------------------------------------


def _fft_coeffs(values: np.ndarray) -> tuple:
    N = len(values)
    c = np.fft.fft(values) / N
    return float(c[0].real), c[1:N // 2].copy()


def _trim(c: np.ndarray, rel: float = 1e-17) -> np.ndarray:
    if len(c) == 0:
        return c
    mag = np.abs(c)
    scale = mag.max()
    if scale == 0:
        return c[:0]
    keep = np.nonzero(mag > rel * scale)[0]
    return c[: keep[-1] + 1]


def fourier_from_derivative(radius: float, dcoef: np.ndarray, c0: float = 0.0) -> FourierDisk:
    """Solution whose boundary trace has tangential-angle derivative coefficients ``dcoef``."""
    k = np.arange(1, len(dcoef) + 1)
    return FourierDisk(radius=radius, c0=c0, coeffs=dcoef / (1j * k))


def _adaptive_samples(domain: DomainSpec, datum: Callable, n_min: int = 256, n_max: int = 1 << 16,
                      tail: float = 1e-14):
    N = n_min
    while True:
        s = np.arange(N) * domain.length / N
        vals = np.asarray(datum(s), dtype=float)
        c0, c = _fft_coeffs(vals)
        scale = max(abs(c0), np.abs(c).max(initial=0.0), 1e-300)
        top = np.abs(c[len(c) // 2:]).max(initial=0.0)
        if top <= tail * scale or N >= n_max:
            return c0, c
        N *= 2


def _disk_residual(sol: FourierDisk, domain: DomainSpec, datum: Callable, count: int, normal: bool = False):
    s, p, nu, _ = domain.nodes(count, offset=0.5)
    if normal:
        got = np.sum(sol.gradient(p) * nu, axis=1)
    else:
        got = sol.evaluate(p)
    return float(np.max(np.abs(got - datum(s))))


def solve_dirichlet(domain: DomainSpec, datum: Callable, method: str = "auto", tol: float = 1e-8,
                    n_sources: int = 128, strict: bool = True) -> HarmonicSolution:
    """Harmonic function in the domain with boundary values ``datum(s)``."""
    if method == "auto":
        method = "fourier" if domain.is_disk else "mfs"
    if method == "fourier":
        if not domain.is_disk:
            raise ValueError("Fourier solver needs a disk")
        c0, c = _adaptive_samples(domain, datum)
        sol = FourierDisk(radius=domain.radius, c0=c0, coeffs=_trim(c))
        sol.residual = _disk_residual(sol, domain, datum, 2048)
    else:
        sol = _mfs_outer(domain, datum, n_sources, neumann=False)
    scale = max(1.0, float(np.max(np.abs(datum(domain.nodes(512)[0])))))
    if strict and sol.residual > tol * scale:
        raise HarmonicSolverError(f"Dirichlet residual {sol.residual:.3e} above tolerance")
    return sol


def solve_neumann(domain: DomainSpec, flux: Callable, method: str = "auto", tol: float = 1e-8,
                  n_sources: int = 128, strict: bool = True) -> HarmonicSolution:
    """Harmonic function with normal derivative ``flux(s)``, normalized to zero boundary mean."""
    s, _, _, w = domain.nodes(4096)
    fv = np.asarray(flux(s), dtype=float)
    net = float(np.sum(w * fv))
    if abs(net) > 1e-6 * max(1.0, float(np.sum(w * np.abs(fv)))):
        raise ValueError(f"incompatible Neumann data: net flux {net:.3e}")
    if method == "auto":
        method = "fourier" if domain.is_disk else "mfs"
    if method == "fourier":
        if not domain.is_disk:
            raise ValueError("Fourier solver needs a disk")
        _, c = _adaptive_samples(domain, flux)
        k = np.arange(1, len(c) + 1)
        sol = FourierDisk(radius=domain.radius, c0=0.0, coeffs=_trim(domain.radius * c / k),
                          normalization="zero boundary mean")
        sol.residual = _disk_residual(sol, domain, flux, 2048, normal=True)
    else:
        sol = _mfs_outer(domain, flux, n_sources, neumann=True)
        sb, pb, _, wb = domain.nodes(2048)
        sol.constant -= float(np.sum(wb * sol.evaluate(pb)) / np.sum(wb))
        sol.normalization = "zero boundary mean"
    if strict and sol.residual > tol * max(1.0, float(np.max(np.abs(fv)))):
        raise HarmonicSolverError(f"Neumann residual {sol.residual:.3e} above tolerance")
    return sol


# ---------------------------------------------------------------------------
# MFS machinery
# ---------------------------------------------------------------------------


def exterior_ring(domain: DomainSpec, count: int) -> np.ndarray:
    """Sources on the curve offset by a quarter diameter along the outward normal."""
    s = np.arange(count) * domain.length / count
    return domain.point(s) + 0.25 * domain.diameter * domain.normal(s)


def _lstsq(A: np.ndarray, b: np.ndarray):
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    x, _, rank, sv = np.linalg.lstsq(A / scale, b, rcond=1e-12)
    kept = sv[sv > 1e-12 * sv[0]] if len(sv) else sv
    cond = float(kept[0] / kept[-1]) if len(kept) else 1.0
    return x / scale, cond


def _mfs_outer(domain: DomainSpec, datum: Callable, count: int, neumann: bool) -> MFSField:
    src = exterior_ring(domain, count)
    kinds = np.zeros(count, dtype=int)
    s, p, nu, _ = domain.nodes(4 * count)
    val, grad = _basis(p, src, kinds, 1.0)
    if neumann:
        A = np.einsum("nmk,nk->nm", grad, nu)
    else:
        A = np.hstack([val, np.ones((len(p), 1))])
    rhs = np.asarray(datum(s), dtype=float)
    coef, cond = _lstsq(A, rhs)
    sol = MFSField(sources=src, strengths=coef[:count], kinds=kinds,
                   constant=float(coef[count]) if not neumann else 0.0, domain=domain, condition=cond)
    sv, pv, nuv, _ = domain.nodes(4 * count, offset=0.5)
    got = np.sum(sol.gradient(pv) * nuv, axis=1) if neumann else sol.evaluate(pv)
    sol.residual = float(np.max(np.abs(got - datum(sv))))
    return sol


def check_cores(domain: DomainSpec, centers: np.ndarray, eps: float) -> None:
    """Refuse cores that overlap each other or leave the domain."""
    if eps <= 0:
        raise ValueError("core radius must be positive")
    dist = domain.distance(centers)
    inside = domain.contains(centers, closed=False)
    if np.any(~inside) or np.any(dist <= eps):
        raise ValueError("core disks must lie inside the domain")
    if len(centers) > 1:
        gap = np.hypot(*(centers[:, None, :] - centers[None, :, :]).transpose(2, 0, 1))
        np.fill_diagonal(gap, np.inf)
        if np.any(gap <= 2 * eps):
            raise ValueError("core disks overlap; coarsen the configuration first")


def _core_nodes(center, eps: float, count: int, offset: float = 0.0):
    t = (np.arange(count) + offset) * TWO_PI / count
    rad = np.stack([np.cos(t), np.sin(t)], axis=-1)
    return np.asarray(center, dtype=float) + eps * rad, rad


def _core_sources(center, eps: float, count: int) -> np.ndarray:
    t = (np.arange(count) + 0.25) * TWO_PI / count
    return np.asarray(center, dtype=float) + 0.5 * eps * np.stack([np.cos(t), np.sin(t)], axis=-1)


def solve_mixed_perforated(domain: DomainSpec, config: DislocationConfig, eps: float,
                           dirichlet: Callable, neumann: Callable, core_sources: int = 32,
                           outer_sources: int = 160, tol: float = 1e-6, strict: bool = True) -> MFSField:
    """Harmonic in the domain minus the cores, Dirichlet data on the outer boundary
    and Neumann data on each core circle.

    ``dirichlet(s)`` gives outer values; ``neumann(j, x, rad)`` gives the radial
    derivative (along ``rad``, pointing away from core ``j``'s centre) at the
    points ``x`` of core ``j``.
    """
    centers = config.points
    check_cores(domain, centers, eps)
    ell = len(centers)
    n_col = 4 * core_sources

    # net flux of the Neumann data fixes the central log charge of each core
    fluxes = []
    for j in range(ell):
        x, rad = _core_nodes(centers[j], eps, n_col)
        fluxes.append(float(np.mean(neumann(j, x, rad)) * TWO_PI * eps))
    log_strength = np.array(fluxes) / TWO_PI

    if domain.is_disk:
        base = solve_dirichlet(domain, dirichlet, tol=tol, strict=strict)
        kind = DIRICHLET_IMAGE
        ext = np.zeros((0, 2))
    else:
        base = None
        kind = FREE
        ext = exterior_ring(domain, outer_sources)
    rings = [_core_sources(c, eps, core_sources) for c in centers]
    src = np.vstack([ext] + rings)
    kinds = np.concatenate([np.full(len(ext), FREE), np.full(ell * core_sources, kind)]).astype(int)
    fixed = MFSField(sources=centers.copy(), strengths=log_strength,
                     kinds=np.full(ell, kind, dtype=int), base=base, domain=domain)
    R = domain.radius if domain.is_disk else 1.0
    n_free = len(src)
    use_const = not domain.is_disk

    rows, rhs = [], []
    if not domain.is_disk:
        s, p, _, _ = domain.nodes(4 * len(ext))
        val, _ = _basis(p, src, kinds, R, need_grad=False)
        rows.append(np.hstack([val, np.ones((len(p), 1))]))
        rhs.append(np.asarray(dirichlet(s), dtype=float) - fixed.evaluate(p))
    for j in range(ell):
        x, rad = _core_nodes(centers[j], eps, n_col)
        _, grad = _basis(x, src, kinds, R, need_value=False)
        A = np.einsum("nmk,nk->nm", grad, rad) * eps
        if use_const:
            A = np.hstack([A, np.zeros((len(x), 1))])
        target = neumann(j, x, rad) - np.sum(fixed.gradient(x) * rad, axis=1)
        rows.append(A)
        rhs.append(target * eps)
        # ring charges carry no net flux; the central charge already does
        c = np.zeros((1, n_free + (1 if use_const else 0)))
        c[0, len(ext) + j * core_sources: len(ext) + (j + 1) * core_sources] = 1.0
        rows.append(c)
        rhs.append(np.zeros(1))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    coef, cond = _lstsq(A, b)
    sol = MFSField(sources=np.vstack([src, centers]), strengths=np.concatenate([coef[:n_free], log_strength]),
                   kinds=np.concatenate([kinds, np.full(ell, kind, dtype=int)]),
                   constant=float(coef[n_free]) if use_const else 0.0, base=base, domain=domain,
                   cores=tuple((tuple(c), eps) for c in centers), condition=cond,
                   normalization="outer Dirichlet data")
    sol.residual = _mixed_residual(sol, domain, centers, eps, dirichlet, neumann, n_col)
    scale = max(1.0, float(np.max(np.abs(dirichlet(domain.nodes(512)[0])))))
    if strict and sol.residual > tol * scale:
        raise HarmonicSolverError(f"perforated residual {sol.residual:.3e} above tolerance")
    return sol


def _mixed_residual(sol, domain, centers, eps, dirichlet, neumann, n_col) -> float:
    s, p, _, _ = domain.nodes(2048, offset=0.5)
    res = float(np.max(np.abs(sol.evaluate(p) - dirichlet(s))))
    for j in range(len(centers)):
        x, rad = _core_nodes(centers[j], eps, n_col, offset=0.5)
        got = np.sum(sol.gradient(x) * rad, axis=1)
        res = max(res, float(np.max(np.abs(got - neumann(j, x, rad)))) * eps)
    return res


def solve_p(domain: DomainSpec, config: DislocationConfig, eps: float, i: int, core_sources: int = 32,
            outer_sources: int = 160, tol: float = 1e-6, strict: bool = True) -> MFSField:
    """Conjugate problem for the Dirichlet corrector of point ``i``.

    Zero normal derivative on the outer boundary; on core ``j != i`` the
    tangential derivative equals that of ``-log|x - a_i|``, on core ``i`` it
    vanishes; no net flux through any core; the solution is zero on core ``i``.
    """
    centers = config.points
    check_cores(domain, centers, eps)
    ell = len(centers)
    ai = centers[i]
    n_col = 4 * core_sources
    if domain.is_disk:
        kind = NEUMANN_IMAGE
        ext = np.zeros((0, 2))
    else:
        kind = FREE
        ext = exterior_ring(domain, outer_sources)
    rings = [_core_sources(c, eps, core_sources) for c in centers]
    src = np.vstack([ext] + rings)
    kinds = np.concatenate([np.full(len(ext), FREE), np.full(ell * core_sources, kind)]).astype(int)
    R = domain.radius if domain.is_disk else 1.0
    n_src = len(src)
    others = [j for j in range(ell) if j != i]
    n_unk = n_src + 1 + len(others)  # strengths, global constant, core constants

    rows, rhs = [], []
    if not domain.is_disk:
        s, p, nu, _ = domain.nodes(4 * len(ext))
        _, grad = _basis(p, src, kinds, R, need_value=False)
        A = np.zeros((len(p), n_unk))
        A[:, :n_src] = np.einsum("nmk,nk->nm", grad, nu)
        rows.append(A)
        rhs.append(np.zeros(len(p)))
    for j in range(ell):
        x, _ = _core_nodes(centers[j], eps, n_col)
        val, _ = _basis(x, src, kinds, R, need_grad=False)
        A = np.zeros((len(x), n_unk))
        A[:, :n_src] = val
        A[:, n_src] = 1.0
        if j == i:
            target = np.zeros(len(x))
        else:
            A[:, n_src + 1 + others.index(j)] = -1.0
            target = -0.5 * np.log(np.sum((x - ai) ** 2, axis=1))
        rows.append(A)
        rhs.append(target)
        c = np.zeros((1, n_unk))
        c[0, len(ext) + j * core_sources: len(ext) + (j + 1) * core_sources] = 1.0
        rows.append(c)
        rhs.append(np.zeros(1))
    coef, cond = _lstsq(np.vstack(rows), np.concatenate(rhs))
    consts = {j: float(coef[n_src + 1 + k]) for k, j in enumerate(others)}
    sol = MFSField(sources=src, strengths=coef[:n_src], kinds=kinds, constant=float(coef[n_src]),
                   domain=domain, cores=tuple((tuple(c), eps) for c in centers), condition=cond,
                   normalization=f"zero on core {i}", extras={"core_constants": consts})

    # residuals: outer flux, core values up to their constants
    s, p, nu, _ = domain.nodes(2048, offset=0.5)
    res = float(np.max(np.abs(np.sum(sol.gradient(p) * nu, axis=1))))
    for j in range(ell):
        x, _ = _core_nodes(centers[j], eps, n_col, offset=0.5)
        want = np.zeros(len(x)) if j == i else consts[j] - 0.5 * np.log(np.sum((x - ai) ** 2, axis=1))
        res = max(res, float(np.max(np.abs(sol.evaluate(x) - want))))
    sol.residual = res
    if strict and res > tol:
        raise HarmonicSolverError(f"p-problem residual {res:.3e} above tolerance")
    return sol
