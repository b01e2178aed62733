"""Command-line front end: ``dislocate <command> [flags]``.

Exit codes: 0 success, 1 failure, 2 infinite-energy configuration.
"""

from __future__ import annotations

import math
import os
import sys
from typing import Optional

import click
import numpy as np

from . import energy as en
from . import optimize as opt
from . import selftest as st
from .fields import QuadratureSpec
from .geometry import (DomainSpec, StrainDatum, constant_strain, half_strain, load_domain, make_config,
                       make_unit_disk, strain_from_samples)
from .svg import loglog_plot, polar_heatmap

EXIT_OK, EXIT_FAIL, EXIT_INF = 0, 1, 2


class Infinite(Exception):
    pass


def _domain(path: Optional[str]) -> DomainSpec:
    return make_unit_disk() if path is None else load_domain(path)


def _strain(domain: DomainSpec, preset: str, n: int, strain_file: Optional[str]) -> StrainDatum:
    """Presets: g1 (f = 1), g2 (f = 2 on the right half circle), const or const:N (f = N, default n), file."""
    if preset == "g1":
        return constant_strain(domain, 1)
    if preset == "g2":
        return half_strain(domain)
    if preset.startswith("const"):
        k = int(preset.split(":", 1)[1]) if ":" in preset else n
        return constant_strain(domain, k)
    if preset == "file":
        if strain_file is None:
            raise click.UsageError("--preset file needs --strain")
        data = np.loadtxt(strain_file, delimiter=",", skiprows=1)
        return strain_from_samples(domain, data[:, 0], data[:, 1])
    raise click.UsageError(f"unknown preset {preset!r}")


def _points(raw) -> np.ndarray:
    if not raw:
        raise click.UsageError("at least one --points x,y is required")
    out = []
    for item in raw:
        try:
            x, y = (float(v) for v in item.split(","))
        except ValueError:
            raise click.UsageError(f"bad point {item!r}; expected x,y")
        out.append((x, y))
    return np.array(out)


def _eps_list(raw: Optional[str]) -> list:
    if raw is None:
        return []
    vals = [float(v) for v in raw.split(",") if v.strip()]
    if any(v <= 0 for v in vals):
        raise click.UsageError("core radii must be positive")
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise click.UsageError("epsilon list must be strictly decreasing")
    return vals


def _grid(raw: str) -> tuple:
    try:
        r, t = (int(v) for v in raw.lower().split("x"))
    except ValueError:
        raise click.UsageError(f"bad grid {raw!r}; expected RxT")
    if r < 2 or t < 2:
        raise click.UsageError("grid resolutions must be at least 2")
    return r, t


def _outdir(path: Optional[str]) -> str:
    out = path or "."
    os.makedirs(out, exist_ok=True)
    return out


def _config_or_inf(domain, pts, allow_multiplicity: bool):
    cfg = make_config(domain, pts)
    if not allow_multiplicity and np.any(cfg.multiplicities > 1):
        raise Infinite("coincident dislocations")
    return cfg


common = [
    click.option("--preset", default="g1", show_default=True, help="g1 | g2 | const[:N] | file"),
    click.option("--strain", "strain_file", default=None, help="CSV with columns s,f for --preset file"),
    click.option("--domain", "domain_file", default=None, help="domain JSON file (default: unit disk)"),
]


def with_common(fn):
    for dec in reversed(common):
        fn = dec(fn)
    return fn


@click.group()
def cli():
    """Screw-dislocation energies in convex planar domains."""


@cli.command()
@with_common
@click.option("--points", multiple=True, help="dislocation position x,y (repeatable)")
@click.option("--epsilon", default=None, help="core radius; omit for the limit energy")
@click.option("--tol", default=1e-6, show_default=True, type=float, help="quadrature tolerance")
@click.option("--crosscheck", is_flag=True, help="also run the area-quadrature routes")
def energy(preset, strain_file, domain_file, points, epsilon, tol, crosscheck):
    """Print one energy report as CSV."""
    domain = _domain(domain_file)
    pts = _points(points)
    eps = _eps_list(epsilon)
    if len(eps) > 1:
        raise click.UsageError("energy takes a single --epsilon")
    strain = _strain(domain, preset, len(pts), strain_file)
    if eps:
        cfg = make_config(domain, pts)
        rep = en.core_energy(domain, strain, cfg, eps[0])
    else:
        cfg = make_config(domain, pts)
        if np.any(cfg.multiplicities > 1) or np.any(cfg.omega == 2):
            rep = en.EnergyReport.infinite(en.LIMIT, None, cfg.n, "coincident or boundary dislocations")
        else:
            rep = en.renormalized_energy(domain, strain, cfg, quad=QuadratureSpec(rtol=tol), crosscheck=crosscheck)
    click.echo(en.csv_header())
    click.echo(rep.csv_row())
    if not rep.finite:
        raise Infinite(rep.note)


@cli.command()
@with_common
@click.option("--grid", default="64x128", show_default=True, help="radial x angular resolution")
@click.option("--out", default=None, help="output directory")
def landscape(preset, strain_file, domain_file, grid, out):
    """Single-dislocation energy on a polar grid: landscape.csv and landscape.svg."""
    domain = _domain(domain_file)
    R, T = _grid(grid)
    strain = _strain(domain, preset, 1, strain_file)
    if abs(strain.total - 2 * math.pi) > 1e-8:
        raise click.UsageError("landscapes need a single-dislocation datum")
    radii, angles, vals = opt.landscape(domain, strain, R, T)
    d = _outdir(out)
    with open(os.path.join(d, "landscape.csv"), "w", newline="\n") as fh:
        fh.write("x,y,F\n")
        for i, r in enumerate(radii):
            for j, t in enumerate(angles):
                fh.write(f"{float(r * math.cos(t))!r},{float(r * math.sin(t))!r},{float(vals[i, j])!r}\n")
    polar_heatmap(os.path.join(d, "landscape.svg"), radii, angles, vals, title=f"landscape {preset}")
    i, j = np.unravel_index(int(np.nanargmin(vals)), vals.shape)
    click.echo("argmin_x,argmin_y,F_min")
    click.echo(f"{float(radii[i] * math.cos(angles[j]))!r},{float(radii[i] * math.sin(angles[j]))!r},{float(vals[i, j])!r}")


@cli.command()
@with_common
@click.option("--points", multiple=True, help="dislocation position x,y (repeatable)")
@click.option("--epsilon", default="0.05,0.02,0.01", show_default=True, help="strictly decreasing list")
def converge(preset, strain_file, domain_file, points, epsilon):
    """Table of renormalized core energies against the limit; exit 0 iff gaps are nonincreasing."""
    domain = _domain(domain_file)
    pts = _points(points)
    eps = _eps_list(epsilon)
    strain = _strain(domain, preset, len(pts), strain_file)
    cfg = _config_or_inf(domain, pts, allow_multiplicity=False)
    limit = en.renormalized_energy(domain, strain, cfg)
    if not limit.finite:
        raise Infinite(limit.note)
    reps = opt.parallel_map(lambda e: en.core_energy(domain, strain, cfg, e), eps)
    click.echo("epsilon,F_eps,F_limit,gap,E_eps,E_monotone")
    gaps, prev_E, ok = [], None, True
    for e, rep in zip(eps, reps):
        E = rep.details["core_energy"]
        mono = prev_E is None or E >= prev_E - 1e-10 * max(1.0, abs(E))
        prev_E = E
        gap = rep.total - limit.total
        gaps.append(abs(gap))
        click.echo(f"{float(e)!r},{float(rep.total)!r},{float(limit.total)!r},{float(gap)!r},{float(E)!r},{str(mono).lower()}")
    tol = 1e-9
    if any(b > a + tol for a, b in zip(gaps, gaps[1:])):
        ok = False
    if not ok:
        sys.exit(EXIT_FAIL)


@cli.command()
@with_common
@click.option("--n", "n", default=None, type=int, help="number of dislocations")
@click.option("--n-range", default=None, help="a:b inclusive; writes the asymptotics CSV and plots")
@click.option("--out", default=None, help="output directory for --n-range")
def ngon(preset, strain_file, domain_file, n, n_range, out):
    """Optimal regular n-gon with the n-fold constant datum."""
    domain = _domain(domain_file)
    if (n is None) == (n_range is None):
        raise click.UsageError("give exactly one of --n and --n-range")
    if n is not None:
        strain = constant_strain(domain, n) if preset in ("g1", "const") else _strain(domain, preset, n, strain_file)
        res = opt.ngon_sweep(domain, strain, n)
        click.echo(",".join(opt.ASYMPTOTICS_COLUMNS))
        click.echo(f"{n},{float(res.radius * domain.radius)!r},{float(res.energy)!r},"
                   f"{float(domain.radius * (1 - res.radius))!r},{res.evaluations}")
        return
    try:
        a, b = (int(v) for v in n_range.split(":"))
    except ValueError:
        raise click.UsageError(f"bad --n-range {n_range!r}; expected a:b")
    if a < 1 or b < a:
        raise click.UsageError("--n-range needs 1 <= a <= b")
    d = _outdir(out)
    ns = list(range(a, b + 1))
    fit = (10, 60) if a <= 10 and b >= 60 else None
    study = opt.asymptotics_study(domain, ns, out=os.path.join(d, "asymptotics.csv"), fit_range=fit)
    rows = study["rows"]
    lo, hi = study["fit_range"]
    fit_n = [r["n"] for r in rows if lo <= r["n"] <= hi]
    loglog_plot(os.path.join(d, "dist.svg"), [r["n"] for r in rows], [r["dist_to_boundary"] for r in rows],
                study["dist_slope"], fit_n, "distance of the optimal n-gon to the boundary", "dist (log scale)")
    loglog_plot(os.path.join(d, "energy.svg"), [r["n"] for r in rows], [abs(r["energy"]) for r in rows],
                study["energy_slope"], fit_n, "energy of the optimal n-gon", "|F| (log scale)")
    click.echo(",".join(opt.ASYMPTOTICS_COLUMNS))
    for r in rows:
        click.echo(f"{r['n']},{float(r['radius'])!r},{float(r['energy'])!r},{float(r['dist_to_boundary'])!r},{r['evals']}")
    click.echo(f"# fit over n in [{lo},{hi}]: dist slope {float(study['dist_slope'])!r}, energy slope {float(study['energy_slope'])!r}",
               err=True)


@cli.command()
@with_common
@click.option("--n", "n", default=1, type=int, show_default=True)
@click.option("--starts", default=8, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
def minimize(preset, strain_file, domain_file, n, starts, seed):
    """Multistart Nelder-Mead search for a minimizing configuration."""
    domain = _domain(domain_file)
    strain = _strain(domain, preset, n, strain_file)
    res = opt.minimize(domain, strain, n, starts=starts, seed=seed)
    click.echo("index,x,y,energy,evals,converged")
    for i, p in enumerate(res.points):
        click.echo(f"{i},{float(p[0])!r},{float(p[1])!r},{float(res.energy)!r},{res.evaluations},{str(res.converged).lower()}")
    if not math.isfinite(res.energy):
        click.echo(res.message, err=True)
        sys.exit(EXIT_FAIL)


@cli.command()
@click.option("--domain", "domain_file", default=None)
@click.option("--points", multiple=True, help="dislocation position x,y (repeatable)")
@click.option("--epsilon", required=True, type=float)
def coarsen(domain_file, points, epsilon):
    """Trace of the merge-or-project coarsening."""
    domain = _domain(domain_file)
    pts = _points(points)
    tr = opt.coarsen(pts, epsilon, domain)
    for line in tr.log_lines():
        click.echo(line)


@cli.command()
def selftest():
    """Run the invariant suites; exit 0 iff all pass."""
    failed = st.run(click.echo)
    if failed:
        click.echo("failing suites: " + ", ".join(failed), err=True)
        sys.exit(EXIT_FAIL)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="dislocate", standalone_mode=False)
    except Infinite as exc:
        click.echo(f"infinite energy: {exc}", err=True)
        return EXIT_INF
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return EXIT_FAIL
    except click.exceptions.Abort:
        return EXIT_FAIL
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # solver or I/O failure
        click.echo(f"error: {exc}", err=True)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
