"""``poisson-mlsi`` command-line interface.

Exit codes: 0 all checks pass, 1 an inequality or identity check failed,
2 input error, 3 numerical error (truncation, domination, quadrature).
"""

from __future__ import annotations

import csv
import functools
import io
import math
import sys
from pathlib import Path

import click

from . import __version__
from .errors import InputError, InvariantViolation, NumericalError, PoissonMLSIError
from .follmer import DIAGNOSTIC_COLUMNS, SimConfig, concordance, simulate_paths
from .functionals import counterexample_demo, deficit_report, extension_mass
from .poisson_core import poisson_log_tail_bound
from .quadrature import verify_all
from .specfile import load_spec

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3
OUT_DIR_ENV = "POISSON_MLSI_OUT_DIR"
IDENTITY_COLUMNS = ("identity", "lhs", "rhs", "abs_residual", "rel_residual", "pass")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if v is None:
        return "none"
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


def _kv(pairs) -> str:
    return "".join(f"{k}: {_fmt(v)}\n" for k, v in pairs)


def _guarded(fn):
    """Map package exceptions onto exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except InvariantViolation as exc:
            click.echo(f"check failed: {exc}", err=True)
            sys.exit(EXIT_FAILED)
        except NumericalError as exc:
            click.echo(f"numerical error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (PoissonMLSIError, ValueError) as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        sys.exit(code or EXIT_OK)

    return wrapper


def _header(spec, seed, extra=()):
    K = spec.k_reach
    rate = spec.T * spec.growth
    tail = math.exp(rate + poisson_log_tail_bound(rate, K)) if rate > 0 else 0.0
    return [
        ("version", __version__),
        ("f", spec.f.describe()),
        ("T", float(spec.T)),
        ("normalize", spec.normalize),
        ("seed", seed),
        ("rel_tail", spec.tol.rel_tail),
        ("k_reach", K),
        ("n_terms", spec.n_terms),
        ("tail_bound", tail),
        *extra,
    ]


spec_arg = click.argument("spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
tol_opt = click.option("--tol", type=float, default=None, help="Override the relative series tail cutoff.")
seed_opt = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=42, show_default=True)
out_dir_opt = click.option(
    "--out-dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("."),
    envvar=OUT_DIR_ENV,
    show_default=True,
    help=f"Directory for CSV output (also read from ${OUT_DIR_ENV}).",
)


@click.group()
@click.version_option(__version__)
def main():
    """Entropy, deficit and Poisson-Follmer checks for densities on N."""


@main.command()
@spec_arg
@click.option("--output", type=click.Path(dir_okay=False, path_type=Path), help="Write the report here (.csv for a CSV row).")
@tol_opt
@seed_opt
@_guarded
def check(spec_path, output, tol, seed):
    """Entropy, Wu bound, deficit and the ULC stability bound."""
    spec = load_spec(spec_path, tol)
    rep = deficit_report(spec)
    ext = extension_mass(spec)
    pairs = _header(spec, seed) + [
        ("extension_mass", ext),
        ("extension_flag", ext > spec.tol.rel_tail),
        ("entropy", rep.entropy),
        ("wu_rhs", rep.wu_rhs),
        ("deficit", rep.deficit),
        ("ulc", rep.is_ulc),
        ("ulc_violation_index", rep.ulc_violation_index),
        ("beta", rep.beta),
        ("mean_mu", rep.mean_mu),
        ("stability_bound", rep.stability_bound),
        ("margin", rep.margin),
        ("wu_holds", rep.wu_holds),
        ("stability_holds", rep.stability_holds),
    ]
    ok = rep.wu_holds and rep.stability_holds
    pairs.append(("status", "pass" if ok else "fail"))
    text = _kv(pairs)
    click.echo(text, nl=False)
    if output is not None:
        if output.suffix.lower() == ".csv":
            _write(output, _csv_text([k for k, _ in pairs], [[v for _, v in pairs]]))
        else:
            _write(output, text)
    return EXIT_OK if ok else EXIT_FAILED


@main.command()
@spec_arg
@tol_opt
@seed_opt
@out_dir_opt
@_guarded
def verify(spec_path, tol, seed, out_dir):
    """Quadrature identities, PDE convergence orders and the stability chain."""
    spec = load_spec(spec_path, tol)
    reports = verify_all(spec)
    rows = [(r.name, r.lhs, r.rhs, r.abs_residual, r.rel_residual, r.passed) for r in reports]
    _write(out_dir / "identities.csv", _csv_text(IDENTITY_COLUMNS, rows))
    pairs = _header(spec, seed)
    for r in reports:
        pairs.append((r.name, f"{'pass' if r.passed else 'FAIL'} lhs={_fmt(r.lhs)} rhs={_fmt(r.rhs)}"))
    ok = all(r.passed for r in reports)
    pairs.append(("status", "pass" if ok else "fail"))
    click.echo(_kv(pairs), nl=False)
    return EXIT_OK if ok else EXIT_FAILED


@main.command()
@spec_arg
@click.option("--paths", "n_paths", type=click.IntRange(min=1), default=100_000, show_default=True)
@seed_opt
@click.option("--grid", "grid_points", type=click.IntRange(min=2), default=9, show_default=True, help="Number of diagnostic times.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--slice-len", type=float, default=None, help="Thinning slice length [default: T/64].")
@click.option("--safety", type=float, default=1.5, show_default=True)
@tol_opt
@out_dir_opt
@_guarded
def simulate(spec_path, n_paths, seed, grid_points, workers, slice_len, safety, tol, out_dir):
    """Monte Carlo run of the Follmer process with law and martingale diagnostics."""
    spec = load_spec(spec_path, tol)
    cfg = SimConfig(n_paths, seed, slice_len, safety, grid_points=grid_points)
    batch = simulate_paths(spec, cfg, workers=workers)
    s = concordance(batch, spec)
    _write(out_dir / "diagnostics.csv", _csv_text(DIAGNOSTIC_COLUMNS, s.table.rows()))
    summary = [
        ("n_paths", n_paths),
        ("seed", seed),
        ("grid_points", grid_points),
        ("slice_len", batch.config.slice_len),
        ("safety", safety),
        ("tv_distance_T", s.law.tv_distance),
        ("chi_square_T", s.law.chi_square),
        ("chi_square_dof", s.law.dof),
        ("chi_square_p", s.law.p_value),
        ("expected_lambda", s.martingale.expected_lambda),
        ("max_lambda_z", float(s.martingale.lambda_z.max())),
        ("max_xtilde_z", float(s.martingale.xtilde_z.max())),
        ("mc_entropy", s.entropy.estimate.value),
        ("mc_entropy_se", s.entropy.estimate.std_error),
        ("exact_entropy", s.entropy.exact),
        ("trapezoid_bias", s.entropy.trapezoid_bias),
        ("law_ok", s.law.passed),
        ("lambda_ok", s.martingale.lambda_ok and s.martingale.constant_ok),
        ("xtilde_ok", s.martingale.xtilde_ok),
        ("entropy_ok", s.entropy.passed),
        ("phi_non_decreasing", s.submartingale.non_decreasing),
        ("status", "pass" if s.passed else "fail"),
    ]
    _write(out_dir / "summary.csv", _csv_text(("key", "value"), summary))
    click.echo(_kv(_header(spec, seed, [("workers", workers)]) + summary), nl=False)
    return EXIT_OK if s.passed else EXIT_FAILED


def _parse_grid(text: str) -> list[float]:
    items = [x.strip() for x in text.split(",") if x.strip()]
    try:
        return [float(x) for x in items]
    except ValueError:
        raise InputError(f"--a-grid must be comma-separated numbers, got {text!r}") from None


@main.command("demo-counterexample")
@click.option("--a-grid", default=None, help="Comma-separated slopes a [default: 0, log 2, log 4].")
@click.option("--T", "T", type=float, default=1.0, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False, path_type=Path), help="Also write the table as CSV.")
@_guarded
def demo_counterexample(a_grid, T, output):
    """Geometric densities: zero deficit against a diverging beta-based bound."""
    grid = [0.0, math.log(2.0), math.log(4.0)] if a_grid is None else _parse_grid(a_grid)
    rows = [(r.a, r.T, r.deficit, r.beta, r.conjectured_bound, r.theta_form, r.violation) for r in counterexample_demo(grid, T)]
    text = _csv_text(("a", "T", "deficit", "beta", "conjectured_bound", "theta_form", "violation"), rows)
    click.echo(text, nl=False)
    if output is not None:
        _write(output, text)
    return EXIT_OK
