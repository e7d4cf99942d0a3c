"""Command-line front end.

    regtree rp        --config cfg.yaml [--lo A --hi B]
    regtree capacity  --config cfg.yaml --n 0 --horizons 1..10 [--out curve.csv]
    regtree classify  --config cfg.yaml [--curve]
    regtree phase     --K 2 --p 2 --eps 0.05:0.25:5 --beta 0.6:1.2:5 [--out phase.csv]
    regtree harmonic  --config cfg.yaml --n-max 10 --window 3
    regtree verify    --config cfg.yaml [--seed 0 --count 20]

Exit codes: 0 success, 1 usage or parse error, 2 undetermined verdict,
3 numerical failure (or a failed invariant in ``verify``).

Every document written carries a run manifest: the command, the config
path and its SHA-256, and all parameters.  Nothing time-dependent goes
in, so rerunning a manifest reproduces its output byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .battery import run_battery
from .capacity import CapacityCurve, capacity_exhaustion, limit_harmonic
from .classifier import classify, phase_map
from .config_io import load_config
from .errors import ConfigError, ConvergenceError, PreconditionError, QuadratureError, TopologyError
from .solver import DEFAULT_TOL
from .weights import Finite, Infinite, Undetermined, rp_truncated

EXIT_OK, EXIT_USAGE, EXIT_UNDETERMINED, EXIT_NUMERIC = 0, 1, 2, 3

SCHEMAS = {
    "capacity": "capacity_curve/1",
    "phase": "phase_map/1",
    "harmonic": "harmonic_field/1",
}


@dataclass
class RunManifest:
    command: str
    config_path: str | None = None
    config_sha256: str | None = None
    parameters: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    seed: int | None = None
    version: str = __version__

    @classmethod
    def build(cls, command: str, config_path: str | None, parameters: dict,
              out: str | None = None, seed: int | None = None) -> RunManifest:
        path = sha = None
        if config_path is not None:
            p = Path(config_path).resolve()
            path = str(p)
            sha = hashlib.sha256(p.read_bytes()).hexdigest()
        outputs = [str(Path(out).resolve())] if out else []
        return cls(command, path, sha, parameters, outputs, seed)

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config_path": self.config_path,
            "config_sha256": self.config_sha256,
            "parameters": self.parameters,
            "outputs": self.outputs,
            "seed": self.seed,
            "version": self.version,
        }

    def comment_lines(self) -> list[str]:
        return [f"manifest: {json.dumps(self.as_dict(), sort_keys=True)}"]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def _json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _rp_doc(value) -> dict:
    if isinstance(value, Finite):
        return {"kind": "finite", "value": value.value}
    if isinstance(value, Infinite):
        return {"kind": "infinite", "reason": value.reason, "rate": value.rate}
    if isinstance(value, Undetermined):
        return {"kind": "undetermined", "partial": value.partial, "horizon": value.horizon}
    return {"kind": "none"}


def _parse_horizons(text: str) -> list[int]:
    """``1..10``, ``1,2,4`` or a mix such as ``1..4,8,16``."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                a, b = part.split("..")
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise click.BadParameter(f"cannot read horizons {text!r}; use forms like 1..10 or 1,2,4") from None
    if not out:
        raise click.BadParameter("no horizons given")
    return out


def _parse_grid(text: str, name: str) -> list[float]:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma list."""
    try:
        if ":" in text:
            a, b, k = text.split(":")
            k = int(k)
            if k < 1:
                raise ValueError
            return [float(x) for x in np.linspace(float(a), float(b), k)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"cannot read grid {text!r}; use start:stop:count or a comma list",
                                 param_hint=name) from None


config_option = click.option("--config", "config_path", required=True,
                             type=click.Path(exists=True, dir_okay=False), help="Weight config (YAML).")
tol_option = click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=DEFAULT_TOL,
                          show_default=True, help="Flux residual tolerance.")
out_option = click.option("--out", type=click.Path(dir_okay=False), default=None,
                          help="Write the document here instead of standard output.")


def _format_option(choices, default):
    return click.option("--format", "fmt", type=click.Choice(choices), default=default, show_default=True)


@click.group()
@click.version_option(__version__, prog_name="regtree")
def cli():
    """Parabolicity, capacities and p-harmonic functions on weighted regular trees."""


@cli.command("rp")
@config_option
@click.option("--lo", type=float, default=None, help="Lower end of a truncated integral.")
@click.option("--hi", type=float, default=None, help="Upper end of a truncated integral.")
@_format_option(["text", "json"], "text")
def cmd_rp(config_path, lo, hi, fmt):
    """Criterion integral R_p, decided symbolically where possible."""
    config = load_config(config_path)
    manifest = RunManifest.build("rp", config_path, {"lo": lo, "hi": hi})
    if (lo is None) != (hi is None):
        raise click.UsageError("--lo and --hi go together")
    if lo is not None:
        value = Finite(rp_truncated(config, lo, hi))
    else:
        value = classify(config).rp
        if value is None:
            raise PreconditionError("R_p is not defined when a root branch carries deeper overrides")
    if fmt == "json":
        _emit(_json({"manifest": manifest.as_dict(), "rp": _rp_doc(value)}), None)
    else:
        click.echo(str(value))
        click.echo("# " + manifest.comment_lines()[0])
    return EXIT_UNDETERMINED if isinstance(value, Undetermined) else EXIT_OK


def _curve_doc(curve: CapacityCurve) -> dict:
    return {
        "n": curve.n,
        "samples": [{"horizon": s.horizon, "value": s.value, "residual": s.residual} for s in curve.samples],
        "limit": curve.limit,
        "bracket": list(curve.bracket),
        "verdict": curve.verdict,
        "note": curve.note,
    }


def _curve_csv(samples, manifest: RunManifest, trailer: list[str]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMAS['capacity']}\n")
    for line in manifest.comment_lines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["horizon", "value", "residual"])
    for s in samples:
        w.writerow([s.horizon, repr(float(s.value)), repr(float(s.residual))])
    for line in trailer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


@cli.command("capacity")
@config_option
@click.option("--n", "n", type=click.IntRange(min=0), default=0, show_default=True,
              help="Inner plate X^n.")
@click.option("--horizons", default=None, help="Horizons m, e.g. 1..10 or 1,2,4 (default: doubling up to 64).")
@click.option("--explicit", is_flag=True, help="Solve on the full truncation at every horizon.")
@tol_option
@out_option
@_format_option(["csv", "json"], "csv")
def cmd_capacity(config_path, n, horizons, explicit, tol, out, fmt):
    """Exhaustion of Cap_p(X^n) over horizons, with its verdict."""
    config = load_config(config_path)
    hs = _parse_horizons(horizons) if horizons is not None else None
    if hs is not None and max(hs) <= n:
        raise click.UsageError(f"--n {n} must be below the largest horizon {max(hs)}")
    manifest = RunManifest.build("capacity", config_path,
                                 {"n": n, "horizons": hs, "explicit": explicit, "tol": tol}, out)
    try:
        curve = capacity_exhaustion(config, n, hs, tol, lumped=not explicit)
    except ConvergenceError as exc:
        partial = getattr(exc, "partial", ())
        trailer = [f"error: {exc}", f"failed at horizon: {getattr(exc, 'horizon', None)}"]
        if fmt == "json":
            doc = {"manifest": manifest.as_dict(), "error": str(exc),
                   "samples": [{"horizon": s.horizon, "value": s.value, "residual": s.residual} for s in partial]}
            _emit(_json(doc), out)
        else:
            _emit(_curve_csv(partial, manifest, trailer), out)
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERIC
    summary = [f"verdict: {curve.verdict}",
               f"limit: {curve.limit!r}",
               f"bracket: [{curve.bracket[0]!r}, {curve.bracket[1]!r}]"]
    if fmt == "json":
        _emit(_json({"manifest": manifest.as_dict(), "curve": _curve_doc(curve)}), out)
    else:
        _emit(_curve_csv(curve.samples, manifest, summary), out)
    if out:
        click.echo("\n".join(summary))
    return EXIT_UNDETERMINED if curve.verdict == "undetermined" else EXIT_OK


@cli.command("classify")
@config_option
@click.option("--curve", is_flag=True, help="Attach the exhaustion of Cap_p(X^0) as evidence.")
@tol_option
@_format_option(["text", "json"], "text")
def cmd_classify(config_path, curve, tol, fmt):
    """Parabolic or hyperbolic, with the evidence."""
    config = load_config(config_path)
    manifest = RunManifest.build("classify", config_path, {"curve": curve, "tol": tol})
    result = classify(config, with_curve=curve, tol=tol)
    if fmt == "json":
        doc = {
            "manifest": manifest.as_dict(),
            "verdict": result.verdict,
            "rp": _rp_doc(result.rp),
            "branches": [{"anchor": list(b.anchor), "rp": _rp_doc(b.rp)} for b in result.branches],
            "notes": list(result.notes),
            "curve": _curve_doc(result.curve) if result.curve is not None else None,
        }
        _emit(_json(doc), None)
    else:
        click.echo(f"verdict: {result.verdict}")
        click.echo(f"R_p: {result.rp if result.rp is not None else 'not defined'}")
        for note in result.notes:
            click.echo(f"note: {note}")
        if result.curve is not None:
            c = result.curve
            click.echo(f"capacity curve: {c.verdict}, last value {c.values[-1]!r} at horizon {c.horizons[-1]}")
        click.echo("# " + manifest.comment_lines()[0])
    return EXIT_UNDETERMINED if result.verdict == "undetermined" else EXIT_OK


@cli.command("phase")
@click.option("--K", "K", type=click.IntRange(min=1), required=True)
@click.option("--p", "p", type=click.FloatRange(min=1, min_open=True), required=True)
@click.option("--eps", "eps", required=True, help="epsilon grid: start:stop:count or a comma list.")
@click.option("--beta", "beta", required=True, help="beta grid: start:stop:count or a comma list.")
@out_option
@_format_option(["csv", "json"], "csv")
def cmd_phase(K, p, eps, beta, out, fmt):
    """Phase map of the exponential family lambda = exp(-eps j), mu = exp(-beta j)."""
    eg, bg = _parse_grid(eps, "--eps"), _parse_grid(beta, "--beta")
    manifest = RunManifest.build("phase", None, {"K": K, "p": p, "eps": eg, "beta": bg}, out)
    try:
        points = phase_map(K, p, eg, bg)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    disagree = [pt for pt in points if not pt.agrees]
    if fmt == "json":
        rows = [{"epsilon": pt.epsilon, "beta": pt.beta, "verdict": pt.verdict,
                 "doubling_flag": pt.doubling, "agrees": pt.agrees} for pt in points]
        _emit(_json({"manifest": manifest.as_dict(), "points": rows}), out)
    else:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMAS['phase']}\n")
        for line in manifest.comment_lines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "beta", "verdict", "doubling_flag"])
        for pt in points:
            w.writerow([repr(pt.epsilon), repr(pt.beta), pt.verdict, int(pt.doubling)])
        _emit(buf.getvalue(), out)
    if disagree:
        click.echo(f"{len(disagree)} grid points disagree with the criterion integral", err=True)
        return EXIT_NUMERIC
    return EXIT_OK


@cli.command("harmonic")
@config_option
@click.option("--n-max", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--window", type=click.IntRange(min=1), default=3, show_default=True)
@tol_option
@out_option
@_format_option(["csv", "json"], "csv")
def cmd_harmonic(config_path, n_max, window, tol, out, fmt):
    """Limit of pair-capacity minimizers: a bounded nonconstant p-harmonic function."""
    config = load_config(config_path)
    if window >= n_max:
        raise click.UsageError("--window must be below --n-max")
    manifest = RunManifest.build("harmonic", config_path,
                                 {"n_max": n_max, "window": window, "tol": tol}, out)
    field_, diag = limit_harmonic(config, n_max, window, tol)
    summary = [
        f"energies: {', '.join(repr(e) for e in diag.energies)}",
        f"sup deltas: {', '.join(repr(d) for d in diag.sup_deltas)}",
        f"bounds: [{diag.bounds[0]!r}, {diag.bounds[1]!r}]",
        f"interior residual: {field_.residual!r}",
    ]
    if fmt == "json":
        doc = {"manifest": manifest.as_dict(),
               "field": [{"level": lv, "index": i, "value": v} for lv, i, v in field_.rows()],
               "ns": list(diag.ns), "energies": list(diag.energies),
               "sup_deltas": list(diag.sup_deltas), "bounds": list(diag.bounds),
               "interior_residual": field_.residual}
        _emit(_json(doc), out)
    else:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMAS['harmonic']}\n")
        for line in manifest.comment_lines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "index", "value"])
        for lv, i, v in field_.rows():
            w.writerow([lv, i, repr(v)])
        for line in summary:
            buf.write(f"# {line}\n")
        _emit(buf.getvalue(), out)
    if out:
        click.echo("\n".join(summary))
    return EXIT_OK


@cli.command("verify")
@config_option
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=20, show_default=True,
              help="Random instances per property.")
@tol_option
def cmd_verify(config_path, seed, count, tol):
    """Run the invariant battery; nonzero exit names the failing property."""
    config = load_config(config_path)
    manifest = RunManifest.build("verify", config_path, {"count": count, "tol": tol}, seed=seed)
    results = run_battery(config, seed, count, tol)
    for r in results:
        click.echo(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    click.echo("# " + manifest.comment_lines()[0])
    failed = [r.name for r in results if not r.passed]
    if failed:
        click.echo(f"failed: {', '.join(failed)}", err=True)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    try:
        code = cli.main(args=argv, prog_name="regtree", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_USAGE
    except (PreconditionError, TopologyError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except (ConvergenceError, QuadratureError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERIC
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    return code if isinstance(code, int) else EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
