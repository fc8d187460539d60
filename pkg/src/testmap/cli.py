"""Command-line interface: analyze, map, explain, diff.

Exit codes: 0 success, 1 internal error, 2 invalid input.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from . import __version__
from .classfile import InputError
from .classify import BUCKETS, SCOPES, SchemaMismatch, diff_reports, dump_report, load_report
from .hierarchy import CyclicHierarchy
from .knowledge import ConfigError, load_knowledge_base
from .treemap import MalformedCoverage, Mode, ingest_coverage, render_map

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2
_BUCKET_LABELS = {"not_testable": "not-testable", "trivial": "trivial", "testable": "testable"}


class InvalidInput(click.ClickException):
    exit_code = EXIT_INVALID


def _read_report(path: Path) -> dict:
    try:
        return load_report(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInput(f"cannot read report {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path} is not a JSON report: {exc}")
    except SchemaMismatch as exc:
        raise InvalidInput(f"{path}: {exc}")


def _summary_lines(report: dict, scope: str) -> list[str]:
    rows = report["segmentation"][scope]
    width = max([len("scope")] + [len(s["id"]) for s in rows])
    header = f"{'scope':<{width}}  {'LOC':>7}  " + "  ".join(f"{_BUCKET_LABELS[b]:>13}" for b in BUCKETS)
    lines = [header, "-" * len(header)]
    for s in rows:
        cells = "  ".join(f"{s['buckets'][b]['percent']:>12.1f}%" for b in BUCKETS)
        lines.append(f"{s['id']:<{width}}  {s['loc_total']:>7}  {cells}")
    return lines


@click.group()
@click.version_option(__version__, prog_name="testmap")
@click.option("-v", "--verbose", is_flag=True, help="Show warnings and progress on stderr.")
def main(verbose: bool) -> None:
    """Classify JVM methods as trivial, unit-testable or not unit-testable."""
    logging.basicConfig(level=logging.INFO if verbose else logging.ERROR, format="%(levelname)s: %(message)s")


def _load_kb(kb_path: Optional[Path]):
    try:
        return load_knowledge_base(kb_path)
    except ConfigError as exc:
        raise InvalidInput(f"knowledge base {kb_path}: {exc}")


def _run_analysis(app, dep, kb_path, threads):
    from .pipeline import analyze

    if not app:
        raise InvalidInput("at least one --app path is required")
    kb = _load_kb(kb_path)
    try:
        return analyze(list(app), list(dep), kb, threads=threads)
    except InputError as exc:
        raise InvalidInput(str(exc))
    except CyclicHierarchy as exc:
        raise InvalidInput(f"cyclic class hierarchy: {exc}")


_existing = click.Path(exists=True, path_type=Path)
_kb_option = click.option("--kb", "kb_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                          envvar="TESTMAP_KB", help="TOML knowledge-base config (env: TESTMAP_KB).")


@main.command()
@click.option("--app", multiple=True, type=_existing, help="Application classes: directory, .class or .jar.")
@click.option("--dep", multiple=True, type=_existing, help="Dependency classes (analyzed, not reported).")
@_kb_option
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=Path("out"),
              show_default=True)
@click.option("--threads", type=click.IntRange(1, 256), default=1, show_default=True)
@click.option("--scope", type=click.Choice(SCOPES), default="repo", show_default=True,
              help="Granularity of the console summary.")
def analyze(app, dep, kb_path, out_dir: Path, threads: int, scope: str) -> None:
    """Analyze inputs and write OUT/report.json."""
    result = _run_analysis(app, dep, kb_path, threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    path.write_text(dump_report(result.report), encoding="utf-8")
    for d in result.report["diagnostics"]:
        click.echo(f"warning: {d['location']}: {d['message']}", err=True)
    click.echo("\n".join(_summary_lines(result.report, scope)))
    click.echo(f"report written to {path}")


@main.command("map")
@click.option("--report", "report_path", required=True, type=click.Path(path_type=Path))
@click.option("--mode", "modes", multiple=True, type=click.Choice([m.value for m in Mode]),
              default=[Mode.TESTABILITY.value], show_default=True)
@click.option("--coverage", "coverage_path", type=click.Path(path_type=Path),
              help="JaCoCo-style coverage XML (required for --mode coverage).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Output directory (default: the report's directory).")
@click.option("--scope", type=click.Choice(SCOPES), default="module", show_default=True,
              help="Top-level grouping of the map.")
@click.option("--max-complexity", type=click.IntRange(2, None), default=15, show_default=True)
def map_cmd(report_path: Path, modes, coverage_path: Optional[Path], out_dir: Optional[Path], scope: str,
            max_complexity: int) -> None:
    """Render testability/complexity/coverage treemaps as SVG."""
    if not report_path.exists():
        raise InvalidInput(f"report not found: {report_path}")
    report = _read_report(report_path)
    coverage = None
    if Mode.COVERAGE.value in modes:
        if coverage_path is None:
            raise InvalidInput("--mode coverage requires --coverage <xml>")
        try:
            coverage = ingest_coverage(coverage_path.read_bytes())
        except OSError as exc:
            raise InvalidInput(f"cannot read coverage file {coverage_path}: {exc}")
        except MalformedCoverage as exc:
            raise InvalidInput(f"{coverage_path}: {exc}")
    out_dir = out_dir or report_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    for mode in dict.fromkeys(modes):
        svg = render_map(report["methods"], mode, scope=scope, coverage=coverage, max_complexity=max_complexity)
        target = out_dir / f"{mode}.svg"
        target.write_bytes(svg)
        click.echo(f"wrote {target}")


def _find_methods(records: list[dict], query: str) -> list[dict]:
    exact = [r for r in records if r["id"] == query]
    if exact:
        return exact
    return [r for r in records if r["id"].split("(")[0] == query]


def _print_record(r: dict) -> None:
    label = r["classification"]
    if r["reasons"]:
        label += f" ({', '.join(r['reasons'])})"
    elif r["detail"]:
        label += f" ({r['detail']})"
    click.echo(f"{r['id']}")
    where = f"{r['source_file']}:{r['line']}" if r.get("source_file") and r.get("line") else "no line info"
    click.echo(f"  classification: {label}")
    click.echo(f"  location: {where}; {r['loc']} LOC; complexity {r['complexity']}")
    if r["classification"] != "NotTestable":
        click.echo("  no issues")
        return
    trace = r.get("trace")
    if trace:
        click.echo(f"  cannot be mocked: {trace['category']} (root cause trace)")
        for hop in trace["chain"]:
            at = f" line {hop['line']}" if hop.get("line") is not None else ""
            click.echo(f"    at {hop['method']}{at}")
        for f in trace["non_injectable_fields"]:
            click.echo(f"  non-injectable field: {f}")
    if "Observability" in r["reasons"]:
        click.echo("  nothing to observe: no return value, escaping exception, readable field write, "
                   "or call on an injectable dependency")


@main.command()
@click.argument("method_id")
@click.option("--report", "report_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--app", multiple=True, type=_existing)
@click.option("--dep", multiple=True, type=_existing)
@_kb_option
@click.option("--threads", type=click.IntRange(1, 256), default=1)
def explain(method_id: str, report_path: Optional[Path], app, dep, kb_path, threads: int) -> None:
    """Explain the classification of METHOD_ID (e.g. 'pkg.Cls.m' or 'pkg.Cls.m(I)V')."""
    if report_path is not None:
        records = _read_report(report_path)["methods"]
    else:
        records = _run_analysis(app, dep, kb_path, threads).records
    matches = _find_methods(records, method_id)
    if not matches:
        raise InvalidInput(f"method not found: {method_id}")
    for r in matches:
        _print_record(r)


@main.command()
@click.argument("before", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("after", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Diff JSON path (default: diff.json next to AFTER).")
def diff(before: Path, after: Path, out_path: Optional[Path]) -> None:
    """Compare two reports: bucket deltas and per-method transitions."""
    result = diff_reports(_read_report(before), _read_report(after))
    out_path = out_path or after.parent / "diff.json"
    out_path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    repo = result["scopes"]["repo"][0]["buckets"] if result["scopes"]["repo"] else {}
    for b in BUCKETS:
        d = repo.get(b)
        if d:
            click.echo(f"{_BUCKET_LABELS[b]:>13}: {d['percent_before']:5.1f}% -> {d['percent_after']:5.1f}% "
                       f"({d['loc_delta']:+d} LOC)")
    for t in result["transitions"]:
        click.echo(f"  {t['id']}: {t['before']} -> {t['after']}")
    for r in result["removed"]:
        click.echo(f"  removed {r['id']} ({r['classification']})")
    for a in result["added"]:
        click.echo(f"  added {a['id']} ({a['classification']})")
    click.echo(f"diff written to {out_path}")


def run(argv: Optional[list[str]] = None) -> int:
    """Entry point with the 0/1/2 exit-code contract; internal errors exit 1."""
    try:
        main.main(args=argv, prog_name="testmap", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INTERNAL
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort guard for the exit-code contract
        click.echo(f"internal error: {exc!r}", err=True)
        return EXIT_INTERNAL
    return EXIT_OK


def entry() -> None:
    sys.exit(run())
