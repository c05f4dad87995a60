"""Command-line tool: audit workbooks, inspect formulas, generate checks."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Annotated, NoReturn

import click
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from crossfoot.errors import CrossfootError, ExitStatus, LoadError

if TYPE_CHECKING:
    from crossfoot.audit import AuditReport
    from crossfoot.workbook import Cell, Workbook

app = typer.Typer(
    name="crossfoot",
    help="Audit spreadsheet models for broken totals and missing self-checks.",
    no_args_is_help=True,
)
console = Console()
err_console = Console(stderr=True)

SEVERITY_RANK = {"error": 0, "warning": 1, "info": 2}


class OutputFormat(str, Enum):
    text = "text"
    json = "json"


class FailOn(str, Enum):
    error = "error"
    warning = "warning"
    info = "info"


@app.callback()
def main_callback(
    verbose: Annotated[
        bool, typer.Option("--verbose", "-v", help="Show debug logging on stderr")
    ] = False,
) -> None:
    """Self-checks and hazard detection for spreadsheet models."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_time=False, show_path=False)],
        force=True,
    )


def _fail(message: object) -> NoReturn:
    err_console.print(f"[red]Error:[/red] {message}")
    raise typer.Exit(ExitStatus.ERROR)


def load_workbook(path: Path) -> Workbook:
    """Read ``.xlsx`` through the ingester and ``.json`` as a canonical workbook.

    Raises:
        LoadError: For any other extension.
        OSError: If the file cannot be read.
    """
    from crossfoot.workbook import load_canonical
    from crossfoot.xlsx import read_xlsx

    suffix = path.suffix.lower()
    if suffix == ".xlsx":
        return read_xlsx(path.read_bytes())
    if suffix == ".json":
        return load_canonical(path.read_bytes())
    raise LoadError(f"unsupported file type {suffix or '(none)'}; expected .xlsx or .json")


def _open(path: Path) -> Workbook:
    try:
        return load_workbook(path)
    except (CrossfootError, OSError) as exc:
        _fail(f"{path}: {exc}")


def _cell(workbook: Workbook, reference: str) -> Cell:
    from crossfoot.address import parse_address

    try:
        address = parse_address(reference, workbook.front_sheet)
    except CrossfootError as exc:
        _fail(exc)
    if workbook.sheet(address.sheet) is None:
        _fail(f"No sheet named {address.sheet!r}")
    cell = workbook.get_cell(address)
    if cell is None:
        _fail(f"{reference} is empty")
    return cell


def _exceeds(severities: list[str], fail_on: FailOn) -> bool:
    limit = SEVERITY_RANK[fail_on.value]
    return any(SEVERITY_RANK.get(s, 0) <= limit for s in severities)


@app.command()
def audit(
    files: Annotated[list[Path], typer.Argument(help="Workbooks (.xlsx or canonical .json)")],
    config: Annotated[
        Path | None, typer.Option("--config", "-c", help="Audit config (.json, .yaml)")
    ] = None,
    output_format: Annotated[
        OutputFormat, typer.Option("--format", "-f", help="Report format")
    ] = OutputFormat.text,
    fail_on: Annotated[
        FailOn, typer.Option("--fail-on", help="Lowest severity that fails the run")
    ] = FailOn.error,
    jobs: Annotated[int, typer.Option("--jobs", "-j", min=1, help="Files audited at once")] = 4,
) -> None:
    """Run every enabled rule and report the findings."""
    from crossfoot.audit import run_audit
    from crossfoot.config import load_config
    from crossfoot.report import render_text, report_json

    try:
        settings = load_config(config)
    except (CrossfootError, OSError) as exc:
        _fail(exc)

    def one(path: Path) -> AuditReport:
        return run_audit(load_workbook(path), settings, source=path.name)

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(one, path) for path in files]

    reports: list[AuditReport] = []
    broken = False
    for path, future in zip(files, futures):
        try:
            reports.append(future.result())
        except (CrossfootError, OSError) as exc:
            err_console.print(f"[red]Error:[/red] {path}: {exc}")
            broken = True

    if output_format is OutputFormat.json:
        if reports:
            typer.echo(report_json(reports), nl=False)
    else:
        for report in reports:
            render_text(report, console)

    if broken:
        raise typer.Exit(ExitStatus.ERROR)
    severities = [f.severity for r in reports for f in r.findings]
    if _exceeds(severities, fail_on):
        raise typer.Exit(ExitStatus.FINDINGS)


class TreeFormat(str, Enum):
    tree = "tree"
    json = "json"


@app.command()
def parse(
    file: Annotated[Path, typer.Argument(help="Workbook file")],
    cell: Annotated[str, typer.Option("--cell", help="Cell such as Data!B67")],
    output_format: Annotated[
        TreeFormat, typer.Option("--format", "-f", help="AST rendering")
    ] = TreeFormat.tree,
) -> None:
    """Print the syntax tree of a cell's formula."""
    from crossfoot.formula import print_formula, to_dict, to_tree

    target = _cell(_open(file), cell)
    if not target.has_formula:
        _fail(f"{cell} holds a constant, not a formula")
    if target.formula is None:
        _fail(f"{cell}: {target.parse_error}")
    if output_format is TreeFormat.json:
        typer.echo(json.dumps(to_dict(target.formula), indent=2, ensure_ascii=False))
    else:
        typer.echo(print_formula(target.formula))
        typer.echo(to_tree(target.formula))


@app.command("eval")
def eval_cell(
    file: Annotated[Path, typer.Argument(help="Workbook file")],
    cell: Annotated[str, typer.Option("--cell", help="Cell such as Data!B67")],
) -> None:
    """Recalculate the workbook and print one cell's value."""
    from crossfoot.address import parse_address
    from crossfoot.recalc import evaluate_cell
    from crossfoot.workbook import display

    workbook = _open(file)
    try:
        value = evaluate_cell(workbook, parse_address(cell, workbook.front_sheet))
    except CrossfootError as exc:
        _fail(exc)
    typer.echo(display(value))


@app.command("recalc-diff")
def recalc_diff_command(
    file: Annotated[Path, typer.Argument(help="Workbook file with cached values")],
    output_format: Annotated[
        OutputFormat, typer.Option("--format", "-f", help="Output format")
    ] = OutputFormat.text,
) -> None:
    """Compare cached formula results with a fresh recalculation."""
    from crossfoot.recalc import recalc_diff
    from crossfoot.workbook import display, value_to_json

    diff = recalc_diff(_open(file))
    if output_format is OutputFormat.json:
        payload = {
            "entries": [
                {
                    "cell": str(e.address),
                    "stored": value_to_json(e.stored),
                    "computed": value_to_json(e.computed),
                    "delta": e.delta,
                }
                for e in diff.entries
            ],
            "unverifiable": [str(a) for a in diff.unverifiable],
        }
        typer.echo(json.dumps(payload, indent=2, ensure_ascii=False))
    else:
        if diff.entries:
            table = Table()
            table.add_column("Cell")
            table.add_column("Stored", justify="right")
            table.add_column("Computed", justify="right")
            table.add_column("Delta", justify="right")
            for entry in diff.entries:
                table.add_row(
                    str(entry.address),
                    display(entry.stored),
                    display(entry.computed),
                    "" if entry.delta is None else f"{entry.delta:.3g}",
                )
            console.print(table)
        else:
            console.print("[green]Cached values match the recalculation.[/green]")
        if diff.unverifiable:
            listed = ", ".join(str(a) for a in diff.unverifiable)
            console.print(f"[dim]Not verified (unsupported or unparseable): {listed}[/dim]")
    if not diff.clean:
        raise typer.Exit(ExitStatus.FINDINGS)


@app.command("gen-checks")
def gen_checks(
    file: Annotated[Path, typer.Argument(help="Workbook file")],
    config: Annotated[
        Path | None, typer.Option("--config", "-c", help="Audit config (.json, .yaml)")
    ] = None,
    apply: Annotated[
        bool, typer.Option("--apply", help="Write a patched canonical workbook")
    ] = False,
    output: Annotated[
        Path | None, typer.Option("--output", "-o", help="Patched workbook path (.json)")
    ] = None,
) -> None:
    """Propose cross-foot check cells for tables that have none."""
    from crossfoot.checks import apply_patches, generate_all_checks, patches_to_json
    from crossfoot.config import load_config
    from crossfoot.workbook import save_canonical

    if apply and output is None:
        _fail("--apply needs --output")
    workbook = _open(file)
    try:
        settings = load_config(config)
        patches, problems = generate_all_checks(workbook, settings)
    except (CrossfootError, OSError) as exc:
        _fail(exc)
    for problem in problems:
        err_console.print(f"[yellow]Warning:[/yellow] {problem}")

    if not apply:
        typer.echo(patches_to_json(patches))
        return
    assert output is not None
    try:
        patched = apply_patches(workbook, patches)
        output.write_bytes(save_canonical(patched))
    except (CrossfootError, OSError) as exc:
        _fail(exc)
    err_console.print(f"[dim]Wrote {len(patches)} check cells to {output}[/dim]")


@app.command("manifest-check")
def manifest_check(
    file: Annotated[Path, typer.Argument(help="Workbook file")],
    manifest: Annotated[
        Path | None, typer.Option("--manifest", "-m", help="Manifest (default: sidecar)")
    ] = None,
    output_format: Annotated[
        OutputFormat, typer.Option("--format", "-f", help="Output format")
    ] = OutputFormat.text,
    fail_on: Annotated[
        FailOn, typer.Option("--fail-on", help="Lowest severity that fails the run")
    ] = FailOn.error,
) -> None:
    """Validate the governance manifest that accompanies a workbook."""
    from crossfoot.manifest import load_manifest, sidecar_path, validate_manifest

    workbook = _open(file)
    path = manifest or sidecar_path(file)
    try:
        findings = validate_manifest(load_manifest(path), workbook)
    except (CrossfootError, OSError) as exc:
        _fail(exc)

    if output_format is OutputFormat.json:
        payload = {"manifest": path.name, "findings": [f.to_dict() for f in findings]}
        typer.echo(json.dumps(payload, indent=2, ensure_ascii=False))
    elif findings:
        for finding in findings:
            style = "red" if finding.severity == "error" else "yellow"
            console.print(f"[{style}]{finding.severity}[/{style}] {finding.message}")
    else:
        console.print(f"[green]{path.name}: all ten questions answered.[/green]")

    if _exceeds([f.severity for f in findings], fail_on):
        raise typer.Exit(ExitStatus.FINDINGS)


@app.command("manifest-init")
def manifest_init(
    file: Annotated[Path, typer.Argument(help="Workbook file")],
    output: Annotated[
        Path | None, typer.Option("--output", "-o", help="Where to write (default: sidecar)")
    ] = None,
    force: Annotated[bool, typer.Option("--force", help="Overwrite an existing file")] = False,
) -> None:
    """Write a manifest skeleton listing the workbook's check cells."""
    from crossfoot.manifest import dump_manifest, manifest_template, sidecar_path

    workbook = _open(file)
    path = output or sidecar_path(file)
    if path.exists() and not force:
        _fail(f"{path} exists; use --force to overwrite")
    try:
        path.write_text(dump_manifest(manifest_template(workbook)), encoding="utf-8")
    except OSError as exc:
        _fail(exc)
    console.print(f"[green]Wrote[/green] {path}")


def main(argv: list[str] | None = None) -> int:
    """Run the CLI in-process and return the exit status instead of exiting."""
    command = typer.main.get_command(app)
    try:
        result = command.main(args=argv, prog_name="crossfoot", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return ExitStatus.ERROR
    except click.Abort:
        return ExitStatus.ERROR
    return result if isinstance(result, int) else ExitStatus.CLEAN


if __name__ == "__main__":
    app()
