"""Render audit reports as JSON or as rich text."""
from __future__ import annotations

import json
from collections.abc import Sequence
from typing import Any

from rich.console import Console
from rich.table import Table

from crossfoot.audit import AuditReport
from crossfoot.workbook import format_general

SEVERITY_STYLE = {"error": "red", "warning": "yellow", "info": "cyan"}


def to_json(payload: Any) -> str:
    """Stable JSON: two-space indent, key order preserved, trailing newline."""
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def report_json(reports: Sequence[AuditReport]) -> str:
    """One report as an object, several as a list in argument order."""
    if len(reports) == 1:
        return to_json(reports[0].to_dict())
    return to_json([r.to_dict() for r in reports])


def _cells(finding_cells: Sequence[Any]) -> str:
    shown = [str(c) for c in finding_cells[:4]]
    if len(finding_cells) > 4:
        shown.append(f"+{len(finding_cells) - 4} more")
    return ", ".join(shown)


def render_text(report: AuditReport, console: Console) -> None:
    """Print a findings table, the counts and the self-check statistics."""
    title = report.source or "workbook"
    console.print(f"\n[bold]crossfoot {report.version}[/bold]  {title}")

    for warning in report.warnings:
        console.print(f"[yellow]Warning:[/yellow] {warning}")

    if report.findings:
        table = Table(show_lines=False, expand=False)
        table.add_column("Severity")
        table.add_column("Rule")
        table.add_column("Cells", overflow="fold")
        table.add_column("Message", overflow="fold")
        table.add_column("Measured", justify="right")
        for finding in report.findings:
            style = SEVERITY_STYLE.get(finding.severity, "")
            measured = ""
            if finding.measured is not None and finding.threshold is not None:
                measured = (
                    f"{format_general(finding.measured)} / "
                    f"{format_general(finding.threshold)}"
                )
            message = finding.message
            if finding.suggestion:
                message += f"\n[dim]suggest:[/dim] {finding.suggestion}"
            for note in finding.notes:
                message += f"\n[dim]{note}[/dim]"
            table.add_row(
                f"[{style}]{finding.severity}[/{style}]",
                finding.rule,
                _cells(finding.cells),
                message,
                measured,
            )
        console.print(table)
    else:
        console.print("[green]No findings.[/green]")

    counts = report.counts
    console.print(
        f"[red]{counts['error']} errors[/red], "
        f"[yellow]{counts['warning']} warnings[/yellow], "
        f"[cyan]{counts['info']} info[/cyan]"
    )
    stats = report.stats
    per_check = stats["formulas_per_check"]
    console.print(
        f"[dim]{stats['formulas']} formulas, {stats['check_cells']} check cells"
        + (f" (one per {per_check} formulas)" if per_check is not None else "")
        + f", {stats['tables']} tables[/dim]"
    )
    console.print(f"[dim italic]{report.footer}[/dim italic]")
