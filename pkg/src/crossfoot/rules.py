"""Audit rules. Each rule maps a workbook and config to a list of findings."""
from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Any

from crossfoot.address import Area, CellAddress
from crossfoot.analysis import Analysis
from crossfoot.checks import (
    crossfoot_check_formula,
    inner_aggregates,
    outer_sum_areas,
    suggest_total_rewrite,
)
from crossfoot.config import (
    AssertionSpec,
    AuditConfig,
    RatioBand,
    Severity,
    beyond_tolerance,
    resolve_target,
)
from crossfoot.errors import ConfigError
from crossfoot.formula import (
    ARITHMETIC_OPS,
    Binary,
    Call,
    FormulaNode,
    NumberLit,
    RangeRef,
    Ref,
    Unary,
    print_formula,
    ref_of,
    unwrap,
    walk,
)
from crossfoot.patterns import (
    AGGREGATE_FUNCTIONS,
    aggregate_of,
    chain_refs,
    inline_aggregates,
    is_text_number,
)
from crossfoot.recalc import static_number, static_reference
from crossfoot.tables import TableRegion
from crossfoot.workbook import Blank, ErrorValue, Number, Text, Workbook, format_general

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Finding:
    """One audit result.

    ``measured`` and ``threshold`` are either both set or both None.
    """

    rule: str
    severity: Severity
    cells: tuple[CellAddress, ...]
    message: str
    measured: float | None = None
    threshold: float | None = None
    suggestion: str | None = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if (self.measured is None) != (self.threshold is None):
            raise ValueError("measured and threshold must be given together")

    @property
    def sheet(self) -> str | None:
        return self.cells[0].sheet if self.cells else None

    def to_dict(self) -> dict[str, Any]:
        entry: dict[str, Any] = {
            "rule": self.rule,
            "severity": self.severity,
            "sheet": self.sheet,
            "cells": [str(c) for c in self.cells],
            "message": self.message,
        }
        if self.measured is not None:
            entry["measured"] = self.measured
            entry["threshold"] = self.threshold
        if self.suggestion is not None:
            entry["suggestion"] = self.suggestion
        if self.notes:
            entry["notes"] = list(self.notes)
        return entry


def _number(analysis: Analysis, address: CellAddress) -> float | ErrorValue | None:
    value = analysis.values.get(address)
    if isinstance(value, Number):
        return value.value
    if isinstance(value, ErrorValue):
        return value
    return None


def _total(analysis: Analysis, cells: list[CellAddress]) -> float | ErrorValue:
    """Sum of the numbers among ``cells``; the first error value wins."""
    total = 0.0
    for address in cells:
        value = _number(analysis, address)
        if isinstance(value, ErrorValue):
            return value
        if value is not None:
            total += value
    return total


def _present(workbook: Workbook, area: Area) -> list[CellAddress]:
    sheet = workbook.sheet(area.sheet)
    if sheet is None:
        return []
    return [c.address for c in sheet.sorted_cells() if area.contains(c.address)]


# --- R1: cross-foot ---


def _mismatched_totals(analysis: Analysis, table: TableRegion, config: AuditConfig) -> list[str]:
    """Totals cells whose value differs from a direct sum of their body line."""
    notes: list[str] = []
    body = table.body
    lines = [
        (address, Area(table.sheet, body.top, address.col, body.bottom, address.col))
        for address in table.column_totals()
    ] + [
        (address, Area(table.sheet, address.row, body.left, address.row, body.right))
        for address in table.row_totals()
    ]
    for address, line in lines:
        shown = _number(analysis, address)
        direct = _total(analysis, list(line.addresses()))
        if not isinstance(shown, float) or isinstance(direct, ErrorValue):
            continue
        if beyond_tolerance(abs(shown - direct), config.threshold(shown, direct)):
            notes.append(
                f"{address.text(False)} shows {format_general(shown)} but "
                f"{line.text()} sums to {format_general(direct)}"
            )
    return notes


def check_crossfoot(
    workbook: Workbook,
    table: TableRegion,
    config: AuditConfig,
    analysis: Analysis | None = None,
) -> list[Finding]:
    """Compare the column totals with the row totals of one table.

    Two measures are reported separately: the difference between the sum of
    the totals row and the sum of the totals column, and the difference
    between a quarter of the whole table and its grand total. A table that no
    check cell covers gets an info finding suggesting one.
    """
    if table.grand_total is None:
        return []
    analysis = analysis or Analysis.of(workbook, config)
    grand = table.grand_total
    findings: list[Finding] = []

    across = _total(analysis, table.column_totals())
    down = _total(analysis, table.row_totals())
    grand_value = _number(analysis, grand)
    whole = _total(analysis, list(table.bounds.addresses()))
    broken = [v for v in (across, down, grand_value, whole) if isinstance(v, ErrorValue)]
    if broken:
        findings.append(
            Finding(
                "R1",
                "error",
                (grand,),
                f"Totals of {table.describe()} hold {broken[0].code}; cross-foot not possible",
            )
        )
    else:
        assert isinstance(across, float) and isinstance(down, float)
        assert isinstance(whole, float)
        notes = tuple(_mismatched_totals(analysis, table, config))
        gap = abs(across - down)
        limit = config.threshold(across, down)
        if beyond_tolerance(gap, limit):
            findings.append(
                Finding(
                    "R1",
                    "error",
                    (grand,),
                    f"Totals across and down do not match in {table.describe()}",
                    measured=gap,
                    threshold=limit,
                    notes=notes,
                )
            )
        if isinstance(grand_value, float):
            quarter = whole / 4
            gap = abs(quarter - grand_value)
            limit = config.threshold(quarter, grand_value)
            if beyond_tolerance(gap, limit):
                findings.append(
                    Finding(
                        "R1",
                        "error",
                        (grand,),
                        f"Grand total {grand.text(False)} is not a quarter of "
                        f"{table.bounds.text()}",
                        measured=gap,
                        threshold=limit,
                        notes=notes,
                    )
                )

    if not analysis.table_checked(table):
        findings.append(
            Finding(
                "R1",
                "info",
                (grand,),
                f"missing check cell for {table.describe()}",
                suggestion=crossfoot_check_formula(workbook, table, config),
            )
        )
    return findings


def detect_crossfoot(
    workbook: Workbook, config: AuditConfig, analysis: Analysis | None = None
) -> list[Finding]:
    analysis = analysis or Analysis.of(workbook, config)
    return [
        finding
        for table in analysis.tables
        for finding in check_crossfoot(workbook, table, config, analysis)
    ]


# --- R2: chained plus ---


def detect_chained_plus(
    workbook: Workbook, config: AuditConfig, analysis: Analysis | None = None
) -> list[Finding]:
    findings: list[Finding] = []
    for cell in workbook.formula_cells():
        assert cell.formula is not None
        refs = chain_refs(cell.formula)
        if refs is not None and len(refs) >= config.chain_plus_min:
            count, what = len(refs), "cell references"
        else:
            aggregates = inline_aggregates(cell.formula)
            if aggregates is None or len(aggregates) < config.chain_plus_min:
                continue
            count, what = len(aggregates), "inline totals"
        rewrite = suggest_total_rewrite(workbook, cell.address, config.chain_plus_min)
        findings.append(
            Finding(
                "R2",
                "warning",
                (cell.address,),
                f"Total adds {count} {what} one by one; a missed or extra term is easy to miss",
                measured=float(count),
                threshold=float(config.chain_plus_min),
                suggestion=rewrite.options[0] if rewrite else None,
                notes=tuple(rewrite.notes()) if rewrite else (),
            )
        )
    return findings


# --- R3: insertion risk ---


def _aggregated_ranges(node: FormulaNode) -> Iterator[tuple[Call, RangeRef]]:
    for current in walk(node):
        if not isinstance(current, Call) or current.name not in AGGREGATE_FUNCTIONS:
            continue
        args = current.args[1:] if current.name == "SUBTOTAL" else current.args
        for arg in args:
            inner = unwrap(arg)
            if isinstance(inner, RangeRef):
                yield current, inner


def _anchored_end(workbook: Workbook, cell: CellAddress, node: FormulaNode) -> bool:
    """True for ``OFFSET(<self>,-1,0)`` or ``INDEX(<own column>,ROW()-1)``."""
    end = unwrap(node)
    if not isinstance(end, Call):
        return False
    if end.name == "OFFSET" and len(end.args) == 3:
        anchor = unwrap(end.args[0])
        steps = (
            static_number(workbook, cell, end.args[1]),
            static_number(workbook, cell, end.args[2]),
        )
        return (
            isinstance(anchor, Ref)
            and workbook.canonical(anchor.address) == cell
            and steps in ((-1.0, 0.0), (0.0, -1.0))
        )
    if end.name == "INDEX" and len(end.args) == 2:
        column = unwrap(end.args[0])
        row = static_number(workbook, cell, end.args[1])
        return (
            isinstance(column, RangeRef)
            and column.whole_column
            and column.area is not None
            and column.area.left == cell.col
            and column.area.sheet.lower() == cell.sheet.lower()
            and row == cell.row - 1
        )
    return False


def _clear(
    workbook: Workbook, analysis: Analysis, config: AuditConfig, address: CellAddress | None
) -> bool:
    """A blank cell, an insertion prompt, or the edge of the grid."""
    if address is None:
        return True
    cell = workbook.get_cell(address)
    if cell is None:
        return True
    if cell.has_formula:
        return False
    value = analysis.values.get(address)
    if isinstance(value, Blank):
        return True
    return isinstance(value, Text) and config.is_boundary_marker(value.value)


def _anchored_suggestion(
    call: Call, rng: RangeRef, cell: CellAddress, vertical: bool
) -> str | None:
    if aggregate_of(call) is None:
        return None
    anchored = RangeRef(
        rng.start,
        Call(
            "OFFSET",
            (
                ref_of(cell, cell.sheet),
                NumberLit(-1) if vertical else NumberLit(0),
                NumberLit(0) if vertical else NumberLit(-1),
            ),
        ),
        False,
    )
    args = (NumberLit(9), anchored) if call.name == "SUBTOTAL" else (anchored,)
    return print_formula(Call(call.name, args))


def detect_insertion_risk(
    workbook: Workbook, config: AuditConfig, analysis: Analysis | None = None
) -> list[Finding]:
    """Flag summed ranges that do not begin and end at a blank cell.

    Rows inserted just outside such a range are silently left out of the
    total. A bottom end anchored with ``OFFSET(<self>,-1,0)`` or
    ``INDEX(<column>,ROW()-1)`` follows insertions, so only the top is checked.
    """
    analysis = analysis or Analysis.of(workbook, config)
    findings: list[Finding] = []
    for cell in workbook.formula_cells():
        assert cell.formula is not None
        here = cell.address
        seen: set[tuple[CellAddress, str]] = set()
        for call, rng in _aggregated_ranges(cell.formula):
            if rng.whole_column:
                continue
            anchored = not rng.is_static and _anchored_end(workbook, here, rng.end)
            resolved = static_reference(workbook, here, rng)
            if resolved is None:
                continue
            area = resolved.area
            if area.size == 1 or (area.height > 1 and area.width > 1):
                continue
            vertical = area.width == 1
            if vertical:
                before, after = area.start.shifted(-1, 0), area.end.shifted(1, 0)
            else:
                before, after = area.start.shifted(0, -1), area.end.shifted(0, 1)
            ends = [("top", before, "starts right after")]
            if not anchored:
                ends.append(("bottom", after, "ends right before"))
            for side, neighbour, wording in ends:
                if neighbour is None or _clear(workbook, analysis, config, neighbour):
                    continue
                if (neighbour, side) in seen:
                    continue
                seen.add((neighbour, side))
                suggestion = None
                if side == "bottom" and neighbour == here:
                    suggestion = _anchored_suggestion(call, rng, here, vertical)
                findings.append(
                    Finding(
                        "R3",
                        "warning",
                        (here, neighbour),
                        f"Range {area.text()} {wording} non-blank "
                        f"{neighbour.text(False)}; cells inserted there are left out",
                        suggestion=suggestion,
                    )
                )
    return findings


# --- R4: double counting ---


def _halved(node: FormulaNode) -> set[int]:
    """Identities of SUM calls used as ``SUM(...)/2`` or ``SUM(...)/4``."""
    exempt: set[int] = set()
    for current in walk(node):
        if not isinstance(current, Binary) or current.op != "/":
            continue
        left, right = unwrap(current.left), unwrap(current.right)
        if isinstance(left, Call) and isinstance(right, NumberLit) and right.value in (2, 4):
            exempt.add(id(left))
    return exempt


def detect_double_count(
    workbook: Workbook, config: AuditConfig, analysis: Analysis | None = None
) -> list[Finding]:
    """Flag SUMs whose range also holds subtotals of parts of that range."""
    findings: list[Finding] = []
    for cell in workbook.formula_cells():
        assert cell.formula is not None
        exempt = _halved(cell.formula)
        for call, area in outer_sum_areas(workbook, cell.formula):
            if id(call) in exempt:
                continue
            inner = inner_aggregates(workbook, area, cell.address)
            if not inner:
                continue
            rewrite = suggest_total_rewrite(workbook, cell.address, config.chain_plus_min)
            findings.append(
                Finding(
                    "R4",
                    "warning",
                    (cell.address, *(address for address, _ in inner)),
                    f"SUM over {area.text()} also adds {len(inner)} subtotal "
                    "cells inside it, counting their inputs twice",
                    suggestion=rewrite.options[0] if rewrite else None,
                    notes=tuple(rewrite.notes()) if rewrite else (),
                )
            )
            break
    return findings


# --- R5: check indicators on the front sheet ---


def _chained(refs: list[CellAddress], sheet: str) -> str:
    node: FormulaNode = ref_of(refs[0], sheet)
    for address in refs[1:]:
        node = Binary("&", node, ref_of(address, sheet))
    return print_formula(node)


def check_indicator_propagation(
    workbook: Workbook, config: AuditConfig, analysis: Analysis | None = None
) -> list[Finding]:
    """Every sheet with check cells must have one of them shown on the front sheet."""
    analysis = analysis or Analysis.of(workbook, config)
    if not analysis.checks:
        return [Finding("R5", "info", (), "no self-checks found")]
    front = workbook.front_sheet
    shown: set[CellAddress] = set()
    for address in workbook.sheet(front).cells:  # type: ignore[union-attr]
        shown |= analysis.graph.precedents(address)
        shown |= analysis.graph.anchors.get(address, frozenset())
    findings: list[Finding] = []
    for sheet in workbook.sheets:
        if sheet.name == front:
            continue
        checks = analysis.checks_on(sheet.name)
        if not checks or any(c in shown for c in checks):
            continue
        findings.append(
            Finding(
                "R5",
                "warning",
                tuple(checks),
                f"Front sheet '{front}' does not carry forward the checks on sheet "
                f"'{sheet.name}'",
                suggestion=_chained(checks, front),
            )
        )
    return findings


# --- R6: text numbers in arithmetic ---


def _operands(node: FormulaNode) -> Iterator[FormulaNode]:
    for current in walk(node):
        if isinstance(current, Binary) and current.op in ARITHMETIC_OPS:
            yield unwrap(current.left)
            yield unwrap(current.right)
        elif isinstance(current, Unary):
            yield unwrap(current.child)


def detect_text_number_hazard(
    workbook: Workbook, config: AuditConfig, analysis: Analysis | None = None
) -> list[Finding]:
    """Flag arithmetic on cells holding FIXED/DOLLAR text.

    Range aggregates skip such text, but an operator applied to the single
    cell turns it back into a number, so the two disagree.
    """
    findings: list[Finding] = []
    for cell in workbook.formula_cells():
        assert cell.formula is not None
        flagged: set[CellAddress] = set()
        for operand in _operands(cell.formula):
            if not isinstance(operand, Ref):
                continue
            target = workbook.get_cell(operand.address)
            if target is None or target.formula is None or not is_text_number(target.formula):
                continue
            if target.address in flagged:
                continue
            flagged.add(target.address)
            source = unwrap(target.formula)
            maker = source.name if isinstance(source, Call) else "FIXED"
            findings.append(
                Finding(
                    "R6",
                    "warning",
                    (cell.address, target.address),
                    f"{target.address.text(False)} holds text from {maker}; arithmetic "
                    "reads it as a number while SUM skips it",
                    suggestion=f"Reference the number behind {target.address} instead",
                )
            )
    return findings


# --- R7 / R8: declared assertions ---


class _Unresolved(Exception):
    """An assertion side that cannot be read."""


def _side(
    workbook: Workbook, analysis: Analysis, text: str
) -> tuple[Area, list[CellAddress], float]:
    area = resolve_target(text, workbook.front_sheet)
    if workbook.sheet(area.sheet) is None:
        raise _Unresolved(f"{text!r} refers to a missing sheet")
    cells = _present(workbook, area)
    if not cells:
        raise _Unresolved(f"{text!r} refers to cells that do not exist")
    total = _total(analysis, cells)
    if isinstance(total, ErrorValue):
        raise _Unresolved(f"{text!r} holds {total.code}")
    return area, cells, total


def _assertion(
    workbook: Workbook, analysis: Analysis, spec: AssertionSpec
) -> list[Finding]:
    name = spec.name()
    lhs_area, lhs_cells, lhs = _side(workbook, analysis, spec.lhs)
    anchor = workbook.canonical(lhs_area.start) or lhs_area.start

    if spec.kind in ("equality", "convergence", "sum_to_constant"):
        if isinstance(spec.rhs, str):
            _, _, rhs = _side(workbook, analysis, spec.rhs)
        else:
            assert spec.rhs is not None
            rhs = float(spec.rhs)
        gap = abs(lhs - rhs)
        if gap <= spec.tolerance:
            return []
        if spec.kind == "convergence":
            return [
                Finding(
                    "R7",
                    "error",
                    (anchor,),
                    f"{name}: iteration has not converged",
                    measured=gap,
                    threshold=spec.tolerance,
                )
            ]
        return [
            Finding(
                "R7",
                "error",
                (anchor,),
                f"{name}: {format_general(lhs)} does not equal {format_general(rhs)}",
                measured=lhs,
                threshold=rhs,
            )
        ]

    findings: list[Finding] = []
    for address in lhs_cells:
        value = _number(analysis, address)
        if not isinstance(value, float):
            continue
        if spec.kind == "sign":
            ok = {
                "positive": value > 0,
                "negative": value < 0,
                "nonnegative": value >= 0,
                "nonpositive": value <= 0,
            }[spec.sign or "nonnegative"]
            if not ok:
                findings.append(
                    Finding(
                        "R7",
                        "error",
                        (address,),
                        f"{name}: {address.text(False)} should be {spec.sign}",
                        measured=value,
                        threshold=0.0,
                    )
                )
        elif spec.lo is not None and value < spec.lo - spec.tolerance:
            findings.append(
                Finding(
                    "R7",
                    "error",
                    (address,),
                    f"{name}: {address.text(False)} is below {format_general(spec.lo)}",
                    measured=value,
                    threshold=spec.lo,
                )
            )
        elif spec.hi is not None and value > spec.hi + spec.tolerance:
            findings.append(
                Finding(
                    "R7",
                    "error",
                    (address,),
                    f"{name}: {address.text(False)} is above {format_general(spec.hi)}",
                    measured=value,
                    threshold=spec.hi,
                )
            )
    return findings


def _ratio(workbook: Workbook, analysis: Analysis, band: RatioBand) -> list[Finding]:
    num_area, _, numerator = _side(workbook, analysis, band.numerator)
    _, _, denominator = _side(workbook, analysis, band.denominator)
    anchor = workbook.canonical(num_area.start) or num_area.start
    if denominator == 0:
        return [Finding("R8", "error", (anchor,), f"{band.name()}: denominator is zero")]
    ratio = numerator / denominator
    allowed = band.band_fraction * abs(band.reference_ratio)
    if abs(ratio - band.reference_ratio) <= allowed:
        return []
    return [
        Finding(
            "R8",
            "error",
            (anchor,),
            f"{band.name()}: ratio {format_general(ratio)} is outside "
            f"{format_general(band.reference_ratio)} +/- {format_general(allowed)}",
            measured=ratio,
            threshold=band.reference_ratio,
        )
    ]


def check_assertions(
    workbook: Workbook, config: AuditConfig, analysis: Analysis | None = None
) -> list[Finding]:
    """Evaluate the declared balance (R7) and proportion (R8) checks.

    An assertion that names a missing sheet or empty cells, or whose cells
    hold error values, yields an error finding instead of a verdict.
    """
    analysis = analysis or Analysis.of(workbook, config)
    findings: list[Finding] = []
    for spec in config.assertions:
        try:
            findings.extend(_assertion(workbook, analysis, spec))
        except (_Unresolved, ConfigError) as exc:
            findings.append(Finding("R7", "error", (), f"config error in {spec.name()}: {exc}"))
    for band in config.ratio_bands:
        try:
            findings.extend(_ratio(workbook, analysis, band))
        except (_Unresolved, ConfigError) as exc:
            findings.append(Finding("R8", "error", (), f"config error in {band.name()}: {exc}"))
    return findings

