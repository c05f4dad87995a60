"""Check-formula generation, total rewrites and patch application."""
from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from crossfoot.address import Area, CellAddress
from crossfoot.analysis import Analysis
from crossfoot.config import GAP_DIGITS, AuditConfig
from crossfoot.errors import CheckGenerationError, CrossfootError, LoadError, PatchApplyError
from crossfoot.formula import (
    Binary,
    Call,
    FormulaNode,
    NumberLit,
    TextLit,
    print_formula,
    range_of,
    ref_of,
    unwrap,
    walk,
)
from crossfoot.patterns import Aggregate, aggregate_of, chain_refs, inline_aggregates, tiling
from crossfoot.tables import TableRegion
from crossfoot.workbook import Cell, Workbook, make_formula_cell

logger = logging.getLogger(__name__)

SEARCH_DISTANCE = 3


@dataclass(frozen=True)
class CheckPatch:
    """A formula to place in a blank cell."""

    target: CellAddress
    formula: str
    rule: str = "R1"
    table: Area | None = None

    def to_dict(self) -> dict[str, str]:
        entry = {"target": str(self.target), "formula": self.formula, "rule": self.rule}
        if self.table is not None:
            entry["table"] = str(self.table)
        return entry


def _sum_holder(workbook: Workbook, area: Area, exclude: Area) -> CellAddress | None:
    """First cell outside ``exclude`` whose formula is exactly ``SUM(area)``."""
    sheet = workbook.sheet(area.sheet)
    if sheet is None:
        return None
    for cell in sheet.sorted_cells():
        if cell.formula is None or exclude.contains(cell.address):
            continue
        aggregate = aggregate_of(cell.formula)
        if aggregate is not None and aggregate.function == "SUM" and aggregate.area == area:
            return cell.address
    return None


def crossfoot_check_formula(workbook: Workbook, table: TableRegion, config: AuditConfig) -> str:
    """The cross-foot check for a table, ``=IF(ROUND(ABS(X-Y),9)<tol,"",message)``.

    X sums the column-totals row and Y the row-totals column. Existing cells
    that already hold exactly those sums are referenced instead of repeating
    the SUM. The gap is rounded so that a change of exactly the tolerance
    still trips the check.

    Raises:
        CheckGenerationError: If the table lacks a totals row or column.
    """
    if table.totals_row is None or table.totals_col is None:
        raise CheckGenerationError(
            f"{table.describe()} needs both a totals row and a totals column"
        )
    body = table.body
    row_area = Area(table.sheet, table.totals_row, body.left, table.totals_row, body.right)
    col_area = Area(table.sheet, body.top, table.totals_col, body.bottom, table.totals_col)

    def operand(area: Area) -> FormulaNode:
        holder = _sum_holder(workbook, area, table.bounds)
        if holder is not None:
            return ref_of(holder, table.sheet)
        return Call("SUM", (range_of(area, table.sheet),))

    difference = Binary("-", operand(row_area), operand(col_area))
    node = Call(
        "IF",
        (
            Binary(
                "<",
                Call("ROUND", (Call("ABS", (difference,)), NumberLit(float(GAP_DIGITS)))),
                NumberLit(config.tolerance_abs),
            ),
            TextLit(""),
            TextLit(config.check_message),
        ),
    )
    return print_formula(node)


def _free(workbook: Workbook, address: CellAddress | None, taken: set[CellAddress]) -> bool:
    if address is None or address in taken:
        return False
    cell = workbook.get_cell(address)
    return cell is None or cell.is_blank


def generate_crossfoot_check(
    workbook: Workbook,
    table: TableRegion,
    config: AuditConfig,
    taken: Iterable[CellAddress] = (),
) -> CheckPatch:
    """Place the cross-foot check below the grand total, else to its right.

    Args:
        workbook: Workbook containing the table.
        table: A table with both totals lines.
        config: Supplies tolerance and message text.
        taken: Cells already claimed by other patches.

    Raises:
        CheckGenerationError: If the table lacks totals, or no blank cell lies
            within three cells of the grand total.
    """
    formula = crossfoot_check_formula(workbook, table, config)
    grand = table.grand_total
    assert grand is not None
    claimed = set(taken)
    for rows, cols in [(k, 0) for k in range(1, SEARCH_DISTANCE + 1)] + [
        (0, k) for k in range(1, SEARCH_DISTANCE + 1)
    ]:
        candidate = grand.shifted(rows, cols)
        if _free(workbook, candidate, claimed):
            assert candidate is not None
            return CheckPatch(candidate, formula, "R1", table.bounds)
    raise CheckGenerationError(
        f"No blank cell within {SEARCH_DISTANCE} cells of grand total {grand}; "
        f"place this check manually: {formula}"
    )


def generate_all_checks(
    workbook: Workbook, config: AuditConfig, analysis: Analysis | None = None
) -> tuple[list[CheckPatch], list[str]]:
    """Checks for every cross-footed table that no check cell covers yet.

    Returns:
        The patches, and one message per table that could not be handled.
    """
    analysis = analysis or Analysis.of(workbook, config)
    patches: list[CheckPatch] = []
    problems: list[str] = []
    taken: set[CellAddress] = set()
    for table in analysis.tables:
        if not table.cross_footed or analysis.table_checked(table):
            continue
        try:
            patch = generate_crossfoot_check(workbook, table, config, taken)
        except CheckGenerationError as exc:
            logger.warning("%s: %s", table.describe(), exc)
            problems.append(f"{table.describe()}: {exc}")
            continue
        taken.add(patch.target)
        patches.append(patch)
    return patches, problems


# --- Total rewrites ---


@dataclass(frozen=True)
class TotalRewrite:
    """Replacement formulas for a hazardous total.

    ``options`` lists whole-cell replacements, the preferred one first;
    ``inner`` lists SUM to SUBTOTAL conversions for the inner totals.
    """

    cell: CellAddress
    options: tuple[str, ...]
    inner: tuple[tuple[CellAddress, str], ...] = ()

    def notes(self) -> list[str]:
        extra = [f"alternative: {option}" for option in self.options[1:]]
        return extra + [f"{address.text(False)}: {formula}" for address, formula in self.inner]


def _subtotal(area: Area, sheet: str) -> str:
    return print_formula(Call("SUBTOTAL", (NumberLit(9), range_of(area, sheet))))


def _sum(area: Area, sheet: str) -> str:
    return print_formula(Call("SUM", (range_of(area, sheet),)))


def _half_sum(area: Area, sheet: str) -> str:
    return print_formula(Binary("/", Call("SUM", (range_of(area, sheet),)), NumberLit(2)))


def _inner_rewrites(
    inner: Sequence[tuple[CellAddress, Aggregate]],
) -> tuple[tuple[CellAddress, str], ...]:
    return tuple(
        (address, print_formula(Call("SUBTOTAL", (NumberLit(9), aggregate.rng))))
        for address, aggregate in inner
        if aggregate.function == "SUM"
    )


def _nested_rewrite(
    cell: CellAddress, areas: list[Area], inner: list[tuple[CellAddress, Aggregate]]
) -> TotalRewrite:
    holders = [address for address, _ in inner]
    full = tiling(areas, holders)
    enclosing = full or Area.enclosing([*areas, *(Area.single(a) for a in holders)])
    options = [_subtotal(enclosing, cell.sheet)]
    if full is not None:
        options.insert(0, _half_sum(full, cell.sheet))
    return TotalRewrite(cell, tuple(options), _inner_rewrites(inner))


def _aggregate_cells(workbook: Workbook, areas: list[Area]) -> list[tuple[CellAddress, Aggregate]]:
    """Cells whose formula is SUM/SUBTOTAL over exactly one of ``areas``."""
    wanted = set(areas)
    found: list[tuple[CellAddress, Aggregate]] = []
    for cell in workbook.formula_cells():
        assert cell.formula is not None
        aggregate = aggregate_of(cell.formula)
        if aggregate is not None and aggregate.area in wanted:
            found.append((cell.address, aggregate))
    return found


def inner_aggregates(
    workbook: Workbook, area: Area, outer: CellAddress
) -> list[tuple[CellAddress, Aggregate]]:
    """Cells inside ``area`` that themselves total a sub-range of it."""
    sheet = workbook.sheet(area.sheet)
    found: list[tuple[CellAddress, Aggregate]] = []
    if sheet is None:
        return found
    for cell in sheet.sorted_cells():
        if cell.formula is None or cell.address == outer or not area.contains(cell.address):
            continue
        aggregate = aggregate_of(cell.formula)
        if aggregate is not None and aggregate.area.within(area):
            found.append((cell.address, aggregate))
    return found


def outer_sum_areas(workbook: Workbook, node: FormulaNode) -> list[tuple[Call, Area]]:
    """SUM calls of a formula with the static areas they add up."""
    found: list[tuple[Call, Area]] = []
    for current in walk(node):
        if not isinstance(current, Call) or current.name != "SUM":
            continue
        for arg in current.args:
            aggregate = aggregate_of(Call("SUM", (unwrap(arg),)))
            if aggregate is None:
                continue
            try:
                area = workbook.area_of(aggregate.rng)
            except CrossfootError:
                continue
            found.append((current, area))
    return found


def suggest_total_rewrite(
    workbook: Workbook, cell: CellAddress, chain_plus_min: int = 4
) -> TotalRewrite | None:
    """Suggest replacements for a chained-plus total or a double-counting SUM.

    Chains of references to inner totals get ``=SUBTOTAL(9,<range>)`` plus a
    SUBTOTAL conversion for each inner SUM, and ``=SUM(<range>)/2`` when the
    inner ranges and their total cells tile the range. Chains of raw inputs
    get ``=SUM(<enclosing range>)``.

    Returns:
        The rewrite, or None when the cell is neither kind of hazard.
    """
    target = workbook.get_cell(cell)
    if target is None or target.formula is None:
        return None
    sheet = target.address.sheet
    formula = target.formula

    refs = chain_refs(formula)
    if refs is not None and len(refs) >= chain_plus_min:
        inner: list[tuple[CellAddress, Aggregate]] = []
        for ref in refs:
            source = workbook.get_cell(ref)
            aggregate = aggregate_of(source.formula) if source and source.formula else None
            if aggregate is None:
                break
            inner.append((source.address, aggregate))  # type: ignore[union-attr]
        else:
            return _nested_rewrite(target.address, [a.area for _, a in inner], inner)
        enclosing = Area.enclosing([Area.single(r) for r in refs])
        return TotalRewrite(target.address, (_sum(enclosing, sheet),))

    aggregates = inline_aggregates(formula)
    if aggregates is not None and len(aggregates) >= chain_plus_min:
        areas = [a.area for a in aggregates]
        return _nested_rewrite(target.address, areas, _aggregate_cells(workbook, areas))

    for _, area in outer_sum_areas(workbook, formula):
        inner = inner_aggregates(workbook, area, target.address)
        if inner:
            options = [_subtotal(area, sheet)]
            if tiling([a.area for _, a in inner], [a for a, _ in inner]) == area:
                options.append(_half_sum(area, sheet))
            return TotalRewrite(target.address, tuple(options), _inner_rewrites(inner))
    return None


# --- Applying patches ---


def apply_patches(workbook: Workbook, patches: Sequence[CheckPatch]) -> Workbook:
    """Insert patch formulas into a copy of the workbook, all or nothing.

    Raises:
        PatchApplyError: Listing every patch that targets an occupied or
            unknown cell, repeats a target, or does not parse.
    """
    problems: list[str] = []
    cells: list[Cell] = []
    seen: set[CellAddress] = set()
    for patch in patches:
        target = workbook.canonical(patch.target)
        if target is None:
            problems.append(f"{patch.target}: unknown sheet")
            continue
        if target in seen:
            problems.append(f"{target}: targeted by more than one patch")
            continue
        seen.add(target)
        existing = workbook.get_cell(target)
        if existing is not None and not existing.is_blank:
            problems.append(f"{target}: cell is not blank")
            continue
        cell, warning = make_formula_cell(target, patch.formula)
        if warning is not None:
            problems.append(f"{target}: formula does not parse ({cell.parse_error})")
            continue
        cells.append(cell)
    if problems:
        raise PatchApplyError(problems)
    try:
        patched = workbook.with_cells(cells)
    except LoadError as exc:
        raise PatchApplyError([str(exc)]) from exc
    logger.info("Applied %d patches", len(cells))
    return patched


def patches_to_json(patches: Sequence[CheckPatch]) -> str:
    return json.dumps([p.to_dict() for p in patches], indent=2, ensure_ascii=False)

