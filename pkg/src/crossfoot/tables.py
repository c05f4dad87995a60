"""Detection of cross-foot tables: a numeric body plus totals row and column."""
from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import networkx as nx

from crossfoot.address import Area, CellAddress
from crossfoot.patterns import body_line_aggregates, is_aggregating
from crossfoot.recalc import ValueMap
from crossfoot.workbook import Blank, Number, Sheet, Workbook

logger = logging.getLogger(__name__)

MIN_SIDE = 2


@dataclass(frozen=True)
class TableRegion:
    """A detected table.

    ``totals_row`` holds the column totals, ``totals_col`` the row totals;
    ``grand_total`` is where they cross.
    """

    sheet: str
    bounds: Area
    body: Area
    totals_row: int | None = None
    totals_col: int | None = None
    grand_total: CellAddress | None = None

    @property
    def cross_footed(self) -> bool:
        return self.grand_total is not None

    def column_totals(self) -> list[CellAddress]:
        """Cells of the totals row under each body column."""
        if self.totals_row is None:
            return []
        return [
            CellAddress(self.sheet, col, self.totals_row)
            for col in range(self.body.left, self.body.right + 1)
        ]

    def row_totals(self) -> list[CellAddress]:
        """Cells of the totals column beside each body row."""
        if self.totals_col is None:
            return []
        return [
            CellAddress(self.sheet, self.totals_col, row)
            for row in range(self.body.top, self.body.bottom + 1)
        ]

    def describe(self) -> str:
        return f"table {self.bounds}"


def _body_mask(sheet: Sheet, values: ValueMap) -> set[tuple[int, int]]:
    mask: set[tuple[int, int]] = set()
    for address, cell in sheet.cells.items():
        if not isinstance(values.get(address), Number):
            continue
        if cell.formula is not None and is_aggregating(cell.formula):
            continue
        mask.add((address.row, address.col))
    return mask


def _blocks(mask: set[tuple[int, int]]) -> list[set[tuple[int, int]]]:
    """Groups of body cells joined edge to edge; no rectangle spans two groups."""
    graph = nx.Graph()
    graph.add_nodes_from(mask)
    graph.add_edges_from(
        (cell, neighbour)
        for cell in mask
        for neighbour in ((cell[0] + 1, cell[1]), (cell[0], cell[1] + 1))
        if neighbour in mask
    )
    return [set(block) for block in nx.connected_components(graph)]


def _largest_rectangle(cells: set[tuple[int, int]]) -> tuple[int, int, int, int] | None:
    """Largest all-body rectangle with both sides >= 2 as (top, left, bottom, right).

    Only the bounding box of ``cells`` is scanned. Ties go to the topmost,
    then leftmost candidate.
    """
    if not cells:
        return None
    first_row = min(r for r, _ in cells)
    last_row = max(r for r, _ in cells)
    first_col = min(c for _, c in cells)
    last_col = max(c for _, c in cells)
    if last_row - first_row + 1 < MIN_SIDE or last_col - first_col + 1 < MIN_SIDE:
        return None
    best: tuple[int, int, int, int, int] | None = None  # (-area, top, left, bottom, right)
    heights = {col: 0 for col in range(first_col, last_col + 1)}
    for bottom in range(first_row, last_row + 1):
        for col in heights:
            heights[col] = heights[col] + 1 if (bottom, col) in cells else 0
        for left in range(first_col, last_col + 1):
            min_height = heights[left]
            for right in range(left, last_col + 1):
                min_height = min(min_height, heights[right])
                if min_height < MIN_SIDE:
                    break
                width = right - left + 1
                if width < MIN_SIDE:
                    continue
                top = bottom - min_height + 1
                key = (-(min_height * width), top, left, bottom, right)
                if best is None or key < best:
                    best = key
    return None if best is None else best[1:]


def _bodies(mask: set[tuple[int, int]]) -> Iterator[tuple[int, int, int, int]]:
    """Body rectangles, largest first within each block of connected cells."""
    pending = _blocks(mask)
    while pending:
        block = pending.pop()
        found = _largest_rectangle(block)
        if found is None:
            continue
        yield found
        top, left, bottom, right = found
        block.difference_update(
            (r, c) for r in range(top, bottom + 1) for c in range(left, right + 1)
        )
        pending.extend(_blocks(block))


def _is_empty(sheet: Sheet, values: ValueMap, cells: list[CellAddress]) -> bool:
    for address in cells:
        cell = sheet.cells.get(address)
        if cell is not None and (cell.has_formula or not isinstance(values.get(address), Blank)):
            return False
    return True


def _totals_line(
    sheet: Sheet,
    line_cells: list[CellAddress],
    body_lines: list[Area],
    ratio: float,
) -> bool:
    """True when enough of the line's formulas aggregate over their body line."""
    formulas = 0
    aggregating = 0
    for address, body_line in zip(line_cells, body_lines):
        cell = sheet.cells.get(address)
        if cell is None or not cell.has_formula:
            continue
        formulas += 1
        if cell.formula is not None and body_line_aggregates(cell.formula, body_line):
            aggregating += 1
    return formulas > 0 and aggregating / formulas >= ratio


def _classify(sheet: Sheet, values: ValueMap, body: Area, ratio: float) -> TableRegion:
    name = sheet.name

    totals_row: int | None = None
    for row in (body.bottom + 1, body.bottom + 2):
        cells = [CellAddress(name, c, row) for c in range(body.left, body.right + 1)]
        columns = [
            Area(name, body.top, c, body.bottom, c) for c in range(body.left, body.right + 1)
        ]
        if _totals_line(sheet, cells, columns, ratio):
            totals_row = row
            break
        if row == body.bottom + 2 or not _is_empty(sheet, values, cells):
            break

    totals_col: int | None = None
    for col in (body.right + 1, body.right + 2):
        cells = [CellAddress(name, col, r) for r in range(body.top, body.bottom + 1)]
        rows = [Area(name, r, body.left, r, body.right) for r in range(body.top, body.bottom + 1)]
        if _totals_line(sheet, cells, rows, ratio):
            totals_col = col
            break
        if col == body.right + 2 or not _is_empty(sheet, values, cells):
            break

    grand = (
        CellAddress(name, totals_col, totals_row)
        if totals_row is not None and totals_col is not None
        else None
    )
    bounds = Area(
        name,
        body.top,
        body.left,
        totals_row if totals_row is not None else body.bottom,
        totals_col if totals_col is not None else body.right,
    )
    return TableRegion(name, bounds, body, totals_row, totals_col, grand)


def detect_tables(
    workbook: Workbook, sheet_name: str, values: ValueMap, ratio: float = 0.8
) -> list[TableRegion]:
    """Find tables on one sheet.

    Body candidates are maximal rectangles (at least 2x2) of numeric cells that
    are not themselves totals. Larger candidates win overlaps; equal sizes go
    to the topmost, then leftmost one. A bounding row or column counts as a
    totals line when at least ``ratio`` of its formula cells aggregate over the
    matching body column or row. One blank separator row or column between the
    body and its totals is allowed.

    Args:
        workbook: The workbook holding the sheet.
        sheet_name: Sheet to scan (case-insensitive).
        values: Recalculated values, used to tell numbers from text and blanks.
        ratio: Share of aggregating formulas needed for a totals line.

    Returns:
        Tables in top-to-bottom, left-to-right order.
    """
    sheet = workbook.sheet(sheet_name)
    if sheet is None:
        return []
    tables: list[TableRegion] = []
    for top, left, bottom, right in _bodies(_body_mask(sheet, values)):
        body = Area(sheet.name, top, left, bottom, right)
        table = _classify(sheet, values, body, ratio)
        logger.debug(
            "Detected %s (totals row %s, column %s)",
            table.describe(),
            table.totals_row,
            table.totals_col,
        )
        tables.append(table)
    return sorted(tables, key=lambda t: (t.body.top, t.body.left))
