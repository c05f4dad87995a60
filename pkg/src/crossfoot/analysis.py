"""Per-workbook facts shared by the rules and the check generator."""
from __future__ import annotations

import logging
from dataclasses import dataclass

from crossfoot.address import CellAddress
from crossfoot.config import AuditConfig
from crossfoot.patterns import check_cells
from crossfoot.recalc import DepGraph, ValueMap, build_graph, recalculate
from crossfoot.tables import TableRegion, detect_tables
from crossfoot.workbook import Workbook

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Analysis:
    """Graph, values, tables and check cells of one workbook, computed once."""

    workbook: Workbook
    graph: DepGraph
    values: ValueMap
    tables: tuple[TableRegion, ...]
    checks: tuple[CellAddress, ...]

    @classmethod
    def of(cls, workbook: Workbook, config: AuditConfig | None = None) -> Analysis:
        config = config or AuditConfig()
        graph = build_graph(workbook)
        values = recalculate(workbook, graph)
        tables = tuple(
            table
            for sheet in workbook.sheets
            for table in detect_tables(workbook, sheet.name, values, config.table_totals_ratio)
        )
        checks = tuple(check_cells(workbook))
        logger.debug(
            "Analysed %d sheets: %d tables, %d check cells",
            len(workbook.sheets),
            len(tables),
            len(checks),
        )
        return cls(workbook, graph, values, tables, checks)

    def checks_on(self, sheet: str) -> list[CellAddress]:
        return [c for c in self.checks if c.sheet.lower() == sheet.lower()]

    def table_checked(self, table: TableRegion) -> bool:
        """True when some check cell reads both a column total and a row total."""
        column_totals = set(table.column_totals())
        row_totals = set(table.row_totals())
        for check in self.checks:
            feeding = self.graph.transitive_precedents(check)
            if feeding & column_totals and feeding & row_totals:
                return True
        return False
