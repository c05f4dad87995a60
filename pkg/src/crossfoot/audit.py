"""Run the rule catalog over a workbook and assemble the report."""
from __future__ import annotations

import dataclasses
import logging
from collections import Counter
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

from crossfoot import __version__
from crossfoot.analysis import Analysis
from crossfoot.config import SEVERITIES, AuditConfig
from crossfoot.rules import (
    Finding,
    check_assertions,
    check_indicator_propagation,
    detect_chained_plus,
    detect_crossfoot,
    detect_double_count,
    detect_insertion_risk,
    detect_text_number_hazard,
)
from crossfoot.workbook import Workbook

logger = logging.getLogger(__name__)

TOOL = "crossfoot"
FOOTER = (
    "An obvious flaw in relying on expectations is getting the answer you expect "
    "instead of the correct answer."
)

Rule = Callable[[Workbook, AuditConfig, Analysis], list[Finding]]

# Fixed execution order; check_assertions serves both R7 and R8.
RULES: tuple[tuple[tuple[str, ...], Rule], ...] = (
    (("R1",), detect_crossfoot),
    (("R2",), detect_chained_plus),
    (("R3",), detect_insertion_risk),
    (("R4",), detect_double_count),
    (("R5",), check_indicator_propagation),
    (("R6",), detect_text_number_hazard),
    (("R7", "R8"), check_assertions),
)


@dataclass(frozen=True)
class AuditReport:
    """Findings plus the context needed to reproduce them."""

    source: str | None
    config: dict[str, Any]
    findings: tuple[Finding, ...]
    stats: dict[str, Any]
    warnings: tuple[str, ...] = ()
    version: str = __version__
    footer: str = field(default=FOOTER)

    @property
    def counts(self) -> dict[str, int]:
        tally = Counter(f.severity for f in self.findings)
        return {severity: tally.get(severity, 0) for severity in SEVERITIES}

    def worst(self) -> str | None:
        """Most severe level present, or None for an empty report."""
        for severity in SEVERITIES:
            if self.counts[severity]:
                return severity
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool": TOOL,
            "version": self.version,
            "source": self.source,
            "config": self.config,
            "findings": [f.to_dict() for f in self.findings],
            "counts": self.counts,
            "stats": self.stats,
            "warnings": list(self.warnings),
            "footer": self.footer,
        }


def _sort_key(workbook: Workbook) -> Callable[[Finding], tuple[Any, ...]]:
    def key(finding: Finding) -> tuple[Any, ...]:
        if not finding.cells:
            return (0, 0, 0, 0, finding.rule, finding.message)
        sheet, row, col = workbook.sort_key(finding.cells[0])
        return (1, sheet, row, col, finding.rule, finding.message)

    return key


def _stats(workbook: Workbook, analysis: Analysis) -> dict[str, Any]:
    formulas = sum(1 for _ in workbook.formula_cells())
    checks = len(analysis.checks)
    return {
        "formulas": formulas,
        "check_cells": checks,
        "formulas_per_check": round(formulas / checks, 2) if checks else None,
        "tables": len(analysis.tables),
        "cross_footed_tables": sum(1 for t in analysis.tables if t.cross_footed),
    }


def run_audit(
    workbook: Workbook, config: AuditConfig | None = None, source: str | None = None
) -> AuditReport:
    """Audit one workbook.

    Rules run in id order; findings of disabled rules are dropped and severity
    overrides applied. A rule that raises is reported as an ``internal`` error
    finding rather than aborting the audit.

    Args:
        workbook: The workbook to audit.
        config: Thresholds and declared assertions; defaults when None.
        source: File name recorded in the report.

    Returns:
        Findings sorted by sheet, row, column and rule.
    """
    config = config or AuditConfig()
    analysis = Analysis.of(workbook, config)
    findings: list[Finding] = []
    for rule_ids, rule in RULES:
        if not any(config.enabled(r) for r in rule_ids):
            continue
        try:
            produced = rule(workbook, config, analysis)
        except Exception as exc:  # noqa: BLE001 - reported as a finding
            logger.exception("Rule %s failed", "/".join(rule_ids))
            findings.append(
                Finding("internal", "error", (), f"rule {'/'.join(rule_ids)} failed: {exc}")
            )
            continue
        findings.extend(f for f in produced if config.enabled(f.rule))

    overrides = config.severity_overrides
    findings = [
        dataclasses.replace(f, severity=overrides[f.rule]) if f.rule in overrides else f
        for f in findings
    ]
    findings.sort(key=_sort_key(workbook))
    logger.info("Audit finished with %d findings", len(findings))
    return AuditReport(
        source=source,
        config=config.echo(),
        findings=tuple(findings),
        stats=_stats(workbook, analysis),
        warnings=workbook.warnings,
    )
