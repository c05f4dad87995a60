"""Governance sidecar: ten ownership questions answered next to each workbook."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, ValidationError

from crossfoot.address import parse_address
from crossfoot.config import Severity
from crossfoot.errors import AddressParseError, ManifestError
from crossfoot.patterns import check_cells, is_check_formula
from crossfoot.rules import Finding
from crossfoot.workbook import Workbook

logger = logging.getLogger(__name__)

QUESTIONS = {
    "q1": "What is the purpose of the spreadsheet?",
    "q2": "Where is it kept – network location, set of files",
    "q3": "How is it used? (Process documentation, instructions)",
    "q4": "Is it for one person or is it re-used by others?",
    "q5": "Is it once-off (project) or has it a periodic operation?",
    "q6": "Who peer reviews its structure and version changes?",
    "q7": "What controls are around it?",
    "q8": "What checks are included within it?",
    "q9": "What evidence is there of conformity to good design practices?",
    "q10": "What are the pain points?",
}

# Only these questions need a non-empty list
REQUIRED_LISTS = frozenset({"q8", "q9", "q10"})


class _Answer(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Purpose(_Answer):
    purpose: str = ""
    criticality: str = ""


class Location(_Answer):
    location: str = ""
    version_id: str = ""
    data_sources: list[str] = []
    dependents: list[str] = []


class Usage(_Answer):
    usage_doc: str = ""


class Audience(_Answer):
    audience: str = ""


class Periodicity(_Answer):
    periodicity: str = ""


class Review(_Answer):
    reviewer: str = ""
    test_evidence: str = ""


class Controls(_Answer):
    signoff: str = ""
    reconciliation: str = ""


class InternalChecks(_Answer):
    internal_checks: list[str] = []


class DesignConformity(_Answer):
    design_conformity: list[str] = []


class PainPoints(_Answer):
    pain_points: list[str] = []


class Manifest(_Answer):
    """Answers keyed q1..q10; any question may be left out."""

    q1: Purpose = Purpose()
    q2: Location = Location()
    q3: Usage = Usage()
    q4: Audience = Audience()
    q5: Periodicity = Periodicity()
    q6: Review = Review()
    q7: Controls = Controls()
    q8: InternalChecks = InternalChecks()
    q9: DesignConformity = DesignConformity()
    q10: PainPoints = PainPoints()


def sidecar_path(workbook_path: Path) -> Path:
    """``model.xlsx`` -> ``model.manifest.json`` in the same directory."""
    return workbook_path.with_name(f"{workbook_path.stem}.manifest.json")


def parse_manifest(doc: str | bytes | dict[str, Any]) -> Manifest:
    """Parse a manifest document.

    Raises:
        ManifestError: If the document is not JSON or does not fit the schema.
    """
    try:
        if isinstance(doc, dict):
            return Manifest.model_validate(doc)
        return Manifest.model_validate_json(doc)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "document"
        raise ManifestError(f"Invalid manifest: {where}: {first['msg']}") from exc


def _empty_fields(question: str, answer: _Answer) -> list[str]:
    empty: list[str] = []
    for name, value in answer.model_dump().items():
        if isinstance(value, list):
            if not value and question in REQUIRED_LISTS:
                empty.append(name)
        elif not str(value).strip():
            empty.append(name)
    return empty


def _declared_checks(manifest: Manifest, workbook: Workbook) -> list[Finding]:
    findings: list[Finding] = []
    for entry in manifest.q8.internal_checks:
        try:
            address = parse_address(entry, workbook.front_sheet)
        except AddressParseError:
            findings.append(
                Finding("q8", "warning", (), f"declared check {entry!r} is not a cell reference")
            )
            continue
        cell = workbook.get_cell(address)
        if cell is None or cell.formula is None or not is_check_formula(cell.formula):
            canonical = workbook.canonical(address)
            findings.append(
                Finding(
                    "q8",
                    "warning",
                    (canonical,) if canonical else (),
                    f"declared check not found: {entry}",
                )
            )
    return findings


def validate_manifest(
    doc: str | bytes | dict[str, Any] | Manifest, workbook: Workbook | None = None
) -> list[Finding]:
    """Report unanswered questions and, given the workbook, undeclared checks.

    A missing purpose is an error; every other gap is a warning. When the
    workbook is supplied each cell listed under q8 must hold a check formula.

    Raises:
        ManifestError: If the document is malformed.
    """
    manifest = doc if isinstance(doc, Manifest) else parse_manifest(doc)
    findings: list[Finding] = []
    for question in QUESTIONS:
        answer = getattr(manifest, question)
        empty = _empty_fields(question, answer)
        if not empty:
            continue
        severity: Severity = "error" if question == "q1" and "purpose" in empty else "warning"
        findings.append(
            Finding(
                question,
                severity,
                (),
                f"{question} unanswered ({', '.join(empty)}): {QUESTIONS[question]}",
            )
        )
    if workbook is not None:
        findings.extend(_declared_checks(manifest, workbook))
    logger.debug("Manifest validation produced %d findings", len(findings))
    return findings


def manifest_template(workbook: Workbook) -> dict[str, Any]:
    """Empty manifest with q8 listing the check cells found in the workbook."""
    template = Manifest().model_dump()
    template["q8"]["internal_checks"] = [str(a) for a in check_cells(workbook)]
    return template


def load_manifest(path: Path) -> Manifest:
    if not path.exists():
        raise ManifestError(f"Manifest not found: {path}")
    return parse_manifest(path.read_bytes())


def dump_manifest(data: dict[str, Any]) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"
