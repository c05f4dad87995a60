"""Read-only XLSX ingestion (values, formulas, shared strings)."""
from __future__ import annotations

import io
import logging
import posixpath
import zipfile

from lxml import etree

from crossfoot.address import CellAddress, parse_address
from crossfoot.errors import CrossfootError, IngestError, LoadError
from crossfoot.formula import FormulaNode, print_formula, shift_references
from crossfoot.workbook import (
    BLANK,
    ERROR_CODES,
    Boolean,
    Cell,
    CellValue,
    ErrorValue,
    Number,
    Text,
    Workbook,
    make_formula_cell,
)

logger = logging.getLogger(__name__)

NS_MAIN = "http://schemas.openxmlformats.org/spreadsheetml/2006/main"
NS_REL = "http://schemas.openxmlformats.org/officeDocument/2006/relationships"
NS_PKG_REL = "http://schemas.openxmlformats.org/package/2006/relationships"
NS = {"m": NS_MAIN, "r": NS_REL, "pr": NS_PKG_REL}

WORKBOOK_PART = "xl/workbook.xml"
WORKBOOK_RELS = "xl/_rels/workbook.xml.rels"
SHARED_STRINGS = "xl/sharedStrings.xml"

# Parts that carry presentation or links only
_SKIPPED_PREFIXES = {
    "xl/styles.xml": "styles",
    "xl/charts/": "charts",
    "xl/drawings/": "drawings",
    "xl/pivotTables/": "pivot tables",
    "xl/pivotCache/": "pivot caches",
    "xl/externalLinks/": "external workbook links",
    "xl/vbaProject.bin": "VBA project",
}

_PARSER = etree.XMLParser(resolve_entities=False, no_network=True, huge_tree=False)


class _Reader:
    def __init__(self, archive: zipfile.ZipFile) -> None:
        self.archive = archive
        self.names = set(archive.namelist())
        self.warnings: list[str] = []
        self._shared: list[str] | None = None

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)

    def xml(self, part: str) -> etree._Element:
        if part not in self.names:
            raise IngestError("part is missing from the archive", part)
        try:
            return etree.fromstring(self.archive.read(part), _PARSER)
        except etree.XMLSyntaxError as exc:
            raise IngestError(f"malformed XML: {exc}", part) from exc

    def shared_strings(self) -> list[str]:
        if self._shared is None:
            if SHARED_STRINGS not in self.names:
                raise IngestError(
                    "cells use shared strings but the part is missing", SHARED_STRINGS
                )
            root = self.xml(SHARED_STRINGS)
            # rich text runs are concatenated; phonetic runs are not content
            self._shared = [
                "".join(
                    t.text or ""
                    for t in si.iterfind(".//m:t", NS)
                    if t.getparent().tag != f"{{{NS_MAIN}}}rPh"
                )
                for si in root.iterfind("m:si", NS)
            ]
        return self._shared

    def sheet_targets(self) -> list[tuple[str, str]]:
        """(sheet name, part path) in workbook order."""
        book = self.xml(WORKBOOK_PART)
        targets: dict[str, str] = {}
        if WORKBOOK_RELS in self.names:
            for rel in self.xml(WORKBOOK_RELS).iterfind("pr:Relationship", NS):
                target = rel.get("Target", "")
                path = target.lstrip("/") if target.startswith("/") else posixpath.normpath(
                    posixpath.join("xl", target)
                )
                targets[rel.get("Id", "")] = path
        sheets: list[tuple[str, str]] = []
        for position, node in enumerate(book.iterfind("m:sheets/m:sheet", NS), start=1):
            rel_id = node.get(f"{{{NS_REL}}}id", "")
            path = targets.get(rel_id, f"xl/worksheets/sheet{position}.xml")
            sheets.append((node.get("name", f"Sheet{position}"), path))
        if book.find("m:definedNames/m:definedName", NS) is not None:
            self.warn("defined names are not supported; formulas using them evaluate to #NAME?")
        return sheets

    def report_skipped_parts(self) -> None:
        seen: set[str] = set()
        for name in sorted(self.names):
            for prefix, label in _SKIPPED_PREFIXES.items():
                if name.startswith(prefix) and label not in seen:
                    seen.add(label)
                    self.warn(f"skipping {label} ({name})")


def _decode_value(reader: _Reader, node: etree._Element, where: str) -> CellValue:
    kind = node.get("t", "n")
    if kind == "inlineStr":
        inline = node.find("m:is", NS)
        if inline is None:
            return Text("")
        return Text("".join(t.text or "" for t in inline.iterfind(".//m:t", NS)))
    v = node.find("m:v", NS)
    if v is None or v.text is None:
        return BLANK
    raw = v.text
    try:
        if kind == "n":
            return Number(float(raw))
        if kind == "s":
            strings = reader.shared_strings()
            index = int(raw)
            if not 0 <= index < len(strings):
                raise IngestError(
                    f"{where}: shared string index {index} out of range", SHARED_STRINGS
                )
            return Text(strings[index])
        if kind == "str":
            return Text(raw)
        if kind == "b":
            return Boolean(raw.strip() in ("1", "true"))
    except ValueError:
        reader.warn(f"{where}: cannot decode value {raw!r} of type {kind!r}; kept as text")
        return Text(raw)
    if kind == "e":
        if raw in ERROR_CODES:
            return ErrorValue(raw)
        reader.warn(f"{where}: unsupported error code {raw!r}; kept as text")
        return Text(raw)
    reader.warn(f"{where}: unknown cell type {kind!r}; kept as text")
    return Text(raw)


def _read_sheet(reader: _Reader, name: str, part: str) -> list[Cell]:
    root = reader.xml(part)
    cells: list[Cell] = []
    # shared formula masters: si -> (master address, parsed master)
    masters: dict[str, tuple[CellAddress, FormulaNode]] = {}
    for node in root.iterfind("m:sheetData/m:row/m:c", NS):
        ref = node.get("r")
        if ref is None:
            raise IngestError("cell without an 'r' attribute", part)
        try:
            address = parse_address(ref, name)
        except CrossfootError as exc:
            raise IngestError(str(exc), part) from exc
        address = CellAddress(name, address.col, address.row)
        where = str(address)
        value = _decode_value(reader, node, where)
        f = node.find("m:f", NS)
        if f is None:
            if value != BLANK:
                cells.append(Cell(address, value))
            continue

        kind = f.get("t", "normal")
        if kind in ("array", "dataTable"):
            reader.warn(f"{where}: {kind} formulas are not supported; cell evaluates to #NAME?")
            text = "=" + (f.text or "")
            cells.append(Cell(address, ErrorValue("#NAME?"), None, text, f"{kind} formula"))
            continue
        if kind == "shared" and not (f.text or "").strip():
            master = masters.get(f.get("si", ""))
            if master is None:
                reader.warn(f"{where}: shared formula without a master; cell evaluates to #NAME?")
                missing = "missing shared master"
                cells.append(Cell(address, ErrorValue("#NAME?"), None, "=", missing))
                continue
            origin, tree = master
            try:
                shifted = shift_references(tree, address.row - origin.row, address.col - origin.col)
            except CrossfootError as exc:
                reader.warn(f"{where}: shared formula leaves the grid ({exc})")
                cells.append(Cell(address, ErrorValue("#REF!"), None, "=#REF!", str(exc)))
                continue
            cells.append(Cell(address, value, shifted, print_formula(shifted)))
            continue

        cell, warning = make_formula_cell(address, "=" + (f.text or ""), value)
        if warning:
            reader.warn(warning)
        elif kind == "shared" and cell.formula is not None:
            masters[f.get("si", "")] = (address, cell.formula)
        cells.append(cell)
    return cells


def read_xlsx(data: bytes) -> Workbook:
    """Load the value and formula layer of an XLSX file.

    Args:
        data: Raw bytes of the ``.xlsx`` archive.

    Returns:
        Workbook whose warnings list every skipped or unsupported feature.

    Raises:
        IngestError: If the archive is corrupt or a required part is missing.
    """
    try:
        archive = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise IngestError(f"not a valid XLSX archive: {exc}") from exc

    with archive:
        reader = _Reader(archive)
        if WORKBOOK_PART not in reader.names:
            raise IngestError("workbook part is missing", WORKBOOK_PART)
        sheets = [(name, _read_sheet(reader, name, part)) for name, part in reader.sheet_targets()]
        reader.report_skipped_parts()

    try:
        return Workbook.assemble(sheets, None, reader.warnings)
    except LoadError as exc:
        raise IngestError(str(exc), WORKBOOK_PART) from exc

