"""Workbook data model and the canonical JSON workbook format."""
from __future__ import annotations

import json
import logging
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Literal, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StrictBool,
    StrictFloat,
    StrictInt,
    StrictStr,
    ValidationError,
)

from crossfoot.address import Area, CellAddress, parse_address
from crossfoot.errors import CrossfootError, LoadError, UnsupportedRangeError
from crossfoot.formula import FormulaNode, RangeRef, parse_formula, print_formula

logger = logging.getLogger(__name__)

ERROR_CODES = ("#DIV/0!", "#VALUE!", "#REF!", "#NAME?", "#NUM!", "#CIRC!")


# --- Cell values ---


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class Boolean:
    value: bool


@dataclass(frozen=True)
class ErrorValue:
    """A spreadsheet error such as ``#DIV/0!``."""

    code: str

    def __post_init__(self) -> None:
        if self.code not in ERROR_CODES:
            raise ValueError(f"unknown error code {self.code!r}")


@dataclass(frozen=True)
class Blank:
    """An empty cell; distinct from Number(0) and Text("")."""


BLANK = Blank()

CellValue = Union[Number, Text, Boolean, ErrorValue, Blank]


def format_general(value: float) -> str:
    """Render a number the way a General-formatted cell shows it."""
    if value == 0:
        return "0"
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    text = f"{value:.15g}"
    if "e" in text:
        mantissa, exponent = text.split("e")
        return f"{mantissa}E{exponent[0]}{exponent[1:].lstrip('0').zfill(2)}"
    return text


def display(value: CellValue) -> str:
    """Text shown for a value (also its text form in concatenation)."""
    if isinstance(value, Number):
        return format_general(value.value)
    if isinstance(value, Text):
        return value.value
    if isinstance(value, Boolean):
        return "TRUE" if value.value else "FALSE"
    if isinstance(value, ErrorValue):
        return value.code
    return ""


def value_to_json(value: CellValue) -> Any:
    """JSON-ready form used by reports and recalc-diff output."""
    if isinstance(value, Number):
        x = value.value
        return int(x) if x.is_integer() and abs(x) < 2**53 else x
    if isinstance(value, (Text, Boolean)):
        return value.value
    if isinstance(value, ErrorValue):
        return value.code
    return None


# --- Cells, sheets, workbooks ---


@dataclass(frozen=True)
class Cell:
    """A stored cell.

    ``value`` is the value held in the file (for formula cells, the cached
    result). ``formula_text`` keeps the original text; ``formula`` is None
    when that text could not be parsed, in which case ``parse_error`` says why.
    """

    address: CellAddress
    value: CellValue = BLANK
    formula: FormulaNode | None = None
    formula_text: str | None = None
    parse_error: str | None = None

    @property
    def has_formula(self) -> bool:
        return self.formula_text is not None

    @property
    def is_blank(self) -> bool:
        return not self.has_formula and isinstance(self.value, Blank)


@dataclass(frozen=True)
class Sheet:
    name: str
    cells: Mapping[CellAddress, Cell]
    max_row: int = 0
    max_col: int = 0

    @classmethod
    def of(cls, name: str, cells: Iterable[Cell]) -> Sheet:
        mapping = {cell.address: cell for cell in cells}
        return cls(
            name=name,
            cells=MappingProxyType(mapping),
            max_row=max((a.row for a in mapping), default=0),
            max_col=max((a.col for a in mapping), default=0),
        )

    def get(self, col: int, row: int) -> Cell | None:
        return self.cells.get(CellAddress(self.name, col, row))

    def sorted_cells(self) -> list[Cell]:
        return sorted(self.cells.values(), key=lambda c: c.address.key)


@dataclass(frozen=True)
class Workbook:
    """An immutable workbook: ordered sheets plus the designated front sheet."""

    sheets: tuple[Sheet, ...]
    front_sheet: str
    warnings: tuple[str, ...] = ()
    _by_name: Mapping[str, Sheet] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_by_name", MappingProxyType({s.name.lower(): s for s in self.sheets})
        )

    @classmethod
    def assemble(
        cls,
        sheets: list[tuple[str, list[Cell]]],
        front_sheet: str | None = None,
        warnings: Iterable[str] = (),
    ) -> Workbook:
        """Build a workbook, enforcing unique sheet names and cell addresses.

        Raises:
            LoadError: On duplicate sheets or cells, or an unknown front sheet.
        """
        if not sheets:
            raise LoadError("a workbook needs at least one sheet")
        seen: dict[str, str] = {}
        built: list[Sheet] = []
        for name, cells in sheets:
            if not name:
                raise LoadError("sheet name must be non-empty")
            if name.lower() in seen:
                raise LoadError(
                    f"duplicate sheet name {name!r} (conflicts with {seen[name.lower()]!r})",
                    location=f"sheet {name!r}",
                )
            seen[name.lower()] = name
            addresses: set[CellAddress] = set()
            for cell in cells:
                if cell.address.sheet != name:
                    raise LoadError(
                        f"cell {cell.address} does not belong to this sheet",
                        location=f"sheet {name!r}",
                    )
                if cell.address in addresses:
                    raise LoadError(
                        "duplicate cell reference",
                        location=f"sheet {name!r}, cell {cell.address.text(False)}",
                    )
                addresses.add(cell.address)
            built.append(Sheet.of(name, cells))
        front = front_sheet or built[0].name
        if front.lower() not in seen:
            raise LoadError(f"front sheet {front!r} does not exist")
        return cls(tuple(built), seen[front.lower()], tuple(warnings))

    def sheet(self, name: str) -> Sheet | None:
        """Case-insensitive sheet lookup."""
        return self._by_name.get(name.lower())

    def sheet_index(self, name: str) -> int:
        sheet = self.sheet(name)
        return self.sheets.index(sheet) if sheet else len(self.sheets)

    def canonical(self, address: CellAddress) -> CellAddress | None:
        """The address with the sheet's stored spelling, or None if the sheet is unknown."""
        sheet = self.sheet(address.sheet)
        if sheet is None:
            return None
        return CellAddress(sheet.name, address.col, address.row)

    def get_cell(self, address: CellAddress) -> Cell | None:
        sheet = self.sheet(address.sheet)
        if sheet is None:
            return None
        return sheet.get(address.col, address.row)

    def cells(self) -> Iterator[Cell]:
        """Every stored cell, sheet by sheet in row-major order."""
        for sheet in self.sheets:
            yield from sheet.sorted_cells()

    def formula_cells(self) -> Iterator[Cell]:
        for cell in self.cells():
            if cell.formula is not None:
                yield cell

    def sort_key(self, address: CellAddress) -> tuple[int, int, int]:
        return (self.sheet_index(address.sheet), address.row, address.col)

    def area_of(self, rng: RangeRef) -> Area:
        """The rectangle a static range covers, whole columns clipped to the used extent.

        Raises:
            UnsupportedRangeError: For dynamic, cross-sheet or unknown-sheet ranges.
        """
        if not rng.is_static:
            raise UnsupportedRangeError("range has computed endpoints; evaluate it first")
        area = rng.area
        if area is None:
            raise UnsupportedRangeError("ranges spanning two sheets are not supported")
        sheet = self.sheet(area.sheet)
        if sheet is None:
            raise UnsupportedRangeError(f"range refers to unknown sheet {area.sheet!r}")
        bottom = min(area.bottom, sheet.max_row) if rng.whole_column else area.bottom
        return Area(sheet.name, area.top, area.left, bottom, area.right)

    def with_cells(self, additions: Iterable[Cell]) -> Workbook:
        """A new workbook with extra cells.

        Only empty placeholder cells may be replaced.

        Raises:
            LoadError: If an addition lands on an occupied cell or unknown sheet.
        """
        merged = {sheet.name: dict(sheet.cells) for sheet in self.sheets}
        for cell in additions:
            sheet = self.sheet(cell.address.sheet)
            if sheet is None:
                raise LoadError(f"unknown sheet {cell.address.sheet!r}")
            address = CellAddress(sheet.name, cell.address.col, cell.address.row)
            existing = merged[sheet.name].get(address)
            if existing is not None and not existing.is_blank:
                raise LoadError("cell is occupied", location=str(address))
            merged[sheet.name][address] = replace(cell, address=address)
        sheets = [
            (name, sorted(cells.values(), key=lambda c: c.address.key))
            for name, cells in merged.items()
        ]
        return Workbook.assemble(sheets, self.front_sheet, self.warnings)


def cells_in_range(workbook: Workbook, rng: RangeRef) -> list[tuple[CellAddress, CellValue]]:
    """Row-major (address, stored value) pairs; absent cells come back Blank.

    Raises:
        UnsupportedRangeError: For cross-sheet or dynamic ranges.
    """
    area = workbook.area_of(rng)
    if area.bottom < area.top:
        return []
    result: list[tuple[CellAddress, CellValue]] = []
    for address in area.addresses():
        cell = workbook.get_cell(address)
        result.append((address, cell.value if cell else BLANK))
    return result


# --- Canonical JSON format ---


class CanonicalCell(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ref: str
    v: StrictBool | StrictInt | StrictFloat | StrictStr | None = None
    t: Literal["n", "s", "b", "e"] | None = None
    f: str | None = None


class CanonicalSheet(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    cells: list[CanonicalCell] = []


class CanonicalWorkbook(BaseModel):
    """On-disk layout of a canonical workbook file."""

    model_config = ConfigDict(extra="forbid")

    front_sheet: str | None = None
    sheets: list[CanonicalSheet] = Field(min_length=1)


def _decode_value(raw: CanonicalCell, location: str) -> CellValue:
    v, t = raw.v, raw.t
    if v is None:
        return BLANK
    if isinstance(v, float) and not math.isfinite(v):
        raise LoadError("numbers must be finite", location)
    kind = t or ("b" if isinstance(v, bool) else "n" if isinstance(v, (int, float)) else "s")
    if kind == "n":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise LoadError(f"type 'n' needs a number, got {v!r}", location)
        return Number(float(v))
    if kind == "s":
        if not isinstance(v, str):
            raise LoadError(f"type 's' needs a string, got {v!r}", location)
        return Text(v)
    if kind == "b":
        if not isinstance(v, bool):
            raise LoadError(f"type 'b' needs true or false, got {v!r}", location)
        return Boolean(v)
    if v not in ERROR_CODES:
        raise LoadError(f"unknown error code {v!r}", location)
    return ErrorValue(str(v))


def make_formula_cell(
    address: CellAddress, text: str, value: CellValue = BLANK
) -> tuple[Cell, str | None]:
    """Parse formula text into a cell; unparseable text yields a #NAME? cell and a warning."""
    if not text.lstrip().startswith("="):
        text = "=" + text
    try:
        node = parse_formula(text, address.sheet)
    except CrossfootError as exc:
        warning = f"{address}: cannot parse formula {text!r}: {exc}"
        return Cell(address, ErrorValue("#NAME?"), None, text, str(exc)), warning
    return Cell(address, value, node, text), None


def load_canonical(data: bytes) -> Workbook:
    """Load a workbook from canonical JSON bytes.

    Raises:
        LoadError: For malformed JSON, bad values, duplicate sheets or cells.
    """
    try:
        doc = CanonicalWorkbook.model_validate_json(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(p) for p in first["loc"]) or None
        raise LoadError(first["msg"], location) from exc

    warnings: list[str] = []
    sheets: list[tuple[str, list[Cell]]] = []
    for raw_sheet in doc.sheets:
        cells: list[Cell] = []
        for raw in raw_sheet.cells:
            location = f"sheet {raw_sheet.name!r}, cell {raw.ref}"
            try:
                address = parse_address(raw.ref, raw_sheet.name)
            except CrossfootError as exc:
                raise LoadError(str(exc), location) from exc
            if address.sheet.lower() != raw_sheet.name.lower():
                raise LoadError("cell reference names another sheet", location)
            address = CellAddress(raw_sheet.name, address.col, address.row)
            value = _decode_value(raw, location)
            if raw.f is None:
                cells.append(Cell(address, value))
                continue
            cell, warning = make_formula_cell(address, raw.f, value)
            if warning:
                logger.warning(warning)
                warnings.append(warning)
            cells.append(cell)
        sheets.append((raw_sheet.name, cells))
    return Workbook.assemble(sheets, doc.front_sheet, warnings)


def _encode_cell(cell: Cell) -> dict[str, Any]:
    entry: dict[str, Any] = {"ref": cell.address.text(qualified=False)}
    if cell.parse_error is None and not isinstance(cell.value, Blank):
        entry["v"] = value_to_json(cell.value)
        if isinstance(cell.value, ErrorValue):
            entry["t"] = "e"
    if cell.formula is not None:
        entry["f"] = print_formula(cell.formula)
    elif cell.formula_text is not None:
        entry["f"] = cell.formula_text
    return entry


def save_canonical(workbook: Workbook) -> bytes:
    """Serialize a workbook to canonical JSON (cells in row-major order)."""
    doc = {
        "front_sheet": workbook.front_sheet,
        "sheets": [
            {"name": sheet.name, "cells": [_encode_cell(c) for c in sheet.sorted_cells()]}
            for sheet in workbook.sheets
        ],
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
