"""Cell addressing: A1 references, column letters and rectangular areas."""
from __future__ import annotations

import re
from collections.abc import Iterator
from dataclasses import dataclass, field, replace

from crossfoot.errors import AddressParseError

# Grid limits of the XLSX format
MAX_COL = 16384
MAX_ROW = 1048576

SIMPLE_SHEET = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")

_A1 = re.compile(
    r"""
    ^(?:(?:'(?P<qsheet>(?:[^']|'')+)'|(?P<sheet>[A-Za-z_][A-Za-z0-9_.]*))!)?
    (?P<cabs>\$)?(?P<col>[A-Za-z]{1,3})
    (?P<rabs>\$)?(?P<row>[0-9]+)$
    """,
    re.VERBOSE,
)


def column_index(letters: str) -> int:
    """Convert column letters to a 1-based index ("A" -> 1, "XFD" -> 16384)."""
    index = 0
    for char in letters.upper():
        if not "A" <= char <= "Z":
            raise AddressParseError(letters, "column letters expected")
        index = index * 26 + (ord(char) - ord("A") + 1)
    return index


def column_letter(index: int) -> str:
    """Convert a 1-based column index to letters (1 -> "A")."""
    if index < 1:
        raise ValueError(f"column index must be >= 1, got {index}")
    letters = ""
    while index:
        index, rem = divmod(index - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def quote_sheet(name: str) -> str:
    """Render a sheet name for use before '!' (quoted when needed)."""
    if SIMPLE_SHEET.match(name):
        return name
    return "'" + name.replace("'", "''") + "'"


def in_grid(col: int, row: int) -> bool:
    return 1 <= col <= MAX_COL and 1 <= row <= MAX_ROW


@dataclass(frozen=True)
class CellAddress:
    """A cell on a named sheet. Absolute markers never change identity."""

    sheet: str
    col: int
    row: int
    col_abs: bool = field(default=False, compare=False)
    row_abs: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if not in_grid(self.col, self.row):
            raise AddressParseError(
                f"{self.sheet}!R{self.row}C{self.col}", "outside the worksheet grid"
            )
        if not self.sheet:
            raise AddressParseError(self.a1, "sheet name is empty")

    @property
    def a1(self) -> str:
        """Unqualified A1 text including absolute markers."""
        col = ("$" if self.col_abs else "") + column_letter(self.col)
        row = ("$" if self.row_abs else "") + str(self.row)
        return col + row

    @property
    def key(self) -> tuple[int, int]:
        """Row-major position within the sheet."""
        return (self.row, self.col)

    def text(self, qualified: bool = True) -> str:
        """Canonical text form without absolute markers."""
        plain = column_letter(self.col) + str(self.row)
        return f"{quote_sheet(self.sheet)}!{plain}" if qualified else plain

    def shifted(self, rows: int, cols: int) -> CellAddress | None:
        """Displace the address; None when the result leaves the grid."""
        col, row = self.col + cols, self.row + rows
        if not in_grid(col, row):
            return None
        return replace(self, col=col, row=row)

    def plain(self) -> CellAddress:
        """Same cell with absolute markers cleared."""
        return CellAddress(self.sheet, self.col, self.row)

    def __str__(self) -> str:
        return self.text()


def parse_address(text: str, current_sheet: str | None = None) -> CellAddress:
    """Parse an A1-style reference such as ``B67``, ``$H$10`` or ``Data!B2``.

    Args:
        text: Reference text, optionally sheet-qualified.
        current_sheet: Sheet used when the reference is unqualified.

    Returns:
        The parsed address with absolute flags recorded.

    Raises:
        AddressParseError: If the text is not a valid A1 reference.
    """
    match = _A1.match(text.strip())
    if not match:
        raise AddressParseError(text)
    if match.group("qsheet") is not None:
        sheet = match.group("qsheet").replace("''", "'")
    else:
        sheet = match.group("sheet") or current_sheet
    if not sheet:
        raise AddressParseError(text, "no sheet given and no current sheet")
    col = column_index(match.group("col"))
    row = int(match.group("row"))
    if col > MAX_COL:
        raise AddressParseError(match.group("col"), f"column beyond {column_letter(MAX_COL)}")
    if not 1 <= row <= MAX_ROW:
        raise AddressParseError(match.group("row"), f"row must be within 1..{MAX_ROW}")
    return CellAddress(
        sheet=sheet,
        col=col,
        row=row,
        col_abs=bool(match.group("cabs")),
        row_abs=bool(match.group("rabs")),
    )


@dataclass(frozen=True)
class Area:
    """A rectangle of cells on one sheet, bounds inclusive."""

    sheet: str
    top: int
    left: int
    bottom: int
    right: int

    @classmethod
    def spanning(cls, first: CellAddress, second: CellAddress) -> Area:
        return cls(
            sheet=first.sheet,
            top=min(first.row, second.row),
            left=min(first.col, second.col),
            bottom=max(first.row, second.row),
            right=max(first.col, second.col),
        )

    @classmethod
    def enclosing(cls, areas: list[Area]) -> Area:
        """Smallest rectangle containing every area (all on one sheet)."""
        return cls(
            sheet=areas[0].sheet,
            top=min(a.top for a in areas),
            left=min(a.left for a in areas),
            bottom=max(a.bottom for a in areas),
            right=max(a.right for a in areas),
        )

    @classmethod
    def single(cls, address: CellAddress) -> Area:
        return cls(address.sheet, address.row, address.col, address.row, address.col)

    @property
    def start(self) -> CellAddress:
        return CellAddress(self.sheet, self.left, self.top)

    @property
    def end(self) -> CellAddress:
        return CellAddress(self.sheet, self.right, self.bottom)

    @property
    def height(self) -> int:
        return self.bottom - self.top + 1

    @property
    def width(self) -> int:
        return self.right - self.left + 1

    @property
    def size(self) -> int:
        return self.height * self.width

    def contains(self, address: CellAddress) -> bool:
        return (
            address.sheet.lower() == self.sheet.lower()
            and self.top <= address.row <= self.bottom
            and self.left <= address.col <= self.right
        )

    def within(self, other: Area) -> bool:
        """True when this area lies entirely inside ``other``."""
        return (
            self.sheet.lower() == other.sheet.lower()
            and other.top <= self.top
            and self.bottom <= other.bottom
            and other.left <= self.left
            and self.right <= other.right
        )

    def addresses(self) -> Iterator[CellAddress]:
        """Row-major iteration over every cell of the rectangle."""
        for row in range(self.top, self.bottom + 1):
            for col in range(self.left, self.right + 1):
                yield CellAddress(self.sheet, col, row)

    def text(self, qualified: bool = False) -> str:
        body = f"{self.start.text(False)}:{self.end.text(False)}"
        return f"{quote_sheet(self.sheet)}!{body}" if qualified else body

    def __str__(self) -> str:
        return self.text(qualified=True)


def parse_area(text: str, current_sheet: str | None = None) -> Area:
    """Parse ``B2``, ``B2:B9`` or ``Data!B2:B9`` into an area.

    Raises:
        AddressParseError: If either endpoint is invalid or the ends name different sheets.
    """
    head, sep, tail = text.strip().rpartition(":")
    if not sep:
        return Area.single(parse_address(text, current_sheet))
    start = parse_address(head, current_sheet)
    end = parse_address(tail, start.sheet)
    if end.sheet.lower() != start.sheet.lower():
        raise AddressParseError(text, "range ends on another sheet")
    return Area.spanning(start, end)
