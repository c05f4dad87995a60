"""Tests for A1 addresses and areas."""

import pytest

from crossfoot.address import (
    MAX_COL,
    MAX_ROW,
    Area,
    CellAddress,
    column_index,
    column_letter,
    parse_address,
    parse_area,
    quote_sheet,
)
from crossfoot.errors import AddressParseError


class TestColumns:
    """Tests for column letter conversion."""

    @pytest.mark.parametrize(
        ("letters", "index"), [("A", 1), ("Z", 26), ("AA", 27), ("AZ", 52), ("XFD", 16384)]
    )
    def test_letters_and_index_agree(self, letters, index):
        """Should convert both ways."""
        assert column_index(letters) == index
        assert column_letter(index) == letters

    def test_lowercase_letters(self):
        """Should accept lowercase letters."""
        assert column_index("ab") == 28

    def test_zero_index_rejected(self):
        """Should refuse index 0."""
        with pytest.raises(ValueError):
            column_letter(0)


class TestParseAddress:
    """Tests for parse_address."""

    def test_plain_reference(self):
        """Should parse a relative reference on the current sheet."""
        address = parse_address("B67", "Data")
        assert (address.sheet, address.col, address.row) == ("Data", 2, 67)
        assert not address.col_abs and not address.row_abs

    def test_absolute_markers(self):
        """Should record absolute markers without changing identity."""
        address = parse_address("$H$10", "Sheet1")
        assert address.col_abs and address.row_abs
        assert address == CellAddress("Sheet1", 8, 10)
        assert address.a1 == "$H$10"
        assert address.text() == "Sheet1!H10"

    def test_sheet_qualified(self):
        """Should prefer the written sheet over the current one."""
        address = parse_address("Data!B2", "Front")
        assert address.sheet == "Data"

    def test_quoted_sheet_with_apostrophe(self):
        """Should unescape doubled quotes in sheet names."""
        address = parse_address("'Bob''s Sheet'!C3")
        assert address.sheet == "Bob's Sheet"
        assert str(address) == "'Bob''s Sheet'!C3"

    def test_grid_limits(self):
        """Should accept the last cell of the grid."""
        address = parse_address(f"XFD{MAX_ROW}", "S")
        assert (address.col, address.row) == (MAX_COL, MAX_ROW)

    @pytest.mark.parametrize("text", ["XFE1", "A0", f"A{MAX_ROW + 1}", "1A", "A", "R1C1", "B-2"])
    def test_invalid_references(self, text):
        """Should reject text outside the A1 grammar or the grid."""
        with pytest.raises(AddressParseError) as info:
            parse_address(text, "S")
        assert info.value.token

    def test_missing_sheet(self):
        """Should need a sheet from somewhere."""
        with pytest.raises(AddressParseError, match="no current sheet"):
            parse_address("A1")

    def test_shifted_leaves_grid(self):
        """Should return None when moving off the grid."""
        assert CellAddress("S", 1, 1).shifted(-1, 0) is None
        assert CellAddress("S", 1, 1).shifted(2, 3) == CellAddress("S", 4, 3)


class TestArea:
    """Tests for rectangular areas."""

    def test_spanning_normalises_corners(self):
        """Should order corners regardless of input order."""
        area = Area.spanning(CellAddress("S", 5, 9), CellAddress("S", 2, 3))
        assert (area.top, area.left, area.bottom, area.right) == (3, 2, 9, 5)
        assert area.text() == "B3:E9"
        assert area.size == 7 * 4

    def test_contains_is_case_insensitive_on_sheet(self):
        """Should match sheet names case-insensitively."""
        area = parse_area("Data!B2:B9")
        assert area.contains(CellAddress("data", 2, 5))
        assert not area.contains(CellAddress("Data", 3, 5))

    def test_within(self):
        """Should detect nesting."""
        outer = parse_area("B2:B67", "S")
        assert parse_area("B2:B10", "S").within(outer)
        assert not parse_area("B1:B10", "S").within(outer)

    def test_addresses_row_major(self):
        """Should iterate row by row."""
        area = parse_area("A1:B2", "S")
        assert [a.text(False) for a in area.addresses()] == ["A1", "B1", "A2", "B2"]

    def test_range_end_inherits_sheet(self):
        """Should put an unqualified end on the start's sheet."""
        area = parse_area("Data!B2:B9", "Front")
        assert area.sheet == "Data"

    def test_cross_sheet_range_rejected(self):
        """Should reject a range spanning two sheets."""
        with pytest.raises(AddressParseError, match="another sheet"):
            parse_area("Data!B2:Other!B9")

    def test_quote_sheet(self):
        """Should quote names that need it."""
        assert quote_sheet("Data") == "Data"
        assert quote_sheet("My Data") == "'My Data'"
