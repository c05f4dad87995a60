"""Tests for operator semantics and the worksheet function catalog."""

import pytest

from crossfoot.address import CellAddress, parse_address
from crossfoot.functions import parse_number_text, render_dollar, render_fixed
from crossfoot.recalc import evaluate_cell
from crossfoot.workbook import Boolean, ErrorValue, Number, Text
from tests.builders import make_workbook


def evaluate(formula, **cells):
    """Value of ``formula`` placed in Z1 next to the given cells on sheet S."""
    workbook = make_workbook({"S": {**cells, "Z1": formula}})
    return evaluate_cell(workbook, CellAddress("S", 26, 1))


class TestOperators:
    """Tests for arithmetic, comparison and concatenation."""

    @pytest.mark.parametrize(
        ("formula", "expected"),
        [
            ("=2+3*4^2", 50.0),
            ("=-2^2", 4.0),
            ("=2^3^2", 64.0),
            ("=50%", 0.5),
            ("=10-4-3", 3.0),
            ("=ABS(-0.0)", 0.0),
        ],
    )
    def test_arithmetic(self, formula, expected):
        """Should follow Excel precedence."""
        assert evaluate(formula) == Number(expected)

    def test_division_by_zero(self):
        """Should give #DIV/0!."""
        assert evaluate("=1/0") == ErrorValue("#DIV/0!")

    @pytest.mark.parametrize(
        ("text", "expected"),
        [("1,234.5", 1234.5), ("$12", 12.0), ("(3)", -3.0), ("15%", 0.15), (" 7 ", 7.0)],
    )
    def test_numeric_text(self, text, expected):
        """Should read number-like text the way arithmetic does."""
        assert parse_number_text(text) == pytest.approx(expected)

    def test_text_coerces_in_arithmetic(self):
        """Should turn numeric text into a number for +."""
        assert evaluate("=A1+1", A1="41") == Number(42.0)

    def test_non_numeric_text_fails(self):
        """Should give #VALUE! for words."""
        assert evaluate("=A1+1", A1="abc") == ErrorValue("#VALUE!")

    def test_blank_reads_as_zero(self):
        """Should treat an empty cell as zero in arithmetic."""
        assert evaluate("=A9+1") == Number(1.0)

    def test_comparison_yields_boolean(self):
        """Should compare text case-insensitively and rank numbers below text."""
        assert evaluate('="A"="a"') == Boolean(True)
        assert evaluate('=1<"a"') == Boolean(True)
        assert evaluate('=A9=""') == Boolean(True)
        assert evaluate("=A9=0") == Boolean(True)

    def test_concatenation(self):
        """Should join display forms."""
        assert evaluate('=(0.1+0.2)&"x"') == Text("0.3x")
        assert evaluate('=TRUE&1') == Text("TRUE1")

    def test_errors_propagate(self):
        """Should pass the first error through."""
        assert evaluate("=A1*2", A1="=1/0") == ErrorValue("#DIV/0!")


class TestAggregates:
    """Tests for SUM, SUBTOTAL and friends."""

    def test_sum_skips_text_and_blank(self):
        """Should add only numbers inside ranges."""
        assert evaluate("=SUM(A1:A4)", A1=1, A2="5", A3=True, A4=2) == Number(3.0)

    def test_sum_coerces_literals(self):
        """Should coerce direct arguments."""
        assert evaluate('=SUM("5",TRUE,1)') == Number(7.0)

    def test_sum_error_propagates(self):
        """Should return an error found in the range."""
        assert evaluate("=SUM(A1:A2)", A1=1, A2="=1/0") == ErrorValue("#DIV/0!")

    def test_subtotal_skips_subtotals(self):
        """Should ignore cells whose formula is a SUBTOTAL."""
        cells = {"B2": 1, "B3": 2, "B4": "=SUBTOTAL(9,B2:B3)", "B5": 4, "B6": 5}
        assert evaluate("=SUBTOTAL(9,B2:B7)", **cells) == Number(12.0)

    def test_subtotal_keeps_sums(self):
        """Should still count SUM results."""
        cells = {"B2": 1, "B3": 2, "B4": "=SUM(B2:B3)"}
        assert evaluate("=SUBTOTAL(9,B2:B4)", **cells) == Number(6.0)

    def test_subtotal_other_codes(self):
        """Should refuse function codes other than 9."""
        assert evaluate("=SUBTOTAL(1,A1:A2)", A1=1) == ErrorValue("#VALUE!")

    def test_average_count_min_max(self):
        """Should aggregate numbers only."""
        cells = {"A1": 2, "A2": "x", "A3": 6}
        assert evaluate("=AVERAGE(A1:A3)", **cells) == Number(4.0)
        assert evaluate("=COUNT(A1:A3)", **cells) == Number(2.0)
        assert evaluate("=MIN(A1:A3)", **cells) == Number(2.0)
        assert evaluate("=MAX(A1:A3)", **cells) == Number(6.0)
        assert evaluate("=AVERAGE(A5:A6)") == ErrorValue("#DIV/0!")


class TestFunctions:
    """Tests for the remaining catalog entries."""

    def test_if_is_lazy(self):
        """Should not evaluate the branch it does not take."""
        assert evaluate("=IF(TRUE,1,1/0)") == Number(1.0)
        assert evaluate("=IF(0,1)") == Boolean(False)

    @pytest.mark.parametrize(
        ("formula", "expected"),
        [("=ROUND(2.5,0)", 3.0), ("=ROUND(-2.5,0)", -3.0), ("=ROUND(1234.5,-2)", 1200.0)],
    )
    def test_round_half_away(self, formula, expected):
        """Should round half away from zero."""
        assert evaluate(formula) == Number(expected)

    def test_fixed_and_dollar(self):
        """Should render numbers as text."""
        assert evaluate("=FIXED(1234.5,1)") == Text("1,234.5")
        assert evaluate("=FIXED(1234.567,1,TRUE)") == Text("1234.6")
        assert evaluate("=DOLLAR(-1234.5)") == Text("-$1,234.50")
        assert render_fixed(-0.001) == "0.00"
        assert render_dollar(12) == "$12.00"

    def test_fixed_text_hazard(self):
        """Should vanish from SUM yet count when referenced alone."""
        cells = {"C1": "=FIXED(1234.5,1)"}
        assert evaluate("=SUM(C1:C1)", **cells) == Number(0.0)
        assert evaluate("=C1*2", **cells) == Number(2469.0)

    def test_offset(self):
        """Should displace a reference."""
        cells = {"B5": 7}
        assert evaluate("=OFFSET(B6,-1,0)", **cells) == Number(7.0)
        assert evaluate("=SUM(OFFSET(B1,0,0,5,1))", **cells) == Number(7.0)
        assert evaluate("=OFFSET(A1,-1,0)") == ErrorValue("#REF!")

    def test_index(self):
        """Should pick the n-th cell of a column."""
        cells = {"B1": 1, "B2": 2, "B3": 3}
        assert evaluate("=INDEX(B1:B3,2)", **cells) == Number(2.0)
        assert evaluate("=INDEX(B1:B3,4)", **cells) == ErrorValue("#REF!")
        assert evaluate("=INDEX(B1:B3,0)", **cells) == ErrorValue("#REF!")
        assert evaluate("=INDEX(B:B,3)", **cells) == Number(3.0)

    def test_row_and_column(self):
        """Should report positions."""
        assert evaluate("=ROW()") == Number(1.0)
        assert evaluate("=COLUMN()") == Number(26.0)
        assert evaluate("=ROW(C7)") == Number(7.0)

    def test_unknown_function(self):
        """Should give #NAME?."""
        assert evaluate("=NPV(0.1,A1:A3)") == ErrorValue("#NAME?")

    def test_arity(self):
        """Should give #VALUE! on the wrong number of arguments."""
        assert evaluate("=ABS(1,2)") == ErrorValue("#VALUE!")

    def test_cross_sheet_reference(self):
        """Should read other sheets."""
        workbook = make_workbook({"Front": {"A1": "=Data!B2*2"}, "Data": {"B2": 21}})
        assert evaluate_cell(workbook, parse_address("Front!A1")) == Number(42.0)
