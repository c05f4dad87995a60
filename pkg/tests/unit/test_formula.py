"""Tests for the formula lexer, parser and printer."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossfoot.address import CellAddress
from crossfoot.errors import FormulaParseError
from crossfoot.formula import (
    Binary,
    BoolLit,
    Call,
    NumberLit,
    Paren,
    RangeRef,
    Ref,
    TextLit,
    Unary,
    extract_references,
    parse_formula,
    print_formula,
    shift_references,
    to_dict,
    to_tree,
    with_required_parens,
)

CHECK_FORMULA = '=IF( ABS(H10-J10)<0.01, "", "Totals across and down do not match" )'

CANONICAL = {CHECK_FORMULA: '=IF(ABS(H10-J10)<0.01,"","Totals across and down do not match")'}

QUOTED_FORMULAS = [
    CHECK_FORMULA,
    "=B11+B17+B27+B37+B48+B67",
    "=SUM(B2:B67)/2",
    "=SUBTOTAL(9,B2:B67)",
    "=SUBTOTAL(9,B51:B66)",
    "=SUBTOTAL(9,B52:B67)",
    "=SUBTOTAL(9,B51:OFFSET(B67,-1,0))",
    "=SUBTOTAL(9,B51:INDEX(B:B,ROW()-1))",
]


def ref(a1, sheet="S"):
    col = ord(a1[0]) - ord("A") + 1
    return Ref(CellAddress(sheet, col, int(a1[1:])))


class TestParseFormula:
    """Tests for parse_formula."""

    @pytest.mark.parametrize("text", QUOTED_FORMULAS)
    def test_quoted_formulas_round_trip(self, text):
        """Should parse, print without cosmetic spaces and re-parse to the same tree."""
        node = parse_formula(text, "S")
        printed = print_formula(node)
        assert printed == CANONICAL.get(text, text)
        assert parse_formula(printed, "S") == node

    def test_check_formula_structure(self):
        """Should keep the message text and the 0.01 tolerance."""
        node = parse_formula(CHECK_FORMULA, "Sheet1")
        assert isinstance(node, Call) and node.name == "IF"
        condition, blank, message = node.args
        assert condition == Binary(
            "<",
            Call("ABS", (Binary("-", ref("H10", "Sheet1"), ref("J10", "Sheet1")),)),
            NumberLit(0.01),
        )
        assert blank == TextLit("")
        assert message == TextLit("Totals across and down do not match")
        assert print_formula(node) == (
            '=IF(ABS(H10-J10)<0.01,"","Totals across and down do not match")'
        )

    def test_plus_chain_leans_left(self):
        """Should build a left-leaning chain of six references."""
        node = parse_formula("=B11+B17+B27+B37+B48+B67", "S")
        depth = 0
        while isinstance(node, Binary):
            assert node.op == "+"
            assert isinstance(node.right, Ref)
            node = node.left
            depth += 1
        assert depth == 5
        assert node == ref("B11")

    def test_single_number(self):
        """Should parse a bare literal."""
        assert parse_formula("=1", "S") == NumberLit(1.0)

    def test_index_anchored_range(self):
        """Should allow a call as the end of a range."""
        node = parse_formula("=SUBTOTAL(9,B51:INDEX(B:B,ROW()-1))", "S")
        assert node.name == "SUBTOTAL"
        assert node.args[0] == NumberLit(9.0)
        span = node.args[1]
        assert isinstance(span, RangeRef)
        assert span.start == ref("B51")
        assert isinstance(span.end, Call) and span.end.name == "INDEX"
        column = span.end.args[0]
        assert column.whole_column
        assert span.end.args[1] == Binary("-", Call("ROW", ()), NumberLit(1.0))

    def test_function_names_uppercased(self):
        """Should store function names in upper case."""
        assert parse_formula("=sum(a1:a2)", "S").name == "SUM"

    def test_unknown_function_parses(self):
        """Should leave unknown functions to the evaluator."""
        assert parse_formula("=VLOOKUP(A1,B1:C9,2)", "S").name == "VLOOKUP"

    def test_precedence(self):
        """Should bind ^ over * over +."""
        node = parse_formula("=2+3*4^2", "S")
        assert node == Binary(
            "+",
            NumberLit(2.0),
            Binary("*", NumberLit(3.0), Binary("^", NumberLit(4.0), NumberLit(2.0))),
        )

    def test_power_is_left_associative(self):
        """Should group 2^3^2 as (2^3)^2."""
        node = parse_formula("=2^3^2", "S")
        assert node.left == Binary("^", NumberLit(2.0), NumberLit(3.0))

    def test_unary_minus_binds_tighter_than_power(self):
        """Should read -2^2 as (-2)^2."""
        node = parse_formula("=-2^2", "S")
        assert node == Binary("^", Unary("neg", NumberLit(2.0)), NumberLit(2.0))

    def test_percent_postfix(self):
        """Should parse a percent suffix."""
        assert parse_formula("=50%", "S") == Unary("percent", NumberLit(50.0))

    def test_comparison_is_weakest(self):
        """Should compare the concatenations, not their parts."""
        node = parse_formula('=A1&"x"="yx"', "S")
        assert node.op == "="
        assert node.left.op == "&"

    def test_sheet_qualified_range(self):
        """Should put both ends of a qualified range on that sheet."""
        node = parse_formula("=SUM('My Data'!B2:B9)", "Front")
        span = node.args[0]
        assert span.start.address.sheet == "My Data"
        assert span.end.address.sheet == "My Data"
        assert print_formula(node) == "=SUM('My Data'!B2:B9)"

    def test_booleans_and_escaped_quotes(self):
        """Should read TRUE and doubled quotes."""
        node = parse_formula('=IF(TRUE,"say ""hi""",FALSE)', "S")
        assert node.args[0] == BoolLit(True)
        assert node.args[1] == TextLit('say "hi"')
        assert print_formula(node) == '=IF(TRUE,"say ""hi""",FALSE)'

    @pytest.mark.parametrize(
        ("text", "column", "fragment"),
        [
            ("=SUM(1,,2)", 8, "Empty argument"),
            ("=1+(2", 6, "Unbalanced"),
            ("=1)", 3, "Unbalanced"),
            ("=1+#", 4, "Unknown token"),
        ],
    )
    def test_errors_carry_column(self, text, column, fragment):
        """Should report the column of the offending token."""
        with pytest.raises(FormulaParseError, match=fragment) as info:
            parse_formula(text, "S")
        assert info.value.column == column

    def test_missing_equals(self):
        """Should insist on the leading '='."""
        with pytest.raises(FormulaParseError):
            parse_formula("SUM(A1)", "S")


class TestPrintFormula:
    """Tests for the canonical printer."""

    def test_halved_sum(self):
        """Should print SUM(...)/2 unchanged."""
        assert print_formula(parse_formula("=SUM(B2:B67)/2", "S")) == "=SUM(B2:B67)/2"

    def test_zero(self):
        """Should print a zero literal."""
        assert print_formula(NumberLit(0.0)) == "=0"

    def test_adds_required_parentheses(self):
        """Should parenthesize a lower-precedence child built without Paren."""
        node = Binary("*", Binary("+", ref("A1"), ref("A2")), NumberLit(2.0))
        assert print_formula(node) == "=(A1+A2)*2"

    def test_keeps_explicit_parentheses(self):
        """Should reproduce redundant parentheses written by the author."""
        assert print_formula(parse_formula("=(A1)*(2)", "S")) == "=(A1)*(2)"

    def test_absolute_markers_kept(self):
        """Should print absolute markers as written."""
        assert print_formula(parse_formula("=$A$1+B$2", "S")) == "=$A$1+B$2"


class TestExtractReferences:
    """Tests for extract_references."""

    def test_plain_cells(self):
        """Should collect both references."""
        refs = extract_references(parse_formula("=B11+B17", "S"))
        assert refs.cells == {CellAddress("S", 2, 11), CellAddress("S", 2, 17)}
        assert not refs.ranges and not refs.dynamic

    def test_constants_only(self):
        """Should be empty for constant formulas."""
        assert not extract_references(parse_formula("=1+2", "S"))

    def test_dynamic_range_keeps_anchors(self):
        """Should list the OFFSET range as dynamic and keep its anchors."""
        refs = extract_references(parse_formula("=SUBTOTAL(9,B51:OFFSET(B67,-1,0))", "S"))
        assert len(refs.dynamic) == 1
        assert refs.cells == {CellAddress("S", 2, 51), CellAddress("S", 2, 67)}

    def test_static_range(self):
        """Should collect a static range once."""
        refs = extract_references(parse_formula("=SUM(B2:B9)+SUM(B2:B9)", "S"))
        assert len(refs.ranges) == 1


class TestShiftAndDump:
    """Tests for shifting and dumping ASTs."""

    def test_row_insertion_shift(self):
        """Should move a relative range down by one row."""
        node = shift_references(parse_formula("=SUBTOTAL(9,B51:B66)", "S"), 1, 0)
        assert print_formula(node) == "=SUBTOTAL(9,B52:B67)"

    def test_absolute_parts_stay(self):
        """Should not move absolute coordinates."""
        node = shift_references(parse_formula("=$A$1+A1", "S"), 2, 1)
        assert print_formula(node) == "=$A$1+B3"

    def test_to_tree(self):
        """Should indent one node per line."""
        tree = to_tree(parse_formula("=SUM(B2:B3)/2", "S"))
        assert tree.splitlines() == [
            "Binary /",
            "  Call SUM",
            "    Range",
            "      Ref S!B2",
            "      Ref S!B3",
            "  Number 2",
        ]

    def test_to_dict(self):
        """Should produce a JSON-ready structure."""
        assert to_dict(parse_formula("=A1*2", "S")) == {
            "node": "Binary",
            "op": "*",
            "left": {"node": "Ref", "ref": "S!A1"},
            "right": {"node": "NumberLit", "value": 2.0},
        }


# --- Property: print then parse gives back the same tree ---

_cells = st.builds(
    lambda col, row: Ref(CellAddress("S", col, row)),
    st.integers(1, 60),
    st.integers(1, 500),
)
_leaves = st.one_of(
    st.floats(min_value=0, max_value=1e9, allow_nan=False, allow_infinity=False).map(NumberLit),
    st.text(alphabet="abc xyz\"'", max_size=8).map(TextLit),
    st.booleans().map(BoolLit),
    _cells,
    st.tuples(_cells, _cells).map(lambda ends: RangeRef(*ends)),
)


def _extend(children):
    return st.one_of(
        st.tuples(
            st.sampled_from(["+", "-", "*", "/", "^", "&", "=", "<>", "<", "<=", ">", ">="]),
            children,
            children,
        ).map(lambda t: Binary(*t)),
        st.tuples(st.sampled_from(["neg", "percent"]), children).map(lambda t: Unary(*t)),
        st.tuples(
            st.sampled_from(["SUM", "IF", "ABS", "ROUND", "NOTAFUNCTION"]),
            st.lists(children, max_size=3).map(tuple),
        ).map(lambda t: Call(*t)),
        children.map(Paren),
    )


formula_trees = st.recursive(_leaves, _extend, max_leaves=12)


class TestRoundTripProperty:
    """Property tests for the printer."""

    @settings(max_examples=1000, deadline=None)
    @given(formula_trees)
    def test_print_parse_round_trip(self, tree):
        """Should re-parse printed text to a structurally equal tree."""
        expected = with_required_parens(tree)
        assert parse_formula(print_formula(expected), "S") == expected
