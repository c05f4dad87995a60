"""Formula language: lexer, recursive-descent parser, printer and reference extraction.

The grammar is the en-US Excel subset (period decimal separator, comma
argument separator). Operator precedence, weakest to strongest:

    comparisons  =  <>  <  <=  >  >=
    concatenation  &
    additive  +  -
    multiplicative  *  /
    power  ^          (left associative)
    unary minus
    postfix percent  %
    range  :

Whitespace is insignificant and is not preserved. Explicit parentheses are
kept as ``Paren`` nodes so that printing reproduces them.
"""
from __future__ import annotations

import re
from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from typing import Any, NamedTuple, Union

from crossfoot.address import (
    MAX_ROW,
    Area,
    CellAddress,
    column_index,
    column_letter,
    parse_address,
    quote_sheet,
)
from crossfoot.errors import CrossfootError, FormulaParseError

COMPARISON_OPS = ("=", "<>", "<", "<=", ">", ">=")
ARITHMETIC_OPS = ("+", "-", "*", "/", "^")

_BINARY_PRECEDENCE = {
    **{op: 1 for op in COMPARISON_OPS},
    "&": 2,
    "+": 3,
    "-": 3,
    "*": 4,
    "/": 4,
    "^": 5,
}
_NEG_PRECEDENCE = 6
_PERCENT_PRECEDENCE = 7
_ATOM_PRECEDENCE = 8


# --- AST ---


@dataclass(frozen=True)
class NumberLit:
    value: float


@dataclass(frozen=True)
class TextLit:
    value: str


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Ref:
    """A single cell reference. ``explicit_sheet`` records a written sheet prefix."""

    address: CellAddress
    explicit_sheet: bool = False


@dataclass(frozen=True)
class RangeRef:
    """``start:end``. Endpoints are ``Ref`` nodes or calls such as OFFSET/INDEX."""

    start: FormulaNode
    end: FormulaNode
    whole_column: bool = False

    @property
    def is_static(self) -> bool:
        return isinstance(self.start, Ref) and isinstance(self.end, Ref)

    @property
    def area(self) -> Area | None:
        """The rectangle for a static single-sheet range, else None."""
        if not isinstance(self.start, Ref) or not isinstance(self.end, Ref):
            return None
        first, second = self.start.address, self.end.address
        if first.sheet.lower() != second.sheet.lower():
            return None
        return Area.spanning(first, second)


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" | "percent"
    child: FormulaNode


@dataclass(frozen=True)
class Binary:
    op: str
    left: FormulaNode
    right: FormulaNode


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[FormulaNode, ...] = ()


@dataclass(frozen=True)
class Paren:
    child: FormulaNode


FormulaNode = Union[NumberLit, TextLit, BoolLit, Ref, RangeRef, Unary, Binary, Call, Paren]


def children(node: FormulaNode) -> tuple[FormulaNode, ...]:
    if isinstance(node, RangeRef):
        return (node.start, node.end)
    if isinstance(node, (Unary, Paren)):
        return (node.child,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


def walk(node: FormulaNode) -> Iterator[FormulaNode]:
    """Pre-order traversal of every node."""
    yield node
    for child in children(node):
        yield from walk(child)


def unwrap(node: FormulaNode) -> FormulaNode:
    """Strip any number of enclosing parentheses."""
    while isinstance(node, Paren):
        node = node.child
    return node


def range_of(area: Area, current_sheet: str) -> RangeRef:
    """A static RangeRef for an area, qualified only when off the current sheet."""
    explicit = area.sheet.lower() != current_sheet.lower()
    return RangeRef(Ref(area.start, explicit), Ref(area.end))


def ref_of(address: CellAddress, current_sheet: str) -> Ref:
    return Ref(address, address.sheet.lower() != current_sheet.lower())


# --- Lexer ---

_SHEET_PREFIX = r"(?:'(?:[^']|'')+'|[A-Za-z_][A-Za-z0-9_.]*)!"
_NOT_NAME = r"(?![A-Za-z0-9_.(!$])"

_TOKEN = re.compile(
    rf"""
    (?P<ws>\s+)
    | (?P<string>"(?:[^"]|"")*")
    | (?P<colrange>(?:{_SHEET_PREFIX})?\$?[A-Za-z]{{1,3}}:\$?[A-Za-z]{{1,3}}{_NOT_NAME})
    | (?P<ref>(?:{_SHEET_PREFIX})?\$?[A-Za-z]{{1,3}}\$?[0-9]+{_NOT_NAME})
    | (?P<func>[A-Za-z_][A-Za-z0-9_.]*(?=\s*\())
    | (?P<bool>(?i:TRUE|FALSE){_NOT_NAME})
    | (?P<number>(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
    | (?P<op><>|<=|>=|[-+*/^&=<>])
    | (?P<percent>%)
    | (?P<lparen>\()
    | (?P<rparen>\))
    | (?P<comma>,)
    | (?P<colon>:)
    """,
    re.VERBOSE,
)


class Token(NamedTuple):
    kind: str
    text: str
    column: int  # 1-based offset in the formula text


def tokenize(text: str) -> list[Token]:
    """Split formula text (without the leading '=') into tokens.

    Raises:
        FormulaParseError: On any character sequence outside the grammar.
    """
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match or match.end() == pos:
            bad = text[pos:].split()[0] if text[pos:].split() else text[pos:]
            raise FormulaParseError(f"Unknown token {bad[:20]!r}", pos + 2)
        kind = match.lastgroup or ""
        if kind != "ws":
            tokens.append(Token(kind, match.group(), pos + 2))
        pos = match.end()
    tokens.append(Token("eof", "", len(text) + 2))
    return tokens


# --- Parser ---


class _Parser:
    """Recursive-descent parser over a token list."""

    def __init__(self, tokens: list[Token], current_sheet: str) -> None:
        self.tokens = tokens
        self.pos = 0
        self.sheet = current_sheet

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def at_op(self, *ops: str) -> bool:
        return self.cur.kind == "op" and self.cur.text in ops

    def error(self, message: str) -> FormulaParseError:
        got = "end of formula" if self.cur.kind == "eof" else repr(self.cur.text)
        return FormulaParseError(f"{message}; got {got}", self.cur.column)

    def parse(self) -> FormulaNode:
        node = self.comparison()
        if self.cur.kind == "rparen":
            raise self.error("Unbalanced parenthesis")
        if self.cur.kind != "eof":
            raise self.error("Unexpected token")
        return node

    def comparison(self) -> FormulaNode:
        node = self.concat()
        while self.at_op(*COMPARISON_OPS):
            op = self.advance().text
            node = Binary(op, node, self.concat())
        return node

    def concat(self) -> FormulaNode:
        node = self.additive()
        while self.at_op("&"):
            self.advance()
            node = Binary("&", node, self.additive())
        return node

    def additive(self) -> FormulaNode:
        node = self.multiplicative()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = Binary(op, node, self.multiplicative())
        return node

    def multiplicative(self) -> FormulaNode:
        node = self.power()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = Binary(op, node, self.power())
        return node

    def power(self) -> FormulaNode:
        node = self.unary()
        while self.at_op("^"):
            self.advance()
            node = Binary("^", node, self.unary())
        return node

    def unary(self) -> FormulaNode:
        if self.at_op("-"):
            self.advance()
            return Unary("neg", self.unary())
        if self.at_op("+"):
            self.advance()
            return self.unary()
        return self.postfix()

    def postfix(self) -> FormulaNode:
        node = self.range()
        while self.cur.kind == "percent":
            self.advance()
            node = Unary("percent", node)
        return node

    def range(self) -> FormulaNode:
        node = self.primary()
        if self.cur.kind != "colon":
            return node
        if not isinstance(node, (Ref, Call)):
            raise self.error("Range start must be a reference")
        self.advance()
        end_sheet = node.address.sheet if isinstance(node, Ref) else self.sheet
        end = self.primary(end_sheet)
        if not isinstance(end, (Ref, Call)):
            raise FormulaParseError(
                "Range end must be a reference", self.tokens[self.pos - 1].column
            )
        return RangeRef(node, end)

    def primary(self, ref_sheet: str | None = None) -> FormulaNode:
        token = self.cur
        if token.kind == "number":
            self.advance()
            return NumberLit(float(token.text))
        if token.kind == "string":
            self.advance()
            return TextLit(token.text[1:-1].replace('""', '"'))
        if token.kind == "bool":
            self.advance()
            return BoolLit(token.text.upper() == "TRUE")
        if token.kind == "ref":
            self.advance()
            return self._ref(token, ref_sheet or self.sheet)
        if token.kind == "colrange":
            self.advance()
            return self._colrange(token)
        if token.kind == "func":
            return self.call()
        if token.kind == "lparen":
            self.advance()
            inner = self.comparison()
            if self.cur.kind != "rparen":
                raise self.error("Unbalanced parenthesis, expected ')'")
            self.advance()
            return Paren(inner)
        raise self.error("Expected a value, reference or function")

    def call(self) -> FormulaNode:
        name = self.advance().text.upper()
        self.advance()  # '('
        args: list[FormulaNode] = []
        if self.cur.kind == "rparen":
            self.advance()
            return Call(name, ())
        while True:
            if self.cur.kind in ("comma", "rparen"):
                raise self.error(f"Empty argument in {name}")
            args.append(self.comparison())
            if self.cur.kind == "comma":
                self.advance()
                continue
            if self.cur.kind == "rparen":
                self.advance()
                return Call(name, tuple(args))
            raise self.error(f"Unbalanced parenthesis in {name}, expected ',' or ')'")

    def _ref(self, token: Token, sheet: str) -> Ref:
        try:
            address = parse_address(token.text, sheet)
        except CrossfootError as exc:
            raise FormulaParseError(str(exc), token.column) from exc
        return Ref(address, "!" in token.text)

    def _colrange(self, token: Token) -> RangeRef:
        text = token.text
        explicit = "!" in text
        sheet = self.sheet
        if explicit:
            prefix, text = text.rsplit("!", 1)
            sheet = prefix[1:-1].replace("''", "'") if prefix.startswith("'") else prefix
        first, second = text.split(":")
        try:
            start_col = column_index(first.lstrip("$"))
            end_col = column_index(second.lstrip("$"))
            start = CellAddress(sheet, start_col, 1, col_abs=first.startswith("$"))
            end = CellAddress(sheet, end_col, MAX_ROW, col_abs=second.startswith("$"))
        except CrossfootError as exc:
            raise FormulaParseError(str(exc), token.column) from exc
        return RangeRef(Ref(start, explicit), Ref(end), whole_column=True)


def parse_formula(text: str, current_sheet: str) -> FormulaNode:
    """Parse formula text beginning with '=' into an AST.

    Args:
        text: Formula text, e.g. ``"=SUBTOTAL(9,B51:B66)"``.
        current_sheet: Sheet that unqualified references belong to.

    Raises:
        FormulaParseError: With the 1-based column of the offending token.
    """
    stripped = text.lstrip()
    if not stripped.startswith("="):
        raise FormulaParseError("Formula must begin with '='", 1)
    offset = len(text) - len(stripped)
    tokens = tokenize(stripped[1:])
    if offset:
        tokens = [t._replace(column=t.column + offset) for t in tokens]
    if tokens[0].kind == "eof":
        raise FormulaParseError("Empty formula", 2 + offset)
    return _Parser(tokens, current_sheet).parse()


# --- Printer ---


def _precedence(node: FormulaNode) -> int:
    if isinstance(node, Binary):
        return _BINARY_PRECEDENCE[node.op]
    if isinstance(node, Unary):
        return _NEG_PRECEDENCE if node.op == "neg" else _PERCENT_PRECEDENCE
    return _ATOM_PRECEDENCE


def format_number(value: float) -> str:
    """Shortest round-tripping text for a non-negative literal."""
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    return text.replace("e", "E")


def _render_ref(ref: Ref) -> str:
    prefix = quote_sheet(ref.address.sheet) + "!" if ref.explicit_sheet else ""
    return prefix + ref.address.a1


def _render(node: FormulaNode) -> str:
    if isinstance(node, NumberLit):
        return format_number(node.value)
    if isinstance(node, TextLit):
        return '"' + node.value.replace('"', '""') + '"'
    if isinstance(node, BoolLit):
        return "TRUE" if node.value else "FALSE"
    if isinstance(node, Ref):
        return _render_ref(node)
    if isinstance(node, RangeRef):
        if node.whole_column and isinstance(node.start, Ref) and isinstance(node.end, Ref):
            start, end = node.start.address, node.end.address
            prefix = quote_sheet(start.sheet) + "!" if node.start.explicit_sheet else ""
            first = ("$" if start.col_abs else "") + column_letter(start.col)
            second = ("$" if end.col_abs else "") + column_letter(end.col)
            return f"{prefix}{first}:{second}"
        return f"{_render(node.start)}:{_render(node.end)}"
    if isinstance(node, Paren):
        return f"({_render(node.child)})"
    if isinstance(node, Call):
        return f"{node.name}({','.join(_render(a) for a in node.args)})"
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = _render(node.child)
            if _precedence(node.child) < _NEG_PRECEDENCE:
                inner = f"({inner})"
            return "-" + inner
        inner = _render(node.child)
        if _precedence(node.child) < _PERCENT_PRECEDENCE:
            inner = f"({inner})"
        return inner + "%"
    if isinstance(node, Binary):
        prec = _BINARY_PRECEDENCE[node.op]
        left, right = _render(node.left), _render(node.right)
        if _precedence(node.left) < prec:
            left = f"({left})"
        if _precedence(node.right) <= prec:
            right = f"({right})"
        return f"{left}{node.op}{right}"
    raise TypeError(f"not a formula node: {node!r}")


def print_formula(node: FormulaNode) -> str:
    """Deterministic canonical text, always starting with '='.

    Parentheses that precedence requires are added even when the AST lacks
    a ``Paren`` node; use ``with_required_parens`` first when the printed
    text must re-parse to an identical tree.
    """
    return "=" + _render(node)


def with_required_parens(node: FormulaNode) -> FormulaNode:
    """Insert ``Paren`` nodes wherever printing would need parentheses."""
    if isinstance(node, Paren):
        return Paren(with_required_parens(node.child))
    if isinstance(node, Call):
        return Call(node.name, tuple(with_required_parens(a) for a in node.args))
    if isinstance(node, RangeRef):
        return RangeRef(
            with_required_parens(node.start), with_required_parens(node.end), node.whole_column
        )
    if isinstance(node, Unary):
        child = with_required_parens(node.child)
        limit = _NEG_PRECEDENCE if node.op == "neg" else _PERCENT_PRECEDENCE
        if _precedence(child) < limit:
            child = Paren(child)
        return Unary(node.op, child)
    if isinstance(node, Binary):
        prec = _BINARY_PRECEDENCE[node.op]
        left = with_required_parens(node.left)
        right = with_required_parens(node.right)
        if _precedence(left) < prec:
            left = Paren(left)
        if _precedence(right) <= prec:
            right = Paren(right)
        return Binary(node.op, left, right)
    return node


# --- References ---


@dataclass(frozen=True)
class RefSet:
    """References of one formula.

    Dynamic ranges (computed endpoints) are listed in ``dynamic``; the static
    references inside their endpoints, such as the anchor of OFFSET, are
    collected into ``cells`` and ``ranges`` like any other reference.
    """

    cells: frozenset[CellAddress] = frozenset()
    ranges: frozenset[RangeRef] = frozenset()
    dynamic: tuple[RangeRef, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return bool(self.cells or self.ranges or self.dynamic)


def extract_references(node: FormulaNode) -> RefSet:
    """Collect every cell, static range and dynamic range of a formula."""
    cells: set[CellAddress] = set()
    ranges: set[RangeRef] = set()
    dynamic: list[RangeRef] = []

    def visit(current: FormulaNode) -> None:
        if isinstance(current, Ref):
            cells.add(current.address.plain())
            return
        if isinstance(current, RangeRef):
            if current.is_static:
                ranges.add(current)
                return
            dynamic.append(current)
        for child in children(current):
            visit(child)

    visit(node)
    return RefSet(frozenset(cells), frozenset(ranges), tuple(dynamic))


def shift_references(node: FormulaNode, rows: int, cols: int) -> FormulaNode:
    """Move relative references by (rows, cols), as when a formula is copied.

    Raises:
        AddressParseError: When a shifted reference leaves the grid.
    """
    if isinstance(node, Ref):
        address = node.address
        col = address.col if address.col_abs else address.col + cols
        row = address.row if address.row_abs else address.row + rows
        return replace(node, address=replace(address, col=col, row=row))
    if isinstance(node, RangeRef):
        if node.whole_column and isinstance(node.start, Ref) and isinstance(node.end, Ref):
            start = shift_references(node.start, 0, cols)
            end = shift_references(node.end, 0, cols)
            return RangeRef(start, end, whole_column=True)
        return RangeRef(
            shift_references(node.start, rows, cols), shift_references(node.end, rows, cols)
        )
    if isinstance(node, Unary):
        return Unary(node.op, shift_references(node.child, rows, cols))
    if isinstance(node, Paren):
        return Paren(shift_references(node.child, rows, cols))
    if isinstance(node, Binary):
        return Binary(
            node.op,
            shift_references(node.left, rows, cols),
            shift_references(node.right, rows, cols),
        )
    if isinstance(node, Call):
        return Call(node.name, tuple(shift_references(a, rows, cols) for a in node.args))
    return node


# --- Dumping ---


def to_dict(node: FormulaNode) -> dict[str, Any]:
    """JSON-ready structure of an AST."""
    kind = type(node).__name__
    if isinstance(node, (NumberLit, TextLit, BoolLit)):
        return {"node": kind, "value": node.value}
    if isinstance(node, Ref):
        return {"node": kind, "ref": node.address.text()}
    if isinstance(node, RangeRef):
        return {
            "node": kind,
            "whole_column": node.whole_column,
            "start": to_dict(node.start),
            "end": to_dict(node.end),
        }
    if isinstance(node, (Unary, Paren)):
        result: dict[str, Any] = {"node": kind}
        if isinstance(node, Unary):
            result["op"] = node.op
        result["child"] = to_dict(node.child)
        return result
    if isinstance(node, Binary):
        left, right = to_dict(node.left), to_dict(node.right)
        return {"node": kind, "op": node.op, "left": left, "right": right}
    if isinstance(node, Call):
        return {"node": kind, "name": node.name, "args": [to_dict(a) for a in node.args]}
    raise TypeError(f"not a formula node: {node!r}")


def to_tree(node: FormulaNode, indent: int = 0) -> str:
    """Indented one-node-per-line rendering of an AST."""
    pad = "  " * indent
    if isinstance(node, NumberLit):
        line = f"{pad}Number {format_number(node.value)}"
    elif isinstance(node, TextLit):
        line = f"{pad}Text {node.value!r}"
    elif isinstance(node, BoolLit):
        line = f"{pad}Bool {'TRUE' if node.value else 'FALSE'}"
    elif isinstance(node, Ref):
        line = f"{pad}Ref {node.address.text()}"
    elif isinstance(node, RangeRef):
        label = "Range (whole column)" if node.whole_column else "Range"
        line = f"{pad}{label}"
    elif isinstance(node, Unary):
        line = f"{pad}Unary {node.op}"
    elif isinstance(node, Binary):
        line = f"{pad}Binary {node.op}"
    elif isinstance(node, Call):
        line = f"{pad}Call {node.name}"
    else:
        line = f"{pad}Paren"
    parts = [line] + [to_tree(child, indent + 1) for child in children(node)]
    return "\n".join(parts)
