"""Worksheet function catalog and operator semantics.

Range aggregation never coerces text, while arithmetic operators do. That
asymmetry is what makes FIXED/DOLLAR output vanish from a SUM but still count
when a cell is referenced on its own.
"""
from __future__ import annotations

import math
import re
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import Union

from crossfoot.address import Area, CellAddress, in_grid
from crossfoot.formula import Call, FormulaNode, unwrap
from crossfoot.workbook import (
    Blank,
    Boolean,
    CellValue,
    ErrorValue,
    Number,
    Text,
    Workbook,
    display,
)

DIV0 = ErrorValue("#DIV/0!")
VALUE = ErrorValue("#VALUE!")
REF = ErrorValue("#REF!")
NAME = ErrorValue("#NAME?")
NUM = ErrorValue("#NUM!")


@dataclass(frozen=True)
class Reference:
    """A rectangle used as a reference rather than a value.

    Whole-column references keep their full height so INDEX can address any
    row; iteration clips them to the sheet's used extent.
    """

    area: Area
    whole_column: bool = False

    @property
    def is_cell(self) -> bool:
        return self.area.size == 1


Result = Union[CellValue, Reference]


@dataclass(frozen=True)
class EvalContext:
    """Where a function runs: the formula's own cell and a value lookup."""

    workbook: Workbook
    cell: CellAddress
    value_of: Callable[[CellAddress], CellValue]

    def addresses(self, ref: Reference) -> list[CellAddress]:
        area = ref.area
        if ref.whole_column:
            sheet = self.workbook.sheet(area.sheet)
            bottom = min(area.bottom, sheet.max_row) if sheet else 0
            area = Area(area.sheet, area.top, area.left, bottom, area.right)
        if area.bottom < area.top:
            return []
        return list(area.addresses())

    def formula_root(self, address: CellAddress) -> FormulaNode | None:
        cell = self.workbook.get_cell(address)
        if cell is None or cell.formula is None:
            return None
        return unwrap(cell.formula)

    def scalar(self, arg: Result) -> CellValue:
        """Dereference a single-cell reference; larger ranges are #VALUE!."""
        if isinstance(arg, Reference):
            if not arg.is_cell:
                return VALUE
            return self.value_of(arg.area.start)
        return arg


# --- Coercion ---

_NUMERIC_TEXT = re.compile(r"^(?:\d[\d,]*(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")


def parse_number_text(text: str) -> float | None:
    """Read text the way arithmetic does: "1,234.5", "$12", "(3)", "15%"."""
    body = text.strip()
    negative = False
    if body.startswith("(") and body.endswith(")"):
        negative, body = True, body[1:-1].strip()
    if body.startswith(("-", "+")):
        negative ^= body[0] == "-"
        body = body[1:].strip()
    if body.startswith("$"):
        body = body[1:].strip()
    percent = body.endswith("%")
    if percent:
        body = body[:-1].strip()
    if not _NUMERIC_TEXT.match(body):
        return None
    value = float(body.replace(",", ""))
    if percent:
        value /= 100
    return -value if negative else value


def to_number(value: CellValue) -> float | ErrorValue:
    if isinstance(value, Number):
        return value.value
    if isinstance(value, Blank):
        return 0.0
    if isinstance(value, Boolean):
        return 1.0 if value.value else 0.0
    if isinstance(value, ErrorValue):
        return value
    parsed = parse_number_text(value.value)
    return VALUE if parsed is None else parsed


def to_bool(value: CellValue) -> bool | ErrorValue:
    if isinstance(value, Boolean):
        return value.value
    if isinstance(value, Number):
        return value.value != 0
    if isinstance(value, Blank):
        return False
    if isinstance(value, ErrorValue):
        return value
    upper = value.value.strip().upper()
    if upper in ("TRUE", "FALSE"):
        return upper == "TRUE"
    return VALUE


def number(value: float) -> CellValue:
    """Wrap a float result; infinities and NaN become #NUM!."""
    if not math.isfinite(value):
        return NUM
    return Number(value + 0.0)


# --- Operators ---


def unary_op(op: str, operand: CellValue) -> CellValue:
    x = to_number(operand)
    if isinstance(x, ErrorValue):
        return x
    return number(-x if op == "neg" else x / 100)


def _type_rank(value: CellValue) -> int:
    if isinstance(value, Text):
        return 1
    if isinstance(value, Boolean):
        return 2
    return 0


def compare(left: CellValue, right: CellValue) -> int | ErrorValue:
    """Three-way comparison: numbers < text < booleans, text case-insensitive."""
    for side in (left, right):
        if isinstance(side, ErrorValue):
            return side
    if isinstance(left, Blank):
        left = _blank_like(right)
    if isinstance(right, Blank):
        right = _blank_like(left)
    rank_l, rank_r = _type_rank(left), _type_rank(right)
    if rank_l != rank_r:
        return -1 if rank_l < rank_r else 1
    a: object
    b: object
    if isinstance(left, Text) and isinstance(right, Text):
        a, b = left.value.lower(), right.value.lower()
    else:
        a, b = getattr(left, "value", 0), getattr(right, "value", 0)
    return (a > b) - (a < b)  # type: ignore[operator]


def _blank_like(other: CellValue) -> CellValue:
    if isinstance(other, Text):
        return Text("")
    if isinstance(other, Boolean):
        return Boolean(False)
    return Number(0.0)


_COMPARISONS: dict[str, Callable[[int], bool]] = {
    "=": lambda c: c == 0,
    "<>": lambda c: c != 0,
    "<": lambda c: c < 0,
    "<=": lambda c: c <= 0,
    ">": lambda c: c > 0,
    ">=": lambda c: c >= 0,
}


def binary_op(op: str, left: CellValue, right: CellValue) -> CellValue:
    """Apply an infix operator to two scalar values."""
    if op in _COMPARISONS:
        order = compare(left, right)
        if isinstance(order, ErrorValue):
            return order
        return Boolean(_COMPARISONS[op](order))
    if op == "&":
        for side in (left, right):
            if isinstance(side, ErrorValue):
                return side
        return Text(display(left) + display(right))

    a, b = to_number(left), to_number(right)
    if isinstance(a, ErrorValue):
        return a
    if isinstance(b, ErrorValue):
        return b
    if op == "+":
        return number(a + b)
    if op == "-":
        return number(a - b)
    if op == "*":
        return number(a * b)
    if op == "/":
        return DIV0 if b == 0 else number(a / b)
    if op == "^":
        if a == 0 and b < 0:
            return DIV0
        try:
            return number(math.pow(a, b))
        except (OverflowError, ValueError):
            return NUM
    raise ValueError(f"unknown operator {op!r}")


# --- Function registry ---

FunctionImpl = Callable[[Sequence[Result], EvalContext], Result]


@dataclass(frozen=True)
class FunctionSpec:
    impl: FunctionImpl
    min_args: int
    max_args: int | None


FUNCTIONS: dict[str, FunctionSpec] = {}


def register(
    name: str, min_args: int, max_args: int | None
) -> Callable[[FunctionImpl], FunctionImpl]:
    def decorate(impl: FunctionImpl) -> FunctionImpl:
        FUNCTIONS[name] = FunctionSpec(impl, min_args, max_args)
        return impl

    return decorate


def is_supported(name: str) -> bool:
    return name.upper() in FUNCTIONS


def apply_function(name: str, args: Sequence[Result], context: EvalContext) -> Result:
    """Evaluate a worksheet function on already-evaluated arguments.

    Reference arguments stay references so OFFSET, INDEX, ROW and the
    aggregates can see cells rather than values. OFFSET and INDEX return a
    Reference; everything else returns a value.

    Args:
        name: Upper-case function name.
        args: Evaluated arguments (values or references).
        context: The calling cell and value lookup.

    Returns:
        The result; unknown functions give #NAME?, bad arity #VALUE!.
    """
    spec = FUNCTIONS.get(name.upper())
    if spec is None:
        return NAME
    if len(args) < spec.min_args or (spec.max_args is not None and len(args) > spec.max_args):
        return VALUE
    return spec.impl(args, context)


def _scalar_number(arg: Result, ctx: EvalContext) -> float | ErrorValue:
    return to_number(ctx.scalar(arg))


def _aggregate(
    args: Sequence[Result], ctx: EvalContext, skip_subtotals: bool = False
) -> Iterator[float | ErrorValue]:
    """Numbers seen by SUM-like functions.

    Referenced text, blanks and booleans are skipped; literal arguments coerce.
    """
    for arg in args:
        if isinstance(arg, Reference):
            for address in ctx.addresses(arg):
                if skip_subtotals and _is_subtotal(ctx.formula_root(address)):
                    continue
                value = ctx.value_of(address)
                if isinstance(value, Number):
                    yield value.value
                elif isinstance(value, ErrorValue):
                    yield value
        elif not isinstance(arg, Blank):
            yield to_number(arg)


def _is_subtotal(root: FormulaNode | None) -> bool:
    return isinstance(root, Call) and root.name == "SUBTOTAL"


def _sum(values: Iterator[float | ErrorValue]) -> CellValue:
    total = 0.0
    for value in values:
        if isinstance(value, ErrorValue):
            return value
        total += value
    return number(total)


@register("SUM", 1, None)
def _fn_sum(args: Sequence[Result], ctx: EvalContext) -> Result:
    return _sum(_aggregate(args, ctx))


@register("SUBTOTAL", 2, None)
def _fn_subtotal(args: Sequence[Result], ctx: EvalContext) -> Result:
    code = _scalar_number(args[0], ctx)
    if isinstance(code, ErrorValue):
        return code
    if code != 9:
        return VALUE
    return _sum(_aggregate(args[1:], ctx, skip_subtotals=True))


@register("AVERAGE", 1, None)
def _fn_average(args: Sequence[Result], ctx: EvalContext) -> Result:
    total, count = 0.0, 0
    for value in _aggregate(args, ctx):
        if isinstance(value, ErrorValue):
            return value
        total += value
        count += 1
    return DIV0 if count == 0 else number(total / count)


@register("COUNT", 1, None)
def _fn_count(args: Sequence[Result], ctx: EvalContext) -> Result:
    count = 0
    for arg in args:
        if isinstance(arg, Reference):
            count += sum(
                isinstance(ctx.value_of(a), Number) for a in ctx.addresses(arg)
            )
        elif isinstance(arg, (Number, Boolean)) or (
            isinstance(arg, Text) and parse_number_text(arg.value) is not None
        ):
            count += 1
    return Number(float(count))


def _extreme(args: Sequence[Result], ctx: EvalContext, pick: Callable[..., float]) -> Result:
    values: list[float] = []
    for value in _aggregate(args, ctx):
        if isinstance(value, ErrorValue):
            return value
        values.append(value)
    return Number(pick(values) if values else 0.0)


@register("MIN", 1, None)
def _fn_min(args: Sequence[Result], ctx: EvalContext) -> Result:
    return _extreme(args, ctx, min)


@register("MAX", 1, None)
def _fn_max(args: Sequence[Result], ctx: EvalContext) -> Result:
    return _extreme(args, ctx, max)


@register("IF", 2, 3)
def _fn_if(args: Sequence[Result], ctx: EvalContext) -> Result:
    condition = to_bool(ctx.scalar(args[0]))
    if isinstance(condition, ErrorValue):
        return condition
    if condition:
        return args[1]
    return args[2] if len(args) > 2 else Boolean(False)


@register("ABS", 1, 1)
def _fn_abs(args: Sequence[Result], ctx: EvalContext) -> Result:
    x = _scalar_number(args[0], ctx)
    return x if isinstance(x, ErrorValue) else number(abs(x))


def _quantize(x: float, digits: int) -> Decimal:
    """Round half away from zero at ``digits`` decimals (negative: tens, hundreds...)."""
    exponent = Decimal(1).scaleb(-digits)
    rounded = Decimal(repr(x)).quantize(exponent, rounding=ROUND_HALF_UP)
    return rounded.copy_abs() if rounded.is_zero() else rounded


def _digits(
    args: Sequence[Result], index: int, ctx: EvalContext, default: int
) -> int | ErrorValue:
    if len(args) <= index or isinstance(args[index], Blank):
        return default
    value = _scalar_number(args[index], ctx)
    if isinstance(value, ErrorValue):
        return value
    return math.trunc(value)


@register("ROUND", 2, 2)
def _fn_round(args: Sequence[Result], ctx: EvalContext) -> Result:
    x = _scalar_number(args[0], ctx)
    digits = _digits(args, 1, ctx, 0)
    if isinstance(x, ErrorValue):
        return x
    if isinstance(digits, ErrorValue):
        return digits
    try:
        return number(float(_quantize(x, digits)))
    except InvalidOperation:
        return NUM


def render_fixed(x: float, digits: int = 2, commas: bool = True) -> str:
    """Text produced by FIXED: rounded half away from zero, grouped thousands."""
    rounded = _quantize(x, digits)
    grouping = "," if commas else ""
    return f"{rounded:{grouping}.{max(digits, 0)}f}"


def render_dollar(x: float, digits: int = 2) -> str:
    """Text produced by DOLLAR; negatives render as "-$1,234.50"."""
    body = render_fixed(abs(x), digits)
    return ("-$" if _quantize(x, digits) < 0 else "$") + body


@register("FIXED", 1, 3)
def _fn_fixed(args: Sequence[Result], ctx: EvalContext) -> Result:
    x = _scalar_number(args[0], ctx)
    digits = _digits(args, 1, ctx, 2)
    if isinstance(x, ErrorValue):
        return x
    if isinstance(digits, ErrorValue):
        return digits
    no_commas = to_bool(ctx.scalar(args[2])) if len(args) > 2 else False
    if isinstance(no_commas, ErrorValue):
        return no_commas
    try:
        return Text(render_fixed(x, digits, commas=not no_commas))
    except InvalidOperation:
        return NUM


@register("DOLLAR", 1, 2)
def _fn_dollar(args: Sequence[Result], ctx: EvalContext) -> Result:
    x = _scalar_number(args[0], ctx)
    digits = _digits(args, 1, ctx, 2)
    if isinstance(x, ErrorValue):
        return x
    if isinstance(digits, ErrorValue):
        return digits
    try:
        return Text(render_dollar(x, digits))
    except InvalidOperation:
        return NUM


@register("OFFSET", 3, 5)
def _fn_offset(args: Sequence[Result], ctx: EvalContext) -> Result:
    base = args[0]
    if not isinstance(base, Reference):
        return base if isinstance(base, ErrorValue) else VALUE
    numbers: list[int] = []
    for index in range(1, len(args)):
        value = _scalar_number(args[index], ctx)
        if isinstance(value, ErrorValue):
            return value
        numbers.append(math.trunc(value))
    rows, cols = numbers[0], numbers[1]
    height = numbers[2] if len(numbers) > 2 else base.area.height
    width = numbers[3] if len(numbers) > 3 else base.area.width
    if height < 1 or width < 1:
        return REF
    top, left = base.area.top + rows, base.area.left + cols
    bottom, right = top + height - 1, left + width - 1
    if not (in_grid(left, top) and in_grid(right, bottom)):
        return REF
    return Reference(Area(base.area.sheet, top, left, bottom, right))


@register("INDEX", 2, 3)
def _fn_index(args: Sequence[Result], ctx: EvalContext) -> Result:
    base = args[0]
    if not isinstance(base, Reference):
        return base if isinstance(base, ErrorValue) else VALUE
    first = _scalar_number(args[1], ctx)
    if isinstance(first, ErrorValue):
        return first
    area = base.area
    if len(args) > 2:
        second = _scalar_number(args[2], ctx)
        if isinstance(second, ErrorValue):
            return second
        row, col = math.trunc(first), math.trunc(second)
    elif area.width == 1:
        row, col = math.trunc(first), 1
    elif area.height == 1:
        row, col = 1, math.trunc(first)
    else:
        return REF
    if not (1 <= row <= area.height and 1 <= col <= area.width):
        return REF
    target = CellAddress(area.sheet, area.left + col - 1, area.top + row - 1)
    return Reference(Area.single(target))


@register("ROW", 0, 1)
def _fn_row(args: Sequence[Result], ctx: EvalContext) -> Result:
    if not args:
        return Number(float(ctx.cell.row))
    ref = args[0]
    if not isinstance(ref, Reference):
        return ref if isinstance(ref, ErrorValue) else VALUE
    return Number(float(ref.area.top))


@register("COLUMN", 0, 1)
def _fn_column(args: Sequence[Result], ctx: EvalContext) -> Result:
    if not args:
        return Number(float(ctx.cell.col))
    ref = args[0]
    if not isinstance(ref, Reference):
        return ref if isinstance(ref, ErrorValue) else VALUE
    return Number(float(ref.area.left))


# Functions whose first argument is read as a reference, never as a value
REFERENCE_ARGUMENT = frozenset({"OFFSET", "INDEX", "ROW", "COLUMN"})
