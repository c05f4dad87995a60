"""Syntactic recognisers shared by the rules and the check generator."""
from __future__ import annotations

from dataclasses import dataclass

from crossfoot.address import Area, CellAddress
from crossfoot.formula import (
    Binary,
    Call,
    FormulaNode,
    NumberLit,
    RangeRef,
    Ref,
    TextLit,
    unwrap,
)
from crossfoot.workbook import Workbook

COMPARISON_OPS = frozenset({"=", "<>", "<", "<=", ">", ">="})
AGGREGATE_FUNCTIONS = frozenset({"SUM", "SUBTOTAL"})
TEXT_NUMBER_FUNCTIONS = frozenset({"FIXED", "DOLLAR"})


def is_check_formula(node: FormulaNode) -> bool:
    """True for ``IF(<comparison>, "", "<message>")``, the shape of a check cell."""
    root = unwrap(node)
    if not isinstance(root, Call) or root.name != "IF" or len(root.args) != 3:
        return False
    condition, passed, failed = (unwrap(a) for a in root.args)
    return (
        isinstance(condition, Binary)
        and condition.op in COMPARISON_OPS
        and isinstance(passed, TextLit)
        and passed.value == ""
        and isinstance(failed, TextLit)
        and failed.value != ""
    )


def check_cells(workbook: Workbook, sheet: str | None = None) -> list[CellAddress]:
    """Addresses of every check cell, in workbook order."""
    return [
        cell.address
        for cell in workbook.formula_cells()
        if (sheet is None or cell.address.sheet.lower() == sheet.lower())
        and cell.formula is not None
        and is_check_formula(cell.formula)
    ]


def plus_chain(node: FormulaNode) -> list[FormulaNode] | None:
    """Leaves of a ``+``/``-`` chain, or None when the root is not one."""
    root = unwrap(node)
    if not isinstance(root, Binary) or root.op not in ("+", "-"):
        return None
    leaves: list[FormulaNode] = []

    def collect(current: FormulaNode) -> None:
        inner = unwrap(current)
        if isinstance(inner, Binary) and inner.op in ("+", "-"):
            collect(inner.left)
            collect(inner.right)
        else:
            leaves.append(inner)

    collect(root)
    return leaves


def chain_refs(node: FormulaNode) -> list[CellAddress] | None:
    """Distinct cells of a chain whose leaves are all plain references."""
    leaves = plus_chain(node)
    if leaves is None or not all(isinstance(leaf, Ref) for leaf in leaves):
        return None
    seen: dict[CellAddress, None] = {}
    for leaf in leaves:
        assert isinstance(leaf, Ref)
        seen.setdefault(leaf.address.plain(), None)
    return list(seen)


@dataclass(frozen=True)
class Aggregate:
    """A SUM or SUBTOTAL(9, ...) over a single static range."""

    function: str
    area: Area
    rng: RangeRef


def aggregate_of(node: FormulaNode) -> Aggregate | None:
    root = unwrap(node)
    if not isinstance(root, Call):
        return None
    if root.name == "SUM" and len(root.args) == 1:
        target = unwrap(root.args[0])
    elif root.name == "SUBTOTAL" and len(root.args) == 2:
        code = unwrap(root.args[0])
        if not isinstance(code, NumberLit) or code.value != 9:
            return None
        target = unwrap(root.args[1])
    else:
        return None
    if isinstance(target, RangeRef) and target.is_static and target.area is not None:
        return Aggregate(root.name, target.area, target)
    return None


def is_aggregate_root(node: FormulaNode) -> bool:
    root = unwrap(node)
    return isinstance(root, Call) and root.name in AGGREGATE_FUNCTIONS


def is_aggregating(node: FormulaNode) -> bool:
    """SUM/SUBTOTAL at the root, or a +/- chain over references or aggregates."""
    if is_aggregate_root(node):
        return True
    leaves = plus_chain(node)
    if leaves is None:
        return False
    refs = sum(isinstance(leaf, Ref) for leaf in leaves)
    return refs >= 2 or any(is_aggregate_root(leaf) for leaf in leaves)


def is_text_number(node: FormulaNode) -> bool:
    root = unwrap(node)
    return isinstance(root, Call) and root.name in TEXT_NUMBER_FUNCTIONS


def inline_aggregates(node: FormulaNode) -> list[Aggregate] | None:
    """Aggregates of a chain such as ``SUM(B2:B10)+SUM(B12:B20)``, else None."""
    leaves = plus_chain(node)
    if leaves is None:
        return None
    found = [aggregate_of(leaf) for leaf in leaves]
    if not found or any(a is None for a in found):
        return None
    return [a for a in found if a is not None]


def tiling(areas: list[Area], cells: list[CellAddress]) -> Area | None:
    """Enclosing rectangle when ``areas`` and ``cells`` cover it exactly once."""
    pieces = [*areas, *(Area.single(c) for c in cells)]
    if not pieces or len({p.sheet.lower() for p in pieces}) != 1:
        return None
    enclosing = Area.enclosing(pieces)
    if sum(p.size for p in pieces) != enclosing.size:
        return None
    covered: set[tuple[int, int]] = set()
    for piece in pieces:
        for address in piece.addresses():
            if address.key in covered:
                return None
            covered.add(address.key)
    return enclosing


def _along(area: Area, line: Area) -> bool:
    if line.width == 1:
        return area.left == area.right == line.left and area.sheet.lower() == line.sheet.lower()
    return area.top == area.bottom == line.top and area.sheet.lower() == line.sheet.lower()


def body_line_aggregates(node: FormulaNode, line: Area) -> bool:
    """True when a formula totals cells lying along ``line``.

    Accepts SUM/SUBTOTAL over a range on the same row or column, or a +/-
    chain whose references all lie on the line and which adds at least one
    such aggregate or two such references. Constant terms are tolerated, so a
    total that was overwritten with an adjustment still counts as a total.
    """
    aggregate = aggregate_of(node)
    if aggregate is not None:
        return _along(aggregate.area, line)
    leaves = plus_chain(node)
    if leaves is None:
        return False
    refs = 0
    aggregates = 0
    for leaf in leaves:
        if isinstance(leaf, Ref):
            if not line.contains(leaf.address):
                return False
            refs += 1
        elif (inner := aggregate_of(leaf)) is not None:
            if not _along(inner.area, line):
                return False
            aggregates += 1
        elif not isinstance(leaf, NumberLit):
            return False
    return aggregates > 0 or refs >= 2
