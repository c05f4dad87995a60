"""Dependency graph, cycle classification and deterministic recalculation."""
from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import networkx as nx

from crossfoot.address import Area, CellAddress
from crossfoot.errors import AddressParseError
from crossfoot.formula import (
    Binary,
    BoolLit,
    Call,
    FormulaNode,
    NumberLit,
    Paren,
    RangeRef,
    Ref,
    TextLit,
    Unary,
    walk,
)
from crossfoot.functions import (
    REF,
    REFERENCE_ARGUMENT,
    VALUE,
    EvalContext,
    Reference,
    Result,
    apply_function,
    binary_op,
    is_supported,
    to_bool,
    unary_op,
)
from crossfoot.workbook import (
    BLANK,
    Blank,
    Boolean,
    CellValue,
    ErrorValue,
    Number,
    Text,
    Workbook,
)

logger = logging.getLogger(__name__)

CIRC = ErrorValue("#CIRC!")
DIFF_EPSILON = 1e-9


@dataclass(frozen=True)
class DepGraph:
    """Precedents per formula cell.

    ``edges`` only holds cells that exist in the workbook. Cells with computed
    range endpoints are listed in ``dynamic_nodes``; the cells those endpoints
    are anchored on are kept apart in ``anchors`` because an anchor is used as
    a position, not read as a value.
    """

    edges: Mapping[CellAddress, frozenset[CellAddress]]
    dynamic_nodes: frozenset[CellAddress]
    anchors: Mapping[CellAddress, frozenset[CellAddress]]
    cycles: frozenset[CellAddress]
    order: tuple[CellAddress, ...]
    graph: nx.DiGraph = field(repr=False, compare=False)

    def precedents(self, address: CellAddress) -> frozenset[CellAddress]:
        return self.edges.get(address, frozenset())

    def transitive_precedents(self, address: CellAddress) -> set[CellAddress]:
        """All cells feeding ``address`` directly or indirectly."""
        seen: set[CellAddress] = set()
        stack = list(self.precedents(address))
        while stack:
            current = stack.pop()
            if current in seen:
                continue
            seen.add(current)
            stack.extend(self.precedents(current))
        return seen


def _never_read(address: CellAddress) -> CellValue:
    return BLANK


class _Collector:
    """Walks one formula, sorting references into value reads and anchors."""

    def __init__(self, workbook: Workbook, cell: CellAddress) -> None:
        self.workbook = workbook
        self.cell = cell
        self.reads: set[CellAddress] = set()
        self.anchors: set[CellAddress] = set()
        self.dynamic = False

    def add_area(self, ref: Reference) -> None:
        context = EvalContext(self.workbook, self.cell, _never_read)
        for address in context.addresses(ref):
            if self.workbook.get_cell(address) is not None:
                self.reads.add(address)

    def visit(self, node: FormulaNode, as_reference: bool = False) -> None:
        if isinstance(node, Ref):
            address = self.workbook.canonical(node.address)
            if address is not None:
                (self.anchors if as_reference else self.reads).add(address)
            return
        if isinstance(node, RangeRef):
            if node.is_static:
                if not as_reference:
                    resolved = static_reference(self.workbook, self.cell, node)
                    if resolved is not None:
                        self.add_area(resolved)
                return
            self.dynamic = True
            resolved = static_reference(self.workbook, self.cell, node)
            if resolved is not None and not as_reference:
                self.add_area(resolved)
            self.visit(node.start, as_reference=True)
            self.visit(node.end, as_reference=True)
            return
        if isinstance(node, Call) and node.name in REFERENCE_ARGUMENT and node.args:
            if node.name in ("OFFSET", "INDEX") and not as_reference:
                resolved = static_reference(self.workbook, self.cell, node)
                if resolved is None:
                    self.dynamic = True
                else:
                    self.add_area(resolved)
            self.visit(node.args[0], as_reference=True)
            for arg in node.args[1:]:
                self.visit(arg)
            return
        if isinstance(node, Paren):
            self.visit(node.child, as_reference)
            return
        for child in _children(node):
            self.visit(child)


def _children(node: FormulaNode) -> tuple[FormulaNode, ...]:
    if isinstance(node, Unary):
        return (node.child,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


def static_number(workbook: Workbook, cell: CellAddress, node: FormulaNode) -> float | None:
    """Value of an offset expression that needs no cell values, such as ``ROW()-1``."""
    if isinstance(node, NumberLit):
        return node.value
    if isinstance(node, Paren):
        return static_number(workbook, cell, node.child)
    if isinstance(node, Unary) and node.op == "neg":
        inner = static_number(workbook, cell, node.child)
        return None if inner is None else -inner
    if isinstance(node, Binary) and node.op in ("+", "-", "*", "/"):
        left = static_number(workbook, cell, node.left)
        right = static_number(workbook, cell, node.right)
        if left is None or right is None:
            return None
        result = binary_op(node.op, Number(left), Number(right))
        return result.value if isinstance(result, Number) else None
    if isinstance(node, Call) and node.name in ("ROW", "COLUMN"):
        if not node.args:
            return float(cell.row if node.name == "ROW" else cell.col)
        ref = static_reference(workbook, cell, node.args[0])
        if ref is None:
            return None
        return float(ref.area.top if node.name == "ROW" else ref.area.left)
    return None


def static_reference(
    workbook: Workbook, cell: CellAddress, node: FormulaNode
) -> Reference | None:
    """Resolve a reference expression without reading any cell value.

    Handles plain references, ranges and OFFSET/INDEX with constant or
    ROW()-relative offsets; returns None for anything value-dependent.
    """
    if isinstance(node, Paren):
        return static_reference(workbook, cell, node.child)
    if isinstance(node, Ref):
        address = workbook.canonical(node.address)
        return Reference(Area.single(address)) if address else None
    if isinstance(node, RangeRef):
        if node.is_static:
            area = node.area
            sheet = workbook.sheet(area.sheet) if area else None
            if area is None or sheet is None:
                return None
            # full height kept; iteration clips whole columns
            return Reference(
                Area(sheet.name, area.top, area.left, area.bottom, area.right), node.whole_column
            )
        start = static_reference(workbook, cell, node.start)
        end = static_reference(workbook, cell, node.end)
        if start is None or end is None or start.area.sheet != end.area.sheet:
            return None
        return Reference(Area.enclosing([start.area, end.area]))
    if isinstance(node, Call) and node.name in ("OFFSET", "INDEX") and node.args:
        base = static_reference(workbook, cell, node.args[0])
        if base is None:
            return None
        numbers: list[Result] = []
        for arg in node.args[1:]:
            value = static_number(workbook, cell, arg)
            if value is None:
                return None
            numbers.append(Number(value))
        result = apply_function(
            node.name, [base, *numbers], EvalContext(workbook, cell, _never_read)
        )
        return result if isinstance(result, Reference) else None
    return None


def build_graph(workbook: Workbook) -> DepGraph:
    """Collect precedents for every formula cell and classify cycles.

    Computed range endpoints are resolved before cycle classification, so
    ``=SUBTOTAL(9,B51:OFFSET(B67,-1,0))`` in B67 depends on B51:B66 only.
    """
    edges: dict[CellAddress, frozenset[CellAddress]] = {}
    anchors: dict[CellAddress, frozenset[CellAddress]] = {}
    dynamic: set[CellAddress] = set()
    graph = nx.DiGraph()

    for cell in workbook.formula_cells():
        assert cell.formula is not None
        collector = _Collector(workbook, cell.address)
        collector.visit(cell.formula)
        edges[cell.address] = frozenset(collector.reads)
        if collector.dynamic:
            dynamic.add(cell.address)
            anchors[cell.address] = frozenset(collector.anchors)
        graph.add_node(cell.address)

    for address, precedents in edges.items():
        for precedent in precedents:
            if precedent in edges:
                graph.add_edge(precedent, address)

    cycles: set[CellAddress] = set()
    for component in nx.strongly_connected_components(graph):
        if len(component) > 1:
            cycles.update(component)
    cycles.update(node for node in graph.nodes if graph.has_edge(node, node))
    if cycles:
        logger.warning("Circular references: %s", ", ".join(sorted(map(str, cycles))))

    acyclic = graph.subgraph(n for n in graph.nodes if n not in cycles)
    order = tuple(nx.lexicographical_topological_sort(acyclic, key=workbook.sort_key))
    return DepGraph(
        edges=MappingProxyType(edges),
        dynamic_nodes=frozenset(dynamic),
        anchors=MappingProxyType(anchors),
        cycles=frozenset(cycles),
        order=order,
        graph=graph,
    )


# --- Evaluation ---

STORED = "stored"
COMPUTED = "computed"


@dataclass(frozen=True)
class ValueMap:
    """Computed values for formula cells, stored values for the rest."""

    values: Mapping[CellAddress, CellValue]
    provenance: Mapping[CellAddress, str]
    _folded: Mapping[tuple[str, int, int], CellValue] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        folded = {(a.sheet.lower(), a.col, a.row): v for a, v in self.values.items()}
        object.__setattr__(self, "_folded", MappingProxyType(folded))

    def get(self, address: CellAddress) -> CellValue:
        """Value at an address; Blank for cells that hold nothing."""
        return self._folded.get((address.sheet.lower(), address.col, address.row), BLANK)

    def __iter__(self) -> Iterator[CellAddress]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)


class _Evaluator:
    def __init__(self, workbook: Workbook, cycles: frozenset[CellAddress]) -> None:
        self.workbook = workbook
        self.cycles = cycles
        self.values: dict[CellAddress, CellValue] = {}
        self.in_progress: set[CellAddress] = set()

    def value_of(self, address: CellAddress) -> CellValue:
        canonical = self.workbook.canonical(address)
        if canonical is None:
            return REF
        if canonical in self.values:
            return self.values[canonical]
        cell = self.workbook.get_cell(canonical)
        if cell is None:
            return BLANK
        if cell.formula is None:
            return cell.value
        if canonical in self.cycles:
            value: CellValue = CIRC
        elif canonical in self.in_progress:
            logger.debug("Computed reference loops back to %s", canonical)
            return CIRC
        else:
            self.in_progress.add(canonical)
            try:
                context = EvalContext(self.workbook, canonical, self.value_of)
                value = context.scalar(self.evaluate(cell.formula, context))
            finally:
                self.in_progress.discard(canonical)
            if isinstance(value, Blank):
                value = Number(0.0)
        self.values[canonical] = value
        return value

    def reference(self, area: Area, whole_column: bool = False) -> Result:
        sheet = self.workbook.sheet(area.sheet)
        if sheet is None:
            return REF
        return Reference(
            Area(sheet.name, area.top, area.left, area.bottom, area.right), whole_column
        )

    def evaluate(self, node: FormulaNode, ctx: EvalContext) -> Result:
        if isinstance(node, NumberLit):
            return Number(node.value)
        if isinstance(node, TextLit):
            return Text(node.value)
        if isinstance(node, BoolLit):
            return Boolean(node.value)
        if isinstance(node, Ref):
            return self.reference(Area.single(node.address))
        if isinstance(node, Paren):
            return self.evaluate(node.child, ctx)
        if isinstance(node, RangeRef):
            return self.evaluate_range(node, ctx)
        if isinstance(node, Unary):
            return unary_op(node.op, ctx.scalar(self.evaluate(node.child, ctx)))
        if isinstance(node, Binary):
            left = ctx.scalar(self.evaluate(node.left, ctx))
            right = ctx.scalar(self.evaluate(node.right, ctx))
            return binary_op(node.op, left, right)
        if isinstance(node, Call) and node.name == "IF" and 2 <= len(node.args) <= 3:
            condition = to_bool(ctx.scalar(self.evaluate(node.args[0], ctx)))
            if isinstance(condition, ErrorValue):
                return condition
            if condition:
                return self.evaluate(node.args[1], ctx)
            return self.evaluate(node.args[2], ctx) if len(node.args) == 3 else Boolean(False)
        if isinstance(node, Call):
            args = [self.evaluate(arg, ctx) for arg in node.args]
            return apply_function(node.name, args, ctx)
        raise TypeError(f"not a formula node: {node!r}")

    def evaluate_range(self, node: RangeRef, ctx: EvalContext) -> Result:
        if node.is_static:
            area = node.area
            if area is None:
                return REF
            return self.reference(area, node.whole_column)
        start = self.evaluate(node.start, ctx)
        end = self.evaluate(node.end, ctx)
        for side in (start, end):
            if isinstance(side, ErrorValue):
                return side
            if not isinstance(side, Reference):
                return VALUE
        assert isinstance(start, Reference) and isinstance(end, Reference)
        if start.area.sheet != end.area.sheet:
            return VALUE
        return Reference(Area.enclosing([start.area, end.area]))


def recalculate(workbook: Workbook, graph: DepGraph | None = None) -> ValueMap:
    """Evaluate every formula cell in dependency order.

    Cells on a static cycle become #CIRC!; everything else is evaluated once.
    The result depends only on the workbook, so repeated runs are identical.
    """
    graph = graph or build_graph(workbook)
    evaluator = _Evaluator(workbook, graph.cycles)
    for address in graph.order:
        evaluator.value_of(address)
    for address in sorted(graph.cycles, key=workbook.sort_key):
        evaluator.value_of(address)

    values: dict[CellAddress, CellValue] = {}
    provenance: dict[CellAddress, str] = {}
    for cell in workbook.cells():
        if cell.has_formula:
            values[cell.address] = evaluator.value_of(cell.address)
            provenance[cell.address] = COMPUTED
        else:
            values[cell.address] = cell.value
            provenance[cell.address] = STORED
    return ValueMap(MappingProxyType(values), MappingProxyType(provenance))


def evaluate_cell(workbook: Workbook, address: CellAddress) -> CellValue:
    """Computed value of one cell, or its stored value when it has no formula."""
    canonical = workbook.canonical(address)
    if canonical is None:
        raise AddressParseError(str(address), "no such sheet")
    return recalculate(workbook).get(canonical)


# --- Stored versus computed ---


@dataclass(frozen=True)
class DiffEntry:
    address: CellAddress
    stored: CellValue
    computed: CellValue
    delta: float | None  # None when the value types differ


@dataclass(frozen=True)
class RecalcDiff:
    entries: tuple[DiffEntry, ...] = ()
    unverifiable: tuple[CellAddress, ...] = ()

    @property
    def clean(self) -> bool:
        return not self.entries


def unsupported_functions(node: FormulaNode) -> list[str]:
    return sorted({n.name for n in walk(node) if isinstance(n, Call) and not is_supported(n.name)})


def recalc_diff(workbook: Workbook, values: ValueMap | None = None) -> RecalcDiff:
    """Compare cached values in the file with freshly computed ones.

    Formula cells without a cached value are skipped. Cells that cannot be
    evaluated faithfully (unknown functions, unparseable formulas) are listed
    as unverifiable instead of being diffed.
    """
    values = values or recalculate(workbook)
    entries: list[DiffEntry] = []
    unverifiable: list[CellAddress] = []
    for cell in workbook.cells():
        if not cell.has_formula:
            continue
        if cell.formula is None or unsupported_functions(cell.formula):
            unverifiable.append(cell.address)
            continue
        stored, computed = cell.value, values.get(cell.address)
        if isinstance(stored, Blank):
            continue
        if isinstance(stored, Number) and isinstance(computed, Number):
            delta = abs(stored.value - computed.value)
            if delta > DIFF_EPSILON:
                entries.append(DiffEntry(cell.address, stored, computed, delta))
        elif type(stored) is not type(computed) or stored != computed:
            entries.append(DiffEntry(cell.address, stored, computed, None))
    return RecalcDiff(tuple(entries), tuple(unverifiable))
