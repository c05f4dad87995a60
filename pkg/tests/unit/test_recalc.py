"""Tests for the dependency graph and recalculation."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossfoot.address import CellAddress, parse_address
from crossfoot.errors import AddressParseError
from crossfoot.recalc import (
    COMPUTED,
    STORED,
    build_graph,
    evaluate_cell,
    recalc_diff,
    recalculate,
)
from crossfoot.workbook import ErrorValue, Number, Text, load_canonical
from tests.builders import make_workbook

CHECK = '=IF( ABS(H10-J10)<0.01, "", "Totals across and down do not match" )'
ANCHORED = [
    "=SUBTOTAL(9,B51:B66)",
    "=SUBTOTAL(9,B51:OFFSET(B67,-1,0))",
    "=SUBTOTAL(9,B51:INDEX(B:B,ROW()-1))",
]


def at(ref):
    return parse_address(ref, "S")


class TestBuildGraph:
    """Tests for build_graph."""

    def test_static_precedents(self):
        """Should list every existing cell of the range."""
        cells = {f"B{r}": r for r in range(51, 67)}
        cells["B67"] = "=SUBTOTAL(9,B51:B66)"
        graph = build_graph(make_workbook({"S": cells}))
        assert graph.precedents(at("B67")) == {at(f"B{r}") for r in range(51, 67)}
        assert not graph.cycles

    def test_constants_only(self):
        """Should have no edges without formulas."""
        graph = build_graph(make_workbook({"S": {"A1": 1, "A2": 2}}))
        assert dict(graph.edges) == {}

    @pytest.mark.parametrize("formula", ANCHORED[1:])
    def test_anchored_range_is_not_a_cycle(self, formula):
        """Should resolve the computed end before looking for cycles."""
        cells = {f"B{r}": r for r in range(51, 67)}
        cells["B67"] = formula
        graph = build_graph(make_workbook({"S": cells}))
        assert not graph.cycles
        assert at("B67") in graph.dynamic_nodes
        assert at("B67") not in graph.precedents(at("B67"))
        assert graph.precedents(at("B67")) == {at(f"B{r}") for r in range(51, 67)}

    def test_transitive_precedents(self):
        """Should follow chains of formulas."""
        workbook = make_workbook({"S": {"A1": 1, "A2": "=A1*2", "A3": "=A2+1"}})
        assert build_graph(workbook).transitive_precedents(at("A3")) == {at("A1"), at("A2")}


class TestRecalculate:
    """Tests for recalculate."""

    def test_sum(self):
        """Should add B2:B5."""
        workbook = make_workbook({"S": {"B2": 1, "B3": 2, "B4": 3, "B5": 4, "B6": "=SUM(B2:B5)"}})
        values = recalculate(workbook)
        assert values.get(at("B6")) == Number(10.0)
        assert values.provenance[at("B6")] == COMPUTED
        assert values.provenance[at("B2")] == STORED

    def test_self_cycle(self):
        """Should mark a self reference #CIRC!."""
        assert recalculate(make_workbook({"S": {"A1": "=A1"}})).get(at("A1")) == ErrorValue(
            "#CIRC!"
        )

    def test_longer_cycle(self):
        """Should mark every member of a cycle and nothing else."""
        workbook = make_workbook({"S": {"A1": "=A2+1", "A2": "=A1+1", "A3": "=5", "A4": "=A1"}})
        values = recalculate(workbook)
        assert values.get(at("A1")) == ErrorValue("#CIRC!")
        assert values.get(at("A2")) == ErrorValue("#CIRC!")
        assert values.get(at("A3")) == Number(5.0)
        assert values.get(at("A4")) == ErrorValue("#CIRC!")

    @pytest.mark.parametrize(
        ("j10", "expected"),
        [(100.005, Text("")), (101.0, Text("Totals across and down do not match"))],
    )
    def test_check_formula(self, j10, expected):
        """Should stay blank within tolerance and show the message beyond it."""
        workbook = make_workbook({"S": {"H10": 100.0, "J10": j10, "J12": CHECK}})
        assert evaluate_cell(workbook, at("J12")) == expected

    def test_float_caveat(self):
        """Should keep a tiny nonzero difference below the tolerance."""
        workbook = make_workbook(
            {"S": {"H10": "=0.1+0.2", "J10": 0.3, "K10": "=H10-J10", "J12": CHECK}}
        )
        values = recalculate(workbook)
        difference = values.get(at("K10")).value
        assert difference != 0
        assert abs(difference) < 1e-12
        assert values.get(at("J12")) == Text("")

    def test_formula_reading_blank_shows_zero(self):
        """Should give a formula over an empty cell the value 0."""
        assert evaluate_cell(make_workbook({"S": {"A1": "=B1"}}), at("A1")) == Number(0.0)

    def test_evaluate_cell_unknown_sheet(self):
        """Should refuse an address on a missing sheet."""
        with pytest.raises(AddressParseError):
            evaluate_cell(make_workbook({"S": {}}), CellAddress("Nope", 1, 1))

    def test_deterministic(self):
        """Should give identical value maps on repeated runs."""
        cells = {f"A{r}": r * 0.1 for r in range(1, 40)}
        cells.update({f"B{r}": f"=SUM(A1:A{r})/3+B{r - 1}" for r in range(2, 40)})
        workbook = make_workbook({"S": cells})
        assert recalculate(workbook) == recalculate(workbook)


class TestAnchoredEquivalence:
    """The three forms of the B67 total on random data."""

    def test_hundred_fill_ins(self):
        """Should all equal the brute-force sum, exactly."""
        rng = random.Random(67)
        for _ in range(100):
            data = {f"B{r}": rng.randint(-10_000, 10_000) / 100 for r in range(51, 67)}
            oracle = 0.0
            for r in range(51, 67):
                oracle += data[f"B{r}"]
            for formula in ANCHORED:
                workbook = make_workbook({"S": {**data, "B50": "Sales", "B67": formula}})
                assert evaluate_cell(workbook, at("B67")) == Number(oracle)


def nested_layout(rng, groups, depth, function="SUBTOTAL"):
    """Detail rows in column B with group totals nested up to ``depth`` levels.

    Returns the cells, the brute-force sum of the detail rows and the last row.
    """
    cells = {}
    row = 2
    detail = 0.0

    def block(level):
        nonlocal row, detail
        start = row
        for _ in range(rng.randint(1, 3)):
            if level < depth and rng.random() < 0.4:
                block(level + 1)
            else:
                value = float(rng.randint(1, 99))
                cells[f"B{row}"] = value
                detail += value
                row += 1
        span = f"B{start}:B{row - 1}"
        cells[f"B{row}"] = f"=SUBTOTAL(9,{span})" if function == "SUBTOTAL" else f"=SUM({span})"
        row += 1

    for _ in range(groups):
        block(1)
    return cells, detail, row - 1


class TestSubtotalNesting:
    """SUBTOTAL over nested layouts."""

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 3))
    def test_subtotal_matches_detail_sum(self, seed, groups, depth):
        """Should count every detail row exactly once."""
        rng = random.Random(seed)
        cells, detail, last = nested_layout(rng, groups, depth)
        if last > 50:
            return
        cells["B60"] = f"=SUBTOTAL(9,B2:B{last})"
        value = evaluate_cell(make_workbook({"S": cells}), at("B60"))
        assert value.value == pytest.approx(detail, abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 8))
    def test_halved_sum_matches_when_tiled(self, seed, groups):
        """Should equal the detail sum when one level of SUM totals tiles the range."""
        cells, detail, last = nested_layout(random.Random(seed), groups, 1, function="SUM")
        if last > 50:
            return
        cells["B60"] = f"=SUM(B2:B{last})/2"
        value = evaluate_cell(make_workbook({"S": cells}), at("B60"))
        assert value.value == pytest.approx(detail, abs=1e-9)

    def test_halved_sum_with_tiling(self):
        """Should equal the detail sum when group totals tile the range."""
        cells = {
            "B2": 1,
            "B3": 2,
            "B4": "=SUM(B2:B3)",
            "B5": 4,
            "B6": 5,
            "B7": "=SUM(B5:B6)",
            "B9": "=SUM(B2:B7)/2",
        }
        assert evaluate_cell(make_workbook({"S": cells}), at("B9")) == Number(12.0)


class TestOracle:
    """Random SUM-and-plus workbooks against direct iteration."""

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=12), st.integers(0, 10_000))
    def test_sum_plus_workbooks(self, inputs, seed):
        """Should match a sum computed by direct iteration."""
        rng = random.Random(seed)
        cells = {f"A{i + 1}": float(v) for i, v in enumerate(inputs)}
        expected = {}
        for i in range(1, 6):
            lo = rng.randint(1, len(inputs))
            hi = rng.randint(lo, len(inputs))
            extra = rng.randint(1, len(inputs))
            cells[f"B{i}"] = f"=SUM(A{lo}:A{hi})+A{extra}"
            total = 0.0
            for r in range(lo, hi + 1):
                total += float(inputs[r - 1])
            expected[f"B{i}"] = total + float(inputs[extra - 1])
        values = recalculate(make_workbook({"S": cells}))
        for ref, value in expected.items():
            assert values.get(at(ref)) == Number(value)


class TestRecalcDiff:
    """Tests for recalc_diff."""

    def doc(self, stored, formula="=SUM(B2:B5)"):
        cells = [{"ref": f"B{r}", "v": r - 1} for r in range(2, 6)]
        cells.append({"ref": "B6", "v": stored, "f": formula})
        return json.dumps({"sheets": [{"name": "S", "cells": cells}]}).encode()

    def test_fresh_values(self):
        """Should be empty when cached values match."""
        assert recalc_diff(load_canonical(self.doc(10))).clean

    def test_stale_value(self):
        """Should report the stored and computed values with the delta."""
        diff = recalc_diff(load_canonical(self.doc(11)))
        (entry,) = diff.entries
        assert entry.address == at("B6")
        assert entry.stored == Number(11.0)
        assert entry.computed == Number(10.0)
        assert entry.delta == 1.0

    def test_unsupported_function(self):
        """Should list cells using unsupported functions as unverifiable."""
        diff = recalc_diff(load_canonical(self.doc(5, "=NPV(0.1,B2:B5)")))
        assert diff.clean
        assert diff.unverifiable == (at("B6"),)
