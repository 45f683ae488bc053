"""
Tests for JSON and CSV output.
"""

import io
import json
import math

import numpy as np
import pytest

from core.entropic_ot import CostSpec, solve_multimarginal, solve_ot
from core.finite_free import MonicPoly
from core.operations import OperationKind
from core.serialization import (
    coupling_table,
    coupling_to_dict,
    dumps_report,
    format_cell,
    format_float,
    to_jsonable,
    write_csv,
)


class TestToJsonable:
    """Test conversion into plain JSON types."""

    def test_numpy_scalars_and_arrays(self):
        """Test numpy values become Python numbers and lists."""
        data = to_jsonable({"a": np.float64(0.5), "b": np.int64(3), "c": np.arange(3)})

        assert data == {"a": 0.5, "b": 3, "c": [0, 1, 2]}
        assert type(data["b"]) is int

    def test_non_finite_become_null(self):
        """Test NaN and infinities serialize as null."""
        assert to_jsonable([math.nan, math.inf, -math.inf]) == [None, None, None]

    def test_complex(self):
        """Test complex numbers split into re and im."""
        assert to_jsonable(1.5 - 2j) == {"re": 1.5, "im": -2.0}

    def test_enum_and_bool(self):
        """Test enums use their value and numpy bools stay bools."""
        assert to_jsonable(OperationKind.COMPRESSION) == "comp"
        assert to_jsonable(np.bool_(True)) is True

    def test_measure_and_polynomial(self, bern):
        """Test domain objects get their JSON shape."""
        assert to_jsonable(bern) == {"atoms": [-1.0, 1.0], "weights": [0.5, 0.5]}
        assert to_jsonable(MonicPoly.from_roots([1.0, 2.0])) == {"coeffs": [2.0, -3.0, 1.0]}

    def test_coupling(self, bern, skewed):
        """Test a two-marginal plan exports atoms, plan, value and scalings."""
        sol = solve_ot(CostSpec("add", 3.0), bern, skewed)
        data = to_jsonable(sol)

        assert set(data) == {"rows", "cols", "pi", "value", "a", "b"}
        assert data["rows"] == [-1.0, 1.0]
        assert data["cols"] == [-0.5, 0.25, 1.5]
        assert len(data["pi"]) == 2
        assert len(data["pi"][0]) == 3
        assert data["a"] == sol.a_pot.tolist()
        assert data["b"] == sol.b_pot.tolist()

    def test_compression_coupling_columns(self, skewed):
        """Test the compression plan is labelled by the two-atom marginal."""
        data = coupling_to_dict(solve_ot(CostSpec("comp", 2.0, tau=0.4), skewed))

        assert data["cols"] == [0.0, 1.0]

    def test_multimarginal_coupling(self, bern):
        """Test a d = 3 plan lists every axis."""
        data = coupling_to_dict(solve_multimarginal("add", 4.0, [bern] * 3))

        assert set(data) == {"atoms", "pi", "value", "potentials"}
        assert len(data["atoms"]) == 3

    def test_float_rounding_is_stable(self):
        """Test rounding to JSON_DIGITS keeps the value."""
        x = 0.1 + 0.2
        assert float(format_float(x)) == x


class TestCouplingTable:
    """Test the per-cell coupling records."""

    def test_one_record_per_cell(self, bern, skewed):
        """Test records carry atom labels and the plan entry."""
        sol = solve_ot(CostSpec("add", 3.0), bern, skewed)
        table = coupling_table(sol)

        assert len(table) == 6
        assert list(table[0]) == ["row", "col", "pi"]
        assert table[0]["row"] == -1.0
        assert table[0]["col"] == -0.5
        assert sum(r["pi"] for r in table) == pytest.approx(1.0, abs=1e-12)
        assert table[5]["pi"] == sol.pi[1, 2]

    def test_multimarginal_columns(self, bern):
        """Test d = 3 records name each axis."""
        table = coupling_table(solve_multimarginal("add", 4.0, [bern] * 3))

        assert len(table) == 8
        assert list(table[0]) == ["x1", "x2", "x3", "pi"]


class TestDumpsReport:
    """Test the report envelope."""

    def test_schema_first(self):
        """Test the schema version leads and output ends with a newline."""
        text = dumps_report({"value": 1.0, "kind": OperationKind.ADDITIVE})

        assert text.endswith("\n")
        data = json.loads(text)
        assert list(data)[0] == "schema"
        assert data["kind"] == "add"

    def test_identical_inputs_identical_bytes(self):
        """Test two dumps of the same payload are byte-identical."""
        payload = {"x": np.linspace(0.0, 1.0, 7), "y": {"b": 2, "a": 1}}

        assert dumps_report(payload) == dumps_report(payload)


class TestWriteCsv:
    """Test CSV output."""

    def test_stream(self):
        """Test header and rows go to a stream."""
        out = io.StringIO()
        write_csv(out, ["n", "value"], [[8, 0.5], [16, 0.25]])

        assert out.getvalue() == "n,value\n8,0.5\n16,0.25\n"

    def test_path(self, tmp_path):
        """Test writing to a file path."""
        path = tmp_path / "table.csv"
        write_csv(str(path), ["a"], [[1.0]])

        assert path.read_text() == "a\n1\n"

    @pytest.mark.parametrize("value, text", [(1e-20, "1e-20"), (2.0, "2")])
    def test_float_cells(self, value, text):
        """Test floats use the shared formatter."""
        out = io.StringIO()
        write_csv(out, ["v"], [[value]])

        assert out.getvalue().splitlines()[1] == text

    @pytest.mark.parametrize(
        "value, text",
        [(0.1, "0.1"), (1.0 / 3.0, "0.3333333333333333"), (-2.5e-7, "-2.5e-07"), (1e20, "1e+20")],
    )
    def test_cells_are_shortest_round_trip(self, value, text):
        """Test cells carry the shortest text that reads back exactly."""
        assert format_cell(value) == text
        assert float(format_cell(value)) == value

    def test_non_finite_cells(self):
        """Test NaN and infinities keep their plain spelling."""
        assert format_cell(math.nan) == "nan"
        assert format_cell(math.inf) == "inf"
