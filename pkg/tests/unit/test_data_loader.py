"""
Tests for data loader module.
"""

import io
import json
from unittest.mock import mock_open, patch

import pytest

from core.data_loader import (
    load_json_data,
    load_measure,
    measure_from_dict,
    measure_to_dict,
)
from core.errors import DomainError


class TestDataLoader:
    """Test JSON loading."""

    def test_data_dir_exists(self):
        """Test that data directory path is correctly set."""
        from core.data_loader import DATA_DIR

        assert DATA_DIR.name == "data"

    @patch("builtins.open", new_callable=mock_open, read_data='{"atoms": [0, 1]}')
    def test_load_json_data_success(self, mock_file):
        """Test successful JSON data loading."""
        result = load_json_data("measure.json")

        assert result == {"atoms": [0, 1]}
        mock_file.assert_called_once()

    @patch("builtins.open", side_effect=FileNotFoundError)
    def test_load_json_data_file_not_found(self, mock_file):
        """Test JSON loading with missing file."""
        with pytest.raises(DomainError, match="no preset or file"):
            load_json_data("missing.json")

    @patch("builtins.open", new_callable=mock_open, read_data="invalid json")
    def test_load_json_data_invalid_json(self, mock_file):
        """Test JSON loading with invalid JSON."""
        with pytest.raises(DomainError, match="invalid measure JSON"):
            load_json_data("invalid.json")

    def test_load_json_data_from_stdin(self):
        """Test "-" reads the given stream."""
        result = load_json_data("-", stdin=io.StringIO('{"atoms": [2.5]}'))

        assert result == {"atoms": [2.5]}


class TestLoadMeasure:
    """Test measure specifications."""

    def test_named_presets(self):
        """Test bern, delta1 and positive-two-point."""
        assert load_measure("bern").atoms.tolist() == [-1.0, 1.0]
        assert load_measure("delta1").is_point_mass
        assert load_measure("positive-two-point").atoms.tolist() == [1.0, 2.0]

    def test_parametric_presets(self):
        """Test delta:c, two-point:a,b,w and uniform-grid:n,lo,hi."""
        assert load_measure("delta:0.5").atoms.tolist() == [0.5]

        two = load_measure("two-point:0,3,0.25")
        assert two.atoms.tolist() == [0.0, 3.0]
        assert two.weights.tolist() == pytest.approx([0.25, 0.75])

        grid = load_measure("uniform-grid:5,-1,1")
        assert grid.atoms.tolist() == pytest.approx([-1.0, -0.5, 0.0, 0.5, 1.0])

    @pytest.mark.parametrize(
        "spec",
        ["two-point:0,1", "two-point:0,1,1.5", "uniform-grid:2.5,0,1", "delta:x"],
    )
    def test_bad_parametric_presets(self, spec):
        """Test malformed preset arguments raise DomainError."""
        with pytest.raises(DomainError):
            load_measure(spec)

    def test_json_file(self, tmp_path):
        """Test loading a measure file with weights."""
        path = tmp_path / "mu.json"
        path.write_text(json.dumps({"atoms": [1, 0], "weights": [3, 1]}))

        m = load_measure(str(path))

        assert m.atoms.tolist() == [0.0, 1.0]
        assert m.weights.tolist() == pytest.approx([0.25, 0.75])

    def test_stdin(self):
        """Test "-" parses the measure from stdin."""
        m = load_measure("-", stdin=io.StringIO('{"atoms": [-1, 1]}'))

        assert m.weights.tolist() == [0.5, 0.5]

    def test_missing_atoms(self):
        """Test objects without atoms are rejected."""
        with pytest.raises(DomainError, match="atoms"):
            measure_from_dict({"weights": [1.0]})

    def test_round_trip_dict(self, skewed):
        """Test measure_to_dict feeds back into measure_from_dict."""
        again = measure_from_dict(measure_to_dict(skewed))

        assert again.atoms.tolist() == skewed.atoms.tolist()
        assert again.weights.tolist() == pytest.approx(skewed.weights.tolist())

    def test_bundled_data_file(self, skewed):
        """Test bare file names fall back to the data directory."""
        m = load_measure("skewed.json")

        assert m.atoms.tolist() == skewed.atoms.tolist()
        assert m.weights.tolist() == pytest.approx(skewed.weights.tolist())
