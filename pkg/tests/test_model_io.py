"""Unit tests for model file reading and writing"""

import json
import tempfile
import unittest
from pathlib import Path

from src.exceptions import ModelFormatError
from src.expr import SymbolKind
from src.model_io import load_model, model_to_dict, parse_model
from src.models import gps_dict, sirs_dict
from tests.test_agent_network import single_sirs


class TestParseModel(unittest.TestCase):
    """Test cases for parse_model"""

    def test_parse_sirs(self):
        """Test states, parameters, reactions and bounds"""
        an = parse_model(single_sirs(0.05))

        self.assertEqual(an.states, ("S", "I", "R"))
        self.assertEqual(set(an.parameters), {"alpha", "beta"})
        self.assertEqual(len(an.reactions), 3)
        self.assertEqual(an.reactions[0].label, "infect")
        self.assertEqual(an.uncertainty.bound("beta").const_factor, 0.05)
        self.assertEqual(an.uncertainty.uncertain_parameters(), ["beta"])
        self.assertEqual(an.horizon, 3.0)

    def test_default_labels(self):
        """Test that unlabeled reactions get R<j>"""
        data = single_sirs()
        del data["reactions"][1]["label"]
        an = parse_model(data)
        self.assertEqual(an.reactions[1].label, "R2")

    def test_unknown_key(self):
        """Test that unknown keys are rejected"""
        data = single_sirs()
        data["colour"] = "blue"
        with self.assertRaises(ModelFormatError) as context:
            parse_model(data)
        self.assertIn("colour", str(context.exception))

    def test_unknown_reaction_key(self):
        """Test that unknown keys inside a reaction are rejected"""
        data = single_sirs()
        data["reactions"][0]["speed"] = 1
        with self.assertRaises(ModelFormatError):
            parse_model(data)

    def test_missing_key(self):
        """Test that a missing horizon is reported"""
        data = single_sirs()
        del data["horizon"]
        with self.assertRaises(ModelFormatError) as context:
            parse_model(data)
        self.assertIn("horizon", str(context.exception))

    def test_undeclared_symbol_interned(self):
        """Test that undeclared rate symbols are kept for validation"""
        data = single_sirs()
        data["reactions"][1]["rate"]["poly"][0]["vars"]["delta"] = 1
        an = parse_model(data)
        sid = an.symbols.lookup("delta")
        self.assertIsNotNone(sid)
        self.assertEqual(an.symbols.kind(sid), SymbolKind.UNDECLARED)

    def test_parameter_clashing_with_state(self):
        """Test that a parameter may not reuse a state name"""
        data = single_sirs()
        data["params"]["S"] = {"nominal": 1.0}
        with self.assertRaises(ModelFormatError):
            parse_model(data)

    def test_nominal_table(self):
        """Test a piecewise-linear nominal"""
        data = single_sirs()
        data["params"]["beta"]["nominal"] = [[0.0, 1.0], [3.0, 2.0]]
        an = parse_model(data)
        self.assertAlmostEqual(an.parameters["beta"](1.5), 1.5)

    def test_denominator(self):
        """Test parsing of an affine denominator"""
        an = parse_model(gps_dict(2, 0.05))
        rate = an.reactions[0].rate
        self.assertIsNotNone(rate.denominator)
        self.assertEqual(rate.denominator.constant, 0.0)
        self.assertEqual(len(rate.denominator.terms), 2)


class TestLoadModel(unittest.TestCase):
    """Test cases for load_model and model_to_dict"""

    def test_malformed_json_location(self):
        """Test that malformed JSON reports line and column"""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text('{\n  "states": ["S",\n}\n', encoding="utf-8")
            with self.assertRaises(ModelFormatError) as context:
                load_model(path)
            self.assertIn("line 3", str(context.exception))

    def test_missing_file(self):
        """Test that an unreadable file raises ModelFormatError"""
        with self.assertRaises(ModelFormatError):
            load_model(Path("does/not/exist.json"))

    def test_written_model_loads_back(self):
        """Test that model_to_dict output parses to the same network"""
        original = parse_model(sirs_dict(2, 0.03))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "sirs.json"
            path.write_text(json.dumps(model_to_dict(original)), encoding="utf-8")
            loaded = load_model(path)

        self.assertEqual(loaded.states, original.states)
        self.assertEqual(dict(loaded.initial), dict(original.initial))
        self.assertEqual(
            [r.label for r in loaded.reactions],
            [r.label for r in original.reactions],
        )
        self.assertEqual(model_to_dict(loaded), model_to_dict(original))


if __name__ == '__main__':
    unittest.main()
