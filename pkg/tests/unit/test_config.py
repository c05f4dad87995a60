"""Tests for audit configuration."""

import json

import pytest

from crossfoot.config import (
    DEFAULT_CHECK_MESSAGE,
    RULE_IDS,
    AuditConfig,
    load_config,
    parse_config,
    resolve_target,
)
from crossfoot.errors import ConfigError


class TestAuditConfig:
    """Tests for AuditConfig defaults and helpers."""

    def test_defaults(self):
        """Should use the documented defaults."""
        config = AuditConfig()
        assert config.tolerance_abs == 0.01
        assert config.tolerance_rel is None
        assert config.chain_plus_min == 4
        assert config.enabled_rules == list(RULE_IDS)
        assert config.check_message == DEFAULT_CHECK_MESSAGE
        assert config.ratio_bands == []

    def test_relative_tolerance(self):
        """Should scale the tolerance with the largest magnitude."""
        config = AuditConfig(tolerance_rel=1e-6)
        assert config.threshold(1e6, -5.0) == pytest.approx(1.0)
        assert config.threshold(10.0) == 0.01
        assert AuditConfig().threshold(1e9) == 0.01

    def test_boundary_markers(self):
        """Should recognise the default marker rows."""
        config = AuditConfig()
        assert config.is_boundary_marker("(Insert further rows below this line)")
        assert config.is_boundary_marker("  _____ ")
        assert not config.is_boundary_marker("Sales")

    def test_rule_ids_normalised(self):
        """Should accept lower-case rule ids."""
        config = parse_config({"enabled_rules": ["r1", "R3"], "severity_overrides": {"r2": "info"}})
        assert config.enabled_rules == ["R1", "R3"]
        assert config.enabled("R1") and not config.enabled("R2")
        assert config.severity_overrides == {"R2": "info"}

    def test_echo_is_json_ready(self):
        """Should dump to plain JSON types."""
        json.dumps(AuditConfig().echo())


class TestValidation:
    """Tests for rejected settings."""

    @pytest.mark.parametrize(
        ("data", "fragment"),
        [
            ({"enabled_rules": ["R9"]}, "unknown rule ids: R9"),
            ({"tolerance_abs": 0}, "tolerance_abs"),
            ({"severity_overrides": {"R1": "fatal"}}, "severity_overrides"),
            ({"tolerance_abs": -1}, "tolerance_abs"),
            ({"chain_plus_min": 1}, "chain_plus_min"),
            ({"boundary_markers": ["("]}, "bad pattern"),
            ({"surprise": True}, "surprise"),
            ({"assertions": [{"kind": "equality", "lhs": "B2"}]}, "need both lhs and rhs"),
            ({"assertions": [{"kind": "sign", "lhs": "B2"}]}, "need 'sign'"),
            ({"assertions": [{"kind": "range", "lhs": "B2", "lo": 5, "hi": 1}]}, "'lo'"),
            (
                {"assertions": [{"kind": "equality", "lhs": "B2", "rhs": "C2", "item": 8}]},
                "no formula template",
            ),
            (
                {"assertions": [{"kind": "equality", "lhs": "B2", "rhs": "C2", "item": 3}]},
                "expects range or sign",
            ),
            (
                {
                    "ratio_bands": [
                        {
                            "numerator": "B2",
                            "denominator": "B3",
                            "reference_ratio": 0.5,
                            "band_fraction": 0,
                        }
                    ]
                },
                "band_fraction",
            ),
        ],
    )
    def test_invalid(self, data, fragment):
        """Should raise a config error naming the problem."""
        with pytest.raises(ConfigError, match=fragment):
            parse_config(data)

    def test_item_twelve_convergence(self):
        """Should accept the convergence template for item 12."""
        config = parse_config(
            {
                "assertions": [
                    {"kind": "convergence", "lhs": "B9", "rhs": "C9", "tolerance": 1e-6, "item": 12}
                ]
            }
        )
        assert config.assertions[0].name() == "convergence B9"

    def test_resolve_target(self):
        """Should resolve against the default sheet and reject junk."""
        assert str(resolve_target("B2:B4", "Data")) == "Data!B2:B4"
        with pytest.raises(ConfigError, match="bad reference"):
            resolve_target("nonsense", "Data")


class TestLoadConfig:
    """Tests for load_config."""

    def test_none_gives_defaults(self):
        """Should fall back to defaults."""
        assert load_config(None) == AuditConfig()

    def test_yaml(self, tmp_path):
        """Should read YAML."""
        path = tmp_path / "audit.yaml"
        path.write_text("tolerance_abs: 0.5\nenabled_rules: [R1, R7]\n", encoding="utf-8")
        config = load_config(path)
        assert config.tolerance_abs == 0.5
        assert config.enabled_rules == ["R1", "R7"]

    def test_empty_yaml(self, tmp_path):
        """Should treat an empty YAML file as defaults."""
        path = tmp_path / "audit.yml"
        path.write_text("", encoding="utf-8")
        assert load_config(path) == AuditConfig()

    def test_json(self, tmp_path):
        """Should read JSON."""
        path = tmp_path / "audit.json"
        path.write_text('{"chain_plus_min": 6}', encoding="utf-8")
        assert load_config(path).chain_plus_min == 6

    def test_unparseable(self, tmp_path):
        """Should wrap syntax errors."""
        path = tmp_path / "audit.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(ConfigError, match="Cannot parse audit.json"):
            load_config(path)

    def test_top_level_list(self, tmp_path):
        """Should insist on a mapping."""
        path = tmp_path / "audit.yaml"
        path.write_text("- R1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)
