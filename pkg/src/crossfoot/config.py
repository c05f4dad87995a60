"""Audit configuration: tolerances, declared assertions and enabled rules."""
from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from crossfoot.address import Area, parse_area
from crossfoot.errors import ConfigError, CrossfootError

logger = logging.getLogger(__name__)

RULE_IDS = ("R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8")
SEVERITIES = ("error", "warning", "info")

DEFAULT_CHECK_MESSAGE = "Totals across and down do not match"
# Gaps are rounded to this many decimals before meeting the tolerance, in
# rules and in generated check cells alike.
GAP_DIGITS = 9
DEFAULT_BOUNDARY_MARKERS = [
    r"^\(Insert further rows (below|above) this line\)$",
    r"^_{3,}$",
]

# Checklist items that have a formula template, by assertion kind
ITEM_KINDS: dict[int, frozenset[str]] = {
    **{item: frozenset({"equality"}) for item in (1, 2, 4, 5, 7, 11)},
    3: frozenset({"sign", "range"}),
    13: frozenset({"sign", "range"}),
    6: frozenset({"equality", "sum_to_constant"}),
    12: frozenset({"convergence"}),
}
UNTEMPLATED_ITEMS = frozenset({8, 9, 10, 14})

Severity = Literal["error", "warning", "info"]
AssertionKind = Literal["equality", "sum_to_constant", "sign", "range", "convergence"]


class AssertionSpec(BaseModel):
    """A declared integrity check such as "inputs total equals outputs total".

    ``lhs`` and a non-numeric ``rhs`` are cell or range references; unqualified
    references resolve against the front sheet.
    """

    model_config = ConfigDict(extra="forbid")

    kind: AssertionKind
    lhs: str
    rhs: str | float | None = None
    tolerance: float = Field(default=0.0, ge=0, allow_inf_nan=False)
    label: str = ""
    sign: Literal["positive", "negative", "nonnegative", "nonpositive"] | None = None
    lo: float | None = None
    hi: float | None = None
    item: int | None = Field(default=None, ge=1, le=14)

    @model_validator(mode="after")
    def _check_shape(self) -> AssertionSpec:
        if self.kind in ("equality", "convergence") and self.rhs is None:
            raise ValueError(f"{self.kind} assertions need both lhs and rhs")
        if self.kind == "sum_to_constant" and not isinstance(self.rhs, (int, float)):
            raise ValueError("sum_to_constant needs a numeric rhs")
        if self.kind == "sign" and self.sign is None:
            raise ValueError("sign assertions need 'sign'")
        if self.kind == "range":
            if self.lo is None and self.hi is None:
                raise ValueError("range assertions need 'lo' and/or 'hi'")
            if self.lo is not None and self.hi is not None and self.lo > self.hi:
                raise ValueError("'lo' must not exceed 'hi'")
        if self.item is not None:
            if self.item in UNTEMPLATED_ITEMS:
                raise ValueError(f"checklist item {self.item} has no formula template")
            allowed = ITEM_KINDS[self.item]
            if self.kind not in allowed:
                raise ValueError(
                    f"checklist item {self.item} expects {' or '.join(sorted(allowed))}, "
                    f"not {self.kind}"
                )
            if self.item == 6 and self.kind == "sum_to_constant" and self.rhs != 0:
                raise ValueError("checklist item 6 compares against zero")
        return self

    def name(self) -> str:
        return self.label or f"{self.kind} {self.lhs}"


class RatioBand(BaseModel):
    """numerator/denominator must stay within band_fraction of reference_ratio."""

    model_config = ConfigDict(extra="forbid")

    numerator: str
    denominator: str
    reference_ratio: float = Field(allow_inf_nan=False)
    band_fraction: float = Field(gt=0, le=1)
    label: str = ""

    def name(self) -> str:
        return self.label or f"{self.numerator}/{self.denominator}"


def beyond_tolerance(gap: float, limit: float) -> bool:
    """True when a gap fails ``ROUND(gap, 9) < limit``, the test a check cell makes."""
    return round(gap, GAP_DIGITS) >= limit


class AuditConfig(BaseModel):
    """Settings for one audit run. Every threshold a rule uses lives here."""

    model_config = ConfigDict(extra="forbid")

    tolerance_abs: float = Field(default=0.01, gt=0, allow_inf_nan=False)
    tolerance_rel: float | None = Field(default=None, ge=0, allow_inf_nan=False)
    chain_plus_min: int = Field(default=4, ge=2)
    assertions: list[AssertionSpec] = []
    ratio_bands: list[RatioBand] = []
    enabled_rules: list[str] = list(RULE_IDS)
    severity_overrides: dict[str, Severity] = {}
    table_totals_ratio: float = Field(default=0.8, gt=0, le=1)
    check_message: str = Field(default=DEFAULT_CHECK_MESSAGE, min_length=1)
    boundary_markers: list[str] = DEFAULT_BOUNDARY_MARKERS

    @field_validator("enabled_rules")
    @classmethod
    def _known_rules(cls, value: list[str]) -> list[str]:
        rules = sorted({rule.upper() for rule in value})
        unknown = [rule for rule in rules if rule not in RULE_IDS]
        if unknown:
            raise ValueError(f"unknown rule ids: {', '.join(unknown)}")
        return rules

    @field_validator("severity_overrides")
    @classmethod
    def _known_override_rules(cls, value: dict[str, str]) -> dict[str, str]:
        normalized = {rule.upper(): severity for rule, severity in value.items()}
        unknown = sorted(rule for rule in normalized if rule not in RULE_IDS)
        if unknown:
            raise ValueError(f"unknown rule ids: {', '.join(unknown)}")
        return dict(sorted(normalized.items()))

    @field_validator("boundary_markers")
    @classmethod
    def _compilable(cls, value: list[str]) -> list[str]:
        for pattern in value:
            try:
                re.compile(pattern)
            except re.error as exc:
                raise ValueError(f"bad pattern {pattern!r}: {exc}") from exc
        return value

    def enabled(self, rule: str) -> bool:
        return rule in self.enabled_rules

    def threshold(self, *magnitudes: float) -> float:
        """Effective tolerance: absolute, or relative to the largest magnitude if larger."""
        if self.tolerance_rel is None:
            return self.tolerance_abs
        scale = max((abs(m) for m in magnitudes), default=0.0)
        return max(self.tolerance_abs, self.tolerance_rel * scale)

    def is_boundary_marker(self, text: str) -> bool:
        stripped = text.strip()
        return any(re.search(p, stripped, re.IGNORECASE) for p in self.boundary_markers)

    def echo(self) -> dict[str, Any]:
        """JSON-ready copy embedded in reports."""
        return self.model_dump(mode="json")


def resolve_target(text: str, default_sheet: str) -> Area:
    """Cell or range text from the config, as an area.

    Raises:
        ConfigError: If the text is not a reference.
    """
    try:
        return parse_area(text, default_sheet)
    except CrossfootError as exc:
        raise ConfigError(f"bad reference {text!r}: {exc}") from exc


def _describe(exc: ValidationError) -> str:
    first = exc.errors()[0]
    where = ".".join(str(part) for part in first["loc"])
    return f"{where}: {first['msg']}" if where else first["msg"]


def parse_config(data: dict[str, Any]) -> AuditConfig:
    try:
        return AuditConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {_describe(exc)}") from exc


def load_config(path: Path | None) -> AuditConfig:
    """Load a config from JSON, or YAML for ``.yaml``/``.yml``; defaults when None.

    Raises:
        ConfigError: For unparseable files or invalid settings.
    """
    if path is None:
        return AuditConfig()
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot parse {path.name}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path.name}: top level must be a mapping")
    logger.debug("Loaded config from %s", path)
    return parse_config(data)
