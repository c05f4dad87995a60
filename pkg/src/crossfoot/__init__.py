"""Crossfoot: self-checks and hazard detection for spreadsheet models.

The commands:
    crossfoot audit          # Run the rule catalog, report findings
    crossfoot gen-checks     # Propose cross-foot check formulas
    crossfoot recalc-diff    # Compare cached values with a fresh recalculation
    crossfoot manifest-check # Validate the governance sidecar
"""

__version__ = "1.0.0"

__all__ = ["__version__"]
