"""Pytest fixtures for crossfoot tests."""

from pathlib import Path

import pytest
from typer.testing import CliRunner

from tests.builders import crossfoot_sheet, make_workbook

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def cli_runner():
    """Typer CLI test runner."""
    return CliRunner()


@pytest.fixture
def corpus_dir() -> Path:
    """Directory holding the golden audit corpus."""
    return FIXTURES / "corpus"


@pytest.fixture
def clean_table():
    """One 3x3 cross-footed table on sheet Data, no check cell."""
    return make_workbook({"Data": crossfoot_sheet()})


@pytest.fixture
def checked_table():
    """The same table with a check cell below the grand total."""
    cells = crossfoot_sheet()
    cells["G8"] = '=IF(ABS(SUM(C7:E7)-SUM(G3:G5))<0.01,"","Totals across and down do not match")'
    return make_workbook({"Data": cells})
