from __future__ import annotations

from pathlib import Path

import pytest

from proofloop.events import LogStore
from proofloop.types import Problem

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def problem() -> Problem:
    return Problem(
        id="demo-sum-bound",
        statement=(
            "Let $a_1 = 1/2$ and $a_{k+1} = a_k/2$. Show that "
            "$\\sum_{k=1}^{n} a_k < 1$ for every $n \\ge 1$."
        ),
    )


@pytest.fixture
def store(tmp_path: Path) -> LogStore:
    return LogStore(tmp_path / "runs")
