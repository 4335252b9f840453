from __future__ import annotations

from typing import Sequence

import pytest

from prosync.corpus import Speaker, Turn

# Filled by test_acceptance.py; one (criterion, passed, detail) per criterion.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def make_turns(
    speakers: str | Sequence[str],
    *,
    duration: float = 2.0,
    pause: float = 0.5,
    chars: int = 10,
) -> list[Turn]:
    """Evenly spaced turns from a speaker string such as ``"CTCT"``."""
    out = []
    t = 0.0
    for i, s in enumerate(speakers):
        out.append(Turn(i, Speaker(s), t, t + duration, chars))
        t += duration + pause
    return out


@pytest.fixture
def turns_ctct() -> list[Turn]:
    return make_turns("CTCT")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")
