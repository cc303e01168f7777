"""Shared accumulator for the acceptance suite's verdict lines.

Each acceptance test records exactly one line here before asserting; the
conftest terminal-summary hook prints the accumulated report after the
normal pytest summary, so a run always ends with one visible pass/fail
line per release criterion.
"""

from typing import List

ACCEPTANCE_RESULTS: List[str] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    """Append one ``[PASS]``/``[FAIL]`` line for the end-of-run report."""
    tag = "PASS" if passed else "FAIL"
    ACCEPTANCE_RESULTS.append(f"[{tag}] criterion {criterion}: {detail}")
