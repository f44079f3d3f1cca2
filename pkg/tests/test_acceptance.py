"""Acceptance criteria, one test each, at the stated tolerances and time limits.

Every test prints a single ``PASS``/``FAIL`` line; the lines are repeated in
the terminal summary. Run directly with ``python3 tests/test_acceptance.py``.
"""

import pytest

from nlprobe.validation import Context, run_checks

CRITERIA = [
    (1, "free-probe-qfi", "free-probe QFI equals 4 t^2 alpha^2"),
    (2, "analytic-oracle", "numeric QFI matches the closed-form variance"),
    (3, "series-slopes", "small-beta slope of the ratio"),
    (4, "fig1a-peak", "polynomial s=3 maximal ratio and its beta"),
    (5, "fig1b-peak", "polynomial s=4 maximal ratio and its beta"),
    (6, "kerr-no-gain-grid", "Kerr probe never beats the linear probe"),
    (7, "number-conserving-neutrality", "number-conserving process ratio is one"),
    (8, "skew-alignment-check", "skew baseline and skew/QFI argmax alignment"),
    (9, "heterodyne-fractions", "heterodyne CFI/QFI fractions"),
    (10, "property-suites", "property suites pass"),
]

REPORT: list[str] = []
_CTX = Context()


def _line(number, result):
    status = "PASS" if result.passed else "FAIL"
    worst = next((m for m in result.measurements if not m.passed), None)
    detail = result.error or (f"{worst.name}: {worst.measured} vs {worst.expected}" if worst else "")
    limit = f"/{result.limit:g}" if result.limit else ""
    text = f"{status} criterion {number:>2} {result.name} ({result.seconds:.1f}{limit} s)"
    return f"{text} {detail}".rstrip()


@pytest.mark.parametrize("number,name,title", CRITERIA, ids=[c[1] for c in CRITERIA])
def test_criterion(number, name, title):
    (result,) = run_checks(names=(name,), ctx=_CTX)
    line = _line(number, result)
    REPORT.append(line)
    print(line)
    assert result.passed, "\n".join(result.lines())


if __name__ == "__main__":
    for number, name, _ in CRITERIA:
        (res,) = run_checks(names=(name,), ctx=_CTX)
        print(_line(number, res), flush=True)
