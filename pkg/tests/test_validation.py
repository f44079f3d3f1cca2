from fractions import Fraction

from nlprobe.hamiltonians import NormalOrderedPoly, normal_order_expand
from nlprobe.validation import REGISTRY, Context, available_checks, run_checks, run_validate


def _broken_expansion(s):
    terms = normal_order_expand(s).as_dict()
    if s == 3:
        terms[(2, 1)] = Fraction(2)  # the correct coefficient is 3
    return NormalOrderedPoly.from_dict(terms)


def test_registry_groups():
    names = {name for name, group, _, _ in REGISTRY}
    for wanted in ("commutator", "unitarity", "partition-completeness", "cfi-below-qfi", "gauge-invariance", "determinism"):
        assert wanted in names
    assert all(group in ("properties", "acceptance") for _, group, _, _ in REGISTRY)
    assert len(available_checks(("acceptance",))) == 10


def test_properties_pass():
    results = run_checks(groups=("properties",))
    assert all(r.passed for r in results), [line for r in results for line in r.lines()]


def test_wrong_coefficient_is_caught():
    (result,) = run_checks(names=("expansion-soundness",), ctx=Context(expansion=_broken_expansion))
    assert not result.passed
    assert any(not m.passed and "s=3" in m.name for m in result.measurements)


def test_report_lines():
    lines = []
    code = run_validate(groups=("properties",), echo=lines.append)
    assert code == 0
    assert lines[-1].endswith("checks passed")
    assert any(line.startswith("PASS  [properties] commutator") for line in lines)


def test_forced_small_dim_surfaces_truncation():
    lines = []
    code = run_validate(groups=("acceptance",), force_dim=8, echo=lines.append)
    assert code == 2
    assert any("TruncationError" in line for line in lines)
