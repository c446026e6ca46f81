import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fnnqkd.exceptions import IdenticalFlagMismatch
from fnnqkd.qstate import SingularTriple
from fnnqkd.security import (
    CHSH_PRODUCT_BOUND,
    CheckResult,
    MISCLASSIFICATION_SUM,
    TRILOCAL_PRODUCT_BOUND,
    TWO_56,
    Classification,
    Protocol,
    ThresholdKind,
    Threshold,
    all_thresholds,
    classify,
    compare_protocols,
    first_check_chsh,
    first_check_identical,
    first_check_trilocal,
    misclassification_region,
    second_check_chsh,
    second_check_trilocal,
    security_report,
    threshold,
)

WORKED_EXAMPLE = [SingularTriple(0.95, 0.91, 0.9), SingularTriple(0.95, 0.88, 0.85), SingularTriple(0.96, 0.85, 0.82)]

unit = st.floats(0.0, 1.0, allow_nan=False)


def _pair():
    return st.tuples(unit, unit).map(lambda p: (max(p), min(p)))


def test_threshold_closed_forms():
    # alternative forms: 1 - (max of Π(2 + t1 + t2)) / 64 on each feasible set
    assert threshold("TrilocalIdentical").value == pytest.approx(1 - (2 + TWO_56) ** 3 / 64, abs=1e-15)
    assert threshold("TrilocalGeneral").value == pytest.approx(1 - TRILOCAL_PRODUCT_BOUND / 64, abs=1e-15)
    for c in (1, 2, 3):
        value = 1 - (2 + np.sqrt(2)) ** c * 4 ** (3 - c) / 64
        assert threshold(ThresholdKind.CHSH_COUNT, c).value == pytest.approx(value, abs=1e-15)
    assert CHSH_PRODUCT_BOUND == pytest.approx((2 + np.sqrt(2)) * 16, abs=1e-12)


@pytest.mark.parametrize(
    "kind, c, expected",
    [
        ("TrilocalIdentical", None, 0.154887),
        ("TrilocalGeneral", None, 0.13745),
        ("ChshCount", 1, 0.14645),
        ("ChshCount", 2, 0.27145),
        ("ChshCount", 3, 0.37814),
    ],
)
def test_threshold_values(kind, c, expected):
    assert threshold(kind, c).value == pytest.approx(expected, abs=1e-5)


def test_threshold_validation():
    with pytest.raises(ValueError):
        threshold("ChshCount", 4)
    with pytest.raises(ValueError):
        Threshold(ThresholdKind.TRILOCAL_GENERAL, 0.6)
    assert [t.label for t in all_thresholds()] == [
        "TrilocalIdentical", "TrilocalGeneral", "ChshCount(1)", "ChshCount(2)", "ChshCount(3)"]


def test_worked_example():
    first = first_check_trilocal(WORKED_EXAMPLE)
    second = second_check_trilocal(WORKED_EXAMPLE)
    assert first.margin == pytest.approx(0.0952211, abs=1e-6)
    assert second.lhs == pytest.approx(56.326278, abs=1e-5)
    assert second.extra["expanded_lhs"] == pytest.approx(30.566878, abs=1e-5)
    # the product of the second singular values is a different number
    assert np.prod([t.t2 for t in WORKED_EXAMPLE]) == pytest.approx(0.680680, abs=1e-6)


@given(_pair())
def test_identical_first_check_agrees(pair):
    t1, t2 = pair
    triples = [SingularTriple(t1, t2)] * 3
    assert first_check_trilocal(triples).lhs == pytest.approx(first_check_identical(t1, t2).lhs, abs=1e-12)


@given(_pair())
def test_identical_second_check_is_weaker_than_general(pair):
    # Π(2 + t1 + t2) > bound implies t1 + t2 > 2^{5/6}, never the other way round
    t1, t2 = pair
    triples = [SingularTriple(t1, t2)] * 3
    if second_check_trilocal(triples).passed:
        assert second_check_trilocal(triples, identical=True).passed


def test_checks_are_strict():
    assert not CheckResult("edge", 1.5, 1.5).passed
    assert not second_check_trilocal([SingularTriple(TWO_56 / 2, TWO_56 / 2)] * 3, identical=True).passed
    assert not first_check_chsh([SingularTriple(1.0, 0.0)] * 3).passed
    assert not second_check_chsh([SingularTriple(np.sqrt(2) / 2, np.sqrt(2) / 2)] * 3, identical=True).passed


def test_first_chsh_check_reports_worst_link():
    res = first_check_chsh([SingularTriple(1, 1), SingularTriple(0.9, 0.1), SingularTriple(1, 0.5)])
    assert res.lhs == pytest.approx(0.82)
    assert res.extra["link_passed"] == [True, False, True]
    assert not res.passed


def test_identical_flag_mismatch():
    with pytest.raises(IdenticalFlagMismatch):
        second_check_trilocal(WORKED_EXAMPLE, identical=True)
    with pytest.raises(IdenticalFlagMismatch):
        security_report(WORKED_EXAMPLE, Protocol.CHSH, identical=True)


@pytest.mark.parametrize(
    "t1, t2, protocol, label",
    [
        (0.95, 0.95, "Trilocal", Classification.USEFUL),
        (0.85, 0.85, "Trilocal", Classification.TRILOCAL),
        (1.0, 0.77, "Trilocal", Classification.FNN_NOT_USEFUL),
        (0.5, 0.5, "Chsh", Classification.CHSH_LOCAL),
        (1.0, 0.3, "Chsh", Classification.CHSH_NOT_USEFUL),
        (0.75, 0.75, "Chsh", Classification.USEFUL),
    ],
)
def test_classify(t1, t2, protocol, label):
    assert classify(t1, t2, protocol) is label
    assert security_report([SingularTriple(t1, t2)] * 3, protocol).classification is label


def test_report_threshold_follows_identical_flag():
    same = [SingularTriple(0.9, 0.9)] * 3
    assert security_report(same).threshold.kind is ThresholdKind.TRILOCAL_IDENTICAL
    assert security_report(same, identical=False).threshold.kind is ThresholdKind.TRILOCAL_GENERAL
    assert security_report(same, Protocol.CHSH).threshold.c == 3
    assert security_report(WORKED_EXAMPLE, Protocol.CHSH).threshold.c == 1
    assert security_report(same).criterion_variant == ("C_N4_1", "C'_N4_2")


def test_misclassification_sum():
    # (2 + s)^3 equals the general product bound at the upper edge of the band
    assert (2 + MISCLASSIFICATION_SUM) ** 3 == pytest.approx(TRILOCAL_PRODUCT_BOUND, abs=1e-10)
    assert MISCLASSIFICATION_SUM == pytest.approx(1.8076288, abs=1e-7)
    assert misclassification_region(0.9, 0.9)
    assert not misclassification_region(0.95, 0.95)
    assert not misclassification_region(0.88, 0.88)


def test_r1_instance():
    # two maximally correlated links, third CHSH-local
    triples = [SingularTriple(1, 1), SingularTriple(1, 1), SingularTriple(0.7, 0.7)]
    cmp = compare_protocols(triples)
    assert cmp.r1_instance
    assert not cmp.first_chsh.passed and not cmp.first_trilocal.passed


def test_r2_and_r3_witnesses():
    cmp = compare_protocols([SingularTriple(0.85, 0.85)] * 3)
    assert cmp.r2_witness
    assert cmp.r3_witness
    assert not compare_protocols([SingularTriple(0.95, 0.95)] * 3).r3_witness
