"""Security criteria, QBER thresholds, state classification and protocol comparison.

Every criterion is a strict inequality: a value equal to its bound fails.
Margins are LHS minus RHS in the natural units of each inequality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .exceptions import IdenticalFlagMismatch
from .qstate import SingularTriple

TWO_23 = 2.0 ** (2.0 / 3.0)
TWO_56 = 2.0 ** (5.0 / 6.0)
SQRT2 = float(np.sqrt(2.0))
# extreme value of the single free singular value in the non-identical trilocal optimum
FREE_T = (TWO_23 - 1.0) ** 1.5
TRILOCAL_PRODUCT_BOUND = 16.0 * (3.0 + FREE_T)
CHSH_PRODUCT_BOUND = 16.0 * SQRT2 * (1.0 + SQRT2)
# largest t1 + t2 for identical states at the general trilocal product bound
MISCLASSIFICATION_SUM = 2.0 ** (4.0 / 3.0) * (3.0 + FREE_T) ** (1.0 / 3.0) - 2.0


class ThresholdKind(str, Enum):
    TRILOCAL_IDENTICAL = "TrilocalIdentical"
    TRILOCAL_GENERAL = "TrilocalGeneral"
    CHSH_COUNT = "ChshCount"


@dataclass(frozen=True)
class Threshold:
    kind: ThresholdKind
    value: float
    c: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.value < 0.5:
            raise ValueError(f"threshold {self.value} outside (0, 0.5)")

    @property
    def label(self) -> str:
        return f"{self.kind.value}({self.c})" if self.c is not None else self.kind.value


def threshold(kind: ThresholdKind | str, c: int | None = None) -> Threshold:
    """Critical QBER below which a run cannot have come from states that fail the first check.

    Parameters
    ----------
    kind : ThresholdKind or str
        ``TrilocalIdentical``, ``TrilocalGeneral`` or ``ChshCount``.
    c : int, optional
        For ``ChshCount``, the number of links (1, 2 or 3) allowed to be CHSH-local.
    """
    kind = ThresholdKind(kind)
    if kind is ThresholdKind.TRILOCAL_IDENTICAL:
        return Threshold(kind, 1.0 - SQRT2 * (1.0 + 2.0 ** (1.0 / 6.0)) ** 3 / 16.0)
    if kind is ThresholdKind.TRILOCAL_GENERAL:
        return Threshold(kind, 1.0 - (3.0 + FREE_T) / 4.0)
    if c not in (1, 2, 3):
        raise ValueError("ChshCount needs c in {1, 2, 3}")
    return Threshold(kind, 1.0 - ((1.0 + SQRT2) / (2.0 * SQRT2)) ** c, c)


def all_thresholds() -> list[Threshold]:
    return [
        threshold(ThresholdKind.TRILOCAL_IDENTICAL),
        threshold(ThresholdKind.TRILOCAL_GENERAL),
        threshold(ThresholdKind.CHSH_COUNT, 1),
        threshold(ThresholdKind.CHSH_COUNT, 2),
        threshold(ThresholdKind.CHSH_COUNT, 3),
    ]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one criterion: ``passed`` iff ``lhs > rhs``."""

    name: str
    lhs: float
    rhs: float
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        return self.lhs > self.rhs

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, **self.extra}


def _check_triples(triples: Sequence[SingularTriple]) -> None:
    if len(triples) != 3:
        raise ValueError(f"need three singular triples, got {len(triples)}")


def triples_identical(triples: Sequence[SingularTriple], tol: float = 1e-12) -> bool:
    ref = np.array(list(triples[0]))
    return all(np.max(np.abs(np.array(list(t)) - ref)) <= tol for t in triples[1:])


def _require_identical(triples: Sequence[SingularTriple]) -> None:
    if not triples_identical(triples):
        raise IdenticalFlagMismatch("identical variant requested but the singular triples differ")


def first_check_trilocal(triples: Sequence[SingularTriple]) -> CheckResult:
    """Π t_{i,1}^{2/3} + Π t_{i,2}^{2/3} > 2^{2/3}."""
    _check_triples(triples)
    lhs = np.cbrt(np.prod([t.t1 for t in triples])) ** 2 + np.cbrt(np.prod([t.t2 for t in triples])) ** 2
    return CheckResult("C_N4_1", float(lhs), TWO_23)


def first_check_identical(t1: float, t2: float) -> CheckResult:
    """Identical-state form of the first trilocal check: t1^2 + t2^2 > 2^{2/3}."""
    return CheckResult("C_N4_1", t1**2 + t2**2, TWO_23)


def second_check_trilocal(triples: Sequence[SingularTriple], identical: bool = False) -> CheckResult:
    """Second trilocal check.

    General form Π(2 + t_{i,1} + t_{i,2}) > 16(3 + (2^{2/3} - 1)^{3/2}); the
    ``extra`` field carries the expanded LHS, i.e. the product minus
    Π(2 + t_{i,1}) (the constant moved across when the product is expanded).
    Identical form t1 + t2 > 2^{5/6}.
    """
    _check_triples(triples)
    if identical:
        _require_identical(triples)
        t = triples[0]
        return CheckResult("C'_N4_2", t.t1 + t.t2, TWO_56)
    product_ = float(np.prod([2.0 + t.t1 + t.t2 for t in triples]))
    constant = float(np.prod([2.0 + t.t1 for t in triples]))
    return CheckResult("C_N4_2", product_, TRILOCAL_PRODUCT_BOUND,
                       {"expanded_lhs": product_ - constant, "expansion_constant": constant})


def first_check_chsh(triples: Sequence[SingularTriple]) -> CheckResult:
    """Horodecki value t_{i,1}^2 + t_{i,2}^2 > 1 on every link.

    The reported LHS is the smallest link value, so the overall check passes
    iff every link passes; per-link values sit in ``extra``.
    """
    _check_triples(triples)
    links = [t.t1**2 + t.t2**2 for t in triples]
    return CheckResult("C_NB4_1", float(min(links)), 1.0,
                       {"links": links, "link_passed": [v > 1.0 for v in links]})


def second_check_chsh(triples: Sequence[SingularTriple], identical: bool = False) -> CheckResult:
    """General Π(2 + t_{i,1} + t_{i,2}) > 16√2(1+√2); identical t1 + t2 > √2."""
    _check_triples(triples)
    if identical:
        _require_identical(triples)
        t = triples[0]
        return CheckResult("C'_NB4_2", t.t1 + t.t2, SQRT2)
    product_ = float(np.prod([2.0 + t.t1 + t.t2 for t in triples]))
    return CheckResult("C_NB4_2", product_, CHSH_PRODUCT_BOUND)


class Classification(str, Enum):
    TRILOCAL = "Trilocal"
    FNN_NOT_USEFUL = "FnnNotUseful"
    CHSH_LOCAL = "ChshLocal"
    CHSH_NOT_USEFUL = "ChshNotUseful"
    USEFUL = "Useful"


class Protocol(str, Enum):
    TRILOCAL = "Trilocal"
    CHSH = "Chsh"


def classify(t1: float, t2: float, protocol: Protocol | str = Protocol.TRILOCAL) -> Classification:
    """Region of the (t1, t2) plane for three identical copies of a state."""
    protocol = Protocol(protocol)
    circle, line = (TWO_23, TWO_56) if protocol is Protocol.TRILOCAL else (1.0, SQRT2)
    if not t1**2 + t2**2 > circle:
        return Classification.TRILOCAL if protocol is Protocol.TRILOCAL else Classification.CHSH_LOCAL
    if not t1 + t2 > line:
        return Classification.FNN_NOT_USEFUL if protocol is Protocol.TRILOCAL else Classification.CHSH_NOT_USEFUL
    return Classification.USEFUL


def misclassification_region(t1: float, t2: float) -> bool:
    """States the general second check rejects although the identical-state check accepts them."""
    s = t1 + t2
    return t1**2 + t2**2 > TWO_23 and s <= MISCLASSIFICATION_SUM and s > TWO_56


@dataclass(frozen=True)
class SecurityReport:
    protocol: Protocol
    first_check: CheckResult
    second_check: CheckResult
    identical: bool
    classification: Classification
    threshold: Threshold

    @property
    def criterion_variant(self) -> tuple[str, str]:
        return self.first_check.name, self.second_check.name

    @property
    def useful(self) -> bool:
        return self.first_check.passed and self.second_check.passed

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "identical": self.identical,
            "criterion_variant": list(self.criterion_variant),
            "first_check": self.first_check.to_dict(),
            "second_check": self.second_check.to_dict(),
            "classification": self.classification.value,
            "threshold": {"kind": self.threshold.label, "value": self.threshold.value},
        }


def security_report(
    triples: Sequence[SingularTriple], protocol: Protocol | str = Protocol.TRILOCAL, identical: bool | None = None
) -> SecurityReport:
    """Evaluate both checks of one protocol.

    ``identical`` defaults to whether the three triples coincide.
    """
    protocol = Protocol(protocol)
    identical = triples_identical(triples) if identical is None else identical
    if protocol is Protocol.TRILOCAL:
        first = first_check_trilocal(triples)
        second = second_check_trilocal(triples, identical)
        thr = threshold(ThresholdKind.TRILOCAL_IDENTICAL if identical else ThresholdKind.TRILOCAL_GENERAL)
        local, not_useful = Classification.TRILOCAL, Classification.FNN_NOT_USEFUL
    else:
        first = first_check_chsh(triples)
        second = second_check_chsh(triples, identical)
        thr = threshold(ThresholdKind.CHSH_COUNT, 3 if identical else 1)
        local, not_useful = Classification.CHSH_LOCAL, Classification.CHSH_NOT_USEFUL
    if not first.passed:
        label = local
    elif not second.passed:
        label = not_useful
    else:
        label = Classification.USEFUL
    return SecurityReport(protocol, first, second, identical, label, thr)


@dataclass(frozen=True)
class ProtocolComparison:
    """All four checks on one triple plus the R1-R3 witness flags.

    r1_instance: both first checks fail while two links are maximally correlated.
    r2_witness: CHSH first check passes but the trilocal first check fails.
    r3_witness: both CHSH checks pass but the trilocal second check fails.
    """

    first_trilocal: CheckResult
    second_trilocal: CheckResult
    first_chsh: CheckResult
    second_chsh: CheckResult
    r1_instance: bool
    r2_witness: bool
    r3_witness: bool

    def to_dict(self) -> dict:
        d = {k: v.to_dict() for k, v in self.__dict__.items() if isinstance(v, CheckResult)}
        d.update(r1_instance=self.r1_instance, r2_witness=self.r2_witness, r3_witness=self.r3_witness)
        return d


def compare_protocols(triples: Sequence[SingularTriple], identical: bool | None = None) -> ProtocolComparison:
    identical = triples_identical(triples) if identical is None else identical
    f_n = first_check_trilocal(triples)
    s_n = second_check_trilocal(triples, identical)
    f_c = first_check_chsh(triples)
    s_c = second_check_chsh(triples, identical)
    maximal = sum(1 for t in triples if t.t1 == 1.0 and t.t2 == 1.0)
    return ProtocolComparison(
        f_n, s_n, f_c, s_c,
        r1_instance=(maximal >= 2 and not f_c.passed and not f_n.passed),
        r2_witness=(f_c.passed and not f_n.passed),
        r3_witness=(f_c.passed and s_c.passed and not s_n.passed),
    )


def triple_from_pair(t1: float, t2: float) -> SingularTriple:
    return SingularTriple.from_values((t1, t2))

