import numpy as np
import pytest

from fnnqkd.exceptions import InfeasibleProblem, VerificationFailure
from fnnqkd.oracle import (
    COARSE_STEP,
    OptProblem,
    chsh_problem,
    default_step,
    general_trilocal_problem,
    grid_maximize,
    identical_problem,
    tolerance_for,
    verify_thresholds,
)
from fnnqkd.security import TWO_56, ThresholdKind, threshold


def _disk_problem(radius, step):
    return OptProblem(
        2,
        lambda x: x[:, 0] + x[:, 1],
        lambda x: x[:, 0] ** 2 + x[:, 1] ** 2 <= radius**2,
        step,
        name="disk",
    )


@pytest.mark.parametrize("radius", [0.5, 0.9, 1.2])
def test_disk_maximum(radius):
    res = grid_maximize(_disk_problem(radius, 0.01))
    expected = min(radius * np.sqrt(2), 2.0)
    assert res.value == pytest.approx(expected, abs=1e-9)
    assert res.grid_value <= res.value


def test_one_dimensional_problem():
    problem = OptProblem(1, lambda x: -((x[:, 0] - 0.3137) ** 2), lambda x: np.ones(len(x), bool), 0.05)
    assert grid_maximize(problem).point[0] == pytest.approx(0.3137, abs=1e-6)


def test_infeasible_problem():
    problem = OptProblem(2, lambda x: x[:, 0], lambda x: np.zeros(len(x), bool), 0.1)
    with pytest.raises(InfeasibleProblem):
        grid_maximize(problem)


@pytest.mark.parametrize("dimension, step", [(0, 0.1), (7, 0.1), (2, 0.0), (2, 0.2)])
def test_problem_validation(dimension, step):
    with pytest.raises(ValueError):
        OptProblem(dimension, lambda x: x[:, 0], lambda x: x[:, 0] >= 0, step)


def test_identical_problem_convergence():
    # refining the grid must not move the answer
    coarse = grid_maximize(identical_problem(0.002))
    fine = grid_maximize(identical_problem(0.001))
    assert coarse.value == pytest.approx(fine.value, abs=1e-9)
    assert coarse.value == pytest.approx((2 + TWO_56) ** 3, abs=1e-9)
    assert coarse.point == pytest.approx([2 ** (-1 / 6)] * 2, abs=1e-6)


def test_grid_search_is_deterministic():
    a = grid_maximize(identical_problem(0.01))
    b = grid_maximize(identical_problem(0.01))
    assert np.array_equal(a.point, b.point)
    assert a.value == b.value


def test_general_trilocal_problem_argmax():
    res = grid_maximize(general_trilocal_problem())
    assert 1 - res.value / 64 == pytest.approx(threshold(ThresholdKind.TRILOCAL_GENERAL).value, abs=1e-9)
    # two maximally correlated links, one with a single free singular value
    assert sorted(np.round(res.point, 6)) == pytest.approx(sorted([1, 1, 1, 1, 1, (2 ** (2 / 3) - 1) ** 1.5]),
                                                           abs=1e-5)


@pytest.mark.parametrize("c", [1, 2, 3])
def test_chsh_problem(c):
    res = grid_maximize(chsh_problem(c))
    assert 1 - res.value / 64 == pytest.approx(threshold(ThresholdKind.CHSH_COUNT, c).value, abs=1e-9)
    assert np.sum(np.isclose(res.point, np.sqrt(0.5), atol=1e-6)) == 2 * c


def test_step_rules():
    assert default_step(2) == 0.002
    assert default_step(2, 0.05) == 0.05
    assert default_step(6) == COARSE_STEP
    assert default_step(6, 0.01) == COARSE_STEP
    assert tolerance_for(None) == 1e-3
    assert tolerance_for(0.05) == pytest.approx(5e-3)


def test_verification_failure_raised():
    with pytest.raises(VerificationFailure):
        verify_thresholds(grid_step=0.1, tol=-1.0)


def test_coarse_verification():
    rows = verify_thresholds(grid_step=0.05, raise_on_failure=False)
    assert len(rows) == 5
    assert all(r.delta <= 5e-3 for r in rows)
