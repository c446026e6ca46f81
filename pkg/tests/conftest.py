import numpy as np
import pytest
from hypothesis import strategies as st

from fnnqkd.qstate import TwoQubitState, pure_state

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_state(rng: np.random.Generator, rank: int = 4) -> TwoQubitState:
    """Random density matrix from a complex Ginibre matrix of the given rank."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    m = g @ g.conj().T
    return TwoQubitState(m / np.trace(m).real)


def random_pure(rng: np.random.Generator) -> TwoQubitState:
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return pure_state(v / np.linalg.norm(v))


def random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
