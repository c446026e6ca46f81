"""Two-qubit density operators and their Bloch-tensor description.

A two-qubit state is written as

    rho = 1/4 (I⊗I + a·σ⊗I + I⊗b·σ + Σ_ij R_ij σ_i⊗σ_j)

with ``a`` the local Bloch vector of the first party, ``b`` that of the
second party and ``R`` the 3x3 correlation tensor.  Rows of ``R`` index the
first party's Pauli axis, columns the second party's.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator, Mapping

import numpy as np

from .exceptions import DimensionMismatch, NotPositive

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10
BLOCH_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """Validated 4x4 density matrix in the basis |00>, |01>, |10>, |11>."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise DimensionMismatch(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NotPositive("matrix has non-finite entries")
        herm_err = np.max(np.abs(m - m.conj().T))
        if herm_err > HERMITIAN_TOL:
            raise NotPositive(f"matrix is not Hermitian (max deviation {herm_err:.2e})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise NotPositive(f"trace is {tr.real:.15g}, expected 1")
        lam_min = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
        if lam_min < PSD_TOL:
            raise NotPositive(f"smallest eigenvalue {lam_min:.3e} is negative")
        object.__setattr__(self, "matrix", _frozen(m))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TwoQubitState):
            return NotImplemented
        return bool(np.allclose(self.matrix, other.matrix, atol=1e-12, rtol=0))

    def __hash__(self) -> int:
        return hash(np.round(self.matrix, 12).tobytes())

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def bloch(self) -> "BlochForm":
        return to_bloch(self)

    def correlation_tensor(self) -> np.ndarray:
        return to_bloch(self).R

    def singular_values(self) -> "SingularTriple":
        return singular_values(self.correlation_tensor())


@dataclass(frozen=True, eq=False)
class BlochForm:
    """Local Bloch vectors ``a``, ``b`` and correlation tensor ``R``."""

    a: np.ndarray
    b: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if a.shape != (3,) or b.shape != (3,) or R.shape != (3, 3):
            raise DimensionMismatch("Bloch form needs a, b of length 3 and R of shape 3x3")
        if np.linalg.norm(a) > 1 + BLOCH_TOL or np.linalg.norm(b) > 1 + BLOCH_TOL:
            raise NotPositive("local Bloch vector longer than 1")
        if np.max(np.abs(R)) > 1 + BLOCH_TOL:
            raise NotPositive("correlation tensor entry outside [-1, 1]")
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "R", _frozen(R))


@dataclass(frozen=True)
class SingularTriple:
    """Singular values t1 >= t2 >= t3 >= 0 of a correlation tensor."""

    t1: float
    t2: float
    t3: float = 0.0

    def __post_init__(self) -> None:
        vals = (float(self.t1), float(self.t2), float(self.t3))
        if min(vals) < 0:
            raise ValueError(f"singular values must be nonnegative, got {vals}")
        if not (vals[0] >= vals[1] >= vals[2]):
            raise ValueError(f"singular values must be in descending order, got {vals}")
        for name, v in zip(("t1", "t2", "t3"), vals):
            object.__setattr__(self, name, v)

    @classmethod
    def from_values(cls, values) -> "SingularTriple":
        """Sort arbitrary magnitudes into a triple; a missing third value is taken as 0."""
        vals = sorted((abs(float(v)) for v in values), reverse=True)
        if len(vals) == 2:
            vals.append(0.0)
        if len(vals) != 3:
            raise ValueError("need two or three values")
        return cls(*vals)

    def __iter__(self) -> Iterator[float]:
        return iter((self.t1, self.t2, self.t3))

    @property
    def top_two(self) -> tuple[float, float]:
        return self.t1, self.t2


def _kron_terms(a: np.ndarray, b: np.ndarray, R: np.ndarray) -> np.ndarray:
    rho = np.kron(I2, I2).astype(complex)
    for i, s in enumerate(PAULIS):
        rho = rho + a[i] * np.kron(s, I2) + b[i] * np.kron(I2, s)
        for j, t in enumerate(PAULIS):
            rho = rho + R[i, j] * np.kron(s, t)
    return rho / 4.0


def from_bloch(bloch: BlochForm) -> TwoQubitState:
    """Assemble the density matrix of a Bloch form.

    Raises
    ------
    NotPositive
        If the parameters do not describe a physical state.
    """
    m = _kron_terms(bloch.a, bloch.b, bloch.R)
    return TwoQubitState(0.5 * (m + m.conj().T))


def to_bloch(state: TwoQubitState) -> BlochForm:
    m = state.matrix
    a = np.array([np.trace(m @ np.kron(s, I2)).real for s in PAULIS])
    b = np.array([np.trace(m @ np.kron(I2, s)).real for s in PAULIS])
    R = np.array([[np.trace(m @ np.kron(s, t)).real for t in PAULIS] for s in PAULIS])
    # trace arithmetic can overshoot the unit ball by a few ulps
    a = a / max(1.0, np.linalg.norm(a))
    b = b / max(1.0, np.linalg.norm(b))
    return BlochForm(a, b, np.clip(R, -1.0, 1.0))


def singular_values(R) -> SingularTriple:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise DimensionMismatch(f"expected a 3x3 tensor, got {R.shape}")
    s = np.linalg.svd(R, compute_uv=False)
    return SingularTriple(*np.sort(s)[::-1])


def pure_state(vector) -> TwoQubitState:
    v = np.asarray(vector, dtype=complex)
    v = v / np.linalg.norm(v)
    return TwoQubitState(np.outer(v, v.conj()))


def phi_plus() -> TwoQubitState:
    return pure_state([1, 0, 0, 1])


def singlet() -> TwoQubitState:
    return pure_state([0, 1, -1, 0])


def maximally_mixed() -> TwoQubitState:
    return TwoQubitState(np.eye(4) / 4)


def werner(v: float) -> TwoQubitState:
    """Singlet with visibility ``v`` mixed into white noise; tensor diag(-v, -v, -v)."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    return TwoQubitState(v * singlet().matrix + (1 - v) * np.eye(4) / 4)


def diagonal_state(t1: float, t2: float, t3: float = 0.0) -> TwoQubitState:
    """State with vanishing local vectors and correlation tensor diag(t1, t2, t3)."""
    return from_bloch(BlochForm(np.zeros(3), np.zeros(3), np.diag([t1, t2, t3])))


def partial_trace(state: TwoQubitState, keep: str) -> np.ndarray:
    r = state.matrix.reshape(2, 2, 2, 2)
    if keep == "A":
        return np.einsum("ijkj->ik", r)
    if keep == "B":
        return np.einsum("ijil->jl", r)
    raise ValueError("keep must be 'A' or 'B'")


def depolarize(state: TwoQubitState, p: float, side: str = "B") -> TwoQubitState:
    """One-sided depolarizing channel of strength ``p`` on party ``side``.

    The correlation tensor and the chosen side's Bloch vector shrink by ``1 - p``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability must lie in [0, 1], got {p}")
    if side == "B":
        replaced = np.kron(partial_trace(state, "A"), I2 / 2)
    elif side == "A":
        replaced = np.kron(I2 / 2, partial_trace(state, "B"))
    else:
        raise ValueError("side must be 'A' or 'B'")
    m = (1 - p) * state.matrix + p * replaced
    return TwoQubitState(0.5 * (m + m.conj().T))


# --- JSON state descriptors -------------------------------------------------

_DESCRIPTOR_KEYS = ("matrix", "bloch", "werner", "diag")


def parse_state(descriptor: Mapping[str, Any]) -> TwoQubitState:
    """Build a state from a JSON descriptor.

    Exactly one of the keys ``matrix`` (4x4 of ``{"re", "im"}``), ``bloch``
    (``{"a", "b", "R"}``), ``werner`` (visibility) or ``diag`` (``[t1, t2, t3]``)
    must be present.
    """
    if not isinstance(descriptor, Mapping):
        raise ValueError("state descriptor must be a JSON object")
    present = [k for k in _DESCRIPTOR_KEYS if k in descriptor]
    extra = set(descriptor) - set(_DESCRIPTOR_KEYS)
    if len(present) != 1 or extra:
        raise ValueError(
            f"state descriptor needs exactly one of {_DESCRIPTOR_KEYS}, got keys {sorted(descriptor)}"
        )
    key = present[0]
    val = descriptor[key]
    if key == "matrix":
        rows = np.asarray(
            [[complex(float(c.get("re", 0.0)), float(c.get("im", 0.0))) if isinstance(c, Mapping)
              else complex(c) for c in row] for row in val]
        )
        return TwoQubitState(rows)
    if key == "bloch":
        return from_bloch(BlochForm(val["a"], val["b"], val["R"]))
    if key == "werner":
        return werner(float(val))
    diag = [float(x) for x in val]
    if len(diag) == 2:
        diag.append(0.0)
    if len(diag) != 3:
        raise ValueError("diag descriptor needs two or three entries")
    try:
        return diagonal_state(*diag)
    except NotPositive as exc:
        raise NotPositive(
            f"diag {diag} is not a physical correlation tensor; only the magnitudes enter the "
            "criteria, so try flipping the sign of one or three entries"
        ) from exc


def state_to_descriptor(state: TwoQubitState) -> dict:
    return {
        "matrix": [[{"re": float(z.real), "im": float(z.imag)} for z in row] for row in state.matrix]
    }
