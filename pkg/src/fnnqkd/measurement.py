"""Measurement bases and exact joint statistics for the three-source star network.

Party ordering on the network: the hub ``A1`` holds one qubit of each source,
edge party ``A_{i+1}`` holds the other qubit of source ``i``.  Each source
state is a two-qubit operator ordered (hub qubit, edge qubit).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DimensionMismatch
from .qstate import I2, PAULIS, TwoQubitState

_PAULI_STACK = np.stack(PAULIS)


def _projector_pair(axis: np.ndarray) -> np.ndarray:
    """Projectors onto the +1 (bit 0) and -1 (bit 1) eigenspaces of axis·σ."""
    n_sigma = np.tensordot(axis, _PAULI_STACK, axes=([-1], [0]))
    plus = 0.5 * (I2 + n_sigma)
    minus = 0.5 * (I2 - n_sigma)
    return np.stack([plus, minus], axis=-3)


@dataclass(frozen=True, eq=False)
class QubitBasis:
    """Projective qubit measurement along a Bloch axis.

    Eigenvalue +1 is read as bit 0 and eigenvalue -1 as bit 1.  Flipping the
    bit labels of a basis is the same as negating its axis.
    """

    axis: np.ndarray

    def __post_init__(self) -> None:
        n = np.asarray(self.axis, dtype=float)
        if n.shape != (3,):
            raise DimensionMismatch("basis axis must be a 3-vector")
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError(f"basis axis must be a unit vector, |n| = {np.linalg.norm(n)}")
        n = n.copy()
        n.setflags(write=False)
        object.__setattr__(self, "axis", n)

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "QubitBasis":
        return cls(np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]))

    @classmethod
    def from_vector(cls, v) -> "QubitBasis":
        v = np.asarray(v, dtype=float)
        return cls(v / np.linalg.norm(v))

    def projectors(self) -> np.ndarray:
        return _projector_pair(self.axis)

    def flipped(self) -> "QubitBasis":
        return QubitBasis(-self.axis)

    def __repr__(self) -> str:
        return f"QubitBasis({np.round(self.axis, 6).tolist()})"


X_BASIS = QubitBasis(np.array([1.0, 0.0, 0.0]))
Y_BASIS = QubitBasis(np.array([0.0, 1.0, 0.0]))
Z_BASIS = QubitBasis(np.array([0.0, 0.0, 1.0]))


@dataclass(frozen=True)
class MubCollection:
    """Two mutually unbiased qubit bases (orthogonal Bloch axes)."""

    first: QubitBasis
    second: QubitBasis

    def __post_init__(self) -> None:
        overlap = abs(float(self.first.axis @ self.second.axis))
        if overlap > 1e-10:
            raise ValueError(f"MUB axes are not orthogonal (|n1·n2| = {overlap:.2e})")

    def __iter__(self):
        return iter((self.first, self.second))

    def __getitem__(self, j: int) -> QubitBasis:
        return (self.first, self.second)[j]

    @classmethod
    def z_x(cls) -> "MubCollection":
        return cls(Z_BASIS, X_BASIS)


def _label_index(bits: Sequence[int]) -> int:
    a11, a12, a13 = bits
    return 4 * a11 + 2 * a12 + a13


def _default_ghz_vectors() -> np.ndarray:
    vecs = np.zeros((8, 8), dtype=complex)
    for s in (0, 1):
        for q2 in (0, 1):
            for q3 in (0, 1):
                lo = 4 * 0 + 2 * q2 + q3
                hi = 4 * 1 + 2 * (1 - q2) + (1 - q3)
                v = np.zeros(8, dtype=complex)
                v[lo] = 1.0
                v[hi] = (-1) ** s
                vecs[_label_index((s, q2, q3))] = v / np.sqrt(2)
    return vecs


@dataclass(frozen=True, eq=False)
class GhzBasis:
    """Eight orthonormal GHZ vectors; row ``k`` carries the label with bits of ``k``.

    Label bits are (a11, a12, a13), row index ``4*a11 + 2*a12 + a13``.  Columns
    index the computational basis of the hub's three qubits (source 1 first).
    """

    vectors: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=complex)
        if v.shape != (8, 8):
            raise DimensionMismatch("GHZ basis needs eight vectors of dimension 8")
        if not np.allclose(v.conj() @ v.T, np.eye(8), atol=1e-12, rtol=0):
            raise ValueError("GHZ vectors are not orthonormal")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    def vector(self, bits: Sequence[int]) -> np.ndarray:
        return self.vectors[_label_index(bits)]

    def projectors(self) -> np.ndarray:
        return np.einsum("ki,kj->kij", self.vectors, self.vectors.conj())


def ghz_basis(labeling: Sequence[int] | None = None) -> GhzBasis:
    """GHZ basis (|q1 q2 q3> + (-1)^s |~q1 ~q2 ~q3>)/sqrt(2).

    With ``q1 = 0`` the default label is (a11, a12, a13) = (s, q2, q3).
    ``labeling[k]`` gives the label index assigned to the vector whose default
    label index is ``k``; it must be a permutation of ``range(8)``.
    """
    default = _default_ghz_vectors()
    if labeling is None:
        return GhzBasis(default)
    labeling = [int(k) for k in labeling]
    if sorted(labeling) != list(range(8)):
        raise ValueError("labeling must be a permutation of 0..7")
    vecs = np.empty_like(default)
    for k, new in enumerate(labeling):
        vecs[new] = default[k]
    return GhzBasis(vecs)


def xor_relabelings() -> list[list[int]]:
    """The eight relabelings that flip a fixed subset of label bits."""
    return [[k ^ mask for k in range(8)] for mask in range(8)]


@dataclass(frozen=True, eq=False)
class TrilocalStatistics:
    """Behaviour p(a11,a12,a13,a2,a3,a4 | x2,x3,x4).

    ``p`` has shape ``(2,)*9`` with axes ``[x2, x3, x4, a11, a12, a13, a2, a3, a4]``.
    """

    p: np.ndarray

    n_settings = 3

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.shape != (2,) * 9:
            raise DimensionMismatch(f"trilocal behaviour needs shape (2,)*9, got {p.shape}")
        _check_behaviour(p, 3)
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def setting_block(self, x2: int, x3: int, x4: int) -> np.ndarray:
        return self.p[x2, x3, x4]

    def no_signalling_deviation(self) -> float:
        """Largest dependence of any edge party's marginal on that party's own input
        being summed out, and of the hub marginal on the edge inputs."""
        dev = 0.0
        # edge party k: summing its outcome must remove dependence on its input
        for k in range(3):
            marg = self.p.sum(axis=6 + k)
            dev = max(dev, float(np.max(np.abs(np.diff(marg, axis=k)))))
        hub = self.p.sum(axis=(6, 7, 8))
        for k in range(3):
            dev = max(dev, float(np.max(np.abs(np.diff(hub, axis=k)))))
        return dev


@dataclass(frozen=True, eq=False)
class BipartiteStatistics:
    """Behaviour p(a, b | x, y) with axes ``[x, y, a, b]``."""

    p: np.ndarray

    n_settings = 2

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.shape != (2, 2, 2, 2):
            raise DimensionMismatch(f"bipartite behaviour needs shape (2,2,2,2), got {p.shape}")
        _check_behaviour(p, 2)
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def correlator(self, x: int, y: int) -> float:
        q = self.p[x, y]
        return float(q[0, 0] + q[1, 1] - q[0, 1] - q[1, 0])

    def no_signalling_deviation(self) -> float:
        pa = self.p.sum(axis=3)
        pb = self.p.sum(axis=2)
        return float(max(np.max(np.abs(pa[:, 0] - pa[:, 1])), np.max(np.abs(pb[0] - pb[1]))))


def _check_behaviour(p: np.ndarray, n_settings: int) -> None:
    if np.min(p) < -1e-12:
        raise ValueError(f"negative probability {np.min(p):.3e}")
    sums = p.reshape(2**n_settings, -1).sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-10:
        raise ValueError("probabilities do not sum to 1 for every setting")


def _edge_projectors(edge: Sequence[Sequence[QubitBasis]]) -> list[np.ndarray]:
    if len(edge) != 3 or any(len(pair) != 2 for pair in edge):
        raise DimensionMismatch("need a pair of bases for each of the three edge parties")
    return [np.stack([b.projectors() for b in pair]) for pair in edge]


def _state_matrices(states: Sequence[TwoQubitState]) -> list[np.ndarray]:
    if len(states) != 3:
        raise DimensionMismatch(f"a three-source star needs 3 states, got {len(states)}")
    out = []
    for s in states:
        m = s.matrix if isinstance(s, TwoQubitState) else np.asarray(s)
        if m.shape != (4, 4):
            raise DimensionMismatch("every source state must be 4x4")
        out.append(m)
    return out


# axes of the 6-qubit register as produced by kron(rho1, rho2, rho3)
_SOURCE_ORDER_TO_MEASUREMENT = (0, 2, 4, 1, 3, 5)


def network_state(states: Sequence[TwoQubitState]) -> np.ndarray:
    """Joint 64x64 operator reordered to (A1a, A1b, A1c, A2, A3, A4).

    ``kron(rho1, rho2, rho3)`` is ordered (A1a, A2, A1b, A3, A1c, A4).
    """
    m1, m2, m3 = _state_matrices(states)
    joint = np.kron(np.kron(m1, m2), m3).reshape((2,) * 12)
    perm = list(_SOURCE_ORDER_TO_MEASUREMENT)
    joint = joint.transpose(perm + [6 + k for k in perm])
    return joint.reshape(64, 64)


def trilocal_statistics(
    states: Sequence[TwoQubitState],
    edge: Sequence[Sequence[QubitBasis]],
    ghz: GhzBasis | None = None,
) -> TrilocalStatistics:
    """Born-rule behaviour of GHZ measurement at the hub and qubit measurements at the edges.

    Parameters
    ----------
    states : three TwoQubitState
        Source states, each ordered (hub qubit, edge qubit).
    edge : three pairs of QubitBasis
        ``edge[k][x]`` is the measurement of edge party ``A_{k+2}`` on input ``x``.
    ghz : GhzBasis, optional
        Hub measurement; defaults to :func:`ghz_basis`.
    """
    ghz = ghz if ghz is not None else ghz_basis()
    rho = network_state(states).reshape(8, 8, 8, 8)  # [hub, edge, hub', edge']
    G = ghz.vectors
    edge_ops = np.einsum("gi,iejf,gj->gef", G.conj(), rho, G).reshape((8,) + (2,) * 6)
    E2, E3, E4 = _edge_projectors(edge)
    p = np.einsum("gbcdefh,xpeb,yqfc,zrhd->xyzgpqr", edge_ops, E2, E3, E4, optimize=True)
    p = p.real.reshape((2, 2, 2, 2, 2, 2, 2, 2, 2))
    return TrilocalStatistics(p)


def conditional_hub_operators(state_matrix: np.ndarray, projectors: np.ndarray) -> np.ndarray:
    """Unnormalised hub-qubit operators Tr_edge[rho (I ⊗ P)] for a stack of edge projectors."""
    r = state_matrix.reshape(2, 2, 2, 2)
    return np.einsum("iejf,...fe->...ij", r, projectors)


def _factorized_probabilities(mats: Sequence[np.ndarray], projs: Sequence[np.ndarray], G: np.ndarray) -> np.ndarray:
    M1, M2, M3 = (conditional_hub_operators(m, P) for m, P in zip(mats, projs))
    G3 = G.reshape(8, 2, 2, 2)
    p = np.einsum("gabc,xpad,yqbe,zrcf,gdef->xyzgpqr", G3.conj(), M1, M2, M3, G3, optimize=True)
    return p.real.reshape((2,) * 9)


def trilocal_statistics_factorized(
    states: Sequence[TwoQubitState],
    edge: Sequence[Sequence[QubitBasis]],
    ghz: GhzBasis | None = None,
) -> TrilocalStatistics:
    """Same behaviour as :func:`trilocal_statistics`, built source by source.

    Each edge projector is first pushed onto the hub qubit of its own source,
    which avoids the 64-dimensional joint operator; used by the optimisers.
    """
    ghz = ghz if ghz is not None else ghz_basis()
    mats = _state_matrices(states)
    return TrilocalStatistics(_factorized_probabilities(mats, _edge_projectors(edge), ghz.vectors))


def bipartite_statistics(
    state: TwoQubitState,
    bases_a: Sequence[QubitBasis],
    bases_b: Sequence[QubitBasis],
) -> BipartiteStatistics:
    PA = np.stack([b.projectors() for b in bases_a])
    PB = np.stack([b.projectors() for b in bases_b])
    r = state.matrix.reshape(2, 2, 2, 2)
    p = np.einsum("iejf,xaji,ybfe->xyab", r, PA, PB)
    return BipartiteStatistics(p.real)


def sample(statistics, setting, rng: np.random.Generator, size: int | None = None):
    """Draw outcomes of one setting of a behaviour.

    Returns a tuple of outcome bits, or an integer array of shape ``(size, k)``
    when ``size`` is given.
    """
    block = np.asarray(statistics.p[tuple(setting)])
    shape = block.shape
    probs = block.ravel()
    probs = probs / probs.sum()
    idx = rng.choice(probs.size, size=size, p=probs)
    if size is None:
        return tuple(int(v) for v in np.unravel_index(int(idx), shape))
    return np.stack(np.unravel_index(idx, shape), axis=-1)
