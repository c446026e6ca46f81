"""Quantum bit error rates of the key-generation rounds.

In a sifted round the hub measures each of its three qubits in one basis of
the link's MUB pair, the edge parties measure in the matching basis, and the
round is an error when at least one link disagrees.  For a link with tensor
``T`` measured along hub axis ``h`` and edge axis ``e`` the agreement
probability is ``(1 + h·T e)/2``; local Bloch vectors drop out.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .exceptions import DimensionMismatch
from .measurement import MubCollection, QubitBasis, network_state
from .qstate import SingularTriple, TwoQubitState


@dataclass(frozen=True)
class MubAssignment:
    """One MUB pair per link, expressed in the link's canonical frame.

    The canonical frame of a link is the one in which its correlation tensor
    is diagonal with nonnegative entries (see :func:`alignment_frames`).
    """

    links: tuple[MubCollection, MubCollection, MubCollection]

    def __post_init__(self) -> None:
        if len(self.links) != 3:
            raise DimensionMismatch("a MUB assignment needs one collection per link")
        object.__setattr__(self, "links", tuple(self.links))

    def __getitem__(self, i: int) -> MubCollection:
        return self.links[i]

    @classmethod
    def uniform(cls, mubs: MubCollection | None = None) -> "MubAssignment":
        mubs = mubs if mubs is not None else MubCollection.z_x()
        return cls((mubs, mubs, mubs))


def bipartite_qber(T, u1, u2) -> float:
    """Average mismatch 1/4 (2 - u1·T u1 - u2·T u2) over two basis choices."""
    T = np.asarray(T, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    for u in (u1, u2):
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValueError("measurement directions must be unit vectors")
    return float(0.25 * (2.0 - u1 @ T @ u1 - u2 @ T @ u2))


def _is_diagonal(T: np.ndarray) -> bool:
    return bool(np.max(np.abs(T - np.diag(np.diag(T)))) <= 1e-12)


def alignment_frames(T) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal (O_hub, O_edge) with O_hub^T T O_edge diagonal and nonnegative.

    A diagonal tensor keeps the lab axes and absorbs negative entries into the
    edge frame, which amounts to flipping that party's outcome labels.  Other
    tensors use the factors of their singular value decomposition.
    """
    T = np.asarray(T, dtype=float)
    if _is_diagonal(T):
        signs = np.where(np.diag(T) < 0, -1.0, 1.0)
        return np.eye(3), np.diag(signs)
    U, _, Vt = np.linalg.svd(T)
    return U, Vt.T


def aligned_axes(T, u) -> tuple[np.ndarray, np.ndarray]:
    """Hub and edge Bloch axes that realise canonical direction ``u`` on tensor ``T``."""
    O_hub, O_edge = alignment_frames(T)
    u = np.asarray(u, dtype=float)
    return O_hub @ u, O_edge @ u


def principal_mubs(state: TwoQubitState) -> MubCollection:
    """MUB pair along the two largest singular directions of the link.

    For a diagonal tensor these are the lab axes carrying the two largest
    ``|T_ii|``; otherwise the first two axes of the canonical frame.
    """
    T = state.correlation_tensor()
    if _is_diagonal(T):
        order = np.argsort(-np.abs(np.diag(T)), kind="stable")
        e = np.eye(3)
        return MubCollection(QubitBasis(e[order[0]]), QubitBasis(e[order[1]]))
    return MubCollection(QubitBasis(np.array([1.0, 0.0, 0.0])), QubitBasis(np.array([0.0, 1.0, 0.0])))


def principal_assignment(states: Sequence[TwoQubitState]) -> MubAssignment:
    return MubAssignment(tuple(principal_mubs(s) for s in states))


def link_bases(state: TwoQubitState, mubs: MubCollection) -> list[tuple[QubitBasis, QubitBasis]]:
    """Lab-frame (hub basis, edge basis) pairs for both MUB choices of one link."""
    T = state.correlation_tensor()
    out = []
    for basis in mubs:
        h, e = aligned_axes(T, basis.axis)
        out.append((QubitBasis.from_vector(h), QubitBasis.from_vector(e)))
    return out


def _check_states(states: Sequence[TwoQubitState]) -> None:
    if len(states) != 3:
        raise DimensionMismatch(f"need three source states, got {len(states)}")


def lab_axes(states: Sequence[TwoQubitState], mubs: MubAssignment) -> tuple[np.ndarray, np.ndarray]:
    """Lab-frame hub and edge axes, each of shape (3 links, 2 bases, 3)."""
    _check_states(states)
    pairs = [link_bases(s, c) for s, c in zip(states, mubs.links)]
    hub = np.array([[h.axis for h, _ in link] for link in pairs])
    edge = np.array([[e.axis for _, e in link] for link in pairs])
    return hub, edge


def qber_from_axes(states: Sequence[TwoQubitState], hub_axes, edge_axes) -> float:
    """Q = 1 - 1/64 Σ_{j1,j2,j3} Π_i (1 + h_{i,j_i}·T_i e_{i,j_i}) for explicit lab axes."""
    _check_states(states)
    hub_axes = np.asarray(hub_axes, dtype=float)
    edge_axes = np.asarray(edge_axes, dtype=float)
    factors = np.array([[1.0 + hub_axes[i, j] @ s.correlation_tensor() @ edge_axes[i, j] for j in range(2)]
                        for i, s in enumerate(states)])
    total = sum(factors[0, j1] * factors[1, j2] * factors[2, j3] for j1, j2, j3 in product(range(2), repeat=3))
    return float(1.0 - total / 64.0)


def qber_exact(states: Sequence[TwoQubitState], mubs: MubAssignment) -> float:
    """QBER when every link measures its MUB pair in its own canonical frame."""
    return qber_from_axes(states, *lab_axes(states, mubs))


def qber_born(states: Sequence[TwoQubitState], mubs: MubAssignment) -> float:
    """Same quantity from Born probabilities on the 64-dimensional network state.

    Q = 1/8 Σ_j (1 - Σ_{k} p(k | j)) where the inner sum runs over outcomes in
    which the hub agrees with every edge party.
    """
    _check_states(states)
    rho = network_state(states)
    pairs = [link_bases(s, c) for s, c in zip(states, mubs.links)]
    q = 0.0
    for js in product(range(2), repeat=3):
        hub = [pairs[i][js[i]][0].projectors() for i in range(3)]
        edge = [pairs[i][js[i]][1].projectors() for i in range(3)]
        match = 0.0
        for ks in product(range(2), repeat=3):
            proj = np.kron(np.kron(hub[0][ks[0]], hub[1][ks[1]]), hub[2][ks[2]])
            proj = np.kron(proj, np.kron(np.kron(edge[0][ks[0]], edge[1][ks[1]]), edge[2][ks[2]]))
            match += float(np.real(np.trace(rho @ proj)))
        q += 1.0 - match
    return q / 8.0


def mub_sum(triples: Sequence[SingularTriple]) -> float:
    """Σ_{j1,j2,j3 ∈ {1,2}} Π_i (1 + t_{i,j_i}), summed term by term."""
    vals = [(t.t1, t.t2) for t in triples]
    return float(sum(np.prod([1.0 + vals[i][j] for i, j in enumerate(js)]) for js in product(range(2), repeat=3)))


def qber_min_over_mubs(triples: Sequence[SingularTriple]) -> float:
    """Smallest QBER over MUB choices: 1 - Π_i (2 + t_{i,1} + t_{i,2}) / 64."""
    if len(triples) != 3:
        raise DimensionMismatch("need three singular triples")
    return float(1.0 - np.prod([2.0 + t.t1 + t.t2 for t in triples]) / 64.0)


def qber_identical(t1: float, t2: float) -> float:
    """1 - (2 + t1 + t2)^3 / 64 for three copies of one state."""
    if not 0.0 <= t2 <= t1 <= 1.0:
        raise ValueError(f"need 0 <= t2 <= t1 <= 1, got ({t1}, {t2})")
    return float(1.0 - (2.0 + t1 + t2) ** 3 / 64.0)
