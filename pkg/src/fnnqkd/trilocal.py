"""Trilocal full-network-nonlocality witness, its quantum bound, and CHSH.

The witness for the three-source star reads

    S = 1/2 Σ_i |J_i|^{1/3} <= 2^{1/3}

where each J_i averages a post-processed hub bit against the three edge bits
over all eight input combinations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.transform import Rotation

from .measurement import (
    BipartiteStatistics,
    GhzBasis,
    QubitBasis,
    TrilocalStatistics,
    bipartite_statistics,
    ghz_basis,
)
from .qstate import PAULIS, SingularTriple, TwoQubitState

CLASSICAL_BOUND = 2.0 ** (1.0 / 3.0)
CHSH_LOCAL_BOUND = 2.0

_BITS = np.array([[(k >> 2) & 1, (k >> 1) & 1, k & 1] for k in range(8)])
# post-processed hub bits, one row per correlator, indexed by GHZ label
_HUB_BITS = np.stack(
    [
        _BITS[:, 0],
        _BITS[:, 0] ^ _BITS[:, 1] ^ 1,
        _BITS[:, 0] ^ _BITS[:, 2] ^ 1,
        _BITS[:, 0] ^ _BITS[:, 1] ^ _BITS[:, 2] ^ 1,
    ]
)
_HUB_SIGNS = (-1.0) ** _HUB_BITS  # (4, 8)

_X = np.array([[(k >> 2) & 1, (k >> 1) & 1, k & 1] for k in range(8)])
_G = np.stack([np.zeros(8, dtype=int), _X[:, 0] + _X[:, 1], _X[:, 0] + _X[:, 2], _X[:, 1] + _X[:, 2]])
# setting signs (-1)^{g_i(x2,x3,x4)}, shape (4, 2, 2, 2)
_SETTING_SIGNS = ((-1.0) ** _G).reshape(4, 2, 2, 2)


@dataclass(frozen=True)
class CorrelatorSet:
    """The four correlators J1..J4 of the trilocal witness."""

    J1: float
    J2: float
    J3: float
    J4: float

    def __post_init__(self) -> None:
        for name in ("J1", "J2", "J3", "J4"):
            v = float(getattr(self, name))
            if abs(v) > 1 + 1e-10:
                raise ValueError(f"{name} = {v} lies outside [-1, 1]")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.J1, self.J2, self.J3, self.J4])

    @property
    def value(self) -> float:
        return trilocal_value_from_correlators(self.as_array())


def correlators(stats: TrilocalStatistics) -> CorrelatorSet:
    """Signed averages J_i of a trilocal behaviour.

    Outcome sign is (-1)^(ã_i + a2 + a3 + a4) where ã_i is the i-th
    post-processed hub bit; setting sign is (-1)^{g_i(x2, x3, x4)}.
    """
    p = stats.p.reshape(2, 2, 2, 8, 2, 2, 2)
    edge_sign = np.einsum("a,b,c->abc", *([np.array([1.0, -1.0])] * 3))
    # expectation of hub sign ⊗ edge parity, per setting and correlator
    corr = np.einsum("xyzgabc,ig,abc->ixyz", p, _HUB_SIGNS, edge_sign)
    J = np.einsum("ixyz,ixyz->i", corr, _SETTING_SIGNS) / 8.0
    return CorrelatorSet(*np.clip(J, -1.0, 1.0))


def trilocal_value_from_correlators(J) -> float:
    J = np.asarray(J, dtype=float)
    return float(0.5 * np.sum(np.abs(J) ** (1.0 / 3.0)))


def trilocal_value(stats: TrilocalStatistics) -> float:
    """S = 1/2 Σ|J_i|^{1/3}; a value above 2^{1/3} witnesses full network nonlocality."""
    return correlators(stats).value


def violates_trilocal(value: float) -> bool:
    return value > CLASSICAL_BOUND


def analytic_bound(triples: Sequence[SingularTriple]) -> float:
    """Quantum bound of the witness for GHZ hub measurement and optimal edge axes.

    ``sqrt((t11 t21 t31)^{2/3} + (t12 t22 t32)^{2/3})`` built from the two
    largest singular values of each source's correlation tensor.
    """
    if len(triples) != 3:
        raise ValueError("analytic_bound needs three singular triples")
    p1 = np.prod([t.t1 for t in triples])
    p2 = np.prod([t.t2 for t in triples])
    return float(np.sqrt(np.cbrt(p1) ** 2 + np.cbrt(p2) ** 2))


def chsh_horodecki(t: SingularTriple) -> float:
    """t1^2 + t2^2; the state violates CHSH iff this exceeds 1."""
    return t.t1**2 + t.t2**2


def chsh_value(stats: BipartiteStatistics) -> float:
    """E(0,0) + E(0,1) + E(1,0) - E(1,1)."""
    return stats.correlator(0, 0) + stats.correlator(0, 1) + stats.correlator(1, 0) - stats.correlator(1, 1)


# --- optimisation ------------------------------------------------------------


def _unit(theta, phi) -> np.ndarray:
    return np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta) * np.ones_like(phi)], axis=-1
    )


def _angles(n: np.ndarray) -> tuple[float, float]:
    return float(np.arccos(np.clip(n[2], -1, 1))), float(np.arctan2(n[1], n[0]))


def hub_frame(T) -> np.ndarray:
    """Rotation O in SO(3) taking the largest hub-side singular direction of ``T``
    to the x axis and the second largest to the y axis.

    Every correlator of the witness involves the GHZ phase bit, whose hub
    observables (XXX and its stabiliser partners) act in the x-y plane of each
    hub qubit, so z correlations do not contribute.  Diagonal tensors are
    permuted, with ties kept in lab order so isotropic states stay unrotated.
    """
    T = np.asarray(T, dtype=float)
    if np.max(np.abs(T - np.diag(np.diag(T)))) <= 1e-12:
        d = np.abs(np.diag(T))
        U = np.eye(3)[:, sorted(range(3), key=lambda i: -d[i])]
    else:
        U, _, _ = np.linalg.svd(T)
    O = U.T.copy()  # rows: new x, new y, new z
    if np.linalg.det(O) < 0:
        O[2] *= -1.0
    return O


def rotation_unitary(O) -> np.ndarray:
    """SU(2) element U with U (n·σ) U† = (O n)·σ."""
    x, y, z, w = Rotation.from_matrix(O).as_quat()
    return w * np.eye(2) - 1j * (x * PAULIS[0] + y * PAULIS[1] + z * PAULIS[2])


def hub_pauli_blocks(state: TwoQubitState) -> np.ndarray:
    """C^{(j)} = Tr_edge[rho (I ⊗ σ_j)] as a (3, 2, 2) stack, hub qubit operators."""
    r = state.matrix.reshape(2, 2, 2, 2)
    return np.stack([np.einsum("iejf,fe->ij", r, s) for s in PAULIS])


def hub_observables(ghz: GhzBasis) -> np.ndarray:
    """Hub observables Σ_g (-1)^{ã_i(g)} |G_g><G_g| reshaped to (4, 2,2,2, 2,2,2)."""
    G = ghz.vectors
    H = np.einsum("ig,gk,gl->ikl", _HUB_SIGNS, G, G.conj())
    return H.reshape((4,) + (2,) * 6)


def _correlators_from_axes(H: np.ndarray, blocks: Sequence[np.ndarray], axes: np.ndarray) -> np.ndarray:
    """J for edge axes ``axes`` of shape (3, 2, 3); axes need not be normalised."""
    C = [np.einsum("xj,jab->xab", axes[k], blocks[k]) for k in range(3)]
    corr = np.einsum("iabcdef,xda,yeb,zfc->ixyz", H, C[0], C[1], C[2], optimize=True).real
    return np.einsum("ixyz,ixyz->i", corr, _SETTING_SIGNS) / 8.0


def _affine_in_axis(H, blocks, axes, k, x) -> tuple[np.ndarray, np.ndarray]:
    """Write J as c + W n where n replaces edge axis (k, x)."""
    probe = np.repeat(axes[None], 4, axis=0)
    probe[0, k, x] = 0.0
    for j in range(3):
        probe[j + 1, k, x] = np.eye(3)[j]
    Js = np.stack([_correlators_from_axes(H, blocks, a) for a in probe])
    c = Js[0]
    W = (Js[1:] - c).T  # (4, 3)
    return c, W


def _objective_axis(c, W, theta, phi):
    n = _unit(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    J = c + n @ W.T
    return 0.5 * np.sum(np.abs(J) ** (1.0 / 3.0), axis=-1)


def _line_search(f, start: float, lo: float, hi: float, n_scan: int = 24) -> float:
    grid = np.linspace(lo, hi, n_scan)
    vals = f(grid)
    k = int(np.argmax(vals))
    h = (hi - lo) / (n_scan - 1)
    a, b = max(lo, grid[k] - h), min(hi, grid[k] + h)
    res = minimize_scalar(lambda t: -float(f(t)), bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    best = float(res.x) if -res.fun >= vals[k] else float(grid[k])
    return best if float(f(best)) >= float(f(start)) else start


@dataclass(frozen=True, eq=False)
class TrilocalSettings:
    """Optimised edge bases and the witness value they achieve."""

    edge: tuple[tuple[QubitBasis, QubitBasis], ...]
    ghz: GhzBasis
    value: float
    correlators: CorrelatorSet

    @property
    def axes(self) -> np.ndarray:
        return np.array([[b.axis for b in pair] for pair in self.edge])


def _ascend(H, blocks, axes: np.ndarray, tol: float, max_sweeps: int) -> tuple[np.ndarray, float]:
    value = trilocal_value_from_correlators(_correlators_from_axes(H, blocks, axes))
    for _ in range(max_sweeps):
        previous = value
        for k in range(3):
            for x in range(2):
                c, W = _affine_in_axis(H, blocks, axes, k, x)
                theta, phi = _angles(axes[k, x])
                theta = _line_search(lambda t: _objective_axis(c, W, t, phi), theta, 0.0, np.pi)
                phi = _line_search(lambda p: _objective_axis(c, W, theta, p), phi, -np.pi, np.pi)
                axes[k, x] = _unit(theta, phi)
                value = float(_objective_axis(c, W, theta, phi))
        if value - previous < tol:
            break
    return axes, value


def optimize_trilocal(
    states: Sequence[TwoQubitState],
    restarts: int = 20,
    seed: int = 0,
    labelings: Sequence[Sequence[int]] | None = None,
    tol: float = 1e-9,
    max_sweeps: int = 200,
    align_hub: bool = True,
) -> TrilocalSettings:
    """Maximise the witness over edge axes by coordinate ascent in spherical angles.

    Each restart draws random axes and sweeps the polar then azimuthal angle of
    every axis with a coarse scan followed by bounded Brent refinement, until a
    sweep gains less than ``tol``.  ``labelings`` optionally lists GHZ label
    permutations to search as well.  With ``align_hub`` each hub qubit is
    rotated by :func:`hub_frame` first, and the returned GHZ basis is the one
    the hub actually measures in the lab frame.
    """
    return _optimize_cached(tuple(states), int(restarts), int(seed),
                            None if labelings is None else tuple(tuple(int(v) for v in l) for l in labelings),
                            float(tol), int(max_sweeps), bool(align_hub))


def _rotate_hub(state: TwoQubitState, U: np.ndarray) -> TwoQubitState:
    A = np.kron(U, np.eye(2))
    m = A @ state.matrix @ A.conj().T
    return TwoQubitState(0.5 * (m + m.conj().T))


@lru_cache(maxsize=256)
def _optimize_cached(states, restarts, seed, labelings, tol, max_sweeps, align_hub) -> TrilocalSettings:
    rng = np.random.default_rng(seed)
    Us = [rotation_unitary(hub_frame(s.correlation_tensor())) if align_hub else np.eye(2) for s in states]
    blocks = [hub_pauli_blocks(_rotate_hub(s, U)) for s, U in zip(states, Us)]
    bases = [ghz_basis()] if labelings is None else [ghz_basis(l) for l in labelings]
    best_axes, best_value, best_ghz = None, -np.inf, bases[0]
    for ghz in bases:
        H = hub_observables(ghz)
        for _ in range(max(1, restarts)):
            start = rng.normal(size=(3, 2, 3))
            start /= np.linalg.norm(start, axis=-1, keepdims=True)
            axes, value = _ascend(H, blocks, start, tol, max_sweeps)
            if value > best_value + 1e-12:
                best_axes, best_value, best_ghz = axes.copy(), value, ghz
    H = hub_observables(best_ghz)
    J = np.clip(_correlators_from_axes(H, blocks, best_axes), -1.0, 1.0)
    edge = tuple(tuple(QubitBasis.from_vector(best_axes[k, x]) for x in range(2)) for k in range(3))
    # <G|U rho U^dag|G> = <U^dag G|rho|U^dag G>
    lab = GhzBasis(best_ghz.vectors @ np.kron(np.kron(Us[0], Us[1]), Us[2]).conj())
    return TrilocalSettings(edge, lab, trilocal_value_from_correlators(J), CorrelatorSet(*J))


@dataclass(frozen=True, eq=False)
class ChshSettings:
    bases_a: tuple[QubitBasis, QubitBasis]
    bases_b: tuple[QubitBasis, QubitBasis]
    value: float


def optimize_chsh(state: TwoQubitState, restarts: int = 20, seed: int = 0, tol: float = 1e-9) -> ChshSettings:
    """Maximise the CHSH combination by coordinate ascent over the four axes.

    The combination is linear in each axis separately, so every coordinate
    step moves that axis to the exact maximiser on the sphere.
    """
    T = state.correlation_tensor()
    rng = np.random.default_rng(seed)
    best = (-np.inf, None)
    for _ in range(max(1, restarts)):
        a = rng.normal(size=(2, 3))
        b = rng.normal(size=(2, 3))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        value = -np.inf
        for _ in range(10_000):
            a = np.stack([_normalise(T @ (b[0] + b[1]), a[0]), _normalise(T @ (b[0] - b[1]), a[1])])
            b = np.stack([_normalise(T.T @ (a[0] + a[1]), b[0]), _normalise(T.T @ (a[0] - a[1]), b[1])])
            new = float(a[0] @ T @ (b[0] + b[1]) + a[1] @ T @ (b[0] - b[1]))
            if new - value < tol:
                value = max(value, new)
                break
            value = new
        if value > best[0]:
            best = (value, (a.copy(), b.copy()))
    a, b = best[1]
    bases_a = tuple(QubitBasis.from_vector(v) for v in a)
    bases_b = tuple(QubitBasis.from_vector(v) for v in b)
    return ChshSettings(bases_a, bases_b, chsh_value(bipartite_statistics(state, bases_a, bases_b)))


def _normalise(v: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return fallback if n < 1e-15 else v / n
