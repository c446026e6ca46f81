from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import random_state, random_unit, seeds
from fnnqkd.exceptions import DimensionMismatch
from fnnqkd.measurement import (
    X_BASIS,
    Z_BASIS,
    BipartiteStatistics,
    MubCollection,
    QubitBasis,
    TrilocalStatistics,
    bipartite_statistics,
    ghz_basis,
    network_state,
    sample,
    trilocal_statistics,
    trilocal_statistics_factorized,
    xor_relabelings,
)
from fnnqkd.qstate import PAULIS, TwoQubitState, phi_plus


def _random_edge(rng):
    return [[QubitBasis(random_unit(rng)) for _ in range(2)] for _ in range(3)]


def _brute_force_probability(states, edge, ghz, x, g, a):
    """Born rule on the 64-dim operator, projectors built one factor at a time."""
    rho = network_state(states)
    G = np.outer(ghz.vectors[g], ghz.vectors[g].conj())
    P = G
    for k in range(3):
        P = np.kron(P, edge[k][x[k]].projectors()[a[k]])
    return float(np.trace(rho @ P).real)


@pytest.mark.parametrize("axis", [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0.6, 0, 0.8]])
def test_projectors_are_spectral(axis):
    basis = QubitBasis(np.array(axis, dtype=float))
    obs = sum(n * s for n, s in zip(basis.axis, PAULIS))
    P0, P1 = basis.projectors()
    assert np.allclose(P0 + P1, np.eye(2))
    assert np.allclose(P0 - P1, obs)
    assert np.allclose(P0 @ P0, P0)


def test_flipped_basis_swaps_outcomes():
    b = QubitBasis.from_angles(0.3, 1.1)
    assert np.allclose(b.flipped().projectors()[::-1], b.projectors())


def test_basis_rejects_non_unit_axis():
    with pytest.raises(ValueError):
        QubitBasis(np.array([1.0, 1.0, 0.0]))


def test_mub_collection_requires_orthogonal_axes():
    assert MubCollection.z_x()[0] is Z_BASIS
    with pytest.raises(ValueError):
        MubCollection(Z_BASIS, QubitBasis.from_vector([1.0, 0.0, 1.0]))


def test_default_ghz_vectors():
    ghz = ghz_basis()
    # (a11, a12, a13) = (s, q2, q3): (|0 q2 q3> + (-1)^s |1 ~q2 ~q3>)/sqrt(2)
    for s, q2, q3 in product(range(2), repeat=3):
        expected = np.zeros(8)
        expected[2 * q2 + q3] = 1
        expected[4 + 2 * (1 - q2) + (1 - q3)] = (-1) ** s
        assert np.allclose(ghz.vector((s, q2, q3)), expected / np.sqrt(2))
    assert np.allclose(ghz.projectors().sum(axis=0), np.eye(8))


def test_ghz_labeling_permutes_rows():
    labeling = [3, 1, 0, 2, 7, 6, 5, 4]
    default, relabelled = ghz_basis(), ghz_basis(labeling)
    for k, new in enumerate(labeling):
        assert np.allclose(relabelled.vectors[new], default.vectors[k])
    with pytest.raises(ValueError):
        ghz_basis([0] * 8)


def test_xor_relabelings_are_permutations():
    rel = xor_relabelings()
    assert len(rel) == 8
    assert all(sorted(r) == list(range(8)) for r in rel)


def test_network_state_qubit_order():
    # sources prepare |h_i e_i>; the joint register must read (h1 h2 h3 e1 e2 e3)
    pairs = [(0, 1), (1, 0), (1, 1)]
    states = []
    for h, e in pairs:
        v = np.zeros(4)
        v[2 * h + e] = 1
        states.append(TwoQubitState(np.outer(v, v)))
    bits = [h for h, _ in pairs] + [e for _, e in pairs]
    index = int("".join(map(str, bits)), 2)
    rho = network_state(states)
    assert rho[index, index] == pytest.approx(1.0)
    assert np.trace(rho).real == pytest.approx(1.0)


@given(seeds)
@settings(max_examples=5, deadline=None)
def test_trilocal_statistics_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    states = [random_state(rng) for _ in range(3)]
    edge = _random_edge(rng)
    ghz = ghz_basis()
    stats = trilocal_statistics(states, edge, ghz)
    for _ in range(12):
        x = tuple(rng.integers(0, 2, size=3))
        g = int(rng.integers(0, 8))
        a = tuple(rng.integers(0, 2, size=3))
        expected = _brute_force_probability(states, edge, ghz, x, g, a)
        hub_bits = ((g >> 2) & 1, (g >> 1) & 1, g & 1)
        assert stats.p[x + hub_bits + a] == pytest.approx(expected, abs=1e-12)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_factorized_statistics_agree(seed):
    rng = np.random.default_rng(seed)
    states = [random_state(rng) for _ in range(3)]
    edge = _random_edge(rng)
    ghz = ghz_basis(xor_relabelings()[seed % 8])
    exact = trilocal_statistics(states, edge, ghz)
    fact = trilocal_statistics_factorized(states, edge, ghz)
    assert np.max(np.abs(exact.p - fact.p)) < 1e-12


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_trilocal_behaviour_is_no_signalling(seed):
    rng = np.random.default_rng(seed)
    states = [random_state(rng) for _ in range(3)]
    stats = trilocal_statistics_factorized(states, _random_edge(rng))
    assert stats.no_signalling_deviation() < 1e-12
    assert np.allclose(stats.p.reshape(8, -1).sum(axis=1), 1.0)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_bipartite_behaviour_is_no_signalling(seed):
    rng = np.random.default_rng(seed)
    state = random_state(rng)
    bases = [QubitBasis(random_unit(rng)) for _ in range(4)]
    stats = bipartite_statistics(state, bases[:2], bases[2:])
    assert stats.no_signalling_deviation() < 1e-12


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_bipartite_correlator_is_tensor_contraction(seed):
    rng = np.random.default_rng(seed)
    state = random_state(rng)
    a, b = random_unit(rng), random_unit(rng)
    stats = bipartite_statistics(state, [QubitBasis(a)] * 2, [QubitBasis(b)] * 2)
    assert stats.correlator(0, 0) == pytest.approx(a @ state.correlation_tensor() @ b, abs=1e-12)


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_swapping_sources_permutes_behaviour(seed):
    # exchanging sources 2 and 3 swaps hub bits a12/a13 and edge parties A3/A4 with their inputs
    rng = np.random.default_rng(seed)
    states = [random_state(rng) for _ in range(3)]
    edge = _random_edge(rng)
    p = trilocal_statistics_factorized(states, edge).p
    q = trilocal_statistics_factorized([states[0], states[2], states[1]], [edge[0], edge[2], edge[1]]).p
    assert np.allclose(q, p.transpose(0, 2, 1, 3, 5, 4, 6, 8, 7), atol=1e-12)


@pytest.mark.parametrize(
    "bad, error",
    [(np.full((2,) * 9, 1 / 32), ValueError), (np.zeros((2,) * 8), DimensionMismatch)],
)
def test_trilocal_statistics_validation(bad, error):
    with pytest.raises(error):
        TrilocalStatistics(bad)


def test_bipartite_statistics_validation():
    p = np.full((2, 2, 2, 2), 0.25)
    p[0, 0, 0, 0] = -0.1
    with pytest.raises(ValueError):
        BipartiteStatistics(p)


def test_phi_plus_zz_outcomes_are_perfectly_correlated():
    stats = bipartite_statistics(phi_plus(), [Z_BASIS, X_BASIS], [Z_BASIS, X_BASIS])
    assert stats.correlator(0, 0) == pytest.approx(1.0)
    assert stats.correlator(1, 1) == pytest.approx(1.0)
    assert stats.correlator(0, 1) == pytest.approx(0.0, abs=1e-12)


def test_sample_frequencies_match_probabilities():
    rng = np.random.default_rng(5)
    state = random_state(rng)
    stats = bipartite_statistics(state, [QubitBasis(random_unit(rng))] * 2, [QubitBasis(random_unit(rng))] * 2)
    n = 200_000
    draws = sample(stats, (0, 1), np.random.default_rng(9), size=n)
    assert draws.shape == (n, 2)
    counts = np.zeros((2, 2))
    np.add.at(counts, (draws[:, 0], draws[:, 1]), 1)
    p = stats.p[0, 1]
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) < 5 * se + 1e-12)


def test_sample_is_seeded():
    stats = bipartite_statistics(phi_plus(), [Z_BASIS, X_BASIS], [X_BASIS, Z_BASIS])
    a = sample(stats, (0, 0), np.random.default_rng(3), size=50)
    b = sample(stats, (0, 0), np.random.default_rng(3), size=50)
    assert np.array_equal(a, b)
    single = sample(stats, (0, 1), np.random.default_rng(3))
    assert single in {(0, 0), (1, 1)}
