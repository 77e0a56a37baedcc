"""Structure container, neighbor list, recentering and batching tests."""

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from molpot.errors import DataError, DegenerateGeometryError
from molpot.geometry import (
    AtomicSystem,
    batch,
    build_neighbor_list,
    recenter,
    unbatch,
)


def pair_set(nl):
    return set(zip(nl.idx_i.tolist(), nl.idx_j.tolist()))


def test_two_atoms_within_cutoff():
    system = AtomicSystem([1, 1], [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    nl = build_neighbor_list(system, r_cut=5.0)
    assert pair_set(nl) == {(0, 1), (1, 0)}
    np.testing.assert_allclose(nl.distances, [1.0, 1.0])
    k = list(nl.idx_i).index(0)
    np.testing.assert_allclose(nl.vectors[k], [1.0, 0.0, 0.0])


def test_two_atoms_beyond_cutoff():
    system = AtomicSystem([1, 1], [[0.0, 0.0, 0.0], [6.0, 0.0, 0.0]])
    nl = build_neighbor_list(system, r_cut=5.0)
    assert nl.idx_i.size == 0
    assert nl.vectors.shape == (0, 3)


def test_chain_neighbor_counts():
    spacing = 1.2
    pos = [[k * spacing, 0.0, 0.0] for k in range(4)]
    system = AtomicSystem([6, 6, 6, 6], pos)
    nl = build_neighbor_list(system, r_cut=2.0)
    counts = np.bincount(nl.idx_i, minlength=4)
    np.testing.assert_array_equal(counts, [1, 2, 2, 1])
    np.testing.assert_allclose(nl.distances, spacing)


def test_boundary_distance_is_included():
    system = AtomicSystem([1, 1], [[0.0, 0.0, 0.0], [2.5, 0.0, 0.0]])
    nl = build_neighbor_list(system, r_cut=2.5)
    assert pair_set(nl) == {(0, 1), (1, 0)}


def test_coincident_atoms_rejected():
    system = AtomicSystem([1, 1], [[0.0, 0.0, 0.0], [1e-8, 0.0, 0.0]])
    with pytest.raises(DegenerateGeometryError):
        build_neighbor_list(system, r_cut=5.0)


def test_no_self_pairs_and_directed_symmetry():
    rng = np.random.default_rng(0)
    for trial in range(5):
        system = AtomicSystem(
            rng.integers(1, 9, size=12), rng.uniform(0.0, 6.0, size=(12, 3))
        )
        nl = build_neighbor_list(system, r_cut=2.5)
        pairs = pair_set(nl)
        assert all(i != j for i, j in pairs)
        assert all((j, i) in pairs for i, j in pairs)
        assert np.all(nl.distances > 0.0)
        assert np.all(nl.distances <= 2.5)


def test_translation_invariance_and_rotation_equivariance():
    rng = np.random.default_rng(42)
    for trial in range(5):
        pos = rng.uniform(0.0, 5.0, size=(10, 3))
        system = AtomicSystem(np.full(10, 6), pos)
        nl = build_neighbor_list(system, r_cut=2.8)

        shifted = AtomicSystem(np.full(10, 6), pos + rng.normal(size=3))
        nl_t = build_neighbor_list(shifted, r_cut=2.8)
        np.testing.assert_array_equal(nl_t.idx_i, nl.idx_i)
        np.testing.assert_array_equal(nl_t.idx_j, nl.idx_j)
        np.testing.assert_allclose(nl_t.vectors, nl.vectors, atol=1e-12)

        rot = special_ortho_group.rvs(3, random_state=rng)
        rotated = AtomicSystem(np.full(10, 6), pos @ rot.T)
        nl_r = build_neighbor_list(rotated, r_cut=2.8)
        np.testing.assert_array_equal(nl_r.idx_i, nl.idx_i)
        np.testing.assert_array_equal(nl_r.idx_j, nl.idx_j)
        np.testing.assert_allclose(nl_r.vectors, nl.vectors @ rot.T, atol=1e-12)
        np.testing.assert_allclose(nl_r.distances, nl.distances, atol=1e-12)


def test_grid_matches_brute_force():
    rng = np.random.default_rng(7)
    for n, box in [(50, 5.0), (120, 8.0), (200, 10.0)]:
        system = AtomicSystem(
            rng.integers(1, 9, size=n), rng.uniform(0.0, box, size=(n, 3))
        )
        brute = build_neighbor_list(system, r_cut=1.5, method="brute")
        grid = build_neighbor_list(system, r_cut=1.5, method="grid")
        np.testing.assert_array_equal(grid.idx_i, brute.idx_i)
        np.testing.assert_array_equal(grid.idx_j, brute.idx_j)
        np.testing.assert_array_equal(grid.vectors, brute.vectors)
        np.testing.assert_array_equal(grid.distances, brute.distances)


def test_grid_single_cell_cluster():
    rng = np.random.default_rng(8)
    system = AtomicSystem(np.full(6, 6), rng.uniform(0.0, 0.9, size=(6, 3)) + 10.0)
    brute = build_neighbor_list(system, r_cut=4.0, method="brute")
    grid = build_neighbor_list(system, r_cut=4.0, method="grid")
    assert pair_set(grid) == pair_set(brute)


def test_recenter_single_atom():
    system = AtomicSystem([6], [[1.0, 2.0, 3.0]])
    out = recenter(system)
    np.testing.assert_allclose(out.positions, [[0.0, 0.0, 0.0]], atol=1e-12)


def test_recenter_symmetric_pair_unchanged():
    system = AtomicSystem([8, 8], [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    out = recenter(system)
    np.testing.assert_allclose(out.positions, system.positions, atol=1e-12)


def test_recenter_water_centroid_is_zero():
    system = AtomicSystem(
        [8, 1, 1],
        [
            [0.0, 0.0, 0.1173],
            [0.0, 0.7572, -0.4692],
            [0.0, -0.7572, -0.4692],
        ],
    )
    out = recenter(system)
    m = out.masses
    centroid = (m[:, None] * out.positions).sum(axis=0) / m.sum()
    np.testing.assert_allclose(centroid, np.zeros(3), atol=1e-10)


def test_batch_single_system():
    system = AtomicSystem([1, 8], [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    b = batch([system])
    np.testing.assert_array_equal(b.offsets, [0])
    (back,) = unbatch(b)
    np.testing.assert_array_equal(back.atomic_numbers, system.atomic_numbers)
    np.testing.assert_array_equal(back.positions, system.positions)


def test_batch_two_systems_layout():
    rng = np.random.default_rng(1)
    a = AtomicSystem(rng.integers(1, 9, 3), rng.normal(size=(3, 3)))
    c = AtomicSystem(rng.integers(1, 9, 5), rng.normal(size=(5, 3)))
    b = batch([a, c])
    np.testing.assert_array_equal(b.offsets, [0, 3])
    assert b.positions.shape == (8, 3)
    np.testing.assert_array_equal(b.molecule_index, [0, 0, 0, 1, 1, 1, 1, 1])
    assert np.all(np.diff(b.offsets) > 0)


def test_batch_round_trip_with_labels():
    rng = np.random.default_rng(2)
    systems = []
    for n in (2, 4, 3):
        alpha = rng.normal(size=(3, 3))
        systems.append(
            AtomicSystem(
                rng.integers(1, 9, n),
                rng.normal(size=(n, 3)),
                energy=float(rng.normal()),
                forces=rng.normal(size=(n, 3)),
                dipole=rng.normal(size=3),
                polarizability=alpha + alpha.T,
            )
        )
    back = unbatch(batch(systems))
    assert len(back) == 3
    for s, r in zip(systems, back):
        np.testing.assert_array_equal(r.atomic_numbers, s.atomic_numbers)
        np.testing.assert_array_equal(r.positions, s.positions)
        assert r.energy == s.energy
        np.testing.assert_array_equal(r.forces, s.forces)
        np.testing.assert_array_equal(r.dipole, s.dipole)
        np.testing.assert_array_equal(r.polarizability, s.polarizability)


def test_batch_segment_totals_match_per_molecule_sums():
    rng = np.random.default_rng(3)
    systems = [
        AtomicSystem(rng.integers(1, 9, n), rng.normal(size=(n, 3)))
        for n in (3, 1, 6)
    ]
    b = batch(systems)
    totals = np.zeros((3, 3))
    np.add.at(totals, b.molecule_index, b.positions)
    for k, s in enumerate(systems):
        np.testing.assert_array_equal(totals[k], s.positions.sum(axis=0))


def test_batched_neighbor_list_never_crosses_molecules():
    rng = np.random.default_rng(4)
    systems = [
        AtomicSystem(rng.integers(1, 9, n), rng.uniform(0.0, 2.0, size=(n, 3)))
        for n in (4, 5)
    ]
    b = batch(systems)
    nl = build_neighbor_list(b, r_cut=5.0)
    mol_i = b.molecule_index[nl.idx_i]
    mol_j = b.molecule_index[nl.idx_j]
    np.testing.assert_array_equal(mol_i, mol_j)
    first = build_neighbor_list(systems[0], r_cut=5.0)
    within_first = mol_i == 0
    assert within_first.sum() == first.idx_i.size


def test_system_validation():
    with pytest.raises(DataError):
        AtomicSystem([], np.zeros((0, 3)))
    with pytest.raises(DataError):
        AtomicSystem([1], [[np.nan, 0.0, 0.0]])
    with pytest.raises(DataError):
        AtomicSystem([1, 1], np.zeros((2, 3)), forces=np.zeros((3, 3)))
    with pytest.raises(DataError):
        AtomicSystem(
            [1],
            np.zeros((1, 3)),
            polarizability=np.array(
                [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
            ),
        )


def test_symmetric_polarizability_accepted():
    alpha = np.array([[2.0, 0.1, 0.0], [0.1, 1.5, 0.2], [0.0, 0.2, 1.0]])
    system = AtomicSystem([1], np.zeros((1, 3)), polarizability=alpha)
    np.testing.assert_array_equal(system.polarizability, alpha)
