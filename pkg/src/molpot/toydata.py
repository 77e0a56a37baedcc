"""Small synthetic datasets with analytic energies and forces.

Two closed-form potentials label the training examples: a Morse dimer
(one bond length) and a Lennard-Jones trimer (three coupled pair
interactions). Both give exact forces, so an optimizer has a noise-free
target and tests can compare against finite differences of the energy.
"""

import numpy as np

from .geometry import AtomicSystem


def morse_energy_forces(positions, depth=1.0, steepness=1.5, r0=1.2):
    """Energy and forces of a two-atom Morse potential.

    E(r) = depth * (1 - exp(-steepness (r - r0)))^2, zero at the minimum.
    """
    delta = positions[1] - positions[0]
    r = float(np.linalg.norm(delta))
    decay = np.exp(-steepness * (r - r0))
    energy = depth * (1.0 - decay) ** 2
    dedr = 2.0 * depth * (1.0 - decay) * steepness * decay
    unit = delta / r
    forces = np.stack([dedr * unit, -dedr * unit])
    return energy, forces


def lj_energy_forces(positions, epsilon=1.0, sigma=1.0):
    """Energy and forces of a pairwise Lennard-Jones cluster."""
    n = positions.shape[0]
    energy = 0.0
    forces = np.zeros_like(positions)
    for i in range(n):
        for j in range(i + 1, n):
            delta = positions[j] - positions[i]
            r = float(np.linalg.norm(delta))
            sr6 = (sigma / r) ** 6
            energy += 4.0 * epsilon * (sr6 * sr6 - sr6)
            dvdr = 4.0 * epsilon * (-12.0 * sr6 * sr6 + 6.0 * sr6) / r
            unit = delta / r
            forces[i] += dvdr * unit
            forces[j] -= dvdr * unit
    return energy, forces


def _random_rotation(rng):
    # QR of a Gaussian matrix with sign-fixed diagonal: Haar-uniform.
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def make_morse_dimers(n, seed=0, r_range=(0.95, 2.2), atomic_number=1):
    """Randomly oriented and placed Morse dimers with analytic labels."""
    rng = np.random.default_rng(seed)
    systems = []
    for _ in range(n):
        r = rng.uniform(*r_range)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        center = rng.uniform(-1.0, 1.0, size=3)
        positions = np.stack([center - 0.5 * r * axis, center + 0.5 * r * axis])
        energy, forces = morse_energy_forces(positions)
        systems.append(
            AtomicSystem(
                atomic_numbers=np.array([atomic_number, atomic_number]),
                positions=positions,
                energy=energy,
                forces=forces,
            )
        )
    return systems


def make_lj_trimers(n, seed=0, jitter=0.12, min_distance=0.9, atomic_number=18):
    """Jittered near-equilateral Lennard-Jones trimers with analytic labels.

    Vertices start on an equilateral triangle at the pair-equilibrium
    edge length 2^(1/6) sigma and receive Gaussian displacements; draws
    with any pair closer than min_distance are rejected to keep label
    forces off the steepest part of the repulsive wall.
    """
    rng = np.random.default_rng(seed)
    edge = 2.0 ** (1.0 / 6.0)
    base = edge * np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, np.sqrt(3.0) / 2.0, 0.0]]
    )
    systems = []
    while len(systems) < n:
        positions = base + rng.normal(0.0, jitter, size=(3, 3))
        d01 = np.linalg.norm(positions[1] - positions[0])
        d02 = np.linalg.norm(positions[2] - positions[0])
        d12 = np.linalg.norm(positions[2] - positions[1])
        if min(d01, d02, d12) < min_distance:
            continue
        positions = positions @ _random_rotation(rng).T
        positions = positions + rng.uniform(-1.0, 1.0, size=3)
        energy, forces = lj_energy_forces(positions)
        systems.append(
            AtomicSystem(
                atomic_numbers=np.full(3, atomic_number),
                positions=positions,
                energy=energy,
                forces=forces,
            )
        )
    return systems


def force_component_std(systems):
    """Standard deviation of all force components; the MAE yardstick."""
    stacked = np.concatenate([s.forces.ravel() for s in systems])
    return float(stacked.std())
