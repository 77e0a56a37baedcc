"""Molecular structures, cutoff neighbor lists and batching.

All containers hold plain numpy arrays and are treated as immutable after
construction, so they can be shared freely between evaluations. Isolated
molecules only; there are no periodic boundary conditions.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import elements
from .errors import DataError, DegenerateGeometryError

# Below this separation two atoms are considered coincident and the
# geometry is rejected rather than fed into 1/d terms.
COINCIDENCE_TOLERANCE = 1e-6


@dataclass
class AtomicSystem:
    """One molecule: atomic numbers, positions (Å) and optional labels.

    Labels follow the dataset conventions: total energy, per-atom forces,
    dipole vector, symmetric polarizability tensor. Missing labels stay
    None.
    """

    atomic_numbers: np.ndarray
    positions: np.ndarray
    energy: float | None = None
    forces: np.ndarray | None = None
    dipole: np.ndarray | None = None
    polarizability: np.ndarray | None = None

    def __post_init__(self):
        self.atomic_numbers = np.asarray(self.atomic_numbers, dtype=np.int64)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        n = self.atomic_numbers.size
        if n < 1:
            raise DataError("a system needs at least one atom")
        if np.any(self.atomic_numbers < 1):
            raise DataError("atomic numbers must be positive")
        if self.positions.shape != (n, 3):
            raise DataError(
                f"positions shape {self.positions.shape} does not match {n} atoms"
            )
        if not np.all(np.isfinite(self.positions)):
            raise DataError("positions must be finite")
        if self.energy is not None:
            self.energy = float(self.energy)
        if self.forces is not None:
            self.forces = np.asarray(self.forces, dtype=np.float64)
            if self.forces.shape != (n, 3):
                raise DataError(
                    f"forces shape {self.forces.shape} does not match {n} atoms"
                )
            if not np.all(np.isfinite(self.forces)):
                raise DataError("forces must be finite")
        if self.dipole is not None:
            self.dipole = np.asarray(self.dipole, dtype=np.float64)
            if self.dipole.shape != (3,):
                raise DataError(f"dipole must be a 3-vector, got {self.dipole.shape}")
            if not np.all(np.isfinite(self.dipole)):
                raise DataError("dipole must be finite")
        if self.polarizability is not None:
            self.polarizability = np.asarray(self.polarizability, dtype=np.float64)
            if self.polarizability.shape != (3, 3):
                raise DataError("polarizability must be a 3x3 tensor")
            if not np.all(np.isfinite(self.polarizability)):
                raise DataError("polarizability must be finite")
            skew = np.abs(self.polarizability - self.polarizability.T).max()
            if skew > 1e-8:
                raise DataError(
                    f"polarizability must be symmetric, asymmetry {skew:.2e}"
                )

    @property
    def n_atoms(self):
        return self.atomic_numbers.size

    @property
    def masses(self):
        """Standard atomic masses in amu."""
        return np.array(elements.masses_for(self.atomic_numbers))


@dataclass
class NeighborList:
    """Directed pairs within a cutoff, with r_ij = r_j - r_i."""

    idx_i: np.ndarray
    idx_j: np.ndarray
    vectors: np.ndarray
    distances: np.ndarray
    r_cut: float

    @property
    def n_pairs(self):
        return self.idx_i.size


@dataclass
class Batch:
    """Several molecules concatenated for one evaluation.

    molecule_index maps every atom to its molecule; offsets give each
    molecule's first atom. Stacked labels are present only when every
    member system carries them.
    """

    atomic_numbers: np.ndarray
    positions: np.ndarray
    molecule_index: np.ndarray
    offsets: np.ndarray
    sizes: np.ndarray
    energies: np.ndarray | None = None
    forces: np.ndarray | None = None
    dipoles: np.ndarray | None = None
    polarizabilities: np.ndarray | None = None

    @property
    def n_molecules(self):
        return self.offsets.size

    @property
    def n_atoms(self):
        return self.atomic_numbers.size

    @property
    def masses(self):
        return np.array(elements.masses_for(self.atomic_numbers))


def _pairs_brute(positions, r_cut):
    n = positions.shape[0]
    diff = positions[None, :, :] - positions[:, None, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    off_diagonal = ~np.eye(n, dtype=bool)
    if n > 1 and dist[off_diagonal].min() < COINCIDENCE_TOLERANCE:
        raise DegenerateGeometryError(
            f"coincident atoms: minimum separation {dist[off_diagonal].min():.2e} Å"
        )
    i, j = np.nonzero(off_diagonal & (dist <= r_cut))
    return i, j, diff[i, j], dist[i, j]


def _pairs_grid(positions, r_cut):
    # Cell-size-r_cut grid; candidates come from the 27 surrounding cells,
    # then the same distance filter as the brute path. Output order is
    # normalized to match the brute path.
    cells = np.floor(positions / r_cut).astype(np.int64)
    buckets = {}
    for a, cell in enumerate(map(tuple, cells)):
        buckets.setdefault(cell, []).append(a)
    found_i, found_j = [], []
    for (cx, cy, cz), members in buckets.items():
        candidates = []
        for ox in (-1, 0, 1):
            for oy in (-1, 0, 1):
                for oz in (-1, 0, 1):
                    candidates.extend(buckets.get((cx + ox, cy + oy, cz + oz), ()))
        candidates = np.array(candidates, dtype=np.intp)
        for a in members:
            others = candidates[candidates != a]
            if others.size == 0:
                continue
            d = np.linalg.norm(positions[others] - positions[a], axis=-1)
            if d.min() < COINCIDENCE_TOLERANCE:
                raise DegenerateGeometryError(
                    f"coincident atoms: minimum separation {d.min():.2e} Å"
                )
            close = others[d <= r_cut]
            found_i.extend([a] * close.size)
            found_j.extend(close.tolist())
    i = np.array(found_i, dtype=np.intp)
    j = np.array(found_j, dtype=np.intp)
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    vectors = positions[j] - positions[i]
    return i, j, vectors, np.linalg.norm(vectors, axis=-1)


def build_neighbor_list(obj, r_cut, method="brute"):
    """All directed pairs with 0 < distance <= r_cut.

    The boundary is inclusive; the smooth cutoff is zero there, so the
    choice only fixes determinism. Accepts a single AtomicSystem or a
    Batch; batched pairs never cross molecules. Separations below
    COINCIDENCE_TOLERANCE raise DegenerateGeometryError.
    """
    if r_cut <= 0.0:
        raise ValueError("r_cut must be positive")
    if method == "brute":
        pair_fn = _pairs_brute
    elif method == "grid":
        pair_fn = _pairs_grid
    else:
        raise ValueError(f"unknown neighbor list method {method!r}")

    if isinstance(obj, Batch):
        parts_i, parts_j, parts_v, parts_d = [], [], [], []
        for k in range(obj.n_molecules):
            start = obj.offsets[k]
            stop = start + obj.sizes[k]
            i, j, v, d = pair_fn(obj.positions[start:stop], r_cut)
            parts_i.append(i + start)
            parts_j.append(j + start)
            parts_v.append(v)
            parts_d.append(d)
        return NeighborList(
            np.concatenate(parts_i),
            np.concatenate(parts_j),
            np.concatenate(parts_v) if parts_v else np.zeros((0, 3)),
            np.concatenate(parts_d),
            float(r_cut),
        )

    i, j, v, d = pair_fn(obj.positions, r_cut)
    return NeighborList(i, j, v, d, float(r_cut))


def recenter(system):
    """Shift positions so the mass-weighted centroid is the origin.

    Labels are carried through unchanged; forces and energy are
    translation invariant anyway.
    """
    m = system.masses
    centroid = (m[:, None] * system.positions).sum(axis=0) / m.sum()
    return replace(system, positions=system.positions - centroid)


def batch(systems):
    """Concatenate systems for one evaluation; see Batch."""
    if not systems:
        raise DataError("cannot batch an empty list of systems")
    sizes = np.array([s.n_atoms for s in systems], dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
    molecule_index = np.repeat(np.arange(len(systems), dtype=np.intp), sizes)

    def stacked(getter, stack):
        values = [getter(s) for s in systems]
        if any(v is None for v in values):
            return None
        return stack(values)

    return Batch(
        atomic_numbers=np.concatenate([s.atomic_numbers for s in systems]),
        positions=np.concatenate([s.positions for s in systems]),
        molecule_index=molecule_index,
        offsets=offsets,
        sizes=sizes,
        energies=stacked(lambda s: s.energy, lambda v: np.array(v, dtype=np.float64)),
        forces=stacked(lambda s: s.forces, np.concatenate),
        dipoles=stacked(lambda s: s.dipole, np.stack),
        polarizabilities=stacked(lambda s: s.polarizability, np.stack),
    )


def unbatch(b):
    """Recover the member systems of a batch."""
    systems = []
    for k in range(b.n_molecules):
        start = b.offsets[k]
        stop = start + b.sizes[k]
        systems.append(
            AtomicSystem(
                atomic_numbers=b.atomic_numbers[start:stop],
                positions=b.positions[start:stop],
                energy=None if b.energies is None else float(b.energies[k]),
                forces=None if b.forces is None else b.forces[start:stop],
                dipole=None if b.dipoles is None else b.dipoles[k],
                polarizability=(
                    None if b.polarizabilities is None else b.polarizabilities[k]
                ),
            )
        )
    return systems
