"""Molecular dynamics on the model's potential energy surface.

Mechanical units are Angstrom, femtosecond and amu throughout; a force
function returns (energy, forces) in those units, so model energies must
be scaled once at the boundary (see units.EV_TO_INTERNAL). NVE uses
velocity Verlet; NVT uses a Langevin thermostat with a BAOAB splitting,
which degenerates to velocity Verlet as friction and temperature vanish.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from . import model as mdl
from .autodiff import Tensor, grad
from .errors import ConfigurationError, NumericalDivergenceError
from .geometry import AtomicSystem, batch as make_batch, build_neighbor_list
from .units import KB_INTERNAL


@dataclass
class MDState:
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        self.masses = np.asarray(self.masses, dtype=np.float64)
        n = self.positions.shape[0]
        if self.positions.shape != (n, 3) or self.velocities.shape != (n, 3):
            raise ConfigurationError("positions and velocities must be (N, 3)")
        if self.masses.shape != (n,):
            raise ConfigurationError("masses must be (N,)")
        if not np.all(self.masses > 0.0):
            raise ConfigurationError("masses must be positive")


@dataclass
class MDConfig:
    dt: float = 0.2
    n_steps: int = 1000
    ensemble: str = "nve"
    temperature: float = 300.0
    friction: float = 0.01
    record_stride: int = 1
    record: tuple = ("energy",)
    seed: int = 0
    initial_temperature: float = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigurationError("dt must be positive")
        if self.n_steps < 1:
            raise ConfigurationError("n_steps must be at least 1")
        if self.ensemble not in ("nve", "nvt"):
            raise ConfigurationError("ensemble must be 'nve' or 'nvt'")
        if self.temperature < 0.0:
            raise ConfigurationError("temperature must be nonnegative")
        if self.ensemble == "nvt" and self.friction <= 0.0:
            raise ConfigurationError("friction must be positive for nvt")
        if self.record_stride < 1:
            raise ConfigurationError("record_stride must be at least 1")
        for prop in self.record:
            if prop not in ("energy", "dipole", "polarizability"):
                raise ConfigurationError(f"cannot record {prop!r}")


@dataclass
class Trajectory:
    """Uniformly sampled snapshots, spaced record_stride * dt apart."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    energies: np.ndarray
    dt: float
    stride: int
    dipoles: np.ndarray = None
    polarizabilities: np.ndarray = None

    @property
    def sample_interval(self):
        return self.dt * self.stride

    def __len__(self):
        return len(self.times)


def _check_forces(forces):
    if not np.all(np.isfinite(forces)):
        raise NumericalDivergenceError("non-finite forces during dynamics")


def velocity_verlet_step(state, force_fn, dt, forces=None):
    """One kick-drift-kick step; returns (state, energy, forces).

    Passing the forces from the previous step's return value avoids a
    second force evaluation per step.
    """
    if forces is None:
        _, forces = force_fn(state.positions)
        _check_forces(forces)
    inv_m = 1.0 / state.masses[:, None]
    v_half = state.velocities + 0.5 * dt * forces * inv_m
    positions = state.positions + dt * v_half
    energy, new_forces = force_fn(positions)
    _check_forces(new_forces)
    velocities = v_half + 0.5 * dt * new_forces * inv_m
    new_state = MDState(positions, velocities, state.masses, state.time + dt)
    return new_state, energy, new_forces


def langevin_thermostat_step(
    state, force_fn, dt, temperature, friction, rng, forces=None
):
    """One BAOAB step: kick, half drift, thermostat, half drift, kick.

    The middle segment applies the exact Ornstein-Uhlenbeck update, so
    any friction is unconditionally stable; friction -> 0 at T = 0
    recovers velocity Verlet.
    """
    if forces is None:
        _, forces = force_fn(state.positions)
        _check_forces(forces)
    inv_m = 1.0 / state.masses[:, None]
    v = state.velocities + 0.5 * dt * forces * inv_m
    x = state.positions + 0.5 * dt * v
    decay = np.exp(-friction * dt)
    sigma = np.sqrt((1.0 - decay * decay) * KB_INTERNAL * temperature * inv_m)
    v = decay * v + sigma * rng.standard_normal(v.shape)
    x = x + 0.5 * dt * v
    energy, new_forces = force_fn(x)
    _check_forces(new_forces)
    v = v + 0.5 * dt * new_forces * inv_m
    return MDState(x, v, state.masses, state.time + dt), energy, new_forces


def maxwell_boltzmann(masses, temperature, rng, remove_drift=True):
    """Velocities drawn at the target temperature, drift removed."""
    masses = np.asarray(masses, dtype=np.float64)
    sigma = np.sqrt(KB_INTERNAL * temperature / masses)[:, None]
    velocities = sigma * rng.standard_normal((masses.size, 3))
    if remove_drift and masses.size > 1:
        momentum = (masses[:, None] * velocities).sum(axis=0)
        velocities = velocities - momentum / masses.sum()
    return velocities


def kinetic_energy(state):
    return float(0.5 * (state.masses[:, None] * state.velocities**2).sum())


def model_force_fn(system, params, config, name=None, energy_scale=1.0):
    """Adapter: positions -> (energy, forces) from the scalar readout.

    energy_scale converts the model's energy unit to the internal
    amu A^2/fs^2 (units.EV_TO_INTERNAL for eV-trained models; 1.0 when
    the labels were already in internal units, as for the toy sets).
    """
    name = mdl._find_readout(config, "scalar", name)
    template = system

    def force_fn(positions):
        moved = replace(template, positions=np.asarray(positions, dtype=np.float64))
        b = make_batch([moved])
        nl = build_neighbor_list(moved, config.r_cut)
        pos = Tensor(b.positions, requires_grad=True)
        out = mdl.evaluate(b, nl, params, config, positions=pos, properties=[name])
        energy = out[name].sum()
        dedx = grad(energy, pos)
        return (
            float(energy.data) * energy_scale,
            -dedx.numpy() * energy_scale,
        )

    return force_fn


def run_md(system, params, config, md_config, energy_scale=1.0):
    """Integrate the model's dynamics and record a Trajectory.

    Initial velocities are Maxwell-Boltzmann at initial_temperature
    (defaulting to the thermostat temperature), seeded. Snapshots land
    at steps 0, stride, 2*stride, ...; requested extra properties
    (dipole, polarizability) are evaluated only at recorded steps.
    """
    extra = [p for p in md_config.record if p != "energy"]
    readout_names = {
        prop: mdl._find_readout(config, prop, None) for prop in extra
    }
    rng = np.random.default_rng(md_config.seed)
    t_init = (
        md_config.temperature
        if md_config.initial_temperature is None
        else md_config.initial_temperature
    )
    masses = system.masses
    velocities = (
        maxwell_boltzmann(masses, t_init, rng)
        if t_init > 0.0
        else np.zeros((system.n_atoms, 3))
    )
    state = MDState(system.positions.copy(), velocities, masses)
    force_fn = model_force_fn(
        system, params, config, energy_scale=energy_scale
    )

    def record_extras(snap_state, store):
        moved = replace(system, positions=snap_state.positions)
        b = make_batch([moved])
        nl = build_neighbor_list(moved, config.r_cut)
        out = mdl.evaluate(
            b, nl, params, config, properties=list(readout_names.values())
        )
        for prop, readout in readout_names.items():
            store[prop].append(out[readout].numpy()[0])

    energy0, forces = force_fn(state.positions)
    _check_forces(forces)
    times = [state.time]
    positions = [state.positions.copy()]
    velocities_log = [state.velocities.copy()]
    energies = [energy0 + kinetic_energy(state)]
    extras = {prop: [] for prop in extra}
    record_extras(state, extras)

    for step in range(1, md_config.n_steps + 1):
        if md_config.ensemble == "nve":
            state, energy, forces = velocity_verlet_step(
                state, force_fn, md_config.dt, forces=forces
            )
        else:
            state, energy, forces = langevin_thermostat_step(
                state,
                force_fn,
                md_config.dt,
                md_config.temperature,
                md_config.friction,
                rng,
                forces=forces,
            )
        if step % md_config.record_stride == 0:
            times.append(state.time)
            positions.append(state.positions.copy())
            velocities_log.append(state.velocities.copy())
            energies.append(energy + kinetic_energy(state))
            record_extras(state, extras)

    return Trajectory(
        times=np.array(times),
        positions=np.array(positions),
        velocities=np.array(velocities_log),
        energies=np.array(energies),
        dt=md_config.dt,
        stride=md_config.record_stride,
        dipoles=np.array(extras["dipole"]) if "dipole" in extras else None,
        polarizabilities=(
            np.array(extras["polarizability"])
            if "polarizability" in extras
            else None
        ),
    )


def to_systems(trajectory, atomic_numbers):
    """Trajectory frames as AtomicSystem snapshots (for extended-XYZ)."""
    systems = []
    for i in range(len(trajectory)):
        systems.append(
            AtomicSystem(
                atomic_numbers=np.asarray(atomic_numbers),
                positions=trajectory.positions[i],
                energy=float(trajectory.energies[i]),
                dipole=(
                    trajectory.dipoles[i] if trajectory.dipoles is not None else None
                ),
                polarizability=(
                    trajectory.polarizabilities[i]
                    if trajectory.polarizabilities is not None
                    else None
                ),
            )
        )
    return systems


_ALPHA_COLUMNS = [f"alpha_{a}{b}" for a in "xyz" for b in "xyz"]


def write_trajectory_csv(path, trajectory):
    """Sidecar table: time, total energy, recorded property components."""
    header = ["time", "energy"]
    if trajectory.dipoles is not None:
        header += ["mu_x", "mu_y", "mu_z"]
    if trajectory.polarizabilities is not None:
        header += _ALPHA_COLUMNS
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(len(trajectory)):
            row = [
                format(trajectory.times[i], ".17g"),
                format(trajectory.energies[i], ".17g"),
            ]
            if trajectory.dipoles is not None:
                row += [format(x, ".17g") for x in trajectory.dipoles[i]]
            if trajectory.polarizabilities is not None:
                row += [
                    format(x, ".17g")
                    for x in trajectory.polarizabilities[i].ravel()
                ]
            writer.writerow(row)


def read_trajectory_csv(path):
    """Inverse of write_trajectory_csv: dict of column arrays."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows)
    columns = {name: data[:, i] for i, name in enumerate(header)}
    out = {"time": columns["time"], "energy": columns["energy"]}
    if "mu_x" in columns:
        out["dipole"] = np.stack(
            [columns["mu_x"], columns["mu_y"], columns["mu_z"]], axis=1
        )
    if "alpha_xx" in columns:
        out["polarizability"] = np.stack(
            [columns[c] for c in _ALPHA_COLUMNS], axis=1
        ).reshape(-1, 3, 3)
    return out
