"""Built-in invariant checks runnable from the command line.

Each check exercises one load-bearing guarantee: rotational behavior of
the predictions, gradient correctness against finite differences, the
neighbor-sum angular identity, smoothness at the cutoff, the
autocorrelation fast path and the file format round trip. They run on
small random inputs in a few seconds and report pass/fail per check.
"""

import numpy as np
from scipy.stats import special_ortho_group

from . import model as mdl
from . import spectra, xyz
from .autodiff import Tensor, grad
from .geometry import AtomicSystem, batch as make_batch, build_neighbor_list


def _random_system(rng, n_max=6):
    n = int(rng.integers(2, n_max + 1))
    return AtomicSystem(
        atomic_numbers=rng.choice([1, 6, 7, 8], size=n),
        positions=rng.uniform(-2.0, 2.0, size=(n, 3)),
    )


def _config():
    return mdl.ModelConfig(
        r_cut=4.0,
        n_features=16,
        n_blocks=2,
        n_rbf=8,
        max_z=10,
        readouts={
            "energy": mdl.ReadoutSpec("scalar"),
            "mu": mdl.ReadoutSpec("dipole"),
        },
    )


def check_equivariance(seed=0, n_systems=5):
    rng = np.random.default_rng(seed)
    config = _config()
    params = mdl.init_params(config, seed=rng)
    worst = 0.0
    for index in range(n_systems):
        system = _random_system(rng)
        rot = special_ortho_group.rvs(3, random_state=seed + index)
        shift = rng.uniform(-3.0, 3.0, size=3)
        moved = AtomicSystem(
            atomic_numbers=system.atomic_numbers,
            positions=system.positions @ rot.T + shift,
        )
        e0 = mdl.predict_scalar(system, params, config)
        e1 = mdl.predict_scalar(moved, params, config)
        worst = max(worst, abs(e1 - e0))
        f0 = mdl.predict_forces(system, params, config)
        f1 = mdl.predict_forces(moved, params, config)
        worst = max(worst, np.abs(f1 - f0 @ rot.T).max())
        d0 = mdl.predict_dipole(system, params, config)
        d1 = mdl.predict_dipole(moved, params, config)
        worst = max(worst, np.abs(d1 - rot @ d0).max())
    return worst < 1e-8, f"worst deviation {worst:.3e}"


def check_force_gradient(seed=1, n_systems=3, h=1e-4):
    rng = np.random.default_rng(seed)
    config = _config()
    params = mdl.init_params(config, seed=rng)
    worst = 0.0
    for _ in range(n_systems):
        system = _random_system(rng, n_max=4)
        forces = mdl.predict_forces(system, params, config)
        fd = np.zeros_like(forces)
        for a in range(system.n_atoms):
            for k in range(3):
                plus = system.positions.copy()
                minus = system.positions.copy()
                plus[a, k] += h
                minus[a, k] -= h
                ep = mdl.predict_scalar(
                    AtomicSystem(system.atomic_numbers, plus), params, config
                )
                em = mdl.predict_scalar(
                    AtomicSystem(system.atomic_numbers, minus), params, config
                )
                fd[a, k] = -(ep - em) / (2 * h)
        scale = np.abs(fd).max() + 1e-12
        worst = max(worst, np.abs(forces - fd).max() / scale)
    return worst < 1e-5, f"worst relative error {worst:.3e}"


def check_angular_identity(seed=2, n_neighborhoods=100):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_neighborhoods):
        m = int(rng.integers(2, 8))
        units = rng.standard_normal((m, 3))
        units /= np.linalg.norm(units, axis=1, keepdims=True)
        lhs = float(units.sum(axis=0) @ units.sum(axis=0))
        rhs = float((units @ units.T).sum())
        worst = max(worst, abs(lhs - rhs))
    return worst < 1e-12, f"worst deviation {worst:.3e}"


def check_cutoff_smoothness(seed=3, delta=1e-6):
    rng = np.random.default_rng(seed)
    config = _config()
    params = mdl.init_params(config, seed=rng)
    numbers = np.array([6, 8])
    worst = 0.0
    for sign in (-1.0, 1.0):
        near = AtomicSystem(
            numbers, np.array([[0.0, 0.0, 0.0], [config.r_cut + sign * delta, 0.0, 0.0]])
        )
        at = AtomicSystem(
            numbers, np.array([[0.0, 0.0, 0.0], [config.r_cut, 0.0, 0.0]])
        )
        worst = max(
            worst,
            abs(
                mdl.predict_scalar(near, params, config)
                - mdl.predict_scalar(at, params, config)
            ),
        )
    return worst < 1e-8, f"energy jump {worst:.3e}"


def check_second_order_gradients():
    theta = Tensor(np.array([2.0]), requires_grad=True)
    x = Tensor(np.array([4.0]), requires_grad=True)
    y = (theta * x * x).sum()
    (gx,) = grad(y, [x], create_graph=True)
    loss = (gx * gx).sum()
    (gtheta,) = grad(loss, [theta])
    expected = 2.0 * (2.0 * 2.0 * 4.0) * (2.0 * 4.0)
    err = abs(float(gtheta.data[0]) - expected)
    return err < 1e-10, f"closed-form error {err:.3e}"


def check_autocorrelation(seed=4):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(64)
    fast = spectra.autocorrelation(x, 64)
    slow = np.array(
        [sum(x[t] * x[t + lag] for t in range(64 - lag)) / 64 for lag in range(64)]
    )
    err = np.abs(fast - slow).max()
    return err < 1e-10, f"max deviation {err:.3e}"


def check_xyz_round_trip(seed=5):
    rng = np.random.default_rng(seed)
    systems = []
    for _ in range(4):
        n = int(rng.integers(1, 5))
        systems.append(
            AtomicSystem(
                atomic_numbers=rng.choice([1, 6, 8], size=n),
                positions=rng.standard_normal((n, 3)),
                energy=float(rng.standard_normal()),
                forces=rng.standard_normal((n, 3)),
            )
        )
    parsed = xyz.parse_extxyz(xyz.write_extxyz(systems))
    worst = max(
        np.abs(a.positions - b.positions).max() for a, b in zip(systems, parsed)
    )
    return worst == 0.0, f"round-trip deviation {worst:.3e}"


CHECKS = [
    ("equivariance", check_equivariance),
    ("force_gradient", check_force_gradient),
    ("angular_identity", check_angular_identity),
    ("cutoff_smoothness", check_cutoff_smoothness),
    ("second_order_gradients", check_second_order_gradients),
    ("autocorrelation", check_autocorrelation),
    ("xyz_round_trip", check_xyz_round_trip),
]


def run_selftest(report=None):
    """Run every check; returns (all_ok, list of (name, ok, detail))."""
    results = []
    for name, check in CHECKS:
        ok, detail = check()
        results.append((name, ok, detail))
        if report:
            report(f"{'ok' if ok else 'FAIL'}  {name}: {detail}")
    return all(ok for _, ok, _ in results), results
