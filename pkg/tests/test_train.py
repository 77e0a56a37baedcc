import numpy as np
import pytest

from molpot import model as mm
from molpot import toydata
from molpot import train as tr
from molpot.autodiff import Tensor, grad
from molpot.errors import ConfigurationError, NumericalDivergenceError
from molpot.geometry import batch as make_batch
from molpot.geometry import build_neighbor_list


# --- the analytic labels are themselves checked against finite differences ---


def numerical_forces(energy_fn, positions, h=1e-6):
    forces = np.zeros_like(positions)
    for i in range(positions.shape[0]):
        for k in range(3):
            plus = positions.copy()
            minus = positions.copy()
            plus[i, k] += h
            minus[i, k] -= h
            forces[i, k] = -(energy_fn(plus) - energy_fn(minus)) / (2 * h)
    return forces


def test_morse_forces_match_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(5):
        r = rng.uniform(0.9, 2.0)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        positions = np.stack([-0.5 * r * axis, 0.5 * r * axis])
        _, forces = toydata.morse_energy_forces(positions)
        fd = numerical_forces(lambda p: toydata.morse_energy_forces(p)[0], positions)
        np.testing.assert_allclose(forces, fd, rtol=1e-6, atol=1e-8)


def test_lj_forces_match_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(5):
        positions = np.array(
            [[0.0, 0.0, 0.0], [1.2, 0.0, 0.0], [0.5, 1.1, 0.0]]
        ) + rng.normal(0.0, 0.05, size=(3, 3))
        _, forces = toydata.lj_energy_forces(positions)
        fd = numerical_forces(lambda p: toydata.lj_energy_forces(p)[0], positions)
        np.testing.assert_allclose(forces, fd, rtol=1e-5, atol=1e-7)


def test_dataset_builders_are_seeded():
    a = toydata.make_morse_dimers(5, seed=7)
    b = toydata.make_morse_dimers(5, seed=7)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.positions, y.positions)
        assert x.energy == y.energy
    c = toydata.make_lj_trimers(4, seed=1)
    d = toydata.make_lj_trimers(4, seed=2)
    assert not np.allclose(c[0].positions, d[0].positions)


# --- combined loss ---


def test_perfect_prediction_gives_zero_loss():
    pred = {"energy": np.array([1.0, -2.0]), "forces": np.ones((4, 3))}
    target = {"energy": np.array([1.0, -2.0]), "forces": np.ones((4, 3))}
    assert tr.combined_loss(pred, target, 0.95).item() == 0.0


def test_force_weight_mixes_terms_exactly():
    # energy error^2 = 1, mean force error^2 = 2
    pred = {
        "energy": np.array([1.0]),
        "forces": np.full((2, 3), np.sqrt(2.0)),
    }
    target = {"energy": np.array([0.0]), "forces": np.zeros((2, 3))}
    loss = tr.combined_loss(pred, target, 0.95).item()
    assert abs(loss - (0.05 * 1.0 + 0.95 * 2.0)) < 1e-12


def test_force_weight_endpoints_select_single_terms():
    pred = {"energy": np.array([2.0]), "forces": np.zeros((1, 3))}
    target = {"energy": np.array([0.0]), "forces": np.ones((1, 3))}
    assert abs(tr.combined_loss(pred, target, 0.0).item() - 4.0) < 1e-12
    assert abs(tr.combined_loss(pred, target, 1.0).item() - 1.0) < 1e-12


def test_absolute_loss_kind():
    pred = {"energy": np.array([-2.0])}
    target = {"energy": np.array([0.0])}
    assert abs(tr.combined_loss(pred, target, 0.0, kind="absolute").item() - 2.0) < 1e-12


def test_absolute_loss_gradient_is_sign():
    x = Tensor(np.array([3.0, -1.0]), requires_grad=True)
    loss = tr.property_loss(x, np.zeros(2), kind="absolute")
    g = grad(loss, x)
    np.testing.assert_allclose(g.numpy(), [0.5, -0.5])


def test_dipole_magnitude_loss():
    pred = np.array([[3.0, 4.0, 0.0]])
    target = np.array([[0.0, 0.0, 5.0]])
    loss = tr.property_loss(pred, target, magnitude=True).item()
    assert loss < 1e-10


# --- optimizer ---


def test_adamw_first_step_closed_form():
    g = 0.3
    w0 = 1.5
    params = {"w": Tensor(np.array([w0]), requires_grad=True)}
    state = tr.init_optimizer_state(params)
    tr.adamw_step(params, {"w": np.array([g])}, state, lr=0.01, weight_decay=0.0)
    expected = w0 - 0.01 * g / (abs(g) + 1e-8)
    assert abs(params["w"].data[0] - expected) < 1e-12


def test_adamw_decoupled_decay_with_zero_gradient():
    w0 = np.array([2.0, -3.0])
    params = {"w": Tensor(w0.copy(), requires_grad=True)}
    state = tr.init_optimizer_state(params)
    tr.adamw_step(params, {"w": np.zeros(2)}, state, lr=0.1, weight_decay=0.01)
    np.testing.assert_allclose(params["w"].data, w0 - 0.1 * 0.01 * w0, atol=1e-15)


def test_adamw_matches_textbook_adam_recurrence():
    beta1, beta2, eps, lr = 0.9, 0.999, 1e-8, 0.02
    rng = np.random.default_rng(0)
    grads = rng.standard_normal(10)

    w_ref = 0.7
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        w_ref = w_ref - lr * m_hat / (np.sqrt(v_hat) + eps)

    params = {"w": Tensor(np.array([0.7]), requires_grad=True)}
    state = tr.init_optimizer_state(params)
    for g in grads:
        tr.adamw_step(params, {"w": np.array([g])}, state, lr=lr, weight_decay=0.0)
    assert abs(params["w"].data[0] - w_ref) < 1e-12


def test_adamw_converges_on_quadratic():
    params = {"w": Tensor(np.array([0.0]), requires_grad=True)}
    state = tr.init_optimizer_state(params)
    for _ in range(200):
        g = 2.0 * (params["w"].data - 3.0)
        tr.adamw_step(params, {"w": g}, state, lr=0.1, weight_decay=0.0)
    assert abs(params["w"].data[0] - 3.0) < 1e-2


def test_adamw_rejects_non_finite_gradient():
    params = {"w": Tensor(np.array([1.0]), requires_grad=True)}
    state = tr.init_optimizer_state(params)
    with pytest.raises(NumericalDivergenceError):
        tr.adamw_step(params, {"w": np.array([np.nan])}, state, lr=0.1)


def test_optimizer_state_round_trips_bitwise(tmp_path):
    config = mm.ModelConfig(r_cut=3.0, n_features=8, n_blocks=1, n_rbf=4, max_z=4)
    params = mm.init_params(config, seed=0)
    state = tr.init_optimizer_state(params)
    rng = np.random.default_rng(1)
    grads = {
        name: rng.standard_normal(params[name].shape)
        for name in state["m"]
    }
    tr.adamw_step(params, grads, state, lr=1e-3)
    path = tmp_path / "ck.npz"
    mm.save_checkpoint(path, config, params, optimizer_state=state)
    _, loaded_params, loaded_state = mm.load_checkpoint(path)
    assert loaded_state["step"] == state["step"]
    for name in state["m"]:
        np.testing.assert_array_equal(loaded_state["m"][name], state["m"][name])
        np.testing.assert_array_equal(loaded_state["v"][name], state["v"][name])
        np.testing.assert_array_equal(loaded_params[name].data, params[name].data)


# --- smoothing and schedule ---


def test_smoothing_initializes_with_first_value():
    assert tr.smooth_validation(None, 10.0) == 10.0


def test_smoothing_recurrence():
    assert abs(tr.smooth_validation(10.0, 0.0, factor=0.9) - 9.0) < 1e-15


def test_smoothing_fixed_point():
    value = None
    for _ in range(20):
        value = tr.smooth_validation(value, 3.25)
    assert value == 3.25


def test_plateau_unchanged_on_decreasing_history():
    sched = tr.PlateauScheduler(1.0, patience=3)
    for v in [10.0, 9.0, 8.0, 7.0, 6.0]:
        lr = sched.step(v)
    assert lr == 1.0


def test_plateau_flat_history_halves_once():
    patience = 4
    sched = tr.PlateauScheduler(1.0, patience=patience)
    lrs = [sched.step(5.0) for _ in range(patience + 1)]
    assert lrs[:-1] == [1.0] * patience
    assert lrs[-1] == 0.5


def test_plateau_reset_on_late_improvement():
    sched = tr.PlateauScheduler(1.0, patience=3)
    sched.step(5.0)
    sched.step(5.0)
    sched.step(5.0)
    assert sched.step(4.0) == 1.0  # improvement on the third bad step's heels
    assert sched.step(4.0) == 1.0
    assert sched.step(4.0) == 1.0
    assert sched.step(4.0) == 0.5


def test_early_stopping_fires_after_patience():
    stopper = tr.EarlyStopping(patience=2)
    assert not stopper.step(1.0)
    assert not stopper.step(1.0)
    assert stopper.step(1.0)


# --- splitting and offsets ---


def test_split_sizes_and_disjointness():
    train, val, test = tr.split_dataset(10, 6, 2, seed=0)
    assert len(train) == 6 and len(val) == 2 and len(test) == 2
    combined = np.sort(np.concatenate([train, val, test]))
    np.testing.assert_array_equal(combined, np.arange(10))


def test_split_seed_determinism():
    a = tr.split_dataset(50, 30, 10, seed=5)
    b = tr.split_dataset(50, 30, 10, seed=5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_split_different_seeds_differ():
    a, _, _ = tr.split_dataset(1000, 600, 200, seed=1)
    b, _, _ = tr.split_dataset(1000, 600, 200, seed=2)
    assert not np.array_equal(a, b)


def test_split_oversubscription_rejected():
    with pytest.raises(ConfigurationError):
        tr.split_dataset(10, 8, 4, seed=0)


def test_element_offsets_exact_recovery():
    true = np.zeros(9)
    true[1], true[6], true[8] = -0.5, -38.0, -75.0
    rng = np.random.default_rng(0)
    systems = []
    for _ in range(12):
        zs = rng.choice([1, 6, 8], size=rng.integers(2, 6))
        energy = float(sum(true[z] for z in zs))
        systems.append(
            type("S", (), {"atomic_numbers": zs, "energy": energy})()
        )
    fitted = tr.fit_element_offsets(systems, max_z=8)
    np.testing.assert_allclose(fitted[[1, 6, 8]], true[[1, 6, 8]], atol=1e-10)
    assert abs(fitted[2]) < 1e-10  # absent element stays at zero


# --- loop behaviour on the dimer task ---


def tiny_model():
    return mm.ModelConfig(r_cut=3.0, n_features=16, n_blocks=2, n_rbf=8, max_z=2)


def test_loss_non_increasing_for_small_lr():
    config = tiny_model()
    tcfg = tr.TrainConfig(batch_size=10, learning_rate=1e-4, seed=0, max_epochs=1)
    systems = toydata.make_morse_dimers(10, seed=0)
    b = make_batch(systems)
    nl = build_neighbor_list(b, config.r_cut)
    params = mm.init_params(config, seed=0)
    state = tr.init_optimizer_state(params)
    trainable = [n for n in params if params[n].requires_grad]

    losses = []
    for _ in range(10):
        loss, _ = tr._batch_loss(params, config, "energy", b, nl, tcfg)
        losses.append(float(loss.data))
        gs = grad(loss, [params[n] for n in trainable])
        tr.adamw_step(
            params, dict(zip(trainable, gs)), state, lr=1e-4, weight_decay=0.01
        )
    for earlier, later in zip(losses, losses[1:]):
        assert later <= earlier + 1e-12


def test_train_loop_smoke_rho_sweep(tmp_path):
    config = tiny_model()
    systems = toydata.make_morse_dimers(24, seed=1)
    train_set, val_set = systems[:20], systems[20:]
    for rho in (0.0, 0.95, 1.0):
        tcfg = tr.TrainConfig(
            batch_size=10,
            learning_rate=1e-3,
            force_weight=rho,
            seed=0,
            max_epochs=3,
        )
        log = tmp_path / f"log_{rho}.jsonl"
        result = tr.train_loop(config, tcfg, train_set, val_set, log_path=log)
        assert len(result["history"]) == 3
        assert result["stopped"] == "max_epochs"
        lines = log.read_text().strip().splitlines()
        assert len(lines) == 3
        import json

        record = json.loads(lines[-1])
        assert {"epoch", "lr", "train_loss", "val_loss"} <= set(record)


def test_train_loop_reduces_force_error():
    config = tiny_model()
    systems = toydata.make_morse_dimers(40, seed=2)
    tcfg = tr.TrainConfig(batch_size=10, learning_rate=1e-3, seed=0, max_epochs=40)
    result = tr.train_loop(config, tcfg, systems[:32], systems[32:])
    first = result["history"][0]["val_force_mae"]
    last = min(h["val_force_mae"] for h in result["history"])
    assert last < 0.5 * first


def test_train_loop_divergence_aborts_preserving_best(tmp_path):
    config = tiny_model()
    systems = toydata.make_morse_dimers(14, seed=3)
    val = systems[10:]
    val[0].energy = float("nan")
    tcfg = tr.TrainConfig(batch_size=10, learning_rate=1e-3, seed=0, max_epochs=5)
    result = tr.train_loop(config, tcfg, systems[:10], val)
    assert result["stopped"] == "divergence"
    assert all(np.all(np.isfinite(p.data)) for p in result["params"].values())


def test_train_loop_writes_checkpoint(tmp_path):
    config = tiny_model()
    systems = toydata.make_morse_dimers(14, seed=4)
    tcfg = tr.TrainConfig(batch_size=10, learning_rate=1e-3, seed=0, max_epochs=2)
    path = tmp_path / "best.npz"
    result = tr.train_loop(
        config, tcfg, systems[:10], systems[10:], checkpoint_path=path
    )
    loaded_config, loaded_params, _ = mm.load_checkpoint(path)
    assert loaded_config == config
    for name, p in result["params"].items():
        np.testing.assert_array_equal(loaded_params[name].data, p.data)


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        tr.TrainConfig(force_weight=1.5)
    with pytest.raises(ConfigurationError):
        tr.TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigurationError):
        tr.TrainConfig(lr_decay_factor=1.0)
    with pytest.raises(ConfigurationError):
        tr.TrainConfig(loss_kind="huber")
