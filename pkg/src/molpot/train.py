"""Optimization: combined losses, decoupled-decay Adam, plateau schedule.

The loop trains a scalar (energy) readout on energies and forces. Forces
enter the loss through the engine's position gradient with higher-order
taping enabled, so parameter gradients flow through the force error.
Validation is smoothed exponentially; the learning rate halves when the
smoothed loss plateaus and training stops after a longer plateau. The
best-validation parameters are retained. All reductions run in a fixed
order, so a fixed seed reproduces a run bitwise on a single thread.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import model as md
from .autodiff import Tensor
from .errors import ConfigurationError, NumericalDivergenceError, ShapeError
from .geometry import batch as make_batch
from .geometry import build_neighbor_list


@dataclass
class TrainConfig:
    batch_size: int = 10
    learning_rate: float = 1e-3
    lr_decay_factor: float = 0.5
    decay_patience: int = 50
    stopping_patience: int = 150
    smoothing_factor: float = 0.9
    weight_decay: float = 0.01
    force_weight: float = 0.95
    seed: int = 0
    max_epochs: int = 1000
    loss_kind: str = "squared"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.learning_rate <= 0.0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0.0 < self.lr_decay_factor < 1.0:
            raise ConfigurationError("lr_decay_factor must be in (0, 1)")
        if self.decay_patience < 1 or self.stopping_patience < 1:
            raise ConfigurationError("patience values must be positive")
        if not 0.0 < self.smoothing_factor < 1.0:
            raise ConfigurationError("smoothing_factor must be in (0, 1)")
        if self.weight_decay < 0.0:
            raise ConfigurationError("weight_decay must be nonnegative")
        if not 0.0 <= self.force_weight <= 1.0:
            raise ConfigurationError("force_weight must be in [0, 1]")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be at least 1")
        if self.loss_kind not in ("squared", "absolute"):
            raise ConfigurationError("loss_kind must be 'squared' or 'absolute'")

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# --- losses ---


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _error_mean(diff, kind):
    if kind == "squared":
        return (diff * diff).mean()
    return ad.where(diff.data >= 0.0, diff, -diff).mean()


def combined_loss(pred, target, force_weight, kind="squared"):
    """(1 - rho) * energy error + rho * per-component force error.

    pred and target are dicts with "energy" (per molecule) and, unless
    force_weight is 0, "forces" (per atom, 3 components). The error is
    the mean squared or mean absolute entry, per kind.
    """
    rho = float(force_weight)
    terms = []
    if rho < 1.0:
        e_pred = _as_tensor(pred["energy"])
        e_target = _as_tensor(target["energy"])
        if e_pred.shape != e_target.shape:
            raise ShapeError(
                f"energy shapes differ: {e_pred.shape} vs {e_target.shape}"
            )
        terms.append((1.0 - rho) * _error_mean(e_pred - e_target, kind))
    if rho > 0.0:
        f_pred = _as_tensor(pred["forces"])
        f_target = _as_tensor(target["forces"])
        if f_pred.shape != f_target.shape:
            raise ShapeError(
                f"force shapes differ: {f_pred.shape} vs {f_target.shape}"
            )
        terms.append(rho * _error_mean(f_pred - f_target, kind))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def property_loss(pred, target, kind="squared", magnitude=False):
    """Elementwise error between two property tensors of equal shape.

    With magnitude=True both sides are reduced to their Euclidean norm
    over the last axis first (useful when only |mu| is labeled).
    """
    p, t = _as_tensor(pred), _as_tensor(target)
    if p.shape != t.shape:
        raise ShapeError(f"property shapes differ: {p.shape} vs {t.shape}")
    if magnitude:
        p = ad.safe_norm(p, axis=-1)
        t = ad.safe_norm(t, axis=-1)
    return _error_mean(p - t, kind)


# --- optimizer ---


def init_optimizer_state(params):
    """Zeroed first/second moments for every trainable parameter."""
    state = {"step": 0, "m": {}, "v": {}}
    for name, p in params.items():
        if p.requires_grad:
            state["m"][name] = np.zeros_like(p.data)
            state["v"][name] = np.zeros_like(p.data)
    return state


def adamw_step(
    params,
    grads,
    state,
    lr,
    weight_decay=0.01,
    beta1=0.9,
    beta2=0.999,
    eps=1e-8,
):
    """One bias-corrected Adam step with decoupled weight decay.

    The decay term -lr * weight_decay * w is applied outside the
    adaptive update, so it does not pass through the moment estimates.
    Mutates params and state in place and returns state.
    """
    state["step"] += 1
    t = state["step"]
    for name, m in state["m"].items():
        g = grads[name].data if isinstance(grads[name], Tensor) else grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalDivergenceError(f"non-finite gradient for {name!r}")
        v = state["v"][name]
        m[...] = beta1 * m + (1.0 - beta1) * g
        v[...] = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        w = params[name].data
        params[name].data = (
            w - lr * m_hat / (np.sqrt(v_hat) + eps) - lr * weight_decay * w
        )
    return state


# --- schedule ---


def smooth_validation(prev_smoothed, new_value, factor=0.9):
    """Exponential smoothing; the factor weights the old value."""
    if prev_smoothed is None:
        return float(new_value)
    return factor * float(prev_smoothed) + (1.0 - factor) * float(new_value)


class _ImprovementTracker:
    """Counts evaluations since the running best last improved.

    An observation improves when it undercuts the best by a relative
    margin (default 1e-4). update() returns True when the count reaches
    patience, then resets the count.
    """

    def __init__(self, patience, threshold=1e-4):
        if patience < 1:
            raise ConfigurationError("patience must be at least 1")
        self.patience = patience
        self.threshold = threshold
        self.best = np.inf
        self.num_bad = 0

    def update(self, value):
        if value < self.best * (1.0 - self.threshold):
            self.best = value
            self.num_bad = 0
            return False
        self.num_bad += 1
        if self.num_bad >= self.patience:
            self.num_bad = 0
            return True
        return False


class PlateauScheduler:
    """Multiplies lr by factor when the tracked loss stops improving."""

    def __init__(self, lr, patience, factor=0.5, threshold=1e-4):
        self.lr = float(lr)
        self.factor = float(factor)
        self._tracker = _ImprovementTracker(patience, threshold)

    def step(self, value):
        if self._tracker.update(value):
            self.lr *= self.factor
        return self.lr


class EarlyStopping:
    """Signals once the tracked loss has stalled for patience rounds."""

    def __init__(self, patience, threshold=1e-4):
        self._tracker = _ImprovementTracker(patience, threshold)

    def step(self, value):
        return self._tracker.update(value)


# --- data plumbing ---


def split_dataset(data, n_train, n_val, seed=0):
    """Disjoint shuffled train/val/test index arrays; remainder is test."""
    n = data if isinstance(data, int) else len(data)
    if n_train + n_val > n:
        raise ConfigurationError(
            f"requested {n_train}+{n_val} examples from a set of {n}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def fit_element_offsets(systems, max_z):
    """Least-squares per-element reference energies from compositions.

    Solves counts @ offsets = energies; elements absent from the data
    get offset 0 (minimum-norm solution).
    """
    counts = np.zeros((len(systems), max_z + 1))
    energies = np.empty(len(systems))
    for row, system in enumerate(systems):
        for z in system.atomic_numbers:
            counts[row, z] += 1.0
        energies[row] = system.energy
    offsets, *_ = np.linalg.lstsq(counts, energies, rcond=None)
    return offsets


def _copy_params(params):
    return {
        name: Tensor(p.data.copy(), requires_grad=p.requires_grad)
        for name, p in params.items()
    }


def _prepare_batches(systems, indices, batch_size, r_cut):
    batches = []
    for start in range(0, len(indices), batch_size):
        chunk = [systems[i] for i in indices[start : start + batch_size]]
        b = make_batch(chunk)
        batches.append((b, build_neighbor_list(b, r_cut)))
    return batches


def _batch_loss(params, model_config, energy_name, b, nl, train_config):
    """Loss tensor plus detached MAE metrics for one batch."""
    rho = train_config.force_weight
    need_forces = rho > 0.0
    pos = Tensor(b.positions, requires_grad=need_forces)
    out = md.evaluate(
        b, nl, params, model_config, positions=pos, properties=[energy_name]
    )
    pred = {"energy": out[energy_name]}
    target = {"energy": Tensor(b.energies)}
    if need_forces:
        dedx = ad.grad(out[energy_name].sum(), pos, create_graph=True)
        pred["forces"] = -dedx
        target["forces"] = Tensor(b.forces)
    loss = combined_loss(pred, target, rho, kind=train_config.loss_kind)
    metrics = {
        "energy_mae": float(
            np.abs(pred["energy"].data - b.energies).mean()
        ),
        "force_mae": float(np.abs(pred["forces"].data - b.forces).mean())
        if need_forces
        else float("nan"),
        "n_molecules": b.n_molecules,
    }
    return loss, metrics


def _validate(params, model_config, energy_name, batches, train_config):
    total_loss = 0.0
    total_e = 0.0
    total_f = 0.0
    n_mol = 0
    for b, nl in batches:
        loss, metrics = _batch_loss(
            params, model_config, energy_name, b, nl, train_config
        )
        weight = metrics["n_molecules"]
        total_loss += float(loss.data) * weight
        total_e += metrics["energy_mae"] * weight
        total_f += metrics["force_mae"] * weight
        n_mol += weight
    return {
        "loss": total_loss / n_mol,
        "energy_mae": total_e / n_mol,
        "force_mae": total_f / n_mol,
    }


def train_loop(
    model_config,
    train_config,
    train_systems,
    val_systems,
    zero_init_heads=False,
    fit_offsets=True,
    log_path=None,
    checkpoint_path=None,
    stop_at_force_mae=None,
    callback=None,
):
    """Train the scalar readout on energies and forces.

    Returns a dict with the best-validation parameters, the model
    config, the per-epoch history, and why training stopped. Metrics go
    to log_path as one JSON record per line when given; the best
    checkpoint is written to checkpoint_path when given. A non-finite
    validation loss aborts, preserving the best parameters seen.
    """
    rng = np.random.default_rng(train_config.seed)
    params = md.init_params(model_config, seed=rng, zero_init_heads=zero_init_heads)
    energy_name = md._find_readout(model_config, "scalar", None)
    offsets_key = f"readout/{energy_name}/element_offsets"
    if fit_offsets and offsets_key in params:
        params[offsets_key].data = fit_element_offsets(
            train_systems, model_config.max_z
        )

    opt_state = init_optimizer_state(params)
    scheduler = PlateauScheduler(
        train_config.learning_rate,
        train_config.decay_patience,
        factor=train_config.lr_decay_factor,
    )
    stopper = EarlyStopping(train_config.stopping_patience)
    val_batches = _prepare_batches(
        val_systems,
        np.arange(len(val_systems)),
        train_config.batch_size,
        model_config.r_cut,
    )
    trainable = [name for name in params if params[name].requires_grad]

    best = {"loss": np.inf, "params": _copy_params(params), "epoch": 0}
    smoothed = None
    history = []
    stopped = "max_epochs"
    log_file = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, train_config.max_epochs + 1):
            order = rng.permutation(len(train_systems))
            epoch_loss = 0.0
            n_batches = 0
            for b, nl in _prepare_batches(
                train_systems, order, train_config.batch_size, model_config.r_cut
            ):
                loss, _ = _batch_loss(
                    params, model_config, energy_name, b, nl, train_config
                )
                grad_list = ad.grad(loss, [params[n] for n in trainable])
                grads = dict(zip(trainable, grad_list))
                adamw_step(
                    params,
                    grads,
                    opt_state,
                    scheduler.lr,
                    weight_decay=train_config.weight_decay,
                )
                epoch_loss += float(loss.data)
                n_batches += 1

            val = _validate(params, model_config, energy_name, val_batches, train_config)
            if not np.isfinite(val["loss"]):
                stopped = "divergence"
                break
            if val["loss"] < best["loss"]:
                best = {
                    "loss": val["loss"],
                    "params": _copy_params(params),
                    "epoch": epoch,
                }
            smoothed = smooth_validation(
                smoothed, val["loss"], train_config.smoothing_factor
            )
            lr = scheduler.step(smoothed)
            record = {
                "epoch": epoch,
                "lr": lr,
                "train_loss": epoch_loss / n_batches,
                "val_loss": val["loss"],
                "val_smoothed": smoothed,
                "val_energy_mae": val["energy_mae"],
                "val_force_mae": val["force_mae"],
            }
            history.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
            if callback:
                callback(record)
            if stop_at_force_mae is not None and val["force_mae"] < stop_at_force_mae:
                stopped = "target_reached"
                break
            if stopper.step(smoothed):
                stopped = "early_stopping"
                break
    finally:
        if log_file:
            log_file.close()

    if checkpoint_path:
        md.save_checkpoint(checkpoint_path, model_config, best["params"])
    return {
        "params": best["params"],
        "config": model_config,
        "history": history,
        "best_val_loss": best["loss"],
        "best_epoch": best["epoch"],
        "stopped": stopped,
    }
