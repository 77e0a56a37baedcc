"""Command-line entry points tying the pipeline together.

Subcommands: train, eval, predict, md, spectra, selftest. Every command
takes --config (a JSON file validated against a schema that rejects
unknown keys), --seed (overrides the config seed), --out (output
directory) and --device-threads. Exit codes: 0 success, 1 runtime
failure, 2 configuration or argument problems.
"""

import argparse
import json
import os
import sys

import jsonschema
import numpy as np

from . import md as mdyn
from . import model as mdl
from . import selftest as st
from . import spectra as sp
from . import train as tr
from . import xyz
from .errors import ConfigurationError, MolpotError

_READOUT_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {
            "enum": ["scalar", "dipole", "polarizability", "spatial_extent", "rank1"]
        },
        "order": {"type": "integer", "minimum": 1},
        "rank": {"type": "integer", "minimum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "r_cut": {"type": "number", "exclusiveMinimum": 0},
        "n_features": {"type": "integer", "minimum": 2},
        "n_blocks": {"type": "integer", "minimum": 1},
        "n_rbf": {"type": "integer", "minimum": 1},
        "max_z": {"type": "integer", "minimum": 1},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "readouts": {
            "type": "object",
            "additionalProperties": _READOUT_SCHEMA,
            "minProperties": 1,
        },
        "disable_vector_propagation": {"type": "boolean"},
        "disable_scalar_product": {"type": "boolean"},
        "disable_vector_features": {"type": "boolean"},
    },
    "required": ["r_cut"],
    "additionalProperties": False,
}

_TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "batch_size": {"type": "integer", "minimum": 1},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "lr_decay_factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "decay_patience": {"type": "integer", "minimum": 1},
        "stopping_patience": {"type": "integer", "minimum": 1},
        "smoothing_factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "weight_decay": {"type": "number", "minimum": 0},
        "force_weight": {"type": "number", "minimum": 0, "maximum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "max_epochs": {"type": "integer", "minimum": 1},
        "loss_kind": {"enum": ["squared", "absolute"]},
    },
    "additionalProperties": False,
}

_MD_SCHEMA = {
    "type": "object",
    "properties": {
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "n_steps": {"type": "integer", "minimum": 1},
        "ensemble": {"enum": ["nve", "nvt"]},
        "temperature": {"type": "number", "minimum": 0},
        "friction": {"type": "number", "exclusiveMinimum": 0},
        "record_stride": {"type": "integer", "minimum": 1},
        "record": {
            "type": "array",
            "items": {"enum": ["energy", "dipole", "polarizability"]},
        },
        "seed": {"type": "integer", "minimum": 0},
        "initial_temperature": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

SCHEMAS = {
    "train": {
        "type": "object",
        "properties": {
            "model": _MODEL_SCHEMA,
            "train": _TRAIN_SCHEMA,
            "data": {
                "type": "object",
                "properties": {
                    "path": {"type": "string"},
                    "n_train": {"type": "integer", "minimum": 1},
                    "n_val": {"type": "integer", "minimum": 1},
                    "train_path": {"type": "string"},
                    "val_path": {"type": "string"},
                },
                "additionalProperties": False,
            },
            "zero_init_heads": {"type": "boolean"},
            "fit_offsets": {"type": "boolean"},
            "stop_at_force_mae": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["model", "data"],
        "additionalProperties": False,
    },
    "eval": {
        "type": "object",
        "properties": {
            "checkpoint": {"type": "string"},
            "data": {"type": "string"},
            "properties": {"type": "array", "items": {"type": "string"}},
        },
        "required": ["checkpoint", "data"],
        "additionalProperties": False,
    },
    "predict": {
        "type": "object",
        "properties": {
            "checkpoint": {"type": "string"},
            "data": {"type": "string"},
            "properties": {"type": "array", "items": {"type": "string"}},
            "forces": {"type": "boolean"},
        },
        "required": ["checkpoint", "data"],
        "additionalProperties": False,
    },
    "md": {
        "type": "object",
        "properties": {
            "checkpoint": {"type": "string"},
            "initial": {"type": "string"},
            "md": _MD_SCHEMA,
            "energy_scale": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["checkpoint", "initial"],
        "additionalProperties": False,
    },
    "spectra": {
        "type": "object",
        "properties": {
            "trajectory": {"type": "string"},
            "kind": {"enum": ["ir", "raman", "both"]},
            "depth": {"type": "integer", "minimum": 1},
            "window": {"type": "boolean"},
            "zero_padding": {"type": "integer", "minimum": 1},
            "normalization": {"enum": ["biased", "unbiased"]},
            "prefactor": {"type": "boolean"},
            "laser_wavelength": {"type": "number", "exclusiveMinimum": 0},
            "temperature": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["trajectory"],
        "additionalProperties": False,
    },
    "selftest": {
        "type": "object",
        "properties": {"seed": {"type": "integer", "minimum": 0}},
        "additionalProperties": False,
    },
}


def _load_config(args):
    if args.config is None:
        if args.command == "selftest":
            return {}
        raise ConfigurationError(f"{args.command} requires --config")
    with open(args.config, encoding="utf-8") as handle:
        config = json.load(handle)
    jsonschema.validate(config, SCHEMAS[args.command])
    return config


def _load_labeled(path):
    systems = xyz.read_extxyz_file(path)
    if not systems:
        raise ConfigurationError(f"no frames in {path}")
    return systems


def _train_datasets(data_config, seed):
    if "path" in data_config:
        for key in ("n_train", "n_val"):
            if key not in data_config:
                raise ConfigurationError(f"data.{key} is required with data.path")
        systems = _load_labeled(data_config["path"])
        train_idx, val_idx, _ = tr.split_dataset(
            systems, data_config["n_train"], data_config["n_val"], seed=seed
        )
        return [systems[i] for i in train_idx], [systems[i] for i in val_idx]
    if "train_path" in data_config and "val_path" in data_config:
        return _load_labeled(data_config["train_path"]), _load_labeled(
            data_config["val_path"]
        )
    raise ConfigurationError(
        "data needs either path with n_train/n_val or train_path and val_path"
    )


def _cmd_train(config, args):
    model_config = mdl.ModelConfig.from_dict(config["model"])
    train_config = tr.TrainConfig.from_dict(config.get("train", {}))
    if args.seed is not None:
        train_config.seed = args.seed
    train_set, val_set = _train_datasets(config["data"], train_config.seed)
    os.makedirs(args.out, exist_ok=True)
    checkpoint = os.path.join(args.out, "checkpoint.npz")
    log = os.path.join(args.out, "metrics.jsonl")
    result = tr.train_loop(
        model_config,
        train_config,
        train_set,
        val_set,
        zero_init_heads=config.get("zero_init_heads", False),
        fit_offsets=config.get("fit_offsets", True),
        log_path=log,
        checkpoint_path=checkpoint,
        stop_at_force_mae=config.get("stop_at_force_mae"),
    )
    print(
        json.dumps(
            {
                "checkpoint": checkpoint,
                "metrics": log,
                "best_epoch": result["best_epoch"],
                "best_val_loss": result["best_val_loss"],
                "epochs_run": len(result["history"]),
                "stopped": result["stopped"],
            }
        )
    )
    return 0


_PREDICTORS = {
    "scalar": mdl.predict_scalar,
    "dipole": mdl.predict_dipole,
    "polarizability": mdl.predict_polarizability,
    "spatial_extent": mdl.predict_spatial_extent,
    "rank1": mdl.rank1_tensor_readout,
}


def _select_readouts(config, requested):
    model_config = config["__model_config__"]
    if requested is None:
        return list(model_config.readouts)
    for name in requested:
        if name not in model_config.readouts:
            raise ConfigurationError(f"model has no readout named {name!r}")
    return list(requested)


def _cmd_eval(config, args):
    model_config, params, _ = mdl.load_checkpoint(config["checkpoint"])
    systems = _load_labeled(config["data"])
    names = config.get("properties")
    names = list(model_config.readouts) if names is None else names
    label_of = {
        "scalar": "energy",
        "dipole": "dipole",
        "polarizability": "polarizability",
    }
    errors = {}
    counts = {}

    def accumulate(key, diff):
        errors[key] = errors.get(key, 0.0) + float(np.abs(diff).sum())
        counts[key] = counts.get(key, 0) + np.size(diff)

    for name in names:
        spec = model_config.readouts.get(name)
        if spec is None:
            raise ConfigurationError(f"model has no readout named {name!r}")
        attr = label_of.get(spec.kind)
        if attr is None:
            continue
        predictor = _PREDICTORS[spec.kind]
        for system in systems:
            label = getattr(system, attr)
            if label is None:
                continue
            pred = predictor(system, params, model_config, name)
            accumulate(f"{name}_mae", np.asarray(pred) - np.asarray(label))
            if spec.kind == "scalar" and system.forces is not None:
                forces = mdl.predict_forces(system, params, model_config, name)
                accumulate(f"{name}_force_mae", forces - system.forces)
    if not errors:
        raise ConfigurationError("no labels in the data overlap the readouts")
    print(json.dumps({k: errors[k] / counts[k] for k in sorted(errors)}))
    return 0


def _cmd_predict(config, args):
    model_config, params, _ = mdl.load_checkpoint(config["checkpoint"])
    systems = _load_labeled(config["data"])
    config["__model_config__"] = model_config
    names = _select_readouts(config, config.get("properties"))
    want_forces = config.get("forces", True)
    predicted = []
    for system in systems:
        energy = None
        forces = None
        dipole = None
        polarizability = None
        for name in names:
            spec = model_config.readouts[name]
            value = _PREDICTORS[spec.kind](system, params, model_config, name)
            if spec.kind == "scalar":
                energy = value
                if want_forces:
                    forces = mdl.predict_forces(system, params, model_config, name)
            elif spec.kind == "dipole":
                dipole = value
            elif spec.kind == "polarizability":
                polarizability = value
        predicted.append(
            type(system)(
                atomic_numbers=system.atomic_numbers,
                positions=system.positions,
                energy=energy,
                forces=forces,
                dipole=dipole,
                polarizability=polarizability,
            )
        )
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "predictions.xyz")
    xyz.write_extxyz_file(out_path, predicted)
    print(json.dumps({"predictions": out_path, "frames": len(predicted)}))
    return 0


def _cmd_md(config, args):
    model_config, params, _ = mdl.load_checkpoint(config["checkpoint"])
    initial = _load_labeled(config["initial"])[0]
    md_config = mdyn.MDConfig(**{
        **config.get("md", {}),
        **({"record": tuple(config["md"]["record"])} if "record" in config.get("md", {}) else {}),
    })
    if args.seed is not None:
        md_config.seed = args.seed
    trajectory = mdyn.run_md(
        initial,
        params,
        model_config,
        md_config,
        energy_scale=config.get("energy_scale", 1.0),
    )
    os.makedirs(args.out, exist_ok=True)
    frames_path = os.path.join(args.out, "trajectory.xyz")
    table_path = os.path.join(args.out, "trajectory.csv")
    xyz.write_extxyz_file(
        frames_path,
        mdyn.to_systems(trajectory, initial.atomic_numbers),
        velocities=list(trajectory.velocities),
    )
    mdyn.write_trajectory_csv(table_path, trajectory)
    print(
        json.dumps(
            {
                "frames": frames_path,
                "table": table_path,
                "snapshots": len(trajectory),
                "final_time": trajectory.times[-1],
            }
        )
    )
    return 0


def _cmd_spectra(config, args):
    data = mdyn.read_trajectory_csv(config["trajectory"])
    times = data["time"]
    if len(times) < 3:
        raise ConfigurationError("trajectory too short for spectra")
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-10, atol=1e-12):
        raise ConfigurationError("trajectory sampling is not uniform")
    interval = float(steps[0])
    kind = config.get("kind", "both")
    common = {
        "depth": config.get("depth"),
        "window": config.get("window", True),
        "zero_padding": config.get("zero_padding", 4),
        "normalization": config.get("normalization", "biased"),
    }
    os.makedirs(args.out, exist_ok=True)
    written = {}
    if kind in ("ir", "both"):
        if "dipole" not in data:
            raise ConfigurationError("trajectory has no dipole columns")
        spectrum = sp.ir_spectrum(data["dipole"], interval, **common)
        path = os.path.join(args.out, "ir.csv")
        sp.write_spectrum(path, spectrum)
        written["ir"] = path
    if kind in ("raman", "both"):
        if "polarizability" not in data:
            raise ConfigurationError("trajectory has no polarizability columns")
        spectrum = sp.raman_spectrum(
            data["polarizability"],
            interval,
            laser_wavelength=config.get("laser_wavelength", 514.0),
            temperature=config.get("temperature", 300.0),
            prefactor=config.get("prefactor", False),
            **common,
        )
        for channel in ("isotropic", "anisotropic"):
            path = os.path.join(args.out, f"raman_{channel}.csv")
            sp.write_spectrum(path, spectrum, channel=channel)
            written[f"raman_{channel}"] = path
    print(json.dumps(written))
    return 0


def _cmd_selftest(config, args):
    ok, _ = st.run_selftest(report=print)
    return 0 if ok else 1


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "md": _cmd_md,
    "spectra": _cmd_spectra,
    "selftest": _cmd_selftest,
}


def _apply_thread_limit(n):
    if n is None:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        os.environ["OMP_NUM_THREADS"] = str(n)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="molpot", description="Equivariant potential pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        command = sub.add_parser(name)
        command.add_argument("--config", help="JSON run configuration")
        command.add_argument("--seed", type=int, help="override the config seed")
        command.add_argument("--out", default=".", help="output directory")
        command.add_argument(
            "--device-threads", type=int, help="BLAS/OpenMP thread cap"
        )
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    _apply_thread_limit(args.device_threads)
    try:
        config = _load_config(args)
        return _COMMANDS[args.command](config, args)
    except (
        ConfigurationError,
        jsonschema.ValidationError,
        json.JSONDecodeError,
        FileNotFoundError,
    ) as exc:
        message = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"configuration error: {message}", file=sys.stderr)
        return 2
    except MolpotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
