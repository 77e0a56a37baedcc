"""Equivariant message-passing network and property readouts.

Per-atom state is a pair (s, v): invariant scalar features (N, F) and
equivariant vector features (N, F, 3) that start at zero and transform
with the molecule under rotation. Message blocks mix neighbor features
through cutoff-damped radial filters; update blocks mix the two channels
atomwise. Readouts turn the final state into energies, forces (through
the engine's gradient), dipoles, polarizabilities, spatial extents and
rank-1 factorized Cartesian tensors.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    ConfigurationError,
    DataError,
    NumericalDivergenceError,
    UnsupportedElementError,
)
from .geometry import batch as make_batch
from .geometry import build_neighbor_list

READOUT_KINDS = ("scalar", "dipole", "polarizability", "spatial_extent", "rank1")

# Readouts whose assembly uses atom positions and therefore recenters.
POSITION_DEPENDENT = ("dipole", "polarizability", "spatial_extent")

# Below this separation the radial basis switches to its analytic limit.
SHORT_DISTANCE = 1e-6


@dataclass(frozen=True)
class ReadoutSpec:
    """One output head: what it computes and, for rank1, its shape.

    order is the tensor order M and rank the number of rank-1 terms R;
    both are ignored by the other kinds.
    """

    kind: str
    order: int = 1
    rank: int = 1


@dataclass
class ModelConfig:
    r_cut: float
    n_features: int = 128
    n_blocks: int = 3
    n_rbf: int = 20
    max_z: int = 100
    eps: float = 1e-8
    readouts: dict = field(
        default_factory=lambda: {"energy": ReadoutSpec("scalar")}
    )
    disable_vector_propagation: bool = False
    disable_scalar_product: bool = False
    disable_vector_features: bool = False

    def __post_init__(self):
        if self.n_features < 2:
            raise ConfigurationError("n_features must be at least 2")
        if self.n_blocks < 1:
            raise ConfigurationError("n_blocks must be at least 1")
        if self.n_rbf < 1:
            raise ConfigurationError("n_rbf must be at least 1")
        if self.r_cut <= 0.0:
            raise ConfigurationError("r_cut must be positive")
        if self.max_z < 1:
            raise ConfigurationError("max_z must be at least 1")
        if self.eps <= 0.0:
            raise ConfigurationError("eps must be positive")
        if not self.readouts:
            raise ConfigurationError("at least one readout is required")
        for name, spec in self.readouts.items():
            if spec.kind not in READOUT_KINDS:
                raise ConfigurationError(
                    f"readout {name!r} has unknown kind {spec.kind!r}"
                )
            if spec.kind == "rank1" and (spec.order < 1 or spec.rank < 1):
                raise ConfigurationError(
                    f"rank1 readout {name!r} needs order >= 1 and rank >= 1"
                )

    def to_dict(self):
        return {
            "r_cut": self.r_cut,
            "n_features": self.n_features,
            "n_blocks": self.n_blocks,
            "n_rbf": self.n_rbf,
            "max_z": self.max_z,
            "eps": self.eps,
            "readouts": {
                name: {"kind": s.kind, "order": s.order, "rank": s.rank}
                for name, s in self.readouts.items()
            },
            "disable_vector_propagation": self.disable_vector_propagation,
            "disable_scalar_product": self.disable_scalar_product,
            "disable_vector_features": self.disable_vector_features,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["readouts"] = {
            name: ReadoutSpec(**spec) for name, spec in d["readouts"].items()
        }
        return cls(**d)


@dataclass
class NodeState:
    s: Tensor
    v: Tensor


@dataclass
class EdgeData:
    """Per-edge quantities shared by every message block."""

    idx_i: np.ndarray
    idx_j: np.ndarray
    rbf: Tensor
    cutoff: Tensor
    unit: Tensor
    distances: Tensor


# --- parameter initialization ---


def _xavier(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


def _init_mlp(params, rng, prefix, n_in, n_hidden, n_out):
    params[f"{prefix}/w0"] = _xavier(rng, n_in, n_hidden)
    params[f"{prefix}/b0"] = np.zeros(n_hidden)
    params[f"{prefix}/w1"] = _xavier(rng, n_hidden, n_out)
    params[f"{prefix}/b1"] = np.zeros(n_out)


def _init_geb(params, rng, prefix, n_in, n_out):
    params[f"{prefix}/W1"] = _xavier(rng, n_in, n_out)
    params[f"{prefix}/W2"] = _xavier(rng, n_in, n_out)
    _init_mlp(params, rng, f"{prefix}/net", n_in + n_out, n_in, 2 * n_out)


def init_params(config, seed=0, zero_init_heads=False):
    """Fresh parameter dict keyed by block/field paths.

    Linear maps get uniform fan-based init, embeddings standard normal,
    biases zero. With zero_init_heads the last layer of every readout
    head starts at zero, so all predicted properties start exactly at
    zero (plus element offsets for scalar readouts).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    f = config.n_features
    params = {}
    params["embedding"] = rng.standard_normal((config.max_z + 1, f))
    for b in range(config.n_blocks):
        _init_mlp(params, rng, f"block{b}/phi", f, f, 3 * f)
        params[f"block{b}/filter/w"] = _xavier(rng, config.n_rbf, 3 * f)
        params[f"block{b}/filter/b"] = np.zeros(3 * f)
        params[f"block{b}/update/U"] = _xavier(rng, f, f)
        params[f"block{b}/update/V"] = _xavier(rng, f, f)
        _init_mlp(params, rng, f"block{b}/update/a", 2 * f, f, 3 * f)
    for name, spec in config.readouts.items():
        prefix = f"readout/{name}"
        if spec.kind in ("scalar", "spatial_extent"):
            _init_mlp(params, rng, f"{prefix}/head", f, max(f // 2, 1), 1)
            if zero_init_heads:
                params[f"{prefix}/head/w1"][:] = 0.0
                params[f"{prefix}/head/b1"][:] = 0.0
        elif spec.kind in ("dipole", "polarizability"):
            _init_geb(params, rng, f"{prefix}/geb0", f, f)
            _init_geb(params, rng, f"{prefix}/geb1", f, 1)
            if zero_init_heads:
                params[f"{prefix}/geb1/net/w1"][:] = 0.0
                params[f"{prefix}/geb1/net/b1"][:] = 0.0
        elif spec.kind == "rank1":
            channels = spec.rank * spec.order
            _init_geb(params, rng, f"{prefix}/geb0", f, f)
            _init_geb(params, rng, f"{prefix}/geb1", f, channels)
            params[f"{prefix}/lambda/w"] = _xavier(rng, channels, spec.rank)
            params[f"{prefix}/lambda/b"] = np.zeros(spec.rank)
            if zero_init_heads:
                params[f"{prefix}/lambda/w"][:] = 0.0
                params[f"{prefix}/lambda/b"][:] = 0.0

    tensors = {
        name: Tensor(value, requires_grad=True) for name, value in params.items()
    }
    for name, spec in config.readouts.items():
        if spec.kind == "scalar":
            tensors[f"readout/{name}/element_offsets"] = Tensor(
                np.zeros(config.max_z + 1)
            )
    return tensors


def cast_params(params, dtype):
    """Copy of the parameter dict in another float precision."""
    return {
        name: Tensor(p.data.astype(dtype), requires_grad=p.requires_grad)
        for name, p in params.items()
    }


# --- building blocks ---


def _mlp2(x, params, prefix):
    h = ad.silu(x @ params[f"{prefix}/w0"] + params[f"{prefix}/b0"])
    return h @ params[f"{prefix}/w1"] + params[f"{prefix}/b1"]


def feature_linear(v, w):
    """Linear map over the feature axis of (N, F, 3) vector features."""
    n, f = v.shape[0], v.shape[1]
    g = w.shape[1]
    flat = ad.reshape(ad.transpose(v, (0, 2, 1)), (n * 3, f))
    return ad.transpose(ad.reshape(flat @ w, (n, 3, g)), (0, 2, 1))


def radial_basis(d, r_cut, n_rbf):
    """Sinc-like radial features sin(n pi d / r_cut) / d, n = 1..n_rbf.

    Input distances of any shape are flattened to a column; the result
    has one row per distance. Below SHORT_DISTANCE the analytic limit
    n pi / r_cut replaces the ratio.
    """
    d = d if isinstance(d, Tensor) else Tensor(d)
    if d.ndim != 2 or d.shape[1] != 1:
        d = ad.reshape(d, (d.size, 1))
    freq = Tensor(np.arange(1, n_rbf + 1)[None, :] * (np.pi / r_cut))
    small = d.data < SHORT_DISTANCE
    safe = ad.where(small, np.ones_like(d.data), d)
    values = ad.sin(d * freq) / safe
    return ad.where(small, freq, values)


def cosine_cutoff(d, r_cut):
    """Smooth filter envelope: (cos(pi d / r_cut) + 1) / 2, zero beyond."""
    d = d if isinstance(d, Tensor) else Tensor(d)
    value = (ad.cos(d * (np.pi / r_cut)) + 1.0) * 0.5
    return ad.where(d.data <= r_cut, value, ad.zeros_like(value))


def compute_edges(positions, nl, config):
    """Taped per-edge geometry: unit vectors, radial basis, cutoff."""
    pos = positions if isinstance(positions, Tensor) else Tensor(positions)
    vec = ad.gather(pos, nl.idx_j) - ad.gather(pos, nl.idx_i)
    d = ad.sqrt((vec * vec).sum(axis=1, keepdims=True))
    unit = vec / d
    return EdgeData(
        idx_i=np.asarray(nl.idx_i, dtype=np.intp),
        idx_j=np.asarray(nl.idx_j, dtype=np.intp),
        rbf=radial_basis(d, config.r_cut, config.n_rbf),
        cutoff=cosine_cutoff(d, config.r_cut),
        unit=unit,
        distances=d,
    )


def embed(atomic_numbers, params, config):
    """Initial state: embedding rows for s, zeros for v."""
    z = np.asarray(atomic_numbers, dtype=np.intp)
    if z.size and (z.min() < 1 or z.max() > config.max_z):
        raise UnsupportedElementError(
            f"atomic numbers must be in [1, {config.max_z}]"
        )
    s = ad.gather(params["embedding"], z)
    v = Tensor(np.zeros((z.size, config.n_features, 3), dtype=s.dtype))
    return NodeState(s, v)


def message_block(state, edges, params, config, block):
    """Neighborhood aggregation; returns residuals (ds, dv).

    Scalar residual: sum over neighbors of phi_s(s_j) * W_s(d_ij).
    Vector residual: neighbor vectors scaled by phi_vv * W_vv plus unit
    displacement vectors scaled by phi_vs * W_vs. The filters are
    cutoff-damped linear maps of the radial basis; phi is one shared
    two-layer network whose 3F outputs are split three ways. dv is None
    when vector features are disabled.
    """
    f = config.n_features
    n = state.s.shape[0]
    n_edges = edges.idx_i.size
    prefix = f"block{block}"
    phi = _mlp2(state.s, params, f"{prefix}/phi")
    filters = (
        edges.rbf @ params[f"{prefix}/filter/w"] + params[f"{prefix}/filter/b"]
    ) * edges.cutoff
    prod = ad.gather(phi, edges.idx_j) * filters
    ds = ad.segment_sum(ad.narrow(prod, 1, 0, f), edges.idx_i, n)
    if config.disable_vector_features:
        return ds, None
    gate_vs = ad.reshape(ad.narrow(prod, 1, 2 * f, f), (n_edges, f, 1))
    dv_edges = gate_vs * ad.reshape(edges.unit, (n_edges, 1, 3))
    if not config.disable_vector_propagation:
        gate_vv = ad.reshape(ad.narrow(prod, 1, f, f), (n_edges, f, 1))
        dv_edges = ad.gather(state.v, edges.idx_j) * gate_vv + dv_edges
    return ds, ad.segment_sum(dv_edges, edges.idx_i, n)


def update_block(state, params, config, block):
    """Atomwise channel mixing; returns residuals (ds, dv).

    U and V are bias-free feature maps of the vector channel (a bias
    would break equivariance at v=0). A shared two-layer network on
    [s, ||Vv||] emits three F-wide gates: one added to s directly, one
    scaling the invariant <Uv, Vv> scalar product, one scaling Uv as the
    vector residual.
    """
    f = config.n_features
    n = state.s.shape[0]
    prefix = f"block{block}/update"
    uv = feature_linear(state.v, params[f"{prefix}/U"])
    vv = feature_linear(state.v, params[f"{prefix}/V"])
    vnorm = ad.safe_norm(vv, axis=-1, eps=config.eps)
    a = _mlp2(ad.concatenate([state.s, vnorm], axis=1), params, f"{prefix}/a")
    a_ss = ad.narrow(a, 1, 0, f)
    a_sv = ad.narrow(a, 1, f, f)
    a_vv = ad.narrow(a, 1, 2 * f, f)
    ds = a_ss
    if not config.disable_scalar_product:
        ds = ds + a_sv * (uv * vv).sum(axis=2)
    dv = ad.reshape(a_vv, (n, f, 1)) * uv
    return ds, dv


def _check_finite(state, stage):
    if not np.all(np.isfinite(state.s.data)) or not np.all(
        np.isfinite(state.v.data)
    ):
        raise NumericalDivergenceError(f"non-finite features after {stage}")


def forward(batch_, nl, params, config, positions=None):
    """n_blocks rounds of residual message + update; final NodeState."""
    pos = positions if positions is not None else Tensor(batch_.positions)
    edges = compute_edges(pos, nl, config)
    state = embed(batch_.atomic_numbers, params, config)
    for b in range(config.n_blocks):
        ds, dv = message_block(state, edges, params, config, b)
        state = NodeState(state.s + ds, state.v if dv is None else state.v + dv)
        _check_finite(state, f"message block {b}")
        ds, dv = update_block(state, params, config, b)
        new_v = state.v if config.disable_vector_features else state.v + dv
        state = NodeState(state.s + ds, new_v)
        _check_finite(state, f"update block {b}")
    return state


def gated_equivariant_block(s, v, params, prefix, eps=1e-8):
    """Invariant/equivariant mixing for readout stacks.

    W1 and W2 map the vector channel; a two-layer network on
    [s, ||W2 v||] emits the new scalars and a gate that scales W1 v.
    """
    w1 = params[f"{prefix}/W1"]
    n_out = w1.shape[1]
    n = s.shape[0]
    v1 = feature_linear(v, w1)
    v2 = feature_linear(v, params[f"{prefix}/W2"])
    stacked = ad.concatenate([s, ad.safe_norm(v2, axis=-1, eps=eps)], axis=1)
    out = _mlp2(stacked, params, f"{prefix}/net")
    s_new = ad.narrow(out, 1, 0, n_out)
    gate = ad.narrow(out, 1, n_out, n_out)
    return s_new, ad.reshape(gate, (n, n_out, 1)) * v1


# --- readout assembly (pure sums, hand checkable) ---


def assemble_dipole(mu_atom, q, positions, molecule_index, n_molecules):
    """Per-molecule sum of atomic dipoles plus charge-weighted positions."""
    n = positions.shape[0]
    mu_atom = ad.reshape(mu_atom, (n, 3))
    q = ad.reshape(q, (n, 1))
    return ad.segment_sum(mu_atom + q * positions, molecule_index, n_molecules)


def assemble_polarizability(alpha0, nu, positions, molecule_index, n_molecules):
    """Isotropic term plus symmetrized outer products; bitwise symmetric."""
    n = positions.shape[0]
    alpha0 = ad.reshape(alpha0, (n, 1, 1))
    eye = Tensor(np.eye(3)[None, :, :])
    outer = ad.reshape(nu, (n, 3, 1)) * ad.reshape(positions, (n, 1, 3))
    terms = alpha0 * eye + outer + ad.transpose(outer, (0, 2, 1))
    return ad.segment_sum(terms, molecule_index, n_molecules)


def assemble_spatial_extent(q, positions, molecule_index, n_molecules):
    """Per-molecule sum of q_i * |r_i|^2."""
    n = positions.shape[0]
    q = ad.reshape(q, (n, 1))
    r2 = (positions * positions).sum(axis=1, keepdims=True)
    out = ad.segment_sum(q * r2, molecule_index, n_molecules)
    return ad.reshape(out, (n_molecules,))


def assemble_rank1(lam, nu, molecule_index, n_molecules):
    """Sum of lam-weighted outer products of the per-rank vector slots.

    lam has shape (N, R); nu has shape (N, R, M, 3). The result is one
    order-M Cartesian tensor per molecule, shape (B, 3, ..., 3).
    """
    n, r, m = nu.shape[0], nu.shape[1], nu.shape[2]
    prod = ad.reshape(ad.narrow(nu, 2, 0, 1), (n, r, 3))
    for k in range(1, m):
        factor = ad.reshape(
            ad.narrow(nu, 2, k, 1), (n, r) + (1,) * k + (3,)
        )
        prod = ad.reshape(prod, (n, r) + (3,) * k + (1,)) * factor
    weighted = ad.reshape(lam, (n, r) + (1,) * m) * prod
    return ad.segment_sum(weighted.sum(axis=1), molecule_index, n_molecules)


# --- readout evaluation ---


def atomwise_energy(state, batch_, params, config, name):
    """Per-atom scalar contributions including element offsets, shape (N,)."""
    prefix = f"readout/{name}"
    eps_atom = _mlp2(state.s, params, f"{prefix}/head")
    offsets = params.get(f"{prefix}/element_offsets")
    if offsets is not None:
        z = np.asarray(batch_.atomic_numbers, dtype=np.intp)
        eps_atom = eps_atom + ad.reshape(ad.gather(offsets, z), (z.size, 1))
    return ad.reshape(eps_atom, (state.s.shape[0],))


def _centered_positions(batch_):
    masses = batch_.masses
    weighted = np.zeros((batch_.n_molecules, 3))
    total = np.zeros(batch_.n_molecules)
    np.add.at(weighted, batch_.molecule_index, masses[:, None] * batch_.positions)
    np.add.at(total, batch_.molecule_index, masses)
    com = weighted / total[:, None]
    return batch_.positions - com[batch_.molecule_index]


def evaluate(batch_, nl, params, config, positions=None, properties=None):
    """All configured readouts for a batch: name -> per-molecule Tensor.

    Position-dependent readouts (dipole, polarizability, spatial extent)
    use mass-recentered coordinates, recomputed per molecule; recentering
    is enforced here rather than trusted to the caller.
    """
    names = list(config.readouts) if properties is None else list(properties)
    for name in names:
        if name not in config.readouts:
            raise ConfigurationError(f"model has no readout named {name!r}")
    state = forward(batch_, nl, params, config, positions=positions)
    mol = batch_.molecule_index
    n_mol = batch_.n_molecules
    centered = None
    if any(config.readouts[n].kind in POSITION_DEPENDENT for n in names):
        centered = Tensor(_centered_positions(batch_))

    results = {}
    for name in names:
        spec = config.readouts[name]
        prefix = f"readout/{name}"
        if spec.kind == "scalar":
            eps_atom = atomwise_energy(state, batch_, params, config, name)
            per_mol = ad.segment_sum(
                ad.reshape(eps_atom, (batch_.n_atoms, 1)), mol, n_mol
            )
            results[name] = ad.reshape(per_mol, (n_mol,))
        elif spec.kind == "spatial_extent":
            q = _mlp2(state.s, params, f"{prefix}/head")
            results[name] = assemble_spatial_extent(q, centered, mol, n_mol)
        elif spec.kind == "dipole":
            s1, v1 = gated_equivariant_block(
                state.s, state.v, params, f"{prefix}/geb0", eps=config.eps
            )
            s2, v2 = gated_equivariant_block(
                s1, v1, params, f"{prefix}/geb1", eps=config.eps
            )
            results[name] = assemble_dipole(v2, s2, centered, mol, n_mol)
        elif spec.kind == "polarizability":
            s1, v1 = gated_equivariant_block(
                state.s, state.v, params, f"{prefix}/geb0", eps=config.eps
            )
            s2, v2 = gated_equivariant_block(
                s1, v1, params, f"{prefix}/geb1", eps=config.eps
            )
            nu = ad.reshape(v2, (batch_.n_atoms, 3))
            results[name] = assemble_polarizability(s2, nu, centered, mol, n_mol)
        elif spec.kind == "rank1":
            s1, v1 = gated_equivariant_block(
                state.s, state.v, params, f"{prefix}/geb0", eps=config.eps
            )
            s2, v2 = gated_equivariant_block(
                s1, v1, params, f"{prefix}/geb1", eps=config.eps
            )
            lam = s2 @ params[f"{prefix}/lambda/w"] + params[f"{prefix}/lambda/b"]
            nu = ad.reshape(
                v2, (batch_.n_atoms, spec.rank, spec.order, 3)
            )
            results[name] = assemble_rank1(lam, nu, mol, n_mol)
    return results


# --- single-system prediction wrappers ---


def _find_readout(config, kind, name):
    if name is not None:
        spec = config.readouts.get(name)
        if spec is None or spec.kind != kind:
            raise ConfigurationError(f"no {kind} readout named {name!r}")
        return name
    matches = [n for n, s in config.readouts.items() if s.kind == kind]
    if len(matches) != 1:
        raise ConfigurationError(
            f"expected exactly one {kind} readout, found {matches}"
        )
    return matches[0]


def _single(system, params, config, name, positions=None):
    b = make_batch([system])
    nl = build_neighbor_list(system, config.r_cut)
    return evaluate(
        b, nl, params, config, positions=positions, properties=[name]
    )[name]


def predict_scalar(system, params, config, name=None, precision=np.float64):
    """Summed atomwise scalar (the energy head) for one system."""
    name = _find_readout(config, "scalar", name)
    b = make_batch([system])
    nl = build_neighbor_list(system, config.r_cut)
    pos = Tensor(b.positions.astype(precision))
    out = evaluate(b, nl, params, config, positions=pos, properties=[name])
    return float(out[name].numpy()[0])


def predict_forces(system, params, config, name=None):
    """Negative position gradient of the scalar readout, shape (N, 3)."""
    name = _find_readout(config, "scalar", name)
    b = make_batch([system])
    nl = build_neighbor_list(system, config.r_cut)
    pos = Tensor(b.positions, requires_grad=True)
    out = evaluate(b, nl, params, config, positions=pos, properties=[name])
    grad_pos = ad.grad(out[name].sum(), pos)
    return -grad_pos.numpy()


def predict_dipole(system, params, config, name=None):
    name = _find_readout(config, "dipole", name)
    return _single(system, params, config, name).numpy()[0]


def predict_polarizability(system, params, config, name=None):
    name = _find_readout(config, "polarizability", name)
    return _single(system, params, config, name).numpy()[0]


def predict_spatial_extent(system, params, config, name=None):
    name = _find_readout(config, "spatial_extent", name)
    return float(_single(system, params, config, name).numpy()[0])


def rank1_tensor_readout(system, params, config, name=None):
    name = _find_readout(config, "rank1", name)
    return _single(system, params, config, name).numpy()[0]


# --- checkpointing ---

CHECKPOINT_VERSION = 1


def save_checkpoint(path, config, params, optimizer_state=None):
    """Single .npz container: version, config JSON, named parameters.

    Parameter values are stored as 64-bit little-endian floats under
    param/<name>; trainability flags live in a JSON meta block. Optional
    optimizer state (step, first and second moments) round-trips bitwise.
    """
    arrays = {
        "__format_version__": np.int64(CHECKPOINT_VERSION),
        "config": np.array(json.dumps(config.to_dict())),
        "meta": np.array(
            json.dumps(
                {"trainable": {k: bool(v.requires_grad) for k, v in params.items()}}
            )
        ),
    }
    for name, p in params.items():
        arrays[f"param/{name}"] = p.data.astype("<f8")
    if optimizer_state is not None:
        arrays["opt_meta"] = np.array(
            json.dumps({"step": int(optimizer_state["step"])})
        )
        for name, arr in optimizer_state["m"].items():
            arrays[f"opt/m/{name}"] = np.asarray(arr, dtype="<f8")
        for name, arr in optimizer_state["v"].items():
            arrays[f"opt/v/{name}"] = np.asarray(arr, dtype="<f8")
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Inverse of save_checkpoint: (config, params, optimizer_state|None)."""
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["__format_version__"])
        if version != CHECKPOINT_VERSION:
            raise DataError(
                f"unsupported checkpoint format version {version}, "
                f"expected {CHECKPOINT_VERSION}"
            )
        config = ModelConfig.from_dict(json.loads(str(archive["config"][()])))
        meta = json.loads(str(archive["meta"][()]))
        trainable = meta.get("trainable", {})
        params = {}
        opt = None
        for key in archive.files:
            if key.startswith("param/"):
                name = key[len("param/"):]
                params[name] = Tensor(
                    archive[key], requires_grad=trainable.get(name, True)
                )
        if "opt_meta" in archive.files:
            opt_meta = json.loads(str(archive["opt_meta"][()]))
            opt = {"step": opt_meta["step"], "m": {}, "v": {}}
            for key in archive.files:
                if key.startswith("opt/m/"):
                    opt["m"][key[len("opt/m/"):]] = np.array(archive[key])
                elif key.startswith("opt/v/"):
                    opt["v"][key[len("opt/v/"):]] = np.array(archive[key])
    return config, params, opt
