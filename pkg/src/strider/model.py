"""The motion controller network.

Per-scale transformer encoders over K past-pose rows, a decoder whose single
query token is the projected control trajectory, and a feed-forward motion
prediction head. All entry points exist in two flavors: the public
single-sample ops and row-batched internals (samples stacked along the row
axis) shared by training and inference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import numeric as nc
from .errors import ConfigError, ContractError
from .numeric import Tensor2
from .skeleton import resolve_scale, scale_dim
from .trajectory import trajectory_dim


@dataclass(frozen=True)
class ModelConfig:
    width: int = 186
    heads: int = 6
    layers: int = 3
    ff_width: int = 1024
    dropout: float = 0.1
    mpn_width: int = 512
    mpn_dropout: float = 0.3
    scales: tuple = ("fine", "coarse")
    decoder_variant: str = "control"  # "control" | "plain"
    past_offsets: tuple = (1, 10, 20, 30, 40)
    traj_points: int = 6  # S: trajectory covers 2S sampled points
    joint_count: int = 31

    def validate(self) -> "ModelConfig":
        if self.width % self.heads:
            raise ConfigError(f"width {self.width} not divisible by {self.heads} heads")
        if not self.scales:
            raise ConfigError("at least one scale is required")
        if len(self.past_offsets) < 1:
            raise ConfigError("need at least one past-frame offset")
        if self.decoder_variant not in ("control", "plain"):
            raise ConfigError(f"unknown decoder variant {self.decoder_variant!r}")
        for name in self.scales:
            resolve_scale(name)
        return self

    @property
    def k(self) -> int:
        return len(self.past_offsets)

    @property
    def traj_dim(self) -> int:
        return trajectory_dim(self.traj_points)

    @property
    def memory_tokens(self) -> int:
        return self.k * len(self.scales)

    @property
    def out_dim(self) -> int:
        # root delta + positions + velocities + quaternions + future
        # trajectory (pos+dir) + contact labels
        return 3 + 10 * self.joint_count + 4 * self.traj_points + 4

    def scale_maps(self) -> list:
        return [resolve_scale(name) for name in self.scales]

    def scale_dims(self) -> list[int]:
        return [scale_dim(m, self.joint_count) for m in self.scale_maps()]

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "heads": self.heads,
            "layers": self.layers,
            "ff_width": self.ff_width,
            "dropout": self.dropout,
            "mpn_width": self.mpn_width,
            "mpn_dropout": self.mpn_dropout,
            "scales": list(self.scales),
            "decoder_variant": self.decoder_variant,
            "past_offsets": list(self.past_offsets),
            "traj_points": self.traj_points,
            "joint_count": self.joint_count,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ModelConfig":
        doc = dict(doc)
        doc["scales"] = tuple(doc["scales"])
        doc["past_offsets"] = tuple(doc["past_offsets"])
        return ModelConfig(**doc).validate()


def tiny_config(**overrides) -> ModelConfig:
    """Desk-scale preset: same structure, minutes instead of GPU-hours."""
    cfg = ModelConfig(width=24, heads=2, layers=1, ff_width=64, mpn_width=128)
    return replace(cfg, **overrides).validate()


def default_config(**overrides) -> ModelConfig:
    return replace(ModelConfig(), **overrides).validate()


# ---------------------------------------------------------------------------
# parameters


@dataclass
class AttnParams:
    wq: Tensor2
    bq: Tensor2
    wk: Tensor2
    bk: Tensor2
    wv: Tensor2
    bv: Tensor2
    wo: Tensor2
    bo: Tensor2


@dataclass
class BlockParams:
    attn: AttnParams
    w1: Tensor2
    b1: Tensor2
    w2: Tensor2
    b2: Tensor2
    ln1_g: Tensor2
    ln1_b: Tensor2
    ln2_g: Tensor2
    ln2_b: Tensor2


@dataclass
class ScaleParams:
    w_in: Tensor2
    b_in: Tensor2
    pos: Tensor2  # (K, width) learned slot embeddings
    blocks: list


@dataclass
class DecoderParams:
    query_w: Tensor2 | None  # traj_dim -> width; absent in the plain variant
    query_b: Tensor2 | None
    blocks: list


@dataclass
class MpnParams:
    w1: Tensor2
    b1: Tensor2
    w2: Tensor2
    b2: Tensor2
    w3: Tensor2
    b3: Tensor2


@dataclass
class ModelParams:
    config: ModelConfig
    scales: list
    decoder: DecoderParams
    mpn: MpnParams
    norm: object = None  # NormStats, attached by training


def param_shapes(cfg: ModelConfig):
    """Canonical (name, shape, kind) walk; checkpoint order and init order.

    kind is "weight" for projection/linear matrices (the l1-regularized
    set), "other" for biases, norm affines and positional embeddings.
    """
    g = cfg.width

    def block(prefix: str):
        for nm in ("wq", "wk", "wv", "wo"):
            yield f"{prefix}.attn.{nm}", (g, g), "weight"
            yield f"{prefix}.attn.b{nm[1]}", (1, g), "other"
        yield f"{prefix}.ff.w1", (g, cfg.ff_width), "weight"
        yield f"{prefix}.ff.b1", (1, cfg.ff_width), "other"
        yield f"{prefix}.ff.w2", (cfg.ff_width, g), "weight"
        yield f"{prefix}.ff.b2", (1, g), "other"
        yield f"{prefix}.ln1.g", (1, g), "other"
        yield f"{prefix}.ln1.b", (1, g), "other"
        yield f"{prefix}.ln2.g", (1, g), "other"
        yield f"{prefix}.ln2.b", (1, g), "other"

    for si, dim in enumerate(cfg.scale_dims()):
        yield f"enc{si}.in.w", (dim, g), "weight"
        yield f"enc{si}.in.b", (1, g), "other"
        yield f"enc{si}.pos", (cfg.k, g), "other"
        for li in range(cfg.layers):
            yield from block(f"enc{si}.l{li}")
    if cfg.decoder_variant == "control":
        yield "dec.query.w", (cfg.traj_dim, g), "weight"
        yield "dec.query.b", (1, g), "other"
    for li in range(cfg.layers):
        yield from block(f"dec.l{li}")
    dims = (cfg.width + cfg.traj_dim, cfg.mpn_width, cfg.mpn_width, cfg.out_dim)
    for i in range(3):
        yield f"mpn.w{i + 1}", (dims[i], dims[i + 1]), "weight"
        yield f"mpn.b{i + 1}", (1, dims[i + 1]), "other"


def param_count(cfg: ModelConfig) -> int:
    return sum(r * c for _, (r, c), _ in param_shapes(cfg))


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Glorot-scaled uniform weights, zero biases and slot embeddings, unit
    norm gains; fully determined by the seed."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor2] = {}
    for name, (r, c), kind in param_shapes(cfg):
        if kind == "weight":
            limit = math.sqrt(6.0 / (r + c))
            data = rng.uniform(-limit, limit, size=(r, c))
        elif name.endswith(".g"):
            data = np.ones((r, c))
        else:
            data = np.zeros((r, c))
        tensors[name] = nc.param(data, name)
    return _assemble(cfg, tensors)


def _assemble(cfg: ModelConfig, t: dict) -> ModelParams:
    def block(prefix: str) -> BlockParams:
        return BlockParams(
            attn=AttnParams(
                t[f"{prefix}.attn.wq"], t[f"{prefix}.attn.bq"],
                t[f"{prefix}.attn.wk"], t[f"{prefix}.attn.bk"],
                t[f"{prefix}.attn.wv"], t[f"{prefix}.attn.bv"],
                t[f"{prefix}.attn.wo"], t[f"{prefix}.attn.bo"],
            ),
            w1=t[f"{prefix}.ff.w1"], b1=t[f"{prefix}.ff.b1"],
            w2=t[f"{prefix}.ff.w2"], b2=t[f"{prefix}.ff.b2"],
            ln1_g=t[f"{prefix}.ln1.g"], ln1_b=t[f"{prefix}.ln1.b"],
            ln2_g=t[f"{prefix}.ln2.g"], ln2_b=t[f"{prefix}.ln2.b"],
        )

    scales = [
        ScaleParams(
            w_in=t[f"enc{si}.in.w"], b_in=t[f"enc{si}.in.b"], pos=t[f"enc{si}.pos"],
            blocks=[block(f"enc{si}.l{li}") for li in range(cfg.layers)],
        )
        for si in range(len(cfg.scales))
    ]
    decoder = DecoderParams(
        query_w=t.get("dec.query.w"),
        query_b=t.get("dec.query.b"),
        blocks=[block(f"dec.l{li}") for li in range(cfg.layers)],
    )
    mpn = MpnParams(
        t["mpn.w1"], t["mpn.b1"], t["mpn.w2"], t["mpn.b2"], t["mpn.w3"], t["mpn.b3"]
    )
    return ModelParams(config=cfg, scales=scales, decoder=decoder, mpn=mpn)


def named_params(params: ModelParams):
    """(name, tensor) pairs in the canonical checkpoint order."""
    cfg = params.config
    lookup = _tensor_lookup(params)
    for name, shape, _ in param_shapes(cfg):
        tensor = lookup[name]
        if tensor.shape != shape:
            raise ContractError(f"param {name} has shape {tensor.shape}, expected {shape}")
        yield name, tensor


def _tensor_lookup(params: ModelParams) -> dict:
    cfg = params.config
    t: dict[str, Tensor2] = {}

    def put_block(prefix: str, b: BlockParams):
        a = b.attn
        t.update({
            f"{prefix}.attn.wq": a.wq, f"{prefix}.attn.bq": a.bq,
            f"{prefix}.attn.wk": a.wk, f"{prefix}.attn.bk": a.bk,
            f"{prefix}.attn.wv": a.wv, f"{prefix}.attn.bv": a.bv,
            f"{prefix}.attn.wo": a.wo, f"{prefix}.attn.bo": a.bo,
            f"{prefix}.ff.w1": b.w1, f"{prefix}.ff.b1": b.b1,
            f"{prefix}.ff.w2": b.w2, f"{prefix}.ff.b2": b.b2,
            f"{prefix}.ln1.g": b.ln1_g, f"{prefix}.ln1.b": b.ln1_b,
            f"{prefix}.ln2.g": b.ln2_g, f"{prefix}.ln2.b": b.ln2_b,
        })

    for si, sp in enumerate(params.scales):
        t[f"enc{si}.in.w"] = sp.w_in
        t[f"enc{si}.in.b"] = sp.b_in
        t[f"enc{si}.pos"] = sp.pos
        for li, b in enumerate(sp.blocks):
            put_block(f"enc{si}.l{li}", b)
    if cfg.decoder_variant == "control":
        t["dec.query.w"] = params.decoder.query_w
        t["dec.query.b"] = params.decoder.query_b
    for li, b in enumerate(params.decoder.blocks):
        put_block(f"dec.l{li}", b)
    m = params.mpn
    t.update({
        "mpn.w1": m.w1, "mpn.b1": m.b1, "mpn.w2": m.w2,
        "mpn.b2": m.b2, "mpn.w3": m.w3, "mpn.b3": m.b3,
    })
    return t


def param_list(params: ModelParams) -> list[Tensor2]:
    return [t for _, t in named_params(params)]


def weight_tensors(params: ModelParams) -> list[Tensor2]:
    """Projection/linear weight matrices only (the regularized set)."""
    lookup = _tensor_lookup(params)
    return [lookup[name] for name, _, kind in param_shapes(params.config) if kind == "weight"]


# ---------------------------------------------------------------------------
# forward pieces


def _maybe_dropout(h: Tensor2, rate: float, mode: str, rng) -> Tensor2:
    if mode == "train" and rate > 0.0:
        if rng is None:
            raise ContractError("train mode needs an rng for dropout")
        return nc.dropout(h, rate, rng)
    return h


def _block_forward(
    x_q: Tensor2,
    x_kv: Tensor2,
    block: BlockParams,
    *,
    batch: int,
    cfg: ModelConfig,
    mode: str,
    rng,
    sink: list | None,
) -> Tensor2:
    a = block.attn
    q = nc.add_bias(nc.matmul(x_q, a.wq), a.bq)
    k = nc.add_bias(nc.matmul(x_kv, a.wk), a.bk)
    v = nc.add_bias(nc.matmul(x_kv, a.wv), a.bv)
    ctx = nc.multi_head_attention(q, k, v, batch=batch, heads=cfg.heads, sink=sink)
    ctx = nc.add_bias(nc.matmul(ctx, a.wo), a.bo)
    ctx = _maybe_dropout(ctx, cfg.dropout, mode, rng)
    h = nc.layer_norm(nc.add(x_q, ctx), block.ln1_g, block.ln1_b)
    ff = nc.relu(nc.add_bias(nc.matmul(h, block.w1), block.b1))
    ff = nc.add_bias(nc.matmul(ff, block.w2), block.b2)
    ff = _maybe_dropout(ff, cfg.dropout, mode, rng)
    return nc.layer_norm(nc.add(h, ff), block.ln2_g, block.ln2_b)


def encode_scale_batch(
    x: Tensor2, sp: ScaleParams, cfg: ModelConfig, *, batch: int,
    mode: str = "infer", rng=None, sink: list | None = None,
) -> Tensor2:
    h = nc.add_tiled(nc.add_bias(nc.matmul(x, sp.w_in), sp.b_in), sp.pos, batch)
    for block in sp.blocks:
        h = _block_forward(
            h, h, block, batch=batch, cfg=cfg, mode=mode, rng=rng, sink=sink
        )
    return h


def decode_batch(
    memory: Tensor2, traj: Tensor2, params: ModelParams, *, batch: int,
    mode: str = "infer", rng=None, sink: list | None = None,
) -> Tensor2:
    cfg = params.config
    if memory.cols != cfg.width:
        raise ContractError(f"memory width {memory.cols} != model width {cfg.width}")
    dp = params.decoder
    if cfg.decoder_variant == "control":
        tok = nc.add_bias(nc.matmul(traj, dp.query_w), dp.query_b)
    else:
        tok = nc.mean_token_pool(memory, batch)
    for block in dp.blocks:
        tok = _block_forward(
            tok, memory, block, batch=batch, cfg=cfg, mode=mode, rng=rng, sink=sink
        )
    return tok


def mpn_batch(
    z: Tensor2, traj: Tensor2, params: ModelParams, *,
    mode: str = "infer", rng=None,
) -> Tensor2:
    cfg = params.config
    mp = params.mpn
    h = nc.concat_cols(z, traj)
    if h.cols != cfg.width + cfg.traj_dim:
        raise ContractError(f"prediction head input width {h.cols} unexpected")
    h = nc.elu(nc.add_bias(nc.matmul(h, mp.w1), mp.b1))
    h = _maybe_dropout(h, cfg.mpn_dropout, mode, rng)
    h = nc.elu(nc.add_bias(nc.matmul(h, mp.w2), mp.b2))
    h = _maybe_dropout(h, cfg.mpn_dropout, mode, rng)
    return nc.add_bias(nc.matmul(h, mp.w3), mp.b3)


def forward_batch(
    scale_inputs: list, traj: Tensor2, params: ModelParams, *,
    mode: str = "infer", rng=None, sink: list | None = None,
) -> Tensor2:
    """Full network over a row-stacked batch.

    ``scale_inputs[i]`` is (batch*K) x scale_dim_i; ``traj`` is
    batch x traj_dim of normalized conditioning vectors.
    """
    cfg = params.config
    batch = traj.rows
    if len(scale_inputs) != len(cfg.scales):
        raise ContractError(
            f"got {len(scale_inputs)} scale inputs for {len(cfg.scales)} scales"
        )
    encoded = []
    for x, sp, dim in zip(scale_inputs, params.scales, cfg.scale_dims()):
        x = x if isinstance(x, Tensor2) else nc.constant(x)
        if x.rows != batch * cfg.k or x.cols != dim:
            raise ContractError(
                f"scale input is {x.shape}, expected {(batch * cfg.k, dim)}"
            )
        encoded.append(
            encode_scale_batch(x, sp, cfg, batch=batch, mode=mode, rng=rng, sink=sink)
        )
    memory = nc.stack_tokens(encoded, batch) if len(encoded) > 1 else encoded[0]
    z = decode_batch(memory, traj, params, batch=batch, mode=mode, rng=rng, sink=sink)
    return mpn_batch(z, traj, params, mode=mode, rng=rng)


# ---------------------------------------------------------------------------
# public single-sample ops


def encode_scale(seq, sp: ScaleParams, cfg: ModelConfig, mode: str = "infer", rng=None) -> Tensor2:
    seq = seq if isinstance(seq, Tensor2) else nc.constant(seq)
    if seq.rows != cfg.k:
        raise ContractError(f"expected {cfg.k} past-frame rows, got {seq.rows}")
    return encode_scale_batch(seq, sp, cfg, batch=1, mode=mode, rng=rng)


def concat_scales(encoded: list) -> Tensor2:
    tensors = [e if isinstance(e, Tensor2) else nc.constant(e) for e in encoded]
    if len(tensors) == 1:
        return tensors[0]
    return nc.stack_tokens(tensors, 1)


def memory_token_labels(cfg: ModelConfig) -> list:
    """(scale name, past offset) identity of each memory token row."""
    return [(name, k) for name in cfg.scales for k in cfg.past_offsets]


def decode(memory, traj_vec, params: ModelParams, mode: str = "infer", rng=None) -> Tensor2:
    memory = memory if isinstance(memory, Tensor2) else nc.constant(memory)
    traj = traj_vec if isinstance(traj_vec, Tensor2) else nc.constant(np.atleast_2d(traj_vec))
    return decode_batch(memory, traj, params, batch=1, mode=mode, rng=rng)


def mpn_forward(z, traj_vec, params: ModelParams, mode: str = "infer", rng=None) -> Tensor2:
    z = z if isinstance(z, Tensor2) else nc.constant(np.atleast_2d(z))
    traj = traj_vec if isinstance(traj_vec, Tensor2) else nc.constant(np.atleast_2d(traj_vec))
    return mpn_batch(z, traj, params, mode=mode, rng=rng)


def forward(scale_matrices, traj_vec, params: ModelParams, mode: str = "infer", rng=None) -> Tensor2:
    """Single normalized sample -> normalized prediction row (1 x out_dim)."""
    traj = traj_vec if isinstance(traj_vec, Tensor2) else nc.constant(np.atleast_2d(traj_vec))
    return forward_batch(list(scale_matrices), traj, params, mode=mode, rng=rng)


def export_attention(memory, traj_vec, params: ModelParams):
    """Decoder attention weights: per layer an (heads, tokens) row-stochastic
    array, exactly the softmax weights the decode pass used."""
    memory_t = memory if isinstance(memory, Tensor2) else nc.constant(memory)
    traj = traj_vec if isinstance(traj_vec, Tensor2) else nc.constant(np.atleast_2d(traj_vec))
    sink: list = []
    decode_batch(memory_t, traj, params, batch=1, sink=sink)
    return [p.reshape(params.config.heads, -1) for p in sink]


# ---------------------------------------------------------------------------
# prediction layout


@dataclass(frozen=True)
class OutputLayout:
    root_delta: slice
    positions: slice
    velocities: slice
    rotations: slice
    future_pos: slice
    future_dir: slice
    contacts: slice
    total: int

    @staticmethod
    def for_config(cfg: ModelConfig) -> "OutputLayout":
        j, s = cfg.joint_count, cfg.traj_points
        marks = np.cumsum([3, 3 * j, 3 * j, 4 * j, 2 * s, 2 * s, 4])
        sl = [slice(int(a), int(b)) for a, b in zip(np.r_[0, marks[:-1]], marks)]
        return OutputLayout(*sl, total=int(marks[-1]))


def pack_target(
    layout: OutputLayout, root_delta, positions, velocities, rotations,
    future_pos, future_dir, contacts,
) -> np.ndarray:
    y = np.empty(layout.total)
    y[layout.root_delta] = root_delta
    y[layout.positions] = np.asarray(positions).reshape(-1)
    y[layout.velocities] = np.asarray(velocities).reshape(-1)
    y[layout.rotations] = np.asarray(rotations).reshape(-1)
    y[layout.future_pos] = np.asarray(future_pos).reshape(-1)
    y[layout.future_dir] = np.asarray(future_dir).reshape(-1)
    y[layout.contacts] = np.asarray(contacts, dtype=np.float64)
    return y


@dataclass
class PredictedState:
    """Decoded network output in physical units."""

    root_delta: np.ndarray  # (3,) forward dx, dz, dfacing
    positions: np.ndarray  # (J, 3)
    velocities: np.ndarray  # (J, 3)
    rotations: np.ndarray  # (J, 4) renormalized unit quaternions
    future_pos: np.ndarray  # (S, 2)
    future_dir: np.ndarray  # (S, 2) renormalized
    contact_probs: np.ndarray  # (4,) in [0, 1]
    contacts: np.ndarray  # (4,) bool

    @staticmethod
    def from_vector(y: np.ndarray, cfg: ModelConfig, contact_threshold: float = 0.5) -> "PredictedState":
        lay = OutputLayout.for_config(cfg)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if y.shape[0] != lay.total:
            raise ContractError(f"prediction length {y.shape[0]} != {lay.total}")
        quats = y[lay.rotations].reshape(-1, 4).copy()
        norms = np.linalg.norm(quats, axis=1, keepdims=True)
        bad = norms[:, 0] < 1e-8
        quats[bad] = (1.0, 0.0, 0.0, 0.0)
        norms[bad] = 1.0
        quats /= norms
        dirs = y[lay.future_dir].reshape(-1, 2).copy()
        dn = np.linalg.norm(dirs, axis=1, keepdims=True)
        fallback = dn[:, 0] < 1e-8
        dirs[fallback] = (0.0, 1.0)
        dn[fallback] = 1.0
        dirs /= dn
        raw_contacts = y[lay.contacts]
        probs = 1.0 / (1.0 + np.exp(-np.clip(raw_contacts, -60, 60)))
        return PredictedState(
            root_delta=y[lay.root_delta].copy(),
            positions=y[lay.positions].reshape(-1, 3).copy(),
            velocities=y[lay.velocities].reshape(-1, 3).copy(),
            rotations=quats,
            future_pos=y[lay.future_pos].reshape(-1, 2).copy(),
            future_dir=dirs,
            contact_probs=probs,
            contacts=raw_contacts > contact_threshold,
        )


def config_json(cfg: ModelConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
