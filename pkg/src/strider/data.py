"""Motion clips, training-sample assembly and feature normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import binio
from .errors import ConfigError, ContractError, DecodeError
from .model import ModelConfig, OutputLayout, pack_target
from .skeleton import (
    PoseFrame,
    build_input,
    facing_dir,
    ground_to_local,
    rot_ground,
    wrap_angle,
)
from .terrain import Terrain, load_terrain
from .trajectory import sample_trajectory, trajectory_to_vector

CLIP_MAGIC = b"SMCL"
CLIP_VERSION = 1

# dataset windows: a target frame needs this many past frames for the pose
# input and this many future frames for the trajectory targets
MIN_FUTURE_FRAMES = 60


@dataclass
class MotionClip:
    clip_id: str
    fps: float
    terrain_ref: str
    skeleton_hash: str
    frames: list
    meta: str = ""

    def __len__(self) -> int:
        return len(self.frames)

    def roots(self) -> np.ndarray:
        return np.array([f.root for f in self.frames])

    def gaits(self) -> np.ndarray:
        return np.array([f.gait for f in self.frames], dtype=np.int64)

    def validate(self, vel_tol: float = 1e-6) -> "MotionClip":
        """Quaternion norms and velocity/position finite-difference consistency."""
        from .skeleton import local_to_world, rotate_to_world

        for f in self.frames:
            f.validate()
        for i in range(1, len(self.frames)):
            prev, cur = self.frames[i - 1], self.frames[i]
            wp = local_to_world(prev.root, prev.positions)
            wc = local_to_world(cur.root, cur.positions)
            world_vel = rotate_to_world(cur.root[2], cur.velocities)
            fd = (wc - wp) * self.fps
            if np.max(np.abs(world_vel - fd)) > vel_tol:
                raise ContractError(
                    f"clip {self.clip_id}: velocity of frame {i} inconsistent with positions"
                )
        return self


def write_clip(fh, clip: MotionClip) -> None:
    j = clip.frames[0].positions.shape[0] if clip.frames else 0
    fh.write(CLIP_MAGIC)
    binio.write_u32(fh, CLIP_VERSION)
    binio.write_str(fh, clip.clip_id)
    binio.write_f64(fh, clip.fps)
    binio.write_str(fh, clip.terrain_ref)
    binio.write_str(fh, clip.skeleton_hash)
    binio.write_str(fh, clip.meta)
    binio.write_u32(fh, j)
    binio.write_u32(fh, len(clip.frames))
    for f in clip.frames:
        for v in f.root:
            binio.write_f64(fh, float(v))
        binio.write_f64_array(fh, f.positions)
        binio.write_f64_array(fh, f.velocities)
        binio.write_f64_array(fh, f.rotations)
        binio.write_u8(fh, f.gait)
        for c in f.contacts:
            binio.write_u8(fh, 1 if c else 0)


def save_clip(path, clip: MotionClip) -> None:
    with open(path, "wb") as fh:
        write_clip(fh, clip)


def read_clip(fh) -> MotionClip:
    binio.expect_magic(fh, CLIP_MAGIC, "motion clip")
    version = binio.read_u32(fh)
    if version != CLIP_VERSION:
        raise DecodeError(f"unsupported clip version {version}")
    clip_id = binio.read_str(fh)
    fps = binio.read_f64(fh)
    terrain_ref = binio.read_str(fh)
    skeleton_hash = binio.read_str(fh)
    meta = binio.read_str(fh)
    j = binio.read_u32(fh)
    n = binio.read_u32(fh)
    frames = []
    for _ in range(n):
        root = (binio.read_f64(fh), binio.read_f64(fh), binio.read_f64(fh))
        positions = binio.read_f64_array(fh)
        velocities = binio.read_f64_array(fh)
        rotations = binio.read_f64_array(fh)
        gait = binio.read_u8(fh)
        contacts = np.array([binio.read_u8(fh) == 1 for _ in range(4)])
        if positions.shape != (j, 3) or rotations.shape != (j, 4):
            raise DecodeError("clip frame arrays have unexpected shapes")
        frames.append(
            PoseFrame(root, positions, velocities, rotations, contacts, gait)
        )
    return MotionClip(clip_id, fps, terrain_ref, skeleton_hash, frames, meta)


def load_clip(path) -> MotionClip:
    with open(path, "rb") as fh:
        return read_clip(fh)


# ---------------------------------------------------------------------------
# sample assembly


@dataclass
class TrainingSample:
    scales: list  # per scale (K, D_s)
    traj: np.ndarray  # (traj_dim,)
    target: np.ndarray  # (out_dim,)


def valid_target_range(n_frames: int, cfg: ModelConfig) -> range:
    first = max(cfg.past_offsets) + 1
    last = n_frames - 1 - MIN_FUTURE_FRAMES  # inclusive
    return range(first, last + 1)


def assemble_samples(clip: MotionClip, cfg: ModelConfig, terrain: Terrain | None = None):
    """Yield one training sample per valid target frame.

    The sample targeting frame i conditions on frames strictly before i,
    with every input expressed in the root frame of frame i-1 (the frame the
    runtime will actually have when it predicts). Targets are the frame-i
    pose in its own root frame, the frame-i root motion relative to i-1, the
    future trajectory in frame i's root frame, and frame i's contacts.
    """
    if terrain is None:
        terrain = load_terrain(clip.terrain_ref)
    layout = OutputLayout.for_config(cfg)
    scale_maps = cfg.scale_maps()
    frames = clip.frames
    roots = clip.roots()
    gaits = clip.gaits()
    hop = 10
    s = cfg.traj_points
    rng_frames = valid_target_range(len(frames), cfg)
    if len(rng_frames) == 0:
        return
    for i in rng_frames:
        pivot = i - 1
        x = build_input(frames[:i], cfg.past_offsets, scale_maps)
        traj = sample_trajectory(roots, gaits, pivot, terrain, s=s, clamp=True)
        cur = frames[i]
        prev = frames[pivot]
        dxz = ground_to_local(prev.root, np.array([[cur.root[0], cur.root[1]]]))[0]
        dtheta = wrap_angle(cur.root[2] - prev.root[2])
        fut_idx = [min(i + hop * k, len(frames) - 1) for k in range(s)]
        fut_pos = ground_to_local(cur.root, roots[fut_idx][:, :2])
        fut_dir = np.stack(
            [rot_ground(-cur.root[2], facing_dir(roots[fi][2])) for fi in fut_idx]
        )
        y = pack_target(
            layout,
            np.array([dxz[0], dxz[1], dtheta]),
            cur.positions,
            cur.velocities,
            cur.rotations,
            fut_pos,
            fut_dir,
            cur.contacts.astype(np.float64),
        )
        yield TrainingSample(scales=x.matrices, traj=trajectory_to_vector(traj), target=y)


def assemble_dataset(clips, cfg: ModelConfig) -> list:
    samples = []
    for clip in clips:
        samples.extend(assemble_samples(clip, cfg))
    return samples


def split_clips(clips: list, val_fraction: float, seed: int) -> tuple[list, list]:
    """Deterministic by-clip train/validation split."""
    if not clips:
        raise ConfigError("no clips to split")
    order = np.random.default_rng(seed).permutation(len(clips))
    n_val = int(len(clips) * val_fraction)
    val_ids = set(int(i) for i in order[:n_val])
    train = [c for i, c in enumerate(clips) if i not in val_ids]
    val = [c for i, c in enumerate(clips) if i in val_ids]
    if not train:  # never let validation swallow everything
        train, val = val, []
    return train, val


# ---------------------------------------------------------------------------
# normalization


STD_FLOOR = 1e-8


@dataclass
class NormStats:
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray
    joint_dims: int  # leading flat-input dims that are joint features
    joint_scale: float = 0.1

    def validate(self) -> "NormStats":
        if np.any(self.in_std <= 0) or np.any(self.out_std <= 0):
            raise ContractError("normalization stds must be positive")
        return self


def input_dim(cfg: ModelConfig) -> int:
    return cfg.k * sum(cfg.scale_dims()) + cfg.traj_dim


def joint_input_dims(cfg: ModelConfig) -> int:
    return cfg.k * sum(cfg.scale_dims())


def flatten_input(scales, traj: np.ndarray) -> np.ndarray:
    return np.concatenate([m.reshape(-1) for m in scales] + [traj])


def unflatten_input(flat: np.ndarray, cfg: ModelConfig):
    scales = []
    off = 0
    for d in cfg.scale_dims():
        n = cfg.k * d
        scales.append(flat[off : off + n].reshape(cfg.k, d))
        off += n
    return scales, flat[off:]


def compute_norm_stats(samples, cfg: ModelConfig) -> NormStats:
    """Per-dimension mean/std over the training samples.

    Near-constant dims keep std 1 so they normalize to ~0 and round-trip.
    The four contact output dims are left un-normalized (identity stats) so
    they stay 0/1 targets and the prediction's contact slots read as logits.
    """
    if not samples:
        raise ConfigError("cannot compute normalization stats on an empty dataset")
    xs = np.stack([flatten_input(s.scales, s.traj) for s in samples])
    ys = np.stack([s.target for s in samples])
    in_mean = xs.mean(axis=0)
    in_std = xs.std(axis=0)
    out_mean = ys.mean(axis=0)
    out_std = ys.std(axis=0)
    in_std[in_std < STD_FLOOR] = 1.0
    out_std[out_std < STD_FLOOR] = 1.0
    lay = OutputLayout.for_config(cfg)
    out_mean[lay.contacts] = 0.0
    out_std[lay.contacts] = 1.0
    return NormStats(
        in_mean, in_std, out_mean, out_std, joint_dims=joint_input_dims(cfg)
    ).validate()


def normalize_input(scales, traj: np.ndarray, stats: NormStats, cfg: ModelConfig):
    flat = flatten_input(scales, traj)
    if flat.shape[0] != stats.in_mean.shape[0]:
        raise ContractError(
            f"input dim {flat.shape[0]} != stats dim {stats.in_mean.shape[0]}"
        )
    normed = (flat - stats.in_mean) / stats.in_std
    normed[: stats.joint_dims] *= stats.joint_scale
    return unflatten_input(normed, cfg)


def normalize_target(y: np.ndarray, stats: NormStats) -> np.ndarray:
    if y.shape[-1] != stats.out_mean.shape[0]:
        raise ContractError(f"target dim {y.shape[-1]} != stats dim")
    return (y - stats.out_mean) / stats.out_std


def denormalize_output(yhat: np.ndarray, stats: NormStats) -> np.ndarray:
    if yhat.shape[-1] != stats.out_mean.shape[0]:
        raise ContractError(f"output dim {yhat.shape[-1]} != stats dim")
    return yhat * stats.out_std + stats.out_mean


def normalize_sample(sample: TrainingSample, stats: NormStats, cfg: ModelConfig) -> TrainingSample:
    scales, traj = normalize_input(sample.scales, sample.traj, stats, cfg)
    return TrainingSample(scales, traj, normalize_target(sample.target, stats))


@dataclass
class PackedDataset:
    """Samples pre-stacked for row-batched training."""

    scales: list  # per scale (N, K, D_s), normalized
    traj: np.ndarray  # (N, traj_dim), normalized
    targets: np.ndarray  # (N, out_dim), normalized

    def __len__(self) -> int:
        return self.traj.shape[0]

    def batch(self, idx: np.ndarray):
        k = self.scales[0].shape[1]
        xs = [m[idx].reshape(len(idx) * k, -1) for m in self.scales]
        return xs, self.traj[idx], self.targets[idx]


def pack_dataset(samples, stats: NormStats, cfg: ModelConfig) -> PackedDataset:
    normed = [normalize_sample(s, stats, cfg) for s in samples]
    return PackedDataset(
        scales=[
            np.stack([s.scales[si] for s in normed]) for si in range(len(cfg.scales))
        ],
        traj=np.stack([s.traj for s in normed]),
        targets=np.stack([s.target for s in normed]),
    )
