"""Procedural motion clips: parametric root paths plus gait-phased joint
oscillation around the rest pose.

These clips stand in for recorded motion capture at desk scale. They are
fully deterministic given a seed; contacts follow the world-clearance rule
(a foot counts as grounded when it is less than 2 cm above the terrain).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import MotionClip
from .errors import ConfigError
from .skeleton import (
    GAITS,
    PoseFrame,
    default_skeleton,
    facing_dir,
    local_to_world,
    quat_from_axis_angle,
    rest_pose_positions,
    rotate_to_local,
    world_to_local,
)
from .terrain import load_terrain

CONTACT_CLEARANCE = 0.02  # meters above terrain


@dataclass(frozen=True)
class GaitMotion:
    speed: float  # m/s along the path
    period: int  # frames per full cycle
    swing: float  # leg fore/aft amplitude, meters
    lift: float  # foot lift amplitude, meters
    arm: float  # arm counterswing amplitude, meters
    bob: float  # torso vertical bob, meters
    sway: float = 0.0  # lateral pelvis sway, meters (quadrature phase)
    drop: float = 0.0  # constant pelvis drop (crouch)
    hop: float = 0.0  # whole-body vertical hop (jump)
    leg_rot: float = 0.0  # leg pitch amplitude, radians
    arm_rot: float = 0.0  # arm pitch amplitude, radians


GAIT_MOTIONS = {
    "standing": GaitMotion(0.0, 60, 0.0, 0.0, 0.0, 0.0),
    "walking": GaitMotion(1.2, 60, 0.16, 0.09, 0.09, 0.015, sway=0.025, leg_rot=0.45, arm_rot=0.30),
    "jogging": GaitMotion(2.6, 40, 0.24, 0.12, 0.14, 0.030, sway=0.02, leg_rot=0.70, arm_rot=0.50),
    "jumping": GaitMotion(1.8, 50, 0.10, 0.02, 0.12, 0.0, hop=0.22, leg_rot=0.55, arm_rot=0.55),
    "crouching": GaitMotion(0.8, 72, 0.10, 0.05, 0.06, 0.010, sway=0.02, drop=0.22, leg_rot=0.30, arm_rot=0.18),
}

PATHS = ("line", "circle", "eight")

# chain weights: how strongly the swing offset grows toward the foot
_LEFT_LEG = {1: 0.15, 2: 0.3, 3: 0.6, 4: 1.0, 5: 1.1}
_RIGHT_LEG = {6: 0.15, 7: 0.3, 8: 0.6, 9: 1.0, 10: 1.1}
_LEFT_ARM = {18: 0.3, 19: 0.6, 20: 1.0, 21: 1.1, 22: 1.15, 23: 1.1}
_RIGHT_ARM = {25: 0.3, 26: 0.6, 27: 1.0, 28: 1.1, 29: 1.15, 30: 1.1}
_TORSO = (0, 11, 12, 13, 14, 15, 16, 17, 24)


def _path_curvature(path: str, dist: float) -> float:
    if path == "line":
        return 0.0
    if path == "circle":
        return 1.0 / 5.0  # 5 m radius
    if path == "eight":
        return 0.35 * math.sin(2.0 * math.pi * dist / 24.0)
    raise ConfigError(f"unknown path {path!r} (choose from {PATHS})")


@dataclass
class SynthSpec:
    gaits: tuple = ("walking",)
    paths: tuple = ("line",)
    terrain: str = "flat"
    frames: int = 600
    fps: float = 60.0
    seed: int = 0

    def to_meta(self) -> str:
        return json.dumps(
            {
                "generator": "strider-synth",
                "gaits": list(self.gaits),
                "paths": list(self.paths),
                "terrain": self.terrain,
                "frames": self.frames,
                "fps": self.fps,
                "seed": self.seed,
            },
            sort_keys=True,
        )


def _pose_offsets(motion: GaitMotion, phase: float, rng_jitter: np.ndarray) -> np.ndarray:
    """Root-frame positional offsets from the rest pose at a cycle phase."""
    off = np.zeros((31, 3))
    sin_l = math.sin(phase + rng_jitter[0])
    sin_r = math.sin(phase + math.pi + rng_jitter[0])
    # legs swing fore/aft (z), feet lift on the swing half-cycle
    for j, w in _LEFT_LEG.items():
        off[j, 2] += motion.swing * w * sin_l
    for j, w in _RIGHT_LEG.items():
        off[j, 2] += motion.swing * w * sin_r
    lift_l = motion.lift * max(0.0, sin_l) ** 2
    lift_r = motion.lift * max(0.0, sin_r) ** 2
    off[4, 1] += lift_l
    off[5, 1] += lift_l
    off[9, 1] += lift_r
    off[10, 1] += lift_r
    # arms counterswing
    for j, w in _LEFT_ARM.items():
        off[j, 2] -= motion.arm * w * sin_l
    for j, w in _RIGHT_ARM.items():
        off[j, 2] -= motion.arm * w * sin_r
    # torso bob at double frequency, whole-body hop for jumps
    bob = motion.bob * math.sin(2.0 * phase)
    off[list(_TORSO), 1] += bob
    # lateral sway in quadrature with the swing keeps the cycle phase
    # uniquely readable from positions alone
    if motion.sway:
        sway = motion.sway * math.cos(phase + rng_jitter[1])
        off[list(_TORSO), 0] += sway
        off[(1, 2, 6, 7), 0] += 0.6 * sway
    if motion.hop:
        air = max(0.0, math.sin(phase)) ** 2
        off[:, 1] += motion.hop * air
    if motion.drop:
        off[list(_TORSO), 1] -= motion.drop
        for j in (*_LEFT_ARM, *_RIGHT_ARM):
            off[j, 1] -= motion.drop
        for j in (1, 2, 6, 7):
            off[j, 1] -= motion.drop * 0.5
    return off


def _pose_rotations(motion: GaitMotion, phase: float) -> np.ndarray:
    quats = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (31, 1))
    axis_x = (1.0, 0.0, 0.0)
    sin_l = math.sin(phase)
    sin_r = math.sin(phase + math.pi)
    for j in _LEFT_LEG:
        quats[j] = quat_from_axis_angle(axis_x, motion.leg_rot * sin_l)
    for j in _RIGHT_LEG:
        quats[j] = quat_from_axis_angle(axis_x, motion.leg_rot * sin_r)
    for j in _LEFT_ARM:
        quats[j] = quat_from_axis_angle(axis_x, -motion.arm_rot * sin_l)
    for j in _RIGHT_ARM:
        quats[j] = quat_from_axis_angle(axis_x, -motion.arm_rot * sin_r)
    quats[12] = quat_from_axis_angle((0.0, 0.0, 1.0), 0.08 * motion.leg_rot * math.sin(2 * phase))
    return quats


def generate_clip(
    gait: str,
    path: str,
    terrain_ref: str,
    frames: int,
    fps: float,
    seed: int,
    clip_id: str | None = None,
    meta: str = "",
) -> MotionClip:
    """One procedural clip of a single gait along a parametric path."""
    if gait not in GAITS:
        raise ConfigError(f"unknown gait {gait!r}")
    motion = GAIT_MOTIONS[gait]
    terrain = load_terrain(terrain_ref)
    skeleton = default_skeleton()
    rest = rest_pose_positions()
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-0.15, 0.15, size=2)
    gait_id = GAITS.index(gait)
    dt = 1.0 / fps

    # integrate the root path one frame at a time, starting one frame early
    # so frame 0 has a finite-difference velocity
    n_total = frames + 1
    roots = np.zeros((n_total, 3))
    pos = np.array([0.0, 0.0])
    theta = 0.0
    dist = 0.0
    for t in range(n_total):
        roots[t] = (pos[0], pos[1], theta)
        step = motion.speed * dt
        theta += _path_curvature(path, dist) * step
        pos = pos + facing_dir(theta) * step
        dist += step

    world_pos = np.zeros((n_total, 31, 3))
    local_quats = np.zeros((n_total, 31, 4))
    for t in range(n_total):
        phase = 2.0 * math.pi * (t - 1) / motion.period
        local = rest + _pose_offsets(motion, phase, jitter)
        rx, rz, rtheta = roots[t]
        ground_h = terrain.height(rx, rz)
        wp = local_to_world((rx, rz, rtheta), local)
        wp[:, 1] += ground_h
        world_pos[t] = wp
        local_quats[t] = _pose_rotations(motion, phase)

    frames_out = []
    foot_joints = skeleton.foot_joints
    for t in range(1, n_total):
        root = tuple(roots[t])
        ground_h = terrain.height(root[0], root[1])
        local = world_to_local(root, world_pos[t])
        local[:, 1] -= ground_h
        world_vel = (world_pos[t] - world_pos[t - 1]) * fps
        vel = rotate_to_local(root[2], world_vel)
        contacts = np.array(
            [
                world_pos[t, j, 1] - terrain.height(world_pos[t, j, 0], world_pos[t, j, 2])
                < CONTACT_CLEARANCE
                for j in foot_joints
            ]
        )
        frames_out.append(
            PoseFrame(root, local, vel, local_quats[t], contacts, gait_id).validate()
        )

    return MotionClip(
        clip_id=clip_id or f"{gait}-{path}-{seed}",
        fps=fps,
        terrain_ref=terrain_ref,
        skeleton_hash=skeleton.hash(),
        frames=frames_out,
        meta=meta,
    )


def generate_synthetic_dataset(spec: SynthSpec) -> list:
    """One clip per (gait, path) pair, each seeded independently."""
    if spec.frames < 1:
        raise ConfigError("need at least one frame")
    clips = []
    for gi, gait in enumerate(spec.gaits):
        for pi, path in enumerate(spec.paths):
            clips.append(
                generate_clip(
                    gait,
                    path,
                    spec.terrain,
                    spec.frames,
                    spec.fps,
                    seed=spec.seed * 1000 + gi * 31 + pi,
                    meta=spec.to_meta(),
                )
            )
    return clips
