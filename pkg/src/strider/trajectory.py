"""Control trajectory: sampled path points around the current frame, plus
the runtime blend between user intent and model prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, HistoryUnderflowError
from .skeleton import GAITS, facing_dir, ground_to_local, ground_to_world, rot_ground
from .terrain import Terrain

TRAJ_HOP = 10  # frames between sampled points
LATERAL_OFFSET = 0.25  # meters left/right for the side height probes
DIR_EPS = 1e-8


@dataclass
class Trajectory:
    """2S sampled points; row S+s holds sample s for s in -S..S-1.

    Positions and directions live in the current root frame; heights are
    terrain heights at the world sample locations (center, left, right);
    gaits are category ids.
    """

    positions: np.ndarray  # (2S, 2)
    directions: np.ndarray  # (2S, 2) unit
    heights: np.ndarray  # (2S, 3)
    gaits: np.ndarray  # (2S,) int

    @property
    def half(self) -> int:
        return self.positions.shape[0] // 2

    def point(self, s: int):
        i = self.half + s
        return self.positions[i], self.directions[i], self.heights[i], int(self.gaits[i])

    def validate(self) -> "Trajectory":
        n = self.positions.shape[0]
        if n % 2 or any(a.shape[0] != n for a in (self.directions, self.heights, self.gaits)):
            raise ContractError("trajectory arrays disagree on point count")
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ContractError("trajectory directions must be unit length")
        return self

    def copy(self) -> "Trajectory":
        return Trajectory(
            self.positions.copy(), self.directions.copy(),
            self.heights.copy(), self.gaits.copy(),
        )


def trajectory_to_vector(traj: Trajectory) -> np.ndarray:
    """Flatten to the model's conditioning vector: all positions, then all
    directions, then all heights, then all one-hot gaits."""
    onehot = np.eye(len(GAITS))[traj.gaits]
    return np.concatenate(
        [
            traj.positions.reshape(-1),
            traj.directions.reshape(-1),
            traj.heights.reshape(-1),
            onehot.reshape(-1),
        ]
    )


def trajectory_dim(s: int = 6) -> int:
    return 2 * s * (2 + 2 + 3 + len(GAITS))


@dataclass(frozen=True)
class BlendSchedule:
    """Per-sample blend weights tau_s = (s/S)^exponent for s = 0..S-1."""

    p_pos: float = 0.5
    p_dir: float = 2.0

    def weights(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        if self.p_pos <= 0 or self.p_dir <= 0:
            raise ConfigError("blend exponents must be positive")
        frac = np.arange(s) / s
        return frac ** self.p_pos, frac ** self.p_dir


# Appendix-style alternative favoring the control signal further out.
RESPONSIVE_SCHEDULE = BlendSchedule(p_pos=2.0, p_dir=5.0)
DEFAULT_SCHEDULE = BlendSchedule()


def lateral_probe_offsets(direction_world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = direction_world
    left = np.array([-d[1], d[0]])
    return LATERAL_OFFSET * left, -LATERAL_OFFSET * left


def probe_heights(terrain: Terrain, world_pos: np.ndarray, world_dir: np.ndarray) -> np.ndarray:
    left, right = lateral_probe_offsets(world_dir)
    return np.array(
        [
            terrain.height(world_pos[0], world_pos[1]),
            terrain.height(world_pos[0] + left[0], world_pos[1] + left[1]),
            terrain.height(world_pos[0] + right[0], world_pos[1] + right[1]),
        ]
    )


def sample_trajectory(
    roots,
    gaits,
    pivot: int,
    terrain: Terrain,
    *,
    s: int = 6,
    hop: int = TRAJ_HOP,
    clamp: bool = False,
) -> Trajectory:
    """Sample 2S points around ``pivot`` from a recorded root track.

    ``roots`` is a per-frame sequence of world (x, z, angle); the result is
    expressed in the pivot frame's root coordinates. With ``clamp`` set,
    out-of-range sample indices stick to the track ends (used for dataset
    windows near clip boundaries); otherwise they raise.
    """
    n = len(roots)
    basis = roots[pivot]
    positions = np.empty((2 * s, 2))
    directions = np.empty((2 * s, 2))
    heights = np.empty((2 * s, 3))
    gait_ids = np.empty(2 * s, dtype=np.int64)
    for row, off in enumerate(range(-s, s)):
        idx = pivot + off * hop
        if not 0 <= idx < n:
            if not clamp:
                raise HistoryUnderflowError(
                    f"trajectory sample {off} (frame {idx}) outside track of {n} frames"
                )
            idx = min(max(idx, 0), n - 1)
        rx, rz, rtheta = roots[idx]
        world_p = np.array([rx, rz])
        world_d = facing_dir(rtheta)
        positions[row] = ground_to_local(basis, world_p)
        directions[row] = rot_ground(-basis[2], world_d)
        heights[row] = probe_heights(terrain, world_p, world_d)
        gait_ids[row] = gaits[idx]
    return Trajectory(positions, directions, heights, gait_ids).validate()


def blend_trajectory(
    user_pos: np.ndarray,
    user_dir: np.ndarray,
    pred_pos: np.ndarray,
    pred_dir: np.ndarray,
    sched: BlendSchedule,
) -> tuple[np.ndarray, np.ndarray]:
    """Blend the future half (s = 0..S-1) of the user trajectory with the
    model's prediction.

    Per point: (1 - tau) * user + tau * predicted, with the position and
    direction schedules applied to their own quantities; blended directions
    are renormalized, falling back to the user direction when degenerate.
    """
    s = user_pos.shape[0]
    if pred_pos.shape[0] != s or user_dir.shape[0] != s or pred_dir.shape[0] != s:
        raise ContractError("blend halves disagree on point count")
    tau_p, tau_d = sched.weights(s)
    pos = (1.0 - tau_p)[:, None] * user_pos + tau_p[:, None] * pred_pos
    raw = (1.0 - tau_d)[:, None] * user_dir + tau_d[:, None] * pred_dir
    dirs = np.empty_like(raw)
    for i in range(s):
        norm = np.linalg.norm(raw[i])
        dirs[i] = user_dir[i] if norm < DIR_EPS else raw[i] / norm
    return pos, dirs


def fill_future_heights(
    traj: Trajectory, root, terrain: Terrain
) -> None:
    """Recompute terrain heights for the future half from world positions."""
    s = traj.half
    for row in range(s, 2 * s):
        world_p = ground_to_world(root, traj.positions[row])
        world_d = rot_ground(root[2], traj.directions[row])
        traj.heights[row] = probe_heights(terrain, world_p, world_d)
