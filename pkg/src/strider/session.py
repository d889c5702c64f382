"""Autoregressive runtime: a session owns the past-pose buffer, blends the
user trajectory with the previous prediction each tick, runs the network and
advances the world root."""

from __future__ import annotations

import io
import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import binio, numeric as nc
from .data import (
    MotionClip,
    denormalize_output,
    load_clip,
    normalize_input,
    read_clip,
    write_clip,
)
from .errors import ConfigError, ContractError, DecodeError
from .metrics import angle_update_report, angle_update_series
from .model import ModelParams, PredictedState, forward_batch
from .skeleton import (
    GAITS,
    PoseFrame,
    SkeletonSpec,
    build_input,
    default_skeleton,
    facing_dir,
    ground_to_local,
    rest_pose,
    rot_ground,
    wrap_angle,
)
from .terrain import Terrain
from .trajectory import (
    BlendSchedule,
    DEFAULT_SCHEDULE,
    TRAJ_HOP,
    Trajectory,
    blend_trajectory,
    fill_future_heights,
    probe_heights,
    trajectory_to_vector,
)

TURN_RATE = 0.08  # per-frame heading pull toward the commanded direction
FAULT_REWARM_STEPS = 40
MAX_SPEED_DEFAULT = 3.5  # m/s, root-continuity warning threshold


@dataclass
class ControlInput:
    direction: np.ndarray  # world-frame desired heading, unit or zero
    speed: float  # m/s
    gait: int = 0
    time: float = 0.0

    def validate(self) -> "ControlInput":
        if self.speed < 0:
            raise ContractError("control speed must be >= 0")
        if not 0 <= self.gait < len(GAITS):
            raise ContractError(f"gait id {self.gait} out of range")
        return self

    @staticmethod
    def idle() -> "ControlInput":
        return ControlInput(np.zeros(2), 0.0, 0, 0.0)


@dataclass
class ControlScript:
    ticks: int
    entries: list  # (tick, ControlInput), ticks strictly increasing

    def validate(self) -> "ControlScript":
        last = -1
        for tick, ctrl in self.entries:
            if tick <= last:
                raise ContractError("script ticks must be strictly increasing")
            last = tick
            ctrl.validate()
        if self.ticks < 1:
            raise ContractError("script must cover at least one tick")
        return self

    def control_at(self, tick: int) -> ControlInput:
        active = ControlInput.idle()
        for t, ctrl in self.entries:
            if t > tick:
                break
            active = ctrl
        return active


def save_script(path, script: ControlScript) -> None:
    with open(path, "w") as fh:
        fh.write("# strider control script v1\n")
        fh.write(f"ticks {script.ticks}\n")
        fh.write("# tick dir_x dir_z speed gait\n")
        for tick, c in script.entries:
            fh.write(
                f"{tick} {float(c.direction[0])!r} {float(c.direction[1])!r} "
                f"{float(c.speed)!r} {GAITS[c.gait]}\n"
            )


def load_script(path) -> ControlScript:
    ticks = None
    entries = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if ln.startswith("ticks "):
                ticks = int(ln.split()[1])
                continue
            parts = ln.split()
            if len(parts) != 5:
                raise DecodeError(f"bad script line: {ln!r}")
            tick = int(parts[0])
            direction = np.array([float(parts[1]), float(parts[2])])
            speed = float(parts[3])
            gait = GAITS.index(parts[4]) if parts[4] in GAITS else int(parts[4])
            entries.append((tick, ControlInput(direction, speed, gait)))
    if ticks is None:
        raise DecodeError(f"{path}: missing 'ticks' header")
    return ControlScript(ticks, entries).validate()


def constant_script(ticks: int, control: ControlInput) -> ControlScript:
    return ControlScript(ticks, [(0, control)]).validate()


# ---------------------------------------------------------------------------
# session


@dataclass
class StepResult:
    frame: PoseFrame
    root: tuple
    trajectory: Trajectory  # blended conditioning trajectory, in the basis frame
    basis: tuple  # root frame the trajectory is expressed in
    attention: list | None
    warnings: list
    faulted: bool


class Session:
    """Single-owner runtime state for one character."""

    def __init__(
        self,
        params: ModelParams,
        terrain: Terrain,
        *,
        skeleton: SkeletonSpec | None = None,
        schedule: BlendSchedule = DEFAULT_SCHEDULE,
        fps: float = 60.0,
        max_speed: float = MAX_SPEED_DEFAULT,
        capture_attention: bool = False,
        seed: int = 0,
    ):
        if params.norm is None:
            raise ConfigError("session needs params with normalization statistics")
        self.params = params
        self.config = params.config
        self.terrain = terrain
        self.skeleton = skeleton or default_skeleton()
        self.schedule = schedule
        self.fps = fps
        self.max_speed = max_speed
        self.capture_attention = capture_attention
        self.seed = seed
        cap = max(self.config.past_offsets) + 1
        self.buffer: deque = deque(maxlen=cap)
        hist_cap = self.config.traj_points * TRAJ_HOP + 1
        self.root_history: deque = deque(maxlen=hist_cap)
        self.gait_history: deque = deque(maxlen=hist_cap)
        self.pred_future: tuple | None = None
        self.frame_index = 0
        self.fault = False
        self.fault_countdown = 0
        self.last_valid: PoseFrame | None = None
        self.warnings: list[str] = []

    @property
    def root(self) -> tuple:
        return self.buffer[-1].root

    # -- warm start ---------------------------------------------------------

    def warm_start(self, source=None) -> "Session":
        """Fill the buffers from a clip tail or a tiled rest pose."""
        self.buffer.clear()
        self.root_history.clear()
        self.gait_history.clear()
        self.pred_future = None
        self.fault = False
        self.frame_index = 0
        cap = self.buffer.maxlen
        if source is None:
            frames = [rest_pose() for _ in range(cap)]
        elif isinstance(source, MotionClip):
            if len(source.frames) < cap:
                raise ConfigError(
                    f"warm-start clip has {len(source.frames)} frames, need {cap}"
                )
            frames = [f.copy() for f in source.frames[-self.root_history.maxlen :]]
        else:  # a single PoseFrame to tile
            frames = [source.copy() for _ in range(cap)]
        for f in frames:
            self._push(f)
        self.last_valid = self.buffer[-1].copy()
        return self

    def _push(self, frame: PoseFrame) -> None:
        self.buffer.append(frame)
        self.root_history.append(tuple(frame.root))
        self.gait_history.append(frame.gait)

    # -- trajectory assembly --------------------------------------------------

    def _past_half(self, basis) -> tuple:
        s = self.config.traj_points
        positions = np.zeros((s, 2))
        directions = np.zeros((s, 2))
        heights = np.zeros((s, 3))
        gaits = np.zeros(s, dtype=np.int64)
        hist = self.root_history
        ghist = self.gait_history
        last = len(hist) - 1
        for row, off in enumerate(range(-s, 0)):
            idx = max(0, last + off * TRAJ_HOP)
            rx, rz, rtheta = hist[idx]
            world_p = np.array([rx, rz])
            world_d = facing_dir(rtheta)
            positions[row] = ground_to_local(basis, world_p)
            directions[row] = rot_ground(-basis[2], world_d)
            heights[row] = probe_heights(self.terrain, world_p, world_d)
            gaits[row] = ghist[idx]
        return positions, directions, heights, gaits

    def _user_future(self, control: ControlInput, basis) -> tuple:
        """Constant-turn extrapolation of the commanded heading and speed."""
        s = self.config.traj_points
        positions = np.zeros((s, 2))
        directions = np.zeros((s, 2))
        directions[0] = (0.0, 1.0)  # facing, in the basis frame
        dir_norm = float(np.linalg.norm(control.direction))
        if dir_norm > 1e-8:
            target = rot_ground(-basis[2], control.direction / dir_norm)
            speed = control.speed
        else:
            target = np.array([0.0, 1.0])
            speed = 0.0 if control.speed == 0.0 else control.speed
        heading = np.array([0.0, 1.0])
        pos = np.zeros(2)
        dt = 1.0 / self.fps
        for j in range(1, s * TRAJ_HOP - TRAJ_HOP + 1):
            heading = (1.0 - TURN_RATE) * heading + TURN_RATE * target
            n = np.linalg.norm(heading)
            heading = heading / n if n > 1e-8 else np.array([0.0, 1.0])
            pos = pos + heading * speed * dt
            if j % TRAJ_HOP == 0:
                positions[j // TRAJ_HOP] = pos
                directions[j // TRAJ_HOP] = heading
        return positions, directions

    def _build_trajectory(self, control: ControlInput, basis) -> Trajectory:
        s = self.config.traj_points
        past_p, past_d, past_h, past_g = self._past_half(basis)
        user_p, user_d = self._user_future(control, basis)
        if self.pred_future is not None:
            pred_p, pred_d = self.pred_future
            fut_p, fut_d = blend_trajectory(user_p, user_d, pred_p, pred_d, self.schedule)
        else:
            fut_p, fut_d = user_p, user_d
        # tau_0 = 0: the immediate point must equal the user signal exactly
        assert np.array_equal(fut_p[0], user_p[0]) and np.array_equal(
            fut_d[0], user_d[0]
        ), "blend violated the s=0 user-signal guarantee"
        traj = Trajectory(
            positions=np.concatenate([past_p, fut_p]),
            directions=np.concatenate([past_d, fut_d]),
            heights=np.concatenate([past_h, np.zeros((s, 3))]),
            gaits=np.concatenate(
                [past_g, np.full(s, control.gait, dtype=np.int64)]
            ),
        )
        fill_future_heights(traj, basis, self.terrain)
        return traj.validate()

    # -- stepping -------------------------------------------------------------

    def step(self, control: ControlInput) -> StepResult:
        control.validate()
        if len(self.buffer) < self.buffer.maxlen:
            raise ConfigError("session must be warm-started before stepping")
        if self.fault:
            return self._fault_step(control)
        basis = self.root
        traj = self._build_trajectory(control, basis)
        x = build_input(self.buffer, self.config.past_offsets, self.config.scale_maps())
        scales_n, traj_n = normalize_input(
            x.matrices, trajectory_to_vector(traj), self.params.norm, self.config
        )
        sink: list | None = [] if self.capture_attention else None
        yhat = forward_batch(
            [nc.constant(m) for m in scales_n],
            nc.constant(np.atleast_2d(traj_n)),
            self.params,
            mode="infer",
            sink=sink,
        )
        raw = yhat.data[0]
        if not np.all(np.isfinite(raw)):
            self._enter_fault("non-finite model output")
            return self._fault_step(control)
        y = denormalize_output(raw, self.params.norm)
        pred = PredictedState.from_vector(y, self.config, contact_threshold=0.5)

        dx, dz, dtheta = pred.root_delta
        step_len = math.hypot(dx, dz)
        warnings = []
        limit = self.max_speed / self.fps * 4.0
        if step_len > limit:
            msg = (
                f"frame {self.frame_index}: root step {step_len:.3f} m exceeds "
                f"{limit:.3f} m continuity bound"
            )
            warnings.append(msg)
            self.warnings.append(msg)
        world_d = rot_ground(basis[2], np.array([dx, dz]))
        new_root = (
            basis[0] + world_d[0],
            basis[1] + world_d[1],
            wrap_angle(basis[2] + dtheta),
        )
        frame = PoseFrame(
            root=new_root,
            positions=pred.positions,
            velocities=pred.velocities,
            rotations=pred.rotations,
            contacts=pred.contacts,
            gait=control.gait,
        )
        self._push(frame)
        self.pred_future = (pred.future_pos, pred.future_dir)
        self.last_valid = frame
        attention = None
        if sink is not None:
            heads = self.config.heads
            attention = [p.reshape(heads, -1) for p in sink[-self.config.layers :]]
        result = StepResult(
            frame, new_root, traj, basis, attention, warnings, faulted=False
        )
        self.frame_index += 1
        return result

    def _enter_fault(self, reason: str) -> None:
        self.fault = True
        self.fault_countdown = FAULT_REWARM_STEPS
        self.warnings.append(f"frame {self.frame_index}: fault: {reason}")

    def _fault_step(self, control: ControlInput) -> StepResult:
        """Replay the last valid frame while the buffer re-warms."""
        frame = self.last_valid.copy()
        frame.gait = control.gait
        self._push(frame)
        self.pred_future = None
        self.fault_countdown -= 1
        if self.fault_countdown <= 0:
            self.fault = False
        result = StepResult(
            frame, frame.root, self._build_trajectory(control, frame.root),
            frame.root, None, [], faulted=True,
        )
        self.frame_index += 1
        return result


# ---------------------------------------------------------------------------
# headless rollouts


@dataclass
class Rollout:
    clip: MotionClip
    root_speeds: np.ndarray  # (N,) m/s
    angle_series: np.ndarray  # (N,) deg/s (0 for the first frame)
    metrics: dict
    script: ControlScript | None = None


def run_script(
    params: ModelParams,
    terrain: Terrain,
    script: ControlScript,
    *,
    warm: MotionClip | None = None,
    schedule: BlendSchedule = DEFAULT_SCHEDULE,
    fps: float = 60.0,
    seed: int = 0,
    scenario: str | None = None,
    capture_attention: bool = False,
) -> Rollout:
    """Execute a control script tick by tick and bundle the metrics."""
    script.validate()
    session = Session(
        params, terrain, schedule=schedule, fps=fps, seed=seed,
        capture_attention=capture_attention,
    )
    session.warm_start(warm)
    frames = []
    for tick in range(script.ticks):
        result = session.step(script.control_at(tick))
        frames.append(result.frame)
    skeleton = session.skeleton
    clip = MotionClip(
        clip_id="rollout",
        fps=fps,
        terrain_ref=terrain.name,
        skeleton_hash=skeleton.hash(),
        frames=frames,
        meta=json.dumps({"rollout": True, "seed": seed, "ticks": script.ticks}),
    )
    rotations = np.stack([f.rotations for f in frames])
    report = angle_update_report(
        rotations, skeleton, fps, scenario=scenario or terrain.name
    )
    roots = clip.roots()
    deltas = np.linalg.norm(np.diff(roots[:, :2], axis=0), axis=1) * fps
    speeds = np.concatenate([[0.0], deltas])
    series = np.concatenate([[0.0], angle_update_series(rotations, skeleton.subset("full"), fps)])
    metrics = {
        "scenario": report.scenario,
        "full": report.full,
        "arm": report.arm,
        "leg": report.leg,
        "frames": report.frames,
        "fps": fps,
        "mean_root_speed": float(speeds.mean()),
        "warnings": len(session.warnings),
    }
    return Rollout(clip, speeds, series, metrics, script)


ROLLOUT_MAGIC = b"SRLL"
ROLLOUT_VERSION = 1


def save_rollout(path, rollout: Rollout) -> None:
    buf = io.BytesIO()
    write_clip(buf, rollout.clip)
    with open(path, "wb") as fh:
        fh.write(ROLLOUT_MAGIC)
        binio.write_u32(fh, ROLLOUT_VERSION)
        binio.write_str(fh, json.dumps(rollout.metrics, sort_keys=True))
        blob = buf.getvalue()
        binio.write_u32(fh, len(blob))
        fh.write(blob)
        binio.write_f64_array(fh, rollout.root_speeds)
        binio.write_f64_array(fh, rollout.angle_series)


def load_rollout(path) -> Rollout:
    with open(path, "rb") as fh:
        binio.expect_magic(fh, ROLLOUT_MAGIC, "rollout")
        version = binio.read_u32(fh)
        if version != ROLLOUT_VERSION:
            raise DecodeError(f"unsupported rollout version {version}")
        metrics = json.loads(binio.read_str(fh))
        n = binio.read_u32(fh)
        clip = read_clip(io.BytesIO(fh.read(n)))
        speeds = binio.read_f64_array(fh)
        series = binio.read_f64_array(fh)
    return Rollout(clip, speeds, series, metrics)


def load_motion_file(path) -> MotionClip:
    """Load either a bare clip or the clip embedded in a rollout."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == ROLLOUT_MAGIC:
        return load_rollout(path).clip
    return load_clip(path)
