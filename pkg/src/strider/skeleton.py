"""Skeleton definition, quaternion helpers, root-frame transforms and the
multi-scale past-pose input.

Conventions: y is up; the ground plane is (x, z). A root transform is
(x, z, facing angle); facing angle 0 looks along +z and the local forward
axis is +z. Per-joint quaternions are (w, x, y, z) local joint rotations.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError, ContractError, HistoryUnderflowError

GAITS = ("standing", "walking", "jogging", "jumping", "crouching")

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# quaternions


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ContractError("zero quaternion cannot be normalized")
    return q / n

def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])


def quat_angle(q1: np.ndarray, q2: np.ndarray) -> float:
    """Rotation angle between two unit quaternions, in [0, pi].

    Computed as 2*arccos(clamp(|<q1, q2>|, 0, 1)); the absolute value folds
    the double cover (q and -q describe the same rotation).
    """
    q1 = quat_normalize(q1)
    q2 = quat_normalize(q2)
    dot = float(np.abs(np.sum(q1 * q2, axis=-1)))
    return 2.0 * math.acos(min(max(dot, 0.0), 1.0))


# ---------------------------------------------------------------------------
# root-frame transforms


def rot_ground(theta: float, v: np.ndarray) -> np.ndarray:
    """Rotate ground-plane (x, z) vectors by the facing angle."""
    c, s = math.cos(theta), math.sin(theta)
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    out[..., 0] = v[..., 0] * c + v[..., 1] * s
    out[..., 1] = -v[..., 0] * s + v[..., 1] * c
    return out


def facing_dir(theta: float) -> np.ndarray:
    """World ground-plane direction of a root facing angle."""
    return np.array([math.sin(theta), math.cos(theta)])


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


def local_to_world(root, points: np.ndarray) -> np.ndarray:
    """Rigid map of root-frame 3D points into the world: rotation about the
    vertical axis by the facing angle, then ground-plane translation."""
    x, z, theta = root
    pts = np.asarray(points, dtype=np.float64)
    out = np.array(pts, copy=True)
    xz = rot_ground(theta, pts[..., [0, 2]])
    out[..., 0] = xz[..., 0] + x
    out[..., 2] = xz[..., 1] + z
    return out


def world_to_local(root, points: np.ndarray) -> np.ndarray:
    x, z, theta = root
    pts = np.array(np.asarray(points, dtype=np.float64), copy=True)
    pts[..., 0] -= x
    pts[..., 2] -= z
    xz = rot_ground(-theta, pts[..., [0, 2]])
    pts[..., 0] = xz[..., 0]
    pts[..., 2] = xz[..., 1]
    return pts


def rotate_to_local(theta: float, vectors: np.ndarray) -> np.ndarray:
    """Express world 3D vectors (velocities) in a frame facing ``theta``."""
    v = np.array(np.asarray(vectors, dtype=np.float64), copy=True)
    xz = rot_ground(-theta, v[..., [0, 2]])
    v[..., 0] = xz[..., 0]
    v[..., 2] = xz[..., 1]
    return v


def rotate_to_world(theta: float, vectors: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rotate_to_local`."""
    v = np.array(np.asarray(vectors, dtype=np.float64), copy=True)
    xz = rot_ground(theta, v[..., [0, 2]])
    v[..., 0] = xz[..., 0]
    v[..., 2] = xz[..., 1]
    return v


def ground_to_local(root, points2d: np.ndarray) -> np.ndarray:
    x, z, theta = root
    p = np.array(np.asarray(points2d, dtype=np.float64), copy=True)
    p[..., 0] -= x
    p[..., 1] -= z
    return rot_ground(-theta, p)


def ground_to_world(root, points2d: np.ndarray) -> np.ndarray:
    x, z, theta = root
    p = rot_ground(theta, np.asarray(points2d, dtype=np.float64))
    p[..., 0] += x
    p[..., 1] += z
    return p


# ---------------------------------------------------------------------------
# skeleton and pooling


@dataclass(frozen=True)
class SkeletonSpec:
    parents: tuple
    arm_joints: tuple
    leg_joints: tuple
    foot_joints: tuple  # left heel, left toe, right heel, right toe
    joint_names: tuple = ()

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    def validate(self) -> "SkeletonSpec":
        n = self.joint_count
        if self.parents[0] != -1:
            raise ConfigError("joint 0 must be the root (parent -1)")
        seen = set()
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < n:
                raise ConfigError(f"joint {j} has out-of-range parent {p}")
            # walk to the root to reject cycles
            cur, hops = j, 0
            while cur != 0:
                cur = self.parents[cur]
                hops += 1
                if hops > n:
                    raise ConfigError(f"parent chain of joint {j} does not reach the root")
            seen.add(j)
        for name, subset in (("arm", self.arm_joints), ("leg", self.leg_joints)):
            if any(not 0 <= j < n for j in subset):
                raise ConfigError(f"{name} subset has out-of-range joints")
        if len(self.foot_joints) != 4:
            raise ConfigError("exactly 4 foot-contact joints are required")
        if any(not 0 <= j < n for j in self.foot_joints):
            raise ConfigError("foot joints out of range")
        return self

    def subset(self, name: str) -> tuple:
        if name == "full":
            return tuple(range(self.joint_count))
        if name == "arm":
            return self.arm_joints
        if name == "leg":
            return self.leg_joints
        raise ConfigError(f"unknown joint subset {name!r}")

    def hash(self) -> str:
        blob = json.dumps(
            {
                "parents": list(self.parents),
                "arm": list(self.arm_joints),
                "leg": list(self.leg_joints),
                "feet": list(self.foot_joints),
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


AGGREGATORS = ("mean", "max")


@dataclass(frozen=True)
class PoolingMap:
    """Partition of the joint set into coarse groups, in a fixed order.

    The default aggregator is the unweighted mean; "max" (componentwise) is
    selectable for experiments.
    """

    name: str
    groups: tuple  # tuple of tuples of joint indices
    aggregate: str = "mean"

    @property
    def group_count(self) -> int:
        return len(self.groups)

    def validate(self, joint_count: int) -> "PoolingMap":
        if self.aggregate not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator {self.aggregate!r}")
        seen: set[int] = set()
        for g in self.groups:
            if not g:
                raise ConfigError("pooling groups must be nonempty")
            for j in g:
                if not 0 <= j < joint_count:
                    raise ConfigError(f"pooling group joint {j} out of range")
                if j in seen:
                    raise ConfigError(f"joint {j} appears in two pooling groups")
                seen.add(j)
        if len(seen) != joint_count:
            missing = sorted(set(range(joint_count)) - seen)
            raise ConfigError(f"pooling map does not cover joints {missing}")
        return self

    def reduce(self, values: np.ndarray) -> np.ndarray:
        fn = np.mean if self.aggregate == "mean" else np.max
        return np.stack([fn(values[list(g)], axis=0) for g in self.groups])


# Default biped: CMU-style 31-joint hierarchy.
_JOINT_NAMES = (
    "hips", "l_hip", "l_up_leg", "l_leg", "l_foot", "l_toe",
    "r_hip", "r_up_leg", "r_leg", "r_foot", "r_toe",
    "lower_back", "spine", "chest", "neck", "neck1", "head",
    "l_shoulder", "l_arm", "l_forearm", "l_hand", "l_finger", "l_index", "l_thumb",
    "r_shoulder", "r_arm", "r_forearm", "r_hand", "r_finger", "r_index", "r_thumb",
)

_PARENTS = (
    -1, 0, 1, 2, 3, 4,
    0, 6, 7, 8, 9,
    0, 11, 12, 13, 14, 15,
    13, 17, 18, 19, 20, 21, 20,
    13, 24, 25, 26, 27, 28, 27,
)


def default_skeleton() -> SkeletonSpec:
    return SkeletonSpec(
        parents=_PARENTS,
        arm_joints=tuple(range(17, 31)),
        leg_joints=tuple(range(1, 11)),
        foot_joints=(4, 5, 9, 10),
        joint_names=_JOINT_NAMES,
    ).validate()


def coarse_pooling() -> PoolingMap:
    """Six groups by kinematic chain: head+neck, torso+root, each arm, each leg."""
    return PoolingMap(
        "coarse",
        (
            (14, 15, 16),
            (0, 11, 12, 13),
            (17, 18, 19, 20, 21, 22, 23),
            (24, 25, 26, 27, 28, 29, 30),
            (1, 2, 3, 4, 5),
            (6, 7, 8, 9, 10),
        ),
    ).validate(31)


def middle_pooling() -> PoolingMap:
    """Eleven groups: limbs split into upper/lower, torso into pelvis/chest."""
    return PoolingMap(
        "middle",
        (
            (14, 15, 16),
            (0, 11),
            (12, 13),
            (17, 18, 19),
            (20, 21, 22, 23),
            (24, 25, 26),
            (27, 28, 29, 30),
            (1, 2),
            (3, 4, 5),
            (6, 7),
            (8, 9, 10),
        ),
    ).validate(31)


POOLINGS = {"coarse": coarse_pooling, "middle": middle_pooling}


def resolve_scale(name: str) -> PoolingMap | None:
    """Scale name -> pooling map; the fine scale has no pooling."""
    if name == "fine":
        return None
    try:
        return POOLINGS[name]()
    except KeyError:
        raise ConfigError(f"unknown scale {name!r}") from None


def scale_dim(scale: PoolingMap | None, joint_count: int) -> int:
    groups = joint_count if scale is None else scale.group_count
    return 6 * groups  # 3D position + 3D velocity per vertex


# ---------------------------------------------------------------------------
# pose frames


@dataclass
class PoseFrame:
    """One motion frame: root-frame joint state plus world root transform."""

    root: tuple  # (x, z, facing angle), world
    positions: np.ndarray  # (J, 3) in this frame's root frame
    velocities: np.ndarray  # (J, 3) world velocity expressed in the root frame
    rotations: np.ndarray  # (J, 4) unit quaternions (w, x, y, z)
    contacts: np.ndarray  # (4,) bool: l heel, l toe, r heel, r toe
    gait: int = 0

    def validate(self) -> "PoseFrame":
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ContractError("pose rotations must be unit quaternions")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise ContractError("pose positions/velocities must be finite")
        return self

    def world_positions(self) -> np.ndarray:
        return local_to_world(self.root, self.positions)

    def copy(self) -> "PoseFrame":
        return PoseFrame(
            tuple(self.root),
            self.positions.copy(),
            self.velocities.copy(),
            self.rotations.copy(),
            self.contacts.copy(),
            self.gait,
        )


def rest_pose_positions() -> np.ndarray:
    """Root-frame rest positions for the default skeleton (meters).

    Built from a fixed per-joint offset table; toes end up just on the
    ground and heels slightly above it.
    """
    offsets = np.array(
        [
            [0.00, 0.915, 0.00],   # hips
            [0.09, -0.05, 0.00], [0.02, -0.05, 0.00], [0.00, -0.40, 0.00],
            [0.00, -0.40, 0.00], [0.00, -0.01, 0.14],
            [-0.09, -0.05, 0.00], [-0.02, -0.05, 0.00], [0.00, -0.40, 0.00],
            [0.00, -0.40, 0.00], [0.00, -0.01, 0.14],
            [0.00, 0.08, 0.00], [0.00, 0.12, 0.00], [0.00, 0.12, 0.00],
            [0.00, 0.10, 0.00], [0.00, 0.05, 0.00], [0.00, 0.10, 0.00],
            [0.08, 0.26, 0.00], [0.12, 0.00, 0.00], [0.26, -0.02, 0.00],
            [0.25, -0.02, 0.00], [0.08, 0.00, 0.00], [0.04, 0.00, 0.00],
            [0.03, 0.00, 0.03],
            [-0.08, 0.26, 0.00], [-0.12, 0.00, 0.00], [-0.26, -0.02, 0.00],
            [-0.25, -0.02, 0.00], [-0.08, 0.00, 0.00], [-0.04, 0.00, 0.00],
            [-0.03, 0.00, 0.03],
        ]
    )
    pos = np.zeros_like(offsets)
    for j, parent in enumerate(_PARENTS):
        pos[j] = offsets[j] if parent < 0 else pos[parent] + offsets[j]
    return pos


def rest_pose(root=(0.0, 0.0, 0.0), gait: int = 0) -> PoseFrame:
    pos = rest_pose_positions()
    return PoseFrame(
        root=tuple(root),
        positions=pos,
        velocities=np.zeros_like(pos),
        rotations=np.tile(QUAT_IDENTITY, (pos.shape[0], 1)),
        contacts=np.array([True, True, True, True]),
        gait=gait,
    )


# ---------------------------------------------------------------------------
# multi-scale input assembly


def pool_coarse(frame: PoseFrame, pmap: PoolingMap) -> tuple[np.ndarray, np.ndarray]:
    """Grouped positions and velocities of a pose frame (mean by default)."""
    pmap.validate(frame.positions.shape[0])
    return pmap.reduce(frame.positions), pmap.reduce(frame.velocities)


def _pool_arrays(pos: np.ndarray, vel: np.ndarray, pmap: PoolingMap | None):
    if pmap is None:
        return pos, vel
    return pmap.reduce(pos), pmap.reduce(vel)


@dataclass
class MultiScaleInput:
    """K past-frame rows per scale; row order follows the offset list."""

    matrices: list  # list of (K, 6*groups) arrays, scale order as configured
    offsets: tuple = ()


def build_input(
    buffer,
    offsets,
    scales,
) -> MultiScaleInput:
    """Assemble the past-pose input from a frame buffer.

    ``buffer`` is ordered oldest-to-newest; offset k selects the k-th most
    recent frame. Every quantity is re-expressed in the root frame of the
    newest buffered frame (the session's current root).
    """
    need = max(offsets)
    if len(buffer) < need:
        missing = [k for k in offsets if k > len(buffer)]
        raise HistoryUnderflowError(
            f"buffer holds {len(buffer)} frames, missing offsets {missing}"
        )
    basis = buffer[-1].root
    rows_per_scale: list[list[np.ndarray]] = [[] for _ in scales]
    for k in offsets:
        frame = buffer[-k]
        world_pos = local_to_world(frame.root, frame.positions)
        pos = world_to_local(basis, world_pos)
        world_vel = rotate_to_world(frame.root[2], frame.velocities)
        vel = rotate_to_local(basis[2], world_vel)
        for si, pmap in enumerate(scales):
            sp, sv = _pool_arrays(pos, vel, pmap)
            rows_per_scale[si].append(
                np.concatenate([sp.reshape(-1), sv.reshape(-1)])
            )
    return MultiScaleInput(
        matrices=[np.stack(rows) for rows in rows_per_scale],
        offsets=tuple(offsets),
    )


# ---------------------------------------------------------------------------
# config files


def skeleton_to_dict(spec: SkeletonSpec, poolings: dict | None = None) -> dict:
    doc = {
        "joints": spec.joint_count,
        "parents": list(spec.parents),
        "subsets": {"arm": list(spec.arm_joints), "leg": list(spec.leg_joints)},
        "foot_joints": list(spec.foot_joints),
    }
    if spec.joint_names:
        doc["names"] = list(spec.joint_names)
    if poolings:
        doc["pooling"] = {}
        for name, pm in poolings.items():
            groups = [list(g) for g in pm.groups]
            doc["pooling"][name] = (
                groups if pm.aggregate == "mean"
                else {"aggregate": pm.aggregate, "groups": groups}
            )
    return doc


def skeleton_from_dict(doc: dict) -> tuple[SkeletonSpec, dict]:
    spec = SkeletonSpec(
        parents=tuple(doc["parents"]),
        arm_joints=tuple(doc["subsets"]["arm"]),
        leg_joints=tuple(doc["subsets"]["leg"]),
        foot_joints=tuple(doc["foot_joints"]),
        joint_names=tuple(doc.get("names", ())),
    ).validate()
    poolings = {}
    for name, entry in doc.get("pooling", {}).items():
        if isinstance(entry, dict):
            groups, aggregate = entry["groups"], entry.get("aggregate", "mean")
        else:
            groups, aggregate = entry, "mean"
        poolings[name] = PoolingMap(
            name, tuple(tuple(g) for g in groups), aggregate
        ).validate(spec.joint_count)
    return spec, poolings


def save_skeleton_yaml(path, spec: SkeletonSpec, poolings: dict | None = None) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(skeleton_to_dict(spec, poolings), fh, sort_keys=False)


def load_skeleton_yaml(path) -> tuple[SkeletonSpec, dict]:
    with open(path) as fh:
        return skeleton_from_dict(yaml.safe_load(fh))
