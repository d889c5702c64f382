"""Network service: stream control in, pose frames out, over WebSocket.

Wire format: one JSON object per text frame, every message carrying a
``type`` tag and protocol version ``v``. Field order is fixed by the encoder
so identical messages serialize to identical bytes; see PROTOCOL.md at the
repository root for the field-by-field contract.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError
from .model import ModelParams, memory_token_labels
from .session import ControlInput, ControlScript, Session, StepResult
from .skeleton import (
    GAITS,
    SkeletonSpec,
    default_skeleton,
    ground_to_world,
    local_to_world,
    rot_ground,
)
from .terrain import Terrain

PROTOCOL_VERSION = 1


# ---------------------------------------------------------------------------
# wire messages


@dataclass
class ClientHello:
    attention: bool = False
    v: int = PROTOCOL_VERSION


@dataclass
class ClientControl:
    dir_x: float = 0.0
    dir_z: float = 0.0
    speed: float = 0.0
    gait: int = 0
    time: float = 0.0
    v: int = PROTOCOL_VERSION

    def to_control(self) -> ControlInput:
        return ControlInput(
            np.array([self.dir_x, self.dir_z]), self.speed, self.gait, self.time
        ).validate()


@dataclass
class ServerWelcome:
    session: str
    fps: float
    joint_count: int
    parents: list
    foot_joints: list
    gaits: list
    token_labels: list  # [scale, offset] per memory token
    terrain: str
    attention: bool
    v: int = PROTOCOL_VERSION


@dataclass
class ServerFrame:
    index: int
    root: list  # [x, z, angle]
    joints: list  # joint_count x [x, y, z], world frame
    contacts: list  # 4 x 0/1
    traj_p: list  # 12 x [x, z], world frame
    traj_d: list  # 12 x [dx, dz], world frame
    traj_h: list  # 12 center heights
    gait: int
    echo_time: float
    attention: list | None = None  # layers x heads x tokens
    v: int = PROTOCOL_VERSION


@dataclass
class ServerError:
    code: str
    text: str
    v: int = PROTOCOL_VERSION


_TYPES = {
    "hello": ClientHello,
    "control": ClientControl,
    "welcome": ServerWelcome,
    "frame": ServerFrame,
    "error": ServerError,
}
_TAGS = {cls: tag for tag, cls in _TYPES.items()}

# documented field order per message type; encoding always emits this order
_FIELD_ORDER = {
    "hello": ("v", "attention"),
    "control": ("v", "dir_x", "dir_z", "speed", "gait", "time"),
    "welcome": (
        "v", "session", "fps", "joint_count", "parents", "foot_joints",
        "gaits", "token_labels", "terrain", "attention",
    ),
    "frame": (
        "v", "index", "root", "joints", "contacts", "traj_p", "traj_d",
        "traj_h", "gait", "echo_time", "attention",
    ),
    "error": ("v", "code", "text"),
}


def _canonical(value):
    """Shared float form across languages: integral floats encode as ints
    (JavaScript's JSON.stringify has no 0.0), negative zero folds to 0."""
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        if value == 0.0:
            return 0
        if value.is_integer() and abs(value) < 2 ** 53:
            return int(value)
        return value
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, dict):
        return {k: _canonical(v) for k, v in value.items()}
    return value


def encode_message(msg) -> str:
    tag = _TAGS.get(type(msg))
    if tag is None:
        raise DecodeError(f"not a wire message: {type(msg).__name__}")
    doc = {"type": tag}
    for name in _FIELD_ORDER[tag]:
        value = _canonical(getattr(msg, name))
        if tag == "frame" and name == "attention" and value is None:
            continue
        doc[name] = value
    return json.dumps(doc, separators=(",", ":"), allow_nan=False)


def decode_message(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"malformed message: {exc}") from exc
    if not isinstance(doc, dict) or "type" not in doc:
        raise DecodeError("message lacks a type tag")
    tag = doc.pop("type")
    cls = _TYPES.get(tag)
    if cls is None:
        raise DecodeError(f"unknown message type {tag!r}")
    version = doc.get("v")
    if version != PROTOCOL_VERSION:
        raise DecodeError(f"unsupported protocol version {version!r} for {tag!r}")
    known = set(_FIELD_ORDER[tag])
    extra = set(doc) - known
    if extra:
        raise DecodeError(f"unknown fields {sorted(extra)} in {tag!r}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise DecodeError(f"bad fields for {tag!r}: {exc}") from exc


def _round_floats(x, nd=9):
    if isinstance(x, float):
        return round(x, nd)
    if isinstance(x, (list, tuple)):
        return [_round_floats(v, nd) for v in x]
    return x


def build_server_frame(
    index: int, result: StepResult, terrain: Terrain, echo_time: float
) -> ServerFrame:
    """Project a step result into the world-frame wire payload."""
    frame = result.frame
    root = frame.root
    ground = terrain.height(root[0], root[1])
    world = local_to_world(root, frame.positions)
    world[:, 1] += ground
    traj = result.trajectory
    basis = result.basis
    world_tp = ground_to_world(basis, traj.positions)
    world_td = rot_ground(basis[2], traj.directions)
    attention = None
    if result.attention is not None:
        attention = [
            _round_floats([[float(w) for w in head] for head in layer.tolist()])
            for layer in result.attention
        ]
    return ServerFrame(
        index=index,
        root=_round_floats([float(v) for v in root]),
        joints=_round_floats(world.tolist()),
        contacts=[int(bool(c)) for c in frame.contacts],
        traj_p=_round_floats(world_tp.tolist()),
        traj_d=_round_floats(world_td.tolist()),
        traj_h=_round_floats([float(h) for h in traj.heights[:, 0]]),
        gait=int(frame.gait),
        echo_time=float(echo_time),
        attention=attention,
    )


def welcome_for(
    session_id: str, params: ModelParams, skeleton: SkeletonSpec,
    terrain: Terrain, fps: float, attention: bool,
) -> ServerWelcome:
    return ServerWelcome(
        session=session_id,
        fps=fps,
        joint_count=skeleton.joint_count,
        parents=list(skeleton.parents),
        foot_joints=list(skeleton.foot_joints),
        gaits=list(GAITS),
        token_labels=[[s, k] for s, k in memory_token_labels(params.config)],
        terrain=terrain.name,
        attention=attention,
    )


# ---------------------------------------------------------------------------
# conformance vectors


def conformance_vectors() -> list:
    """One representative message per type, frozen into protocol/vectors.jsonl."""
    return [
        ClientHello(attention=True),
        ClientHello(attention=False),
        ClientControl(dir_x=0.0, dir_z=1.0, speed=1.25, gait=1, time=12.5),
        ClientControl(dir_x=-0.7071, dir_z=0.7071, speed=2.5, gait=2, time=0.0),
        ServerWelcome(
            session="s1", fps=60.0, joint_count=3, parents=[-1, 0, 1],
            foot_joints=[1, 1, 2, 2], gaits=list(GAITS),
            token_labels=[["fine", 1], ["fine", 10], ["coarse", 1]],
            terrain="flat", attention=False,
        ),
        ServerFrame(
            index=7, root=[0.5, 1.5, 0.125],
            joints=[[0.0, 0.9, 0.0], [0.1, 0.5, 0.0], [0.1, 0.0, 0.2]],
            contacts=[1, 1, 0, 0],
            traj_p=[[0.0, float(i)] for i in range(12)],
            traj_d=[[0.0, 1.0]] * 12,
            traj_h=[0.0] * 12,
            gait=1, echo_time=3.25,
        ),
        ServerFrame(
            index=8, root=[0.5, 1.75, 0.125],
            joints=[[0.0, 0.9, 0.0], [0.1, 0.5, 0.0], [0.1, 0.0, 0.2]],
            contacts=[0, 0, 1, 1],
            traj_p=[[0.0, float(i)] for i in range(12)],
            traj_d=[[0.0, 1.0]] * 12,
            traj_h=[0.1] * 12,
            gait=2, echo_time=4.0,
            attention=[[[0.25, 0.5, 0.25], [0.1, 0.8, 0.1]]],
        ),
        ServerError(code="bad-message", text="truncated frame"),
    ]


# ---------------------------------------------------------------------------
# the service


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    tick_rate: float = 60.0  # ticks/second; 0 = unpaced (tests)
    session_cap: int = 8
    record_dir: str | None = None
    fps: float = 60.0


@dataclass
class SessionRecord:
    session_id: str
    session: Session
    controls: list = field(default_factory=list)  # (tick, ControlInput) applied
    frames: list = field(default_factory=list)  # encoded ServerFrame lines


class SessionRegistry:
    """Tracks live sessions; mutation is serialized by the event loop."""

    def __init__(self, cap: int):
        self.cap = cap
        self.records: dict[str, SessionRecord] = {}
        self._next = 0

    def create(self, session: Session) -> SessionRecord:
        if len(self.records) >= self.cap:
            raise RuntimeError(f"session cap {self.cap} reached")
        self._next += 1
        sid = f"s{self._next}"
        rec = SessionRecord(sid, session)
        self.records[sid] = rec
        return rec

    def drop(self, sid: str) -> None:
        self.records.pop(sid, None)


class MotionService:
    def __init__(
        self,
        params: ModelParams,
        terrain: Terrain,
        config: ServiceConfig | None = None,
        skeleton: SkeletonSpec | None = None,
    ):
        self.params = params
        self.terrain = terrain
        self.config = config or ServiceConfig()
        self.skeleton = skeleton or default_skeleton()
        self.registry = SessionRegistry(self.config.session_cap)
        self._server = None

    async def start(self):
        import websockets.asyncio.server as ws_server

        self._server = await ws_server.serve(
            self._handle, self.config.host, self.config.port
        )
        return self._server

    @property
    def port(self) -> int:
        socks = list(self._server.sockets)
        return socks[0].getsockname()[1]

    async def close(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def serve_forever(self):
        await self.start()
        await asyncio.Future()

    async def _handle(self, websocket):
        rec: SessionRecord | None = None
        try:
            raw = await websocket.recv()
            try:
                hello = decode_message(raw)
            except DecodeError as exc:
                await websocket.send(encode_message(ServerError("bad-handshake", str(exc))))
                return
            if not isinstance(hello, ClientHello):
                await websocket.send(
                    encode_message(ServerError("bad-handshake", "expected hello"))
                )
                return
            session = Session(
                self.params, self.terrain, skeleton=self.skeleton,
                fps=self.config.fps, capture_attention=hello.attention,
            )
            session.warm_start()
            try:
                rec = self.registry.create(session)
            except RuntimeError as exc:
                await websocket.send(encode_message(ServerError("session-cap", str(exc))))
                return
            await websocket.send(
                encode_message(
                    welcome_for(
                        rec.session_id, self.params, self.skeleton, self.terrain,
                        self.config.fps, hello.attention,
                    )
                )
            )
            latest: dict = {"control": ControlInput.idle(), "time": 0.0}
            recv_task = asyncio.create_task(self._receive_loop(websocket, latest))
            try:
                await self._tick_loop(websocket, rec, latest)
            finally:
                recv_task.cancel()
        except Exception:
            pass  # connection teardown; per-session state is discarded below
        finally:
            if rec is not None:
                self._write_record(rec)
                self.registry.drop(rec.session_id)

    async def _receive_loop(self, websocket, latest: dict) -> None:
        import websockets.exceptions as ws_exc

        try:
            async for raw in websocket:
                try:
                    msg = decode_message(raw)
                except DecodeError as exc:
                    await websocket.send(encode_message(ServerError("bad-message", str(exc))))
                    await websocket.close()
                    return
                if isinstance(msg, ClientControl):
                    latest["control"] = msg.to_control()
                    latest["time"] = msg.time
        except ws_exc.ConnectionClosed:
            pass

    async def _tick_loop(self, websocket, rec: SessionRecord, latest: dict) -> None:
        tick_rate = self.config.tick_rate
        period = 1.0 / tick_rate if tick_rate > 0 else 0.0
        next_deadline = time.monotonic()
        tick = 0
        while True:
            control: ControlInput = latest["control"]
            result = rec.session.step(control)
            frame = build_server_frame(tick, result, self.terrain, latest["time"])
            line = encode_message(frame)
            rec.controls.append((tick, control))
            # record the canonical replayable form: echo_time is client
            # telemetry, not simulation state
            frame.echo_time = 0.0
            rec.frames.append(encode_message(frame))
            await websocket.send(line)
            tick += 1
            if period > 0:
                next_deadline += period
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    next_deadline = time.monotonic()  # behind: run immediately
            else:
                await asyncio.sleep(0)

    def _write_record(self, rec: SessionRecord) -> None:
        if not self.config.record_dir or not rec.frames:
            return
        out = Path(self.config.record_dir)
        out.mkdir(parents=True, exist_ok=True)
        from .session import save_script

        script = ControlScript(len(rec.frames), _compact_entries(rec.controls))
        save_script(out / f"{rec.session_id}.controls.txt", script)
        with open(out / f"{rec.session_id}.frames.jsonl", "w") as fh:
            for line in rec.frames:
                fh.write(line + "\n")


def _compact_entries(controls: list) -> list:
    """Drop consecutive duplicates so the script stays readable."""
    entries = []
    prev = None
    for tick, c in controls:
        key = (float(c.direction[0]), float(c.direction[1]), c.speed, c.gait)
        if key != prev:
            entries.append((tick, c))
            prev = key
    return entries


def replay_frames(
    params: ModelParams,
    terrain: Terrain,
    script: ControlScript,
    fps: float = 60.0,
    attention: bool = False,
) -> list:
    """Headless re-execution of a recorded session; returns encoded frame
    lines that must match the served ones byte for byte."""
    session = Session(params, terrain, fps=fps, capture_attention=attention)
    session.warm_start()
    lines = []
    for tick in range(script.ticks):
        result = session.step(script.control_at(tick))
        lines.append(encode_message(build_server_frame(tick, result, terrain, 0.0)))
    return lines
