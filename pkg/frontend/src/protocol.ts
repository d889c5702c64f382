/** Wire protocol (version 1) shared with the motion service.
 *
 * One JSON object per WebSocket text frame, every message tagged with
 * `type` and version `v`. Decoding is strict: unknown types, unknown
 * fields and version mismatches throw, so a incompatible server surfaces
 * as a visible error instead of garbage rendering.
 */

export const PROTOCOL_VERSION = 1;

export interface ClientHello {
  type: "hello";
  v: number;
  attention: boolean;
}

export interface ClientControl {
  type: "control";
  v: number;
  dir_x: number;
  dir_z: number;
  speed: number;
  gait: number;
  time: number;
}

export interface ServerWelcome {
  type: "welcome";
  v: number;
  session: string;
  fps: number;
  joint_count: number;
  parents: number[];
  foot_joints: number[];
  gaits: string[];
  token_labels: [string, number][];
  terrain: string;
  attention: boolean;
}

export interface ServerFrame {
  type: "frame";
  v: number;
  index: number;
  root: [number, number, number];
  joints: [number, number, number][];
  contacts: number[];
  traj_p: [number, number][];
  traj_d: [number, number][];
  traj_h: number[];
  gait: number;
  echo_time: number;
  attention?: number[][][];
}

export interface ServerError {
  type: "error";
  v: number;
  code: string;
  text: string;
}

export type ServerMessage = ServerWelcome | ServerFrame | ServerError;
export type ClientMessage = ClientHello | ClientControl;

export class ProtocolError extends Error {}

const FIELD_ORDER: Record<string, string[]> = {
  hello: ["v", "attention"],
  control: ["v", "dir_x", "dir_z", "speed", "gait", "time"],
  welcome: [
    "v", "session", "fps", "joint_count", "parents", "foot_joints",
    "gaits", "token_labels", "terrain", "attention",
  ],
  frame: [
    "v", "index", "root", "joints", "contacts", "traj_p", "traj_d",
    "traj_h", "gait", "echo_time", "attention",
  ],
  error: ["v", "code", "text"],
};

/** Serialize with the documented field order so encodings are canonical. */
export function encodeMessage(msg: ClientMessage | ServerMessage): string {
  const order = FIELD_ORDER[msg.type];
  if (!order) throw new ProtocolError(`not a wire message: ${(msg as any).type}`);
  const doc: Record<string, unknown> = { type: msg.type };
  for (const key of order) {
    const value = (msg as any)[key];
    if (msg.type === "frame" && key === "attention" && value === undefined) continue;
    doc[key] = value;
  }
  return JSON.stringify(doc);
}

function expect(cond: boolean, what: string): asserts cond {
  if (!cond) throw new ProtocolError(`malformed message: ${what}`);
}

export function decodeMessage(text: string): ClientMessage | ServerMessage {
  let doc: any;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new ProtocolError(`not JSON: ${err}`);
  }
  expect(doc && typeof doc === "object" && typeof doc.type === "string", "missing type tag");
  const order = FIELD_ORDER[doc.type];
  if (!order) throw new ProtocolError(`unknown message type '${doc.type}'`);
  if (doc.v !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported protocol version '${doc.v}' for '${doc.type}'`);
  }
  for (const key of Object.keys(doc)) {
    if (key !== "type" && !order.includes(key)) {
      throw new ProtocolError(`unknown field '${key}' in '${doc.type}'`);
    }
  }
  switch (doc.type) {
    case "hello":
      expect(typeof doc.attention === "boolean", "hello.attention");
      return doc as ClientHello;
    case "control":
      for (const k of ["dir_x", "dir_z", "speed", "time"]) {
        expect(typeof doc[k] === "number", `control.${k}`);
      }
      expect(Number.isInteger(doc.gait), "control.gait");
      return doc as ClientControl;
    case "welcome":
      expect(typeof doc.session === "string", "welcome.session");
      expect(typeof doc.fps === "number", "welcome.fps");
      expect(Number.isInteger(doc.joint_count), "welcome.joint_count");
      expect(Array.isArray(doc.parents) && doc.parents.length === doc.joint_count, "welcome.parents");
      expect(Array.isArray(doc.gaits), "welcome.gaits");
      return doc as ServerWelcome;
    case "frame":
      expect(Number.isInteger(doc.index), "frame.index");
      expect(Array.isArray(doc.root) && doc.root.length === 3, "frame.root");
      expect(Array.isArray(doc.joints), "frame.joints");
      expect(Array.isArray(doc.contacts) && doc.contacts.length === 4, "frame.contacts");
      expect(Array.isArray(doc.traj_p) && doc.traj_p.length === doc.traj_d.length, "frame.traj");
      return doc as ServerFrame;
    case "error":
      expect(typeof doc.code === "string" && typeof doc.text === "string", "error fields");
      return doc as ServerError;
    default:
      throw new ProtocolError(`unknown message type '${doc.type}'`);
  }
}

export function helloMessage(attention: boolean): ClientHello {
  return { type: "hello", v: PROTOCOL_VERSION, attention };
}

export function controlMessage(
  dirX: number, dirZ: number, speed: number, gait: number, time: number,
): ClientControl {
  return {
    type: "control", v: PROTOCOL_VERSION,
    dir_x: dirX, dir_z: dirZ, speed, gait, time,
  };
}
