/** 2.5D orthographic scene: skeleton bones from world joint positions,
 * trajectory overlay with facing arrows, a terrain heightline under the
 * path, contact markers and an optional attention heatmap panel. */

import type { ServerFrame, ServerWelcome } from "./protocol.js";

export interface Camera {
  x: number; // world ground-plane center
  z: number;
  scale: number; // pixels per meter
  zSlope: number; // vertical pixels per meter of depth (2.5D tilt)
}

export function defaultCamera(): Camera {
  return { x: 0, z: 0, scale: 110, zSlope: 0.45 };
}

/** World (x, y, z) -> screen pixels; y up, z into the upper screen half. */
export function project(
  cam: Camera, width: number, height: number,
  x: number, y: number, z: number,
): [number, number] {
  const sx = width / 2 + (x - cam.x) * cam.scale;
  const sy = height * 0.62 - y * cam.scale - (z - cam.z) * cam.scale * cam.zSlope;
  return [sx, sy];
}

export function followRoot(cam: Camera, rootX: number, rootZ: number, blend = 0.08): void {
  cam.x += (rootX - cam.x) * blend;
  cam.z += (rootZ - cam.z) * blend;
}

export interface RenderSettings {
  showTrajectory: boolean;
  showAttention: boolean;
}

const BONE_COLOR = "#d8e1ff";
const JOINT_COLOR = "#8fa3ff";
const CONTACT_COLOR = "#ffd166";
const TRAJ_PAST = "#47566e";
const TRAJ_FUTURE = "#67e0a3";
const GROUND_COLOR = "#2b3242";

export function drawScene(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  frame: ServerFrame,
  welcome: ServerWelcome,
  cam: Camera,
  settings: RenderSettings,
): void {
  ctx.clearRect(0, 0, width, height);
  followRoot(cam, frame.root[0], frame.root[1]);

  // terrain heightline under the trajectory path
  ctx.strokeStyle = GROUND_COLOR;
  ctx.lineWidth = 2;
  ctx.beginPath();
  frame.traj_p.forEach(([px, pz], i) => {
    const [sx, sy] = project(cam, width, height, px, frame.traj_h[i], pz);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.stroke();

  if (settings.showTrajectory) {
    const half = frame.traj_p.length / 2;
    frame.traj_p.forEach(([px, pz], i) => {
      const [sx, sy] = project(cam, width, height, px, frame.traj_h[i], pz);
      ctx.fillStyle = i < half ? TRAJ_PAST : TRAJ_FUTURE;
      ctx.beginPath();
      ctx.arc(sx, sy, i === half ? 4 : 2.5, 0, Math.PI * 2);
      ctx.fill();
      const [dx, dz] = frame.traj_d[i];
      const [ex, ey] = project(
        cam, width, height, px + dx * 0.18, frame.traj_h[i], pz + dz * 0.18,
      );
      ctx.strokeStyle = ctx.fillStyle;
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.moveTo(sx, sy);
      ctx.lineTo(ex, ey);
      ctx.stroke();
    });
  }

  // bones then joints
  ctx.strokeStyle = BONE_COLOR;
  ctx.lineWidth = 2.5;
  welcome.parents.forEach((parent, j) => {
    if (parent < 0) return;
    const a = frame.joints[j];
    const b = frame.joints[parent];
    const [ax, ay] = project(cam, width, height, a[0], a[1], a[2]);
    const [bx, by] = project(cam, width, height, b[0], b[1], b[2]);
    ctx.beginPath();
    ctx.moveTo(ax, ay);
    ctx.lineTo(bx, by);
    ctx.stroke();
  });
  frame.joints.forEach((p, j) => {
    const [sx, sy] = project(cam, width, height, p[0], p[1], p[2]);
    const footSlot = welcome.foot_joints.indexOf(j);
    const grounded = footSlot >= 0 && frame.contacts[footSlot] === 1;
    ctx.fillStyle = grounded ? CONTACT_COLOR : JOINT_COLOR;
    ctx.beginPath();
    ctx.arc(sx, sy, grounded ? 4 : 2.5, 0, Math.PI * 2);
    ctx.fill();
  });

  if (settings.showAttention && frame.attention) {
    drawAttentionPanel(ctx, width, frame.attention, welcome.token_labels);
  }
}

/** Heads x tokens heatmap per decoder layer, rows already sum to 1. */
export function drawAttentionPanel(
  ctx: CanvasRenderingContext2D,
  width: number,
  attention: number[][][],
  labels: [string, number][],
): void {
  const cell = 14;
  const pad = 8;
  let top = pad;
  const left = width - pad - labels.length * cell;
  ctx.font = "10px monospace";
  attention.forEach((layer, li) => {
    ctx.fillStyle = "#9aa4b8";
    ctx.fillText(`decoder layer ${li}`, left, top + 9);
    top += 12;
    layer.forEach((row, h) => {
      row.forEach((w, t) => {
        const v = Math.max(0, Math.min(1, w));
        ctx.fillStyle = heat(v);
        ctx.fillRect(left + t * cell, top + h * cell, cell - 1, cell - 1);
      });
    });
    top += layer.length * cell + 6;
  });
  ctx.fillStyle = "#9aa4b8";
  labels.forEach(([scale, offset], t) => {
    ctx.save();
    ctx.translate(left + t * cell + 9, top + 2);
    ctx.rotate(Math.PI / 3);
    ctx.fillText(`${scale[0]}${offset}`, 0, 0);
    ctx.restore();
  });
}

export function heat(v: number): string {
  const r = Math.round(25 + 230 * v);
  const g = Math.round(30 + 120 * v);
  const b = Math.round(60 + 40 * (1 - v));
  return `rgb(${r},${g},${b})`;
}
