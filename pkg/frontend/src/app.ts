/** Browser entry point: wires input, networking, state and rendering.
 *
 * Configuration via query parameters:
 *   ?ws=ws://host:port   service address (default ws://127.0.0.1:8765)
 *   &attention=1         opt in to attention maps
 */

import { controlFromInput, GAITS, handleKeyDown, handleKeyUp, newInputState } from "./input.js";
import { MotionClient, type SocketLike } from "./net.js";
import { controlMessage } from "./protocol.js";
import { defaultCamera, drawScene } from "./render.js";
import { ClientState } from "./state.js";

const SEND_HZ = 30;

function start(): void {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("ws") ?? "ws://127.0.0.1:8765";
  const attention = params.get("attention") === "1";

  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const hud = document.getElementById("hud")!;
  const banner = document.getElementById("banner")!;

  const state = new ClientState();
  state.showAttention = attention;
  const input = newInputState();
  const camera = defaultCamera();

  window.addEventListener("keydown", (ev) => {
    if (handleKeyDown(input, ev.key)) ev.preventDefault();
    if (ev.key === "t" || ev.key === "T") state.showTrajectory = !state.showTrajectory;
  });
  window.addEventListener("keyup", (ev) => {
    if (handleKeyUp(input, ev.key)) ev.preventDefault();
  });

  const client = new MotionClient(
    url,
    attention,
    {
      onWelcome: (welcome) => {
        state.welcome = welcome;
        state.mailbox.resetIndexWatermark();
        state.errorBanner = null;
        banner.style.display = "none";
      },
      onFrame: (frame) => state.noteFrame(frame, performance.now()),
      onStatus: (status) => {
        state.status = status as ClientState["status"];
      },
      onFatal: (detail) => {
        state.errorBanner = detail;
        banner.textContent = detail;
        banner.style.display = "block";
      },
    },
    (u) => new WebSocket(u) as unknown as SocketLike,
  );
  client.connect();

  setInterval(() => {
    const control = controlFromInput(input);
    client.send(
      controlMessage(control.dirX, control.dirZ, control.speed, control.gait, performance.now()),
    );
  }, 1000 / SEND_HZ);

  function frameLoop(): void {
    const fresh = state.mailbox.take();
    if (fresh !== null) state.lastFrame = fresh;
    if (state.lastFrame && state.welcome) {
      drawScene(ctx, canvas.width, canvas.height, state.lastFrame, state.welcome, camera, {
        showTrajectory: state.showTrajectory,
        showAttention: state.showAttention,
      });
      const control = controlFromInput(input);
      hud.textContent = [
        `status: ${state.status}`,
        `frame: ${state.lastFrame.index}`,
        `gait: ${GAITS[state.lastFrame.gait]} (sending ${GAITS[control.gait]})`,
        `fps: ${state.fps.toFixed(0)}  latency: ${state.latencyMs.toFixed(0)} ms`,
        `recv: ${state.mailbox.received}  drop: ${state.mailbox.dropped}`,
        `keys: WASD move, Shift jog, Space jump, C crouch, 1-5 gait, T trajectory`,
      ].join("\n");
    } else {
      hud.textContent = `status: ${state.status}\nwaiting for ${url}`;
    }
    requestAnimationFrame(frameLoop);
  }
  requestAnimationFrame(frameLoop);
}

window.addEventListener("DOMContentLoaded", start);
