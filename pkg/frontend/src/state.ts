/** Client-side session state: newest-frame mailbox, monotone render
 * accounting and connection status. Rendering never mutates simulation
 * state; it only reads decoded frames. */

import type { ServerFrame, ServerWelcome } from "./protocol.js";

export type ConnectionStatus =
  | "connecting"
  | "connected"
  | "reconnecting"
  | "failed"; // unrecoverable (e.g. protocol mismatch): no silent retry

/** Holds only the newest frame between render ticks. */
export class FrameMailbox {
  private latest: ServerFrame | null = null;
  received = 0;
  dropped = 0;
  rendered = 0;
  lastRenderedIndex = -1;

  put(frame: ServerFrame): void {
    if (this.latest !== null) this.dropped += 1;
    this.latest = frame;
    this.received += 1;
  }

  /** Newest undrawn frame, or null; indices handed out are monotone. */
  take(): ServerFrame | null {
    const frame = this.latest;
    this.latest = null;
    if (frame === null) return null;
    if (frame.index <= this.lastRenderedIndex) {
      this.dropped += 1;
      return null; // stale (e.g. after reconnect); never render backwards
    }
    this.lastRenderedIndex = frame.index;
    this.rendered += 1;
    return frame;
  }

  resetIndexWatermark(): void {
    this.lastRenderedIndex = -1; // a fresh session restarts indices at 0
  }
}

export class ClientState {
  status: ConnectionStatus = "connecting";
  errorBanner: string | null = null;
  welcome: ServerWelcome | null = null;
  mailbox = new FrameMailbox();
  lastFrame: ServerFrame | null = null;
  showTrajectory = true;
  showAttention = false;
  // rolling stats
  fps = 0;
  latencyMs = 0;
  private frameTimes: number[] = [];

  noteFrame(frame: ServerFrame, nowMs: number): void {
    this.mailbox.put(frame);
    this.frameTimes.push(nowMs);
    while (this.frameTimes.length > 0 && nowMs - this.frameTimes[0] > 2000) {
      this.frameTimes.shift();
    }
    this.fps = this.frameTimes.length / 2;
    if (frame.echo_time > 0) {
      this.latencyMs = Math.max(0, nowMs - frame.echo_time);
    }
  }
}
