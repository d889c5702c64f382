/** WebSocket client with handshake and bounded-backoff reconnect.
 *
 * Protocol-version mismatches are terminal (visible banner, no retry);
 * transport drops reconnect automatically with exponential backoff capped
 * at 5 s, so a restarted server picks the session back up within a few
 * seconds.
 */

import {
  decodeMessage,
  encodeMessage,
  helloMessage,
  ProtocolError,
  type ClientMessage,
  type ServerFrame,
  type ServerWelcome,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientEvents {
  onWelcome?: (welcome: ServerWelcome) => void;
  onFrame?: (frame: ServerFrame) => void;
  onStatus?: (status: string, detail?: string) => void;
  onFatal?: (detail: string) => void;
}

export const BACKOFF_INITIAL_MS = 500;
export const BACKOFF_MAX_MS = 5000;

export class MotionClient {
  private socket: SocketLike | null = null;
  private backoffMs = BACKOFF_INITIAL_MS;
  private stopped = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  welcomed = false;

  constructor(
    private url: string,
    private attention: boolean,
    private events: ClientEvents,
    private makeSocket: SocketFactory,
    private schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout,
  ) {}

  connect(): void {
    if (this.stopped) return;
    this.events.onStatus?.(this.welcomed ? "reconnecting" : "connecting");
    this.welcomed = false;
    const socket = this.makeSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      socket.send(encodeMessage(helloMessage(this.attention)));
    };
    socket.onmessage = (ev) => this.handleMessage(String(ev.data));
    socket.onclose = () => this.handleDrop();
    socket.onerror = () => {
      /* onclose follows */
    };
  }

  private handleMessage(data: string): void {
    let msg;
    try {
      msg = decodeMessage(data);
    } catch (err) {
      if (err instanceof ProtocolError) {
        // wrong version or incompatible peer: stop for good, show a banner
        this.fatal(`protocol mismatch: ${err.message}`);
        return;
      }
      throw err;
    }
    switch (msg.type) {
      case "welcome":
        this.welcomed = true;
        this.backoffMs = BACKOFF_INITIAL_MS;
        this.events.onStatus?.("connected");
        this.events.onWelcome?.(msg);
        break;
      case "frame":
        this.events.onFrame?.(msg);
        break;
      case "error":
        this.fatal(`server error ${msg.code}: ${msg.text}`);
        break;
      default:
        this.fatal(`unexpected ${msg.type} from server`);
    }
  }

  private handleDrop(): void {
    if (this.stopped) return;
    this.socket = null;
    this.events.onStatus?.("reconnecting", `retry in ${this.backoffMs} ms`);
    this.timer = this.schedule(() => this.connect(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_MAX_MS);
  }

  private fatal(detail: string): void {
    this.stopped = true;
    this.events.onStatus?.("failed", detail);
    this.events.onFatal?.(detail);
    this.socket?.close();
  }

  send(msg: ClientMessage): boolean {
    if (!this.socket || !this.welcomed) return false;
    try {
      this.socket.send(encodeMessage(msg));
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }
}
