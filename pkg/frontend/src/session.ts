// Connection state machine and command pump. The session owns one
// socket at a time and is stateless across reconnects; all physics
// and authority live robot-side.

import {
  Channels,
  CommandRejected,
  NEUTRAL,
  Telemetry,
  decodeServerFrame,
  encodeCommand,
  encodeHeartbeat,
} from "./protocol.js";
import { isNeutral, sameChannels } from "./input.js";

export type ConnectionState =
  | "disconnected"
  | "connected"
  | "authoritative"
  | "observer";

// Structural subset satisfied by both the browser WebSocket and ws.
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: string, listener: (ev: any) => void): void;
}

export interface SessionOptions {
  endpoint: string;
  makeSocket: (url: string) => SocketLike;
  /** Command/heartbeat pump rate; capped at 50 Hz. Default 20. */
  sendRateHz?: number;
  /** Expected telemetry rate, for staleness only. Default 10. */
  telemetryHz?: number;
  now?: () => number;
}

const MAX_SEND_RATE_HZ = 50;
const STALE_PERIODS = 2;

export class ConsoleSession {
  readonly endpoint: string;
  readonly sendRateHz: number;
  readonly telemetryHz: number;

  state: ConnectionState = "disconnected";
  seq = 0;
  droppedFrames = 0;
  rejectedCount = 0;
  lastRejected: CommandRejected | null = null;
  telemetryCount = 0;
  lastTelemetry: Telemetry | null = null;

  onTelemetry?: (t: Telemetry) => void;
  onState?: (s: ConnectionState) => void;
  onRejected?: (r: CommandRejected) => void;
  onError?: (what: string) => void;

  private readonly makeSocket: (url: string) => SocketLike;
  private readonly now: () => number;
  private socket: SocketLike | null = null;
  private epochMs = 0;
  private lastTelemetryAtMs: number | null = null;
  private lastSent: Channels = NEUTRAL;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(opts: SessionOptions) {
    this.endpoint = opts.endpoint;
    this.sendRateHz = Math.min(opts.sendRateHz ?? 20, MAX_SEND_RATE_HZ);
    this.telemetryHz = opts.telemetryHz ?? 10;
    this.makeSocket = opts.makeSocket;
    this.now = opts.now ?? Date.now;
  }

  connect(): void {
    this.closeSocket();
    this.epochMs = this.now();
    this.lastTelemetryAtMs = null;
    this.lastSent = NEUTRAL;
    let sock: SocketLike;
    try {
      sock = this.makeSocket(this.endpoint);
    } catch (err) {
      this.setState("disconnected");
      this.onError?.(`connect failed: ${String(err)}`);
      return;
    }
    this.socket = sock;
    sock.addEventListener("open", () => {
      if (this.socket === sock) this.setState("connected");
    });
    sock.addEventListener("message", (ev: { data: unknown }) => {
      if (this.socket === sock) this.handleFrame(String(ev.data));
    });
    sock.addEventListener("close", () => {
      if (this.socket === sock) {
        this.socket = null;
        this.setState("disconnected");
      }
    });
    sock.addEventListener("error", () => {
      if (this.socket === sock) this.onError?.("socket error");
    });
  }

  close(): void {
    this.stopTicking();
    this.closeSocket();
    this.setState("disconnected");
  }

  /**
   * One pump step. Authoritative sessions send a command whenever the
   * sticks are active or just changed, and a heartbeat when neutral
   * and unchanged; everyone else sends nothing.
   */
  tick(input: Channels): void {
    if (this.state !== "authoritative" || !this.socket) return;
    const ts = Math.max(0, Math.round(this.now() - this.epochMs));
    if (isNeutral(input) && sameChannels(input, this.lastSent)) {
      this.socket.send(encodeHeartbeat(this.seq++, ts));
      return;
    }
    const ch = input.map((v) => Math.min(1, Math.max(-1, v))) as Channels;
    this.socket.send(encodeCommand(this.seq++, ts, ch));
    this.lastSent = ch;
  }

  startTicking(getInput: () => Channels): void {
    this.stopTicking();
    this.timer = setInterval(() => this.tick(getInput()),
                             1000 / this.sendRateHz);
  }

  stopTicking(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Milliseconds since the last telemetry frame, or null before one. */
  telemetryAgeMs(): number | null {
    return this.lastTelemetryAtMs === null
      ? null
      : this.now() - this.lastTelemetryAtMs;
  }

  stale(): boolean {
    const age = this.telemetryAgeMs();
    return age !== null && age > STALE_PERIODS * 1000 / this.telemetryHz;
  }

  private handleFrame(raw: string): void {
    const frame = decodeServerFrame(raw);
    if (frame === null) {
      this.droppedFrames += 1;
      return;
    }
    if (frame.type === "authority") {
      this.lastSent = NEUTRAL;
      this.setState(frame.role);
    } else if (frame.type === "rejected") {
      this.rejectedCount += 1;
      this.lastRejected = frame;
      this.onRejected?.(frame);
    } else {
      this.telemetryCount += 1;
      this.lastTelemetry = frame;
      this.lastTelemetryAtMs = this.now();
      this.onTelemetry?.(frame);
    }
  }

  private setState(s: ConnectionState): void {
    if (this.state !== s) {
      this.state = s;
      this.onState?.(s);
    }
  }

  private closeSocket(): void {
    if (this.socket) {
      const sock = this.socket;
      this.socket = null;
      try {
        sock.close();
      } catch {
        // already gone
      }
    }
  }
}
