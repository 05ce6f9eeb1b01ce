// Wire protocol v1, the console side. One JSON object per WebSocket
// frame; every frame carries v: 1. Outbound frames are emitted with
// sorted keys to match the robot's canonical encoding.

export const PROTOCOL_VERSION = 1;

export type Channels = [number, number, number, number, number, number];

export const NEUTRAL: Channels = [0, 0, 0, 0, 0, 0];

export interface ChassisPose {
  x: number;
  y: number;
  heading: number;
  pitch: number;
  roll: number;
  flipper_angle: number;
}

export interface Stability {
  margin: number;
  tipped: boolean;
}

export interface Sensors {
  tick: number;
  ultrasonic_m: number | null;
  temperature_c: number;
  humidity_pct: number;
  gas_ppm: number;
  heading_deg: number;
}

export interface Telemetry {
  type: "telemetry";
  seq: number;
  tick: number;
  chassis: ChassisPose;
  stability: Stability;
  sensors: Sensors;
  detections: [string, number][];
  mission_status: string;
}

export interface AuthorityNotice {
  type: "authority";
  role: "authoritative" | "observer";
}

export interface CommandRejected {
  type: "rejected";
  seq: number;
  reason: string;
}

export type ServerFrame = Telemetry | AuthorityNotice | CommandRejected;

export function encodeCommand(seq: number, timestampMs: number,
                              channels: Channels): string {
  // keys in sorted order: channels, seq, timestamp_ms, type, v
  return JSON.stringify({
    channels,
    seq,
    timestamp_ms: timestampMs,
    type: "command",
    v: PROTOCOL_VERSION,
  });
}

export function encodeHeartbeat(seq: number, timestampMs: number): string {
  return JSON.stringify({
    seq,
    timestamp_ms: timestampMs,
    type: "heartbeat",
    v: PROTOCOL_VERSION,
  });
}

const isNum = (v: unknown): v is number =>
  typeof v === "number" && Number.isFinite(v);
const isInt = (v: unknown): v is number => isNum(v) && Number.isInteger(v);

function readPose(v: unknown): ChassisPose | null {
  if (typeof v !== "object" || v === null) return null;
  const o = v as Record<string, unknown>;
  const fields = ["x", "y", "heading", "pitch", "roll", "flipper_angle"];
  if (!fields.every((f) => isNum(o[f]))) return null;
  return {
    x: o.x as number, y: o.y as number, heading: o.heading as number,
    pitch: o.pitch as number, roll: o.roll as number,
    flipper_angle: o.flipper_angle as number,
  };
}

function readStability(v: unknown): Stability | null {
  if (typeof v !== "object" || v === null) return null;
  const o = v as Record<string, unknown>;
  if (!isNum(o.margin) || typeof o.tipped !== "boolean") return null;
  return { margin: o.margin, tipped: o.tipped };
}

function readSensors(v: unknown): Sensors | null {
  if (typeof v !== "object" || v === null) return null;
  const o = v as Record<string, unknown>;
  if (!isInt(o.tick)) return null;
  if (o.ultrasonic_m !== null && !isNum(o.ultrasonic_m)) return null;
  const nums = ["temperature_c", "humidity_pct", "gas_ppm", "heading_deg"];
  if (!nums.every((f) => isNum(o[f]))) return null;
  return {
    tick: o.tick,
    ultrasonic_m: o.ultrasonic_m as number | null,
    temperature_c: o.temperature_c as number,
    humidity_pct: o.humidity_pct as number,
    gas_ppm: o.gas_ppm as number,
    heading_deg: o.heading_deg as number,
  };
}

function readDetections(v: unknown): [string, number][] | null {
  if (!Array.isArray(v)) return null;
  const out: [string, number][] = [];
  for (const d of v) {
    if (!Array.isArray(d) || d.length !== 2) return null;
    if (typeof d[0] !== "string" || !isNum(d[1])) return null;
    out.push([d[0], d[1]]);
  }
  return out;
}

/**
 * Parse one robot-to-console frame. Returns null for anything
 * malformed or unexpected; the caller drops the frame and bumps its
 * diagnostics counter.
 */
export function decodeServerFrame(raw: string): ServerFrame | null {
  let body: unknown;
  try {
    body = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof body !== "object" || body === null) return null;
  const o = body as Record<string, unknown>;
  if (o.v !== PROTOCOL_VERSION) return null;

  if (o.type === "authority") {
    if (o.role !== "authoritative" && o.role !== "observer") return null;
    return { type: "authority", role: o.role };
  }
  if (o.type === "rejected") {
    if (!isInt(o.seq) || typeof o.reason !== "string") return null;
    return { type: "rejected", seq: o.seq, reason: o.reason };
  }
  if (o.type === "telemetry") {
    if (!isInt(o.seq) || !isInt(o.tick)) return null;
    const chassis = readPose(o.chassis);
    const stability = readStability(o.stability);
    const sensors = readSensors(o.sensors);
    const detections = readDetections(o.detections);
    if (!chassis || !stability || !sensors || !detections) return null;
    if (typeof o.mission_status !== "string") return null;
    return {
      type: "telemetry", seq: o.seq, tick: o.tick,
      chassis, stability, sensors, detections,
      mission_status: o.mission_status,
    };
  }
  return null;
}
