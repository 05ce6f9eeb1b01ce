// View models and map drawing. Every rendered value traces back to a
// decoded telemetry field; nothing here invents state. The functions
// return plain data so they test without a DOM; drawMap takes a
// minimal 2D-context surface for the same reason.

import type { Sensors, Stability, Telemetry } from "./protocol.js";

export const STABILITY_RED_M = 0.02;
export const GAS_ALERT_PPM = 100;

export interface GaugeView {
  marginText: string;
  level: "ok" | "alert";
  flashing: boolean;
}

export function stabilityGauge(st: Stability): GaugeView {
  return {
    marginText: `${st.margin.toFixed(3)} m`,
    level: st.tipped || st.margin < STABILITY_RED_M ? "alert" : "ok",
    flashing: st.tipped,
  };
}

export interface SensorRow {
  label: string;
  value: string;
  hazard: boolean;
}

export function sensorPanel(s: Sensors,
                            gasAlertPpm = GAS_ALERT_PPM): SensorRow[] {
  return [
    {
      label: "ultrasonic",
      value: s.ultrasonic_m === null ? "out of range"
                                     : `${s.ultrasonic_m.toFixed(2)} m`,
      hazard: false,
    },
    { label: "temperature", value: `${s.temperature_c.toFixed(1)} °C`,
      hazard: false },
    { label: "humidity", value: `${s.humidity_pct.toFixed(0)} %`,
      hazard: false },
    { label: "gas", value: `${s.gas_ppm.toFixed(0)} ppm`,
      hazard: s.gas_ppm >= gasAlertPpm },
    { label: "compass", value: `${s.heading_deg.toFixed(1)}°`,
      hazard: false },
  ];
}

export function flipperText(angleDeg: number): string {
  const sign = angleDeg >= 0 ? "+" : "";
  return `${sign}${angleDeg.toFixed(1)}°`;
}

export type LinkStatus = "no-signal" | "live" | "stale";

export function linkStatus(ageMs: number | null,
                           telemetryHz: number): LinkStatus {
  if (ageMs === null) return "no-signal";
  return ageMs > 2 * 1000 / telemetryHz ? "stale" : "live";
}

export interface MapMarks {
  x: number;
  y: number;
  headingDeg: number;
  detections: string[];      // "person 0.67" style labels
}

export function mapMarks(t: Telemetry): MapMarks {
  return {
    x: t.chassis.x,
    y: t.chassis.y,
    headingDeg: t.chassis.heading,
    detections: t.detections.map(([label, conf]) =>
      `${label} ${conf.toFixed(2)}`),
  };
}

// The part of CanvasRenderingContext2D the map actually uses, so a
// recording fake can stand in during tests.
export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

/**
 * Top-down map: a robot-centered window `viewHalf` meters to each
 * edge, meter grid, breadcrumb trail, heading wedge, and the current
 * detection labels. Telemetry carries no detection coordinates, so
 * labels are listed in the corner instead of being placed in the
 * world; the map never fabricates a position.
 */
export function drawMap(ctx: Ctx2D, widthPx: number, heightPx: number,
                        marks: MapMarks | null,
                        trail: ReadonlyArray<{ x: number; y: number }> = [],
                        viewHalf = 3): void {
  ctx.clearRect(0, 0, widthPx, heightPx);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, widthPx, heightPx);
  if (marks === null) {
    ctx.fillStyle = "#6b7787";
    ctx.font = "14px system-ui, sans-serif";
    ctx.fillText("no telemetry", widthPx / 2 - 40, heightPx / 2);
    return;
  }

  const scale = widthPx / (2 * viewHalf);
  const px = (wx: number) => (wx - marks.x) * scale + widthPx / 2;
  const py = (wy: number) => heightPx / 2 - (wy - marks.y) * scale;

  ctx.strokeStyle = "#223041";
  ctx.lineWidth = 1;
  const x0 = Math.ceil(marks.x - viewHalf);
  const y0 = Math.ceil(marks.y - viewHalf);
  for (let gx = x0; gx <= marks.x + viewHalf; gx += 1) {
    ctx.beginPath();
    ctx.moveTo(px(gx), 0);
    ctx.lineTo(px(gx), heightPx);
    ctx.stroke();
  }
  for (let gy = y0; gy <= marks.y + viewHalf; gy += 1) {
    ctx.beginPath();
    ctx.moveTo(0, py(gy));
    ctx.lineTo(widthPx, py(gy));
    ctx.stroke();
  }

  if (trail.length > 1) {
    ctx.strokeStyle = "#3d5a80";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(px(trail[0]!.x), py(trail[0]!.y));
    for (const p of trail.slice(1)) ctx.lineTo(px(p.x), py(p.y));
    ctx.stroke();
  }

  // chassis dot plus a heading wedge
  const hx = px(marks.x);
  const hy = py(marks.y);
  const rad = (marks.headingDeg * Math.PI) / 180;
  ctx.fillStyle = "#e0fbfc";
  ctx.beginPath();
  ctx.arc(hx, hy, 6, 0, 2 * Math.PI);
  ctx.fill();
  ctx.strokeStyle = "#ee6c4d";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(hx, hy);
  ctx.lineTo(hx + 18 * Math.cos(rad), hy - 18 * Math.sin(rad));
  ctx.stroke();

  ctx.fillStyle = "#98c1d9";
  ctx.font = "13px system-ui, sans-serif";
  marks.detections.forEach((label, i) => {
    ctx.fillText(label, 8, 18 + 16 * i);
  });
}
