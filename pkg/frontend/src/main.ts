// Browser entry point. Everything testable lives in the other
// modules; this file only wires DOM events, the send pump, and the
// render loop together.

import { parseBindings, InputTracker } from "./input.js";
import { ConsoleSession } from "./session.js";
import {
  drawMap,
  flipperText,
  linkStatus,
  mapMarks,
  sensorPanel,
  stabilityGauge,
} from "./render.js";

const params = new URLSearchParams(window.location.search);
const endpoint = params.get("endpoint") ?? "ws://127.0.0.1:8765";
const bindings = parseBindings(params.get("bindings"));
const telemetryHz = Number(params.get("telemetry_hz") ?? "10") || 10;

const $ = (id: string) => document.getElementById(id)!;
const canvas = $("map") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

const tracker = new InputTracker(bindings);
const session = new ConsoleSession({
  endpoint,
  makeSocket: (url) => new WebSocket(url),
  telemetryHz,
});

const trail: { x: number; y: number }[] = [];
session.onTelemetry = (t) => {
  const last = trail[trail.length - 1];
  if (!last || Math.hypot(t.chassis.x - last.x, t.chassis.y - last.y) > 0.02) {
    trail.push({ x: t.chassis.x, y: t.chassis.y });
    if (trail.length > 400) trail.shift();
  }
};
session.onState = (s) => {
  $("state").textContent = s;
  $("retry").style.display = s === "disconnected" ? "inline-block" : "none";
  document.body.dataset.role = s;
};
session.onError = (what) => {
  $("banner").textContent = `${what} (${endpoint})`;
};

window.addEventListener("keydown", (ev) => {
  if (!ev.repeat) tracker.keyDown(ev.key);
});
window.addEventListener("keyup", (ev) => tracker.keyUp(ev.key));
window.addEventListener("blur", () => tracker.releaseAll());
$("retry").addEventListener("click", () => {
  $("banner").textContent = "";
  session.connect();
});

// left stick fills axes the keyboard leaves neutral; buttons 0/1 grip
function mergeGamepad(ch: ReturnType<typeof tracker.channels>): void {
  const pad = navigator.getGamepads?.()[0];
  if (!pad) return;
  const dead = (v: number) => (Math.abs(v) < 0.15 ? 0 : v);
  if (ch[0] === 0) ch[0] = dead(-(pad.axes[1] ?? 0));
  if (ch[1] === 0) ch[1] = dead(pad.axes[0] ?? 0);
  if (ch[5] === 0 && pad.buttons[0]?.pressed) ch[5] = 1;
  if (ch[5] === 0 && pad.buttons[1]?.pressed) ch[5] = -1;
}

session.startTicking(() => {
  const ch = tracker.channels();
  mergeGamepad(ch);
  return ch;
});

function renderLoop(): void {
  const t = session.lastTelemetry;
  drawMap(ctx, canvas.width, canvas.height, t ? mapMarks(t) : null, trail);

  if (t) {
    const gauge = stabilityGauge(t.stability);
    const g = $("gauge");
    g.textContent = `stability ${gauge.marginText}`;
    g.className = gauge.level;
    g.style.visibility =
      gauge.flashing && Math.floor(Date.now() / 300) % 2 === 0
        ? "hidden"
        : "visible";
    $("tip-alert").style.display = t.stability.tipped ? "block" : "none";

    $("sensors").innerHTML = sensorPanel(t.sensors)
      .map((r) => `<div class="row${r.hazard ? " hazard" : ""}">` +
                  `<span>${r.label}</span><span>${r.value}</span></div>`)
      .join("");
    $("flipper").textContent = `flippers ${flipperText(t.chassis.flipper_angle)}`;
    $("mission").textContent = t.mission_status;
  }

  const link = linkStatus(session.telemetryAgeMs(), session.telemetryHz);
  const linkEl = $("link");
  linkEl.textContent = link;
  linkEl.className = link;
  $("diag").textContent =
    `dropped ${session.droppedFrames} · rejected ${session.rejectedCount}`;
  requestAnimationFrame(renderLoop);
}

session.connect();
requestAnimationFrame(renderLoop);
