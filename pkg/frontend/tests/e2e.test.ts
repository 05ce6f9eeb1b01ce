// Closed-loop test against the real simulator: spawn `sim run
// --listen`, steer the flat-room mission to success with scripted
// keyboard input, and check the authority rule with a second client.

import { spawn, ChildProcess } from "node:child_process";
import { fileURLToPath } from "node:url";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { WebSocket } from "ws";

import { InputTracker } from "../src/input.js";
import { ConsoleSession } from "../src/session.js";
import { encodeCommand, decodeServerFrame } from "../src/protocol.js";
import { mapMarks, sensorPanel, stabilityGauge } from "../src/render.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const SCENARIO = path.resolve(HERE, "../../scenarios/flat_room.scn");

// Survivor prop at x = 3.8, home gripper 0.1 m ahead of the chassis,
// grasp epsilon 0.05 m: stop inside chassis x in (3.65, 3.75). Full
// throttle is 0.5 m/s and the pump runs at 20 Hz, so braking costs
// at most ~0.04 m after the threshold crossing.
const STOP_X = 3.66;

function withTimeout<T>(p: Promise<T>, ms: number,
                        context: () => string): Promise<T> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`timed out: ${context()}`)), ms);
    p.then((v) => { clearTimeout(timer); resolve(v); },
           (e) => { clearTimeout(timer); reject(e); });
  });
}

let child: ChildProcess;
let port = 0;
let exited: Promise<number | null>;

beforeAll(async () => {
  child = spawn("python3",
    ["-m", "rescuesim.cli", "run", "--scenario", SCENARIO,
     "--listen", "127.0.0.1:0", "--telemetry-hz", "50"],
    { cwd: path.resolve(HERE, "../..") });
  exited = new Promise((resolve) => child.on("exit", (code) => resolve(code)));

  let stdout = "";
  let stderr = "";
  child.stderr!.on("data", (d) => { stderr += String(d); });
  port = await withTimeout(new Promise<number>((resolve) => {
    child.stdout!.on("data", (d) => {
      stdout += String(d);
      const m = stdout.match(/listening on ws:\/\/127\.0\.0\.1:(\d+)/);
      if (m) resolve(Number(m[1]));
    });
  }), 20_000, () => `no listen banner; stdout=${stdout} stderr=${stderr}`);
}, 30_000);

afterAll(async () => {
  if (child && child.exitCode === null) {
    child.kill("SIGKILL");
    await exited;
  }
});

describe("operator console against a live service", () => {
  it("drives the flat-room grasp mission to success", async () => {
    const tracker = new InputTracker();
    const session = new ConsoleSession({
      endpoint: `ws://127.0.0.1:${port}`,
      makeSocket: (url) => new WebSocket(url) as never,
      telemetryHz: 50,
    });

    let renders = 0;
    let phase = "drive";
    let lastStatus = "(none yet)";
    let lastX = NaN;
    let firstFrameX: number | null = null;

    const success = new Promise<void>((resolve, reject) => {
      session.onTelemetry = (t) => {
        // the real render path: view models built per frame
        stabilityGauge(t.stability);
        sensorPanel(t.sensors);
        mapMarks(t);
        renders += 1;

        lastStatus = t.mission_status;
        lastX = t.chassis.x;
        if (firstFrameX === null) firstFrameX = t.chassis.x;
        if (t.mission_status.startsWith("fail")) {
          reject(new Error(`mission failed: ${t.mission_status}`));
          return;
        }
        if (phase === "drive" && t.chassis.x >= STOP_X) {
          tracker.releaseAll();             // sends the all-zero command
          tracker.keyDown("e");             // then close the gripper
          phase = "grip";
        } else if (phase === "grip" && t.mission_status.includes("4/4")) {
          tracker.releaseAll();
          tracker.keyDown("s");             // reverse toward the start
          phase = "back";
        } else if (phase === "back" && t.mission_status === "success") {
          tracker.releaseAll();
          phase = "done";
          resolve();
        }
      };
    });

    const authoritative = new Promise<void>((resolve) => {
      session.onState = (s) => { if (s === "authoritative") resolve(); };
    });
    session.connect();
    await withTimeout(authoritative, 10_000, () => "no authority grant");

    // second console: observer, its commands bounce, telemetry fans out
    const ws2 = new WebSocket(`ws://127.0.0.1:${port}`);
    let role = "";
    let rejectedSeq = -1;
    let sawTelemetry = false;
    let settleObserver: () => void;
    const observerDone = new Promise<void>((r) => { settleObserver = r; });
    ws2.addEventListener("message", (ev) => {
      const frame = decodeServerFrame(String(ev.data));
      if (frame?.type === "authority") {
        role = frame.role;
        ws2.send(encodeCommand(77, 0, [1, 0, 0, 0, 0, 0]));
      } else if (frame?.type === "telemetry") {
        sawTelemetry = true;
      } else if (frame?.type === "rejected") {
        rejectedSeq = frame.seq;
      }
      if (role && rejectedSeq >= 0 && sawTelemetry) settleObserver();
    });
    await withTimeout(observerDone, 10_000, () =>
      `observer handshake incomplete: role=${role} ` +
      `rejected=${rejectedSeq} telemetry=${sawTelemetry}`);
    ws2.close();
    expect(role).toBe("observer");
    expect(rejectedSeq).toBe(77);

    // neutral console: the robot must not have moved yet
    expect(firstFrameX === null || firstFrameX === 1.5).toBe(true);

    const startedAt = Date.now();
    session.startTicking(() => tracker.channels());
    tracker.keyDown("w");
    await withTimeout(success, 60_000,
      () => `phase=${phase} x=${lastX.toFixed(3)} status=${lastStatus}`);

    // the robot stopped inside the grasp window, not past it
    expect(lastX).toBeLessThan(3.85);
    expect(session.lastTelemetry?.mission_status).toBe("success");

    // render rate over the whole closed loop: at least 10 updates/s
    const elapsedS = (Date.now() - startedAt) / 1000;
    expect(renders / elapsedS).toBeGreaterThanOrEqual(10);

    session.stopTicking();
    session.close();

    // a success followed by shutdown exits 0
    child.kill("SIGTERM");
    expect(await withTimeout(exited, 10_000, () => "no exit")).toBe(0);
  }, 120_000);
});
