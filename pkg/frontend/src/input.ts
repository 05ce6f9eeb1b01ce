// Keyboard (or gamepad button) state to 6-channel mapping. The
// channels mean exactly what the robot's mixer expects:
//   0 throttle  1 steer  2 flipper rate  3 arm joint select
//   4 arm joint move  5 gripper (past +0.5 close, past -0.5 open)
// Neutral input is all zeros. The joint-select channel is only
// driven while an arm-move key is held, so an idle console always
// emits a fully neutral command.

import type { Channels } from "./protocol.js";

export interface Bindings {
  forward: string;
  back: string;
  left: string;
  right: string;
  flipperUp: string;
  flipperDown: string;
  armNext: string;
  armPrev: string;
  armPlus: string;
  armMinus: string;
  gripClose: string;
  gripOpen: string;
}

export const DEFAULT_BINDINGS: Bindings = {
  forward: "w",
  back: "s",
  left: "a",
  right: "d",
  flipperUp: "r",
  flipperDown: "f",
  armNext: "]",
  armPrev: "[",
  armPlus: "=",
  armMinus: "-",
  gripClose: "e",
  gripOpen: "q",
};

/**
 * Parse a `?bindings=` value like "forward:i,back:k" on top of the
 * defaults. Unknown actions and malformed entries are ignored; the
 * console must come up with a usable map no matter what the URL says.
 */
export function parseBindings(text: string | null | undefined): Bindings {
  const out = { ...DEFAULT_BINDINGS };
  if (!text) return out;
  for (const part of text.split(",")) {
    const sep = part.indexOf(":");
    if (sep <= 0) continue;
    const action = part.slice(0, sep).trim() as keyof Bindings;
    const key = part.slice(sep + 1).trim().toLowerCase();
    if (key && action in out) out[action] = key;
  }
  return out;
}

// Bucket centers of the robot's six equal joint-select intervals
// over [-1, 1]: value v selects joint floor((v + 1) * 3).
const JOINT_SELECT = [-5 / 6, -1 / 2, -1 / 6, 1 / 6, 1 / 2, 5 / 6] as const;

export class InputTracker {
  private down = new Set<string>();
  private joint = 0;          // selected arm joint, 0..5

  constructor(readonly bindings: Bindings = DEFAULT_BINDINGS) {}

  get selectedJoint(): number {
    return this.joint;
  }

  keyDown(key: string): void {
    const k = key.toLowerCase();
    // selection cycles on the press edge, not while held
    if (k === this.bindings.armNext && !this.down.has(k)) {
      this.joint = (this.joint + 1) % 6;
    } else if (k === this.bindings.armPrev && !this.down.has(k)) {
      this.joint = (this.joint + 5) % 6;
    }
    this.down.add(k);
  }

  keyUp(key: string): void {
    this.down.delete(key.toLowerCase());
  }

  releaseAll(): void {
    this.down.clear();
  }

  private axis(plus: string, minus: string): number {
    return (this.down.has(plus) ? 1 : 0) - (this.down.has(minus) ? 1 : 0);
  }

  channels(): Channels {
    const b = this.bindings;
    const armMove = this.axis(b.armPlus, b.armMinus);
    return [
      this.axis(b.forward, b.back),
      this.axis(b.right, b.left),
      this.axis(b.flipperUp, b.flipperDown),
      armMove === 0 ? 0 : JOINT_SELECT[this.joint]!,
      armMove,
      this.axis(b.gripClose, b.gripOpen),
    ];
  }
}

export function isNeutral(ch: Channels): boolean {
  return ch.every((v) => v === 0);
}

export function sameChannels(a: Channels, b: Channels): boolean {
  return a.every((v, i) => v === b[i]);
}
