// Keyboard and gamepad mapping to command messages.
//
// Keyboard is hold-to-drive at fixed magnitudes; gamepad axes map
// proportionally onto the full actuator bounds and take precedence while
// displaced.  Lock/gear keys toggle and persist.

import { CmdBody } from "./protocol.js";

export const KEY_SPEED = 0.5;
export const KEY_STEER = 0.314;
export const V_BOUND = 1.0;
export const OMEGA_BOUND = 0.35;
export const GAMEPAD_DEADZONE = 0.08;

export interface GamepadAxes {
  steer: number; // axis 0: left stick x, + = right
  drive: number; // axis 1: left stick y, + = pulled back
}

export class InputState {
  private held = new Set<string>();
  dFront = true;
  dRear = true;
  lowGear = true;

  keyDown(code: string): "toggle" | "drive" | "other" {
    switch (code) {
      case "KeyF":
        this.dFront = !this.dFront;
        return "toggle";
      case "KeyR":
        this.dRear = !this.dRear;
        return "toggle";
      case "KeyG":
        this.lowGear = !this.lowGear;
        return "toggle";
      default:
        this.held.add(code);
        return DRIVE_KEYS.has(code) ? "drive" : "other";
    }
  }

  keyUp(code: string): void {
    this.held.delete(code);
  }

  clear(): void {
    this.held.clear();
  }

  keyboardCmd(): { v: number; omega: number } {
    let v = 0;
    let omega = 0;
    if (this.held.has("ArrowUp") || this.held.has("KeyW")) v += KEY_SPEED;
    if (this.held.has("ArrowDown") || this.held.has("KeyS")) v -= KEY_SPEED;
    if (this.held.has("ArrowLeft") || this.held.has("KeyA")) omega += KEY_STEER;
    if (this.held.has("ArrowRight") || this.held.has("KeyD")) omega -= KEY_STEER;
    return { v, omega };
  }

  cmd(pad: GamepadAxes | null): CmdBody {
    let { v, omega } = this.keyboardCmd();
    if (pad) {
      const drive = Math.abs(pad.drive) > GAMEPAD_DEADZONE ? -pad.drive : 0;
      const steer = Math.abs(pad.steer) > GAMEPAD_DEADZONE ? -pad.steer : 0;
      if (drive !== 0) v = clamp(drive, 1) * V_BOUND;
      if (steer !== 0) omega = clamp(steer, 1) * OMEGA_BOUND;
    }
    return {
      v,
      omega,
      d_front: this.dFront,
      d_rear: this.dRear,
      low_gear: this.lowGear,
    };
  }
}

const DRIVE_KEYS = new Set([
  "ArrowUp",
  "ArrowDown",
  "ArrowLeft",
  "ArrowRight",
  "KeyW",
  "KeyA",
  "KeyS",
  "KeyD",
]);

function clamp(x: number, bound: number): number {
  return Math.min(Math.max(x, -bound), bound);
}

export function readGamepad(): GamepadAxes | null {
  if (typeof navigator === "undefined" || !navigator.getGamepads) return null;
  const pads = navigator.getGamepads();
  for (const pad of pads) {
    if (pad && pad.connected && pad.axes.length >= 2) {
      return { steer: pad.axes[0], drive: pad.axes[1] };
    }
  }
  return null;
}
