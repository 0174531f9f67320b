// Wire protocol shared with the simulation service (see PROTOCOL.md at the
// repository root).  Payloads are "<type>" or "<type> <json>"; over
// WebSocket each payload rides in one text message, over raw TCP it is
// prefixed with its byte length and a newline.  Every outbound message is
// validated against these schemas before send.

export interface Pose {
  x: number;
  y: number;
  z: number;
  roll: number;
  pitch: number;
  yaw: number;
}

export interface GroundSpeed {
  dx: number;
  dy: number;
  z: number;
  flag_speed: boolean;
  flag_z: boolean;
}

export interface CmdBody {
  v: number;
  omega: number;
  d_front: boolean;
  d_rear: boolean;
  low_gear: boolean;
}

export interface StateBody {
  t: number;
  pose: Pose;
  wheel_speeds: number[];
  ground_speed: GroundSpeed;
  contacts: boolean[];
  status: string;
  fsm: string | null;
  recording?: boolean;
}

export interface DepthBody {
  width: number;
  height: number;
  data: string; // base64 of big-endian uint16 millimeters
}

export interface MapBody extends DepthBody {
  resolution: number;
  origin_x: number;
  origin_y: number;
}

export type ServerMsg =
  | { type: "state"; body: StateBody }
  | { type: "depth"; body: DepthBody }
  | { type: "map"; body: MapBody }
  | { type: "ack"; body: { for: string; path?: string } }
  | { type: "err"; body: { reason: string } };

export type ClientMsg =
  | { type: "reset"; body: { seed?: number; difficulty?: string } }
  | { type: "cmd"; body: CmdBody }
  | { type: "record"; body: { on: boolean } };

const isNum = (v: unknown): v is number => typeof v === "number" && isFinite(v);
const isBool = (v: unknown): v is boolean => typeof v === "boolean";
const isStr = (v: unknown): v is string => typeof v === "string";
const isInt = (v: unknown): v is number => isNum(v) && Number.isInteger(v);

type FieldCheck = [(v: unknown) => boolean, boolean]; // checker, required

const poseCheck = (v: unknown): boolean => {
  if (typeof v !== "object" || v === null) return false;
  const keys = ["x", "y", "z", "roll", "pitch", "yaw"];
  const o = v as Record<string, unknown>;
  return keys.every((k) => isNum(o[k])) && Object.keys(o).length === keys.length;
};

const groundSpeedCheck = (v: unknown): boolean => {
  if (typeof v !== "object" || v === null) return false;
  const o = v as Record<string, unknown>;
  return (
    isNum(o.dx) && isNum(o.dy) && isNum(o.z) &&
    isBool(o.flag_speed) && isBool(o.flag_z) &&
    Object.keys(o).length === 5
  );
};

const SCHEMAS: Record<string, Record<string, FieldCheck>> = {
  reset: { seed: [isInt, false], difficulty: [isStr, false] },
  cmd: {
    v: [isNum, true],
    omega: [isNum, true],
    d_front: [isBool, true],
    d_rear: [isBool, true],
    low_gear: [isBool, true],
  },
  record: { on: [isBool, true] },
  state: {
    t: [isNum, true],
    pose: [poseCheck, true],
    wheel_speeds: [
      (v) => Array.isArray(v) && v.length === 4 && v.every(isNum),
      true,
    ],
    ground_speed: [groundSpeedCheck, true],
    contacts: [(v) => Array.isArray(v) && v.every(isBool), true],
    status: [isStr, true],
    fsm: [(v) => v === null || isStr(v), false],
    recording: [isBool, false],
  },
  depth: { width: [isInt, true], height: [isInt, true], data: [isStr, true] },
  map: {
    width: [isInt, true],
    height: [isInt, true],
    resolution: [isNum, true],
    origin_x: [isNum, true],
    origin_y: [isNum, true],
    data: [isStr, true],
  },
  ack: { for: [isStr, true], path: [isStr, false] },
  err: { reason: [isStr, true] },
};

export class ProtocolViolation extends Error {}

export function validate(type: string, body: Record<string, unknown>): void {
  const schema = SCHEMAS[type];
  if (!schema) throw new ProtocolViolation(`unknown message type '${type}'`);
  for (const [field, [check, required]] of Object.entries(schema)) {
    if (!(field in body)) {
      if (required) throw new ProtocolViolation(`${type}: missing field '${field}'`);
      continue;
    }
    if (!check(body[field])) {
      throw new ProtocolViolation(`${type}: invalid field '${field}'`);
    }
  }
  for (const key of Object.keys(body)) {
    if (!(key in schema)) throw new ProtocolViolation(`${type}: unexpected field '${key}'`);
  }
}

export function encodePayload(type: string, body: Record<string, unknown> = {}): string {
  validate(type, body);
  const keys = Object.keys(body);
  return keys.length ? `${type} ${JSON.stringify(body)}` : type;
}

export function decodePayload(payload: string): { type: string; body: Record<string, unknown> } {
  const space = payload.indexOf(" ");
  const type = space < 0 ? payload : payload.slice(0, space);
  let body: Record<string, unknown> = {};
  if (space >= 0) {
    let parsed: unknown;
    try {
      parsed = JSON.parse(payload.slice(space + 1));
    } catch (e) {
      throw new ProtocolViolation(`bad JSON body: ${e}`);
    }
    if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
      throw new ProtocolViolation("message body must be a JSON object");
    }
    body = parsed as Record<string, unknown>;
  }
  validate(type, body);
  return { type, body };
}

// --- raw TCP framing (used by the scripted conformance client) ------------

export function frame(payload: string): Uint8Array {
  const data = new TextEncoder().encode(payload);
  const prefix = new TextEncoder().encode(`${data.length}\n`);
  const out = new Uint8Array(prefix.length + data.length);
  out.set(prefix, 0);
  out.set(data, prefix.length);
  return out;
}

export class FrameSplitter {
  private buf = new Uint8Array(0);

  feed(chunk: Uint8Array): string[] {
    const merged = new Uint8Array(this.buf.length + chunk.length);
    merged.set(this.buf, 0);
    merged.set(chunk, this.buf.length);
    this.buf = merged;
    const out: string[] = [];
    for (;;) {
      const nl = this.buf.indexOf(10); // '\n'
      if (nl < 0) {
        if (this.buf.length > 20) throw new ProtocolViolation("missing length prefix");
        break;
      }
      const lenText = new TextDecoder().decode(this.buf.slice(0, nl));
      const length = Number(lenText);
      if (!Number.isInteger(length) || length < 0) {
        throw new ProtocolViolation(`bad length prefix '${lenText}'`);
      }
      if (this.buf.length < nl + 1 + length) break;
      out.push(new TextDecoder().decode(this.buf.slice(nl + 1, nl + 1 + length)));
      this.buf = this.buf.slice(nl + 1 + length);
    }
    return out;
  }
}

// --- depth / map payload decoding ------------------------------------------

export function decodeU16(b64: string, width: number, height: number): Uint16Array {
  const bin = typeof atob === "function" ? atob(b64) : Buffer.from(b64, "base64").toString("binary");
  if (bin.length !== 2 * width * height) {
    throw new ProtocolViolation("u16 payload size mismatch");
  }
  const out = new Uint16Array(width * height);
  for (let i = 0; i < out.length; i++) {
    out[i] = (bin.charCodeAt(2 * i) << 8) | bin.charCodeAt(2 * i + 1); // big-endian
  }
  return out;
}
