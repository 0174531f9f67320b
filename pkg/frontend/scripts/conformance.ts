// Scripted protocol-conformance test: spawns the simulation service,
// connects over raw TCP (length-prefixed frames), exercises every message
// type in PROTOCOL.md, and checks the service's observable behavior.
// Exit code 0 iff every check passes.
//
// Usage: node dist/scripts/conformance.js [existing-port]
//   With no argument the script launches `crawlsim serve` itself.

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import net from "node:net";
import os from "node:os";
import path from "node:path";

import {
  FrameSplitter,
  decodePayload,
  decodeU16,
  encodePayload,
  frame,
} from "../src/protocol.js";

const PORT = 8761;

interface Parsed {
  type: string;
  body: Record<string, unknown>;
}

class TcpClient {
  private splitter = new FrameSplitter();
  readonly received: Parsed[] = [];
  private sock: net.Socket;

  constructor(port: number, onReady: () => void) {
    this.sock = net.createConnection({ host: "127.0.0.1", port }, onReady);
    this.sock.on("data", (chunk: Buffer) => {
      for (const payload of this.splitter.feed(new Uint8Array(chunk))) {
        this.received.push(decodePayload(payload));
      }
    });
  }

  send(type: string, body: Record<string, unknown> = {}): void {
    this.sock.write(frame(encodePayload(type, body)));
  }

  sendRaw(payload: string): void {
    this.sock.write(frame(payload));
  }

  close(): void {
    this.sock.destroy();
  }
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

let failures = 0;
function check(name: string, ok: boolean, detail = ""): void {
  const mark = ok ? "PASS" : "FAIL";
  console.log(`[${mark}] ${name}${detail ? ` | ${detail}` : ""}`);
  if (!ok) failures += 1;
}

async function main(): Promise<void> {
  const existingPort = process.argv[2] ? Number(process.argv[2]) : null;
  let service: ChildProcess | null = null;
  const recordRoot = mkdtempSync(path.join(os.tmpdir(), "crawlsim-conf-"));
  const port = existingPort ?? PORT;

  if (!existingPort) {
    service = spawn(
      "crawlsim",
      [
        "serve",
        "--port", String(port),
        "--difficulty", "Flat",
        "--seed", "2",
        "--depth-size", "16",
        "--record-root", recordRoot,
      ],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    await sleep(1500);
  }

  let client!: TcpClient;
  try {
    await new Promise<void>((resolve, reject) => {
      client = new TcpClient(port, resolve);
      setTimeout(() => reject(new Error("connect timeout")), 4000);
    });
    check("connect", true);

    // reset: expect ack + map + state handshake
    client.send("reset", { seed: 2, difficulty: "Flat" });
    await sleep(800);
    const acks = client.received.filter((m) => m.type === "ack");
    check("reset ack", acks.some((a) => a.body.for === "reset"));
    const maps = client.received.filter((m) => m.type === "map");
    check("map message", maps.length >= 1);
    if (maps.length) {
      const m = maps[0].body as { width: number; height: number; data: string };
      const cells = decodeU16(m.data, m.width, m.height);
      check("map payload decodes", cells.length === m.width * m.height);
    }
    const states = () => client.received.filter((m) => m.type === "state");
    check("state stream", states().length >= 5, `${states().length} frames`);
    const depths = () => client.received.filter((m) => m.type === "depth");
    check("depth stream", depths().length >= 5, `${depths().length} frames`);
    if (depths().length) {
      const d = depths()[0].body as { width: number; height: number; data: string };
      const px = decodeU16(d.data, d.width, d.height);
      check("depth payload decodes", px.length === d.width * d.height);
    }

    // malformed message: err frame, connection stays up
    const before = states().length;
    client.sendRaw("nonsense {}");
    await sleep(400);
    check("malformed -> err", client.received.some((m) => m.type === "err"));
    check("connection survives err", states().length > before);

    // record on / drive / record off -> valid dataset
    client.send("record", { on: true });
    const driveUntil = Date.now() + 1200;
    const drive = setInterval(() => {
      client.send("cmd", {
        v: 0.5, omega: 0.0, d_front: true, d_rear: true, low_gear: true,
      });
      if (Date.now() > driveUntil) clearInterval(drive);
    }, 50);
    await sleep(1500);
    client.send("record", { on: false });
    await sleep(500);
    const recordAcks = client.received.filter(
      (m) => m.type === "ack" && m.body.for === "record",
    );
    check("record acks", recordAcks.length >= 2);
    const lastState = states().at(-1)!.body as { pose: { x: number } };
    check("vehicle advanced under held cmd", lastState.pose.x > 0.0,
      `x=${lastState.pose.x.toFixed(2)}`);

    const recPath = recordAcks.find((a) => typeof a.body.path === "string")
      ?.body.path as string | undefined;
    if (recPath) {
      const result = spawnSync("crawlsim", ["dataset-validate", recPath], {
        encoding: "utf-8",
      });
      check("recorded dataset validates", result.status === 0,
        (result.stdout || result.stderr).trim());
    } else {
      check("recorded dataset validates", false, "no path in record ack");
    }
  } catch (e) {
    check("conformance run", false, String(e));
  } finally {
    client?.close();
    service?.kill("SIGINT");
    await sleep(300);
    service?.kill("SIGKILL");
  }
  console.log(failures === 0 ? "ALL CHECKS PASSED" : `${failures} CHECK(S) FAILED`);
  process.exit(failures === 0 ? 0 : 1);
}

main();
