// Canvas rendering: first-person depth view (near = bright), top-down
// heightmap with the vehicle overlay, and the status panel.

import { DepthBody, MapBody, StateBody, decodeU16 } from "./protocol.js";

const DEPTH_MAX_MM = 5000;

export function renderDepth(canvas: HTMLCanvasElement, depth: DepthBody): void {
  const { width, height } = depth;
  const values = decodeU16(depth.data, width, height);
  const ctx = canvas.getContext("2d")!;
  const img = ctx.createImageData(width, height);
  for (let i = 0; i < values.length; i++) {
    const shade = Math.round(255 * (1 - Math.min(values[i], DEPTH_MAX_MM) / DEPTH_MAX_MM));
    img.data[4 * i] = shade;
    img.data[4 * i + 1] = shade;
    img.data[4 * i + 2] = shade;
    img.data[4 * i + 3] = 255;
  }
  // draw at native resolution into an offscreen buffer, then scale up
  const off = offscreen(width, height);
  off.getContext("2d")!.putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

let mapBuffer: HTMLCanvasElement | null = null;
let mapKey = "";

export function renderMap(
  canvas: HTMLCanvasElement,
  map: MapBody,
  state: StateBody | null,
  fsm: string | null,
): void {
  const ctx = canvas.getContext("2d")!;
  const key = `${map.width}x${map.height}:${map.data.length}`;
  if (!mapBuffer || mapKey !== key) {
    const values = decodeU16(map.data, map.width, map.height);
    let max = 1;
    for (const v of values) max = Math.max(max, v);
    const img = new ImageData(map.width, map.height);
    for (let i = 0; i < values.length; i++) {
      const shade = Math.round(40 + 200 * (values[i] / max));
      img.data[4 * i] = shade * 0.75;
      img.data[4 * i + 1] = shade * 0.6;
      img.data[4 * i + 2] = shade * 0.45;
      img.data[4 * i + 3] = 255;
    }
    mapBuffer = offscreen(map.width, map.height);
    mapBuffer.getContext("2d")!.putImageData(img, 0, 0);
    mapKey = key;
  }
  const sx = canvas.width / map.width;
  const sy = canvas.height / map.height;
  ctx.imageSmoothingEnabled = false;
  // world y points up; canvas y points down
  ctx.save();
  ctx.scale(1, -1);
  ctx.translate(0, -canvas.height);
  ctx.drawImage(mapBuffer, 0, 0, canvas.width, canvas.height);

  if (state) {
    const px = (state.pose.x - map.origin_x) / map.resolution * sx;
    const py = (state.pose.y - map.origin_y) / map.resolution * sy;
    ctx.translate(px, py);
    ctx.rotate(state.pose.yaw);
    const len = 0.6 / map.resolution * sx;
    const wid = 0.25 / map.resolution * sy;
    ctx.fillStyle = state.status === "Running" ? "#4dd06a" : "#e05050";
    ctx.beginPath();
    ctx.moveTo(0.25 * len, 0);
    ctx.lineTo(-0.75 * len, wid / 2);
    ctx.lineTo(-0.75 * len, -wid / 2);
    ctx.closePath();
    ctx.fill();
    // wheel contact markers, axle-major from the front
    const n = state.contacts.length;
    const axles = n / 2;
    for (let i = 0; i < n; i++) {
      const axle = Math.floor(i / 2);
      const left = i % 2 === 0;
      ctx.fillStyle = state.contacts[i] ? "#ffffff" : "#101010";
      ctx.beginPath();
      ctx.arc(
        (0.2 - (axles > 1 ? axle / (axles - 1) : 0) * 0.8) * len,
        (left ? 1 : -1) * wid * 0.55,
        Math.max(2, wid * 0.14),
        0,
        2 * Math.PI,
      );
      ctx.fill();
    }
  }
  ctx.restore();
  if (fsm) {
    ctx.fillStyle = "#ffd34d";
    ctx.font = "14px monospace";
    ctx.fillText(`FSM: ${fsm}`, 8, 18);
  }
}

export function renderStatus(panel: HTMLElement, state: StateBody | null, connected: boolean, fps: number): void {
  if (!connected) {
    panel.innerHTML = `<span class="bad">DISCONNECTED</span>`;
    return;
  }
  if (!state) {
    panel.textContent = "waiting for state...";
    return;
  }
  const p = state.pose;
  const contacts = state.contacts.map((c) => (c ? "#" : ".")).join("");
  const rec = state.recording ? ` <span class="rec">REC</span>` : "";
  panel.innerHTML =
    `t=${state.t.toFixed(2)}s  x=${p.x.toFixed(2)} y=${p.y.toFixed(2)} z=${p.z.toFixed(2)}<br>` +
    `roll=${deg(p.roll)} pitch=${deg(p.pitch)} yaw=${deg(p.yaw)}<br>` +
    `speed=${Math.hypot(state.ground_speed.dx, state.ground_speed.dy).toFixed(2)} m/s  ` +
    `contacts=[${contacts}]  ${fps.toFixed(0)} fps<br>` +
    `status=<b class="${state.status === "Running" ? "ok" : "bad"}">${state.status}</b>${rec}`;
}

function deg(rad: number): string {
  return `${((rad * 180) / Math.PI).toFixed(1)}°`;
}

function offscreen(w: number, h: number): HTMLCanvasElement {
  const c = document.createElement("canvas");
  c.width = w;
  c.height = h;
  return c;
}
