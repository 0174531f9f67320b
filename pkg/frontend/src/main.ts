// Application wiring.
//
// Query parameters:
//   url=ws://host:port/ws   service endpoint (default: same host as the page)
//   honest=0|1              honest mode: first-person view only (default 1)
//
// The UI never simulates anything locally; everything rendered comes from
// service messages.  Commands are sent at the simulation rate (20 Hz)
// reflecting whatever input is currently held.

import { InputState, readGamepad } from "./input.js";
import { Session } from "./net.js";
import { renderDepth, renderMap, renderStatus } from "./views.js";

const params = new URLSearchParams(location.search);
const wsUrl =
  params.get("url") ?? `ws://${location.host || "localhost:8008"}/ws`;
const honest = params.get("honest") !== "0";

const fpv = document.getElementById("fpv") as HTMLCanvasElement;
const topdown = document.getElementById("topdown") as HTMLCanvasElement;
const topdownWrap = document.getElementById("topdown-wrap") as HTMLElement;
const statusPanel = document.getElementById("status") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;
const recordBtn = document.getElementById("record") as HTMLButtonElement;
const resetBtn = document.getElementById("reset") as HTMLButtonElement;
const honestNote = document.getElementById("honest-note") as HTMLElement;

if (honest) {
  topdownWrap.style.display = "none";
  honestNote.textContent =
    "honest mode: first-person view only (add ?honest=0 for the debug view)";
}

let recording = false;
let inputsEnabled = false;

const session = new Session(wsUrl, {
  onConnection: (ok) => {
    banner.style.display = ok ? "none" : "block";
    inputsEnabled = ok;
    if (!ok) input.clear();
  },
  onAck: (ack) => {
    if (ack.for === "record" && ack.path) {
      console.log(`recording: ${ack.path}`);
    }
  },
  onErr: (reason) => console.warn(`service error: ${reason}`),
});

const input = new InputState();

window.addEventListener("keydown", (ev) => {
  if (!inputsEnabled) return;
  if (ev.code === "KeyE") {
    toggleRecord();
    ev.preventDefault();
    return;
  }
  const kind = input.keyDown(ev.code);
  if (kind !== "other") ev.preventDefault();
});
window.addEventListener("keyup", (ev) => input.keyUp(ev.code));
window.addEventListener("blur", () => input.clear());

recordBtn.addEventListener("click", toggleRecord);
resetBtn.addEventListener("click", () => session.send("reset"));

function toggleRecord(): void {
  recording = !recording;
  session.send("record", { on: recording });
  recordBtn.textContent = recording ? "stop recording (E)" : "record (E)";
}

// commands go out at the simulation tick rate
setInterval(() => {
  if (!inputsEnabled) return;
  session.send("cmd", { ...input.cmd(readGamepad()) });
}, 50);

// render loop: draw whatever is newest (drop-stale)
let framesDrawn = 0;
let fps = 0;
let lastFpsStamp = performance.now();

function draw(): void {
  if (session.latestDepth) {
    renderDepth(fpv, session.latestDepth);
    framesDrawn += 1;
  }
  if (!honest && session.latestMap) {
    renderMap(topdown, session.latestMap, session.latestState, session.latestState?.fsm ?? null);
  }
  const now = performance.now();
  if (now - lastFpsStamp >= 1000) {
    fps = (framesDrawn * 1000) / (now - lastFpsStamp);
    framesDrawn = 0;
    lastFpsStamp = now;
  }
  renderStatus(statusPanel, session.latestState, session.connected, fps);
  recording = session.latestState?.recording ?? recording;
  requestAnimationFrame(draw);
}
requestAnimationFrame(draw);
