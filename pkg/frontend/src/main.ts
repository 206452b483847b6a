// Entry point: connect to the telemetry endpoint named in the URL query,
// render the scene and strips, forward drags and slider changes.

import { layoutStrip, paintActivityStrip, paintStrip } from "./charts";
import { Camera, defaultCamera, drawScene, project, unprojectTop } from "./render";
import { buildReadout, buildScene } from "./scene";
import { connectSocket } from "./socket";
import { ViewState } from "./store";
import { RateLimiter } from "./throttle";
import { controlMessage, paramUpdateMessage, scenarioCmdMessage, type Params, type Vec3 } from "./wire";

const query = new URLSearchParams(window.location.search);
const host = query.get("host") ?? "127.0.0.1";
const port = query.get("port") ?? "8765";
const scenario = query.get("scenario");

const app = document.getElementById("app")!;
app.innerHTML = `
  <div id="bar">
    <span id="status">connecting</span>
    <span id="readout"></span>
    <button id="view">view: top</button>
    <button id="pause">pause</button>
    <button id="reset">reset</button>
  </div>
  <div id="row">
    <canvas id="scene" width="640" height="480"></canvas>
    <div id="side">
      <canvas class="strip" id="strip-d" width="360" height="110"></canvas>
      <canvas class="strip" id="strip-phi" width="360" height="110"></canvas>
      <canvas class="strip" id="strip-act" width="360" height="60"></canvas>
      <div id="sliders"></div>
    </div>
  </div>
`;

const store = new ViewState();
let outSeq = 0;
const dragLimiter = new RateLimiter(60);

const sceneCanvas = document.getElementById("scene") as HTMLCanvasElement;
const sceneCtx = sceneCanvas.getContext("2d")!;
let camera: Camera = defaultCamera(sceneCanvas.width, sceneCanvas.height);

const strips = {
  d: document.getElementById("strip-d") as HTMLCanvasElement,
  phi: document.getElementById("strip-phi") as HTMLCanvasElement,
  act: document.getElementById("strip-act") as HTMLCanvasElement,
};

const socket = connectSocket(`ws://${host}:${port}`, store, scheduleRender);
if (scenario) {
  // ask the server to load a preset by name once connected
  const tryLoad = setInterval(() => {
    if (store.connection === "open") {
      socket.send(scenarioCmdMessage(++outSeq, "load", { preset: scenario }));
      clearInterval(tryLoad);
    }
  }, 200);
}

// -- parameter sliders -------------------------------------------------------

const sliderDefs: { key: keyof Params; label: string; step: number }[] = [
  { key: "lambda1", label: "lambda1 (approach speed sensitivity)", step: 0.1 },
  { key: "lambda2", label: "lambda2 (acceleration sensitivity)", step: 0.1 },
  { key: "d_min", label: "d_min (margin, m)", step: 0.005 },
];
const sliderEls = new Map<string, { input: HTMLInputElement; value: HTMLSpanElement }>();
const slidersDiv = document.getElementById("sliders")!;
for (const def of sliderDefs) {
  const wrap = document.createElement("div");
  wrap.className = "slider";
  const label = document.createElement("label");
  label.textContent = def.label;
  const value = document.createElement("span");
  const input = document.createElement("input");
  input.type = "range";
  input.step = String(def.step);
  input.addEventListener("input", () => {
    // clamp client-side to the server-advertised range
    const ranges = store.latest?.param_ranges ?? {};
    const r = ranges[def.key];
    let v = parseFloat(input.value);
    if (r) v = Math.min(r[1], Math.max(r[0], v));
    socket.send(paramUpdateMessage(++outSeq, { [def.key]: v }));
  });
  wrap.append(label, input, value);
  slidersDiv.append(wrap);
  sliderEls.set(def.key, { input, value });
}

function syncSliders(): void {
  const st = store.latest;
  if (!st || !st.params) return;
  for (const def of sliderDefs) {
    const el = sliderEls.get(def.key)!;
    const r = st.param_ranges?.[def.key];
    if (r) {
      el.input.min = String(r[0]);
      el.input.max = String(r[1]);
    }
    if (document.activeElement !== el.input) {
      el.input.value = String(st.params[def.key]);
    }
    el.value.textContent = ` ${st.params[def.key].toFixed(3)}`;
  }
}

// -- drag steering -----------------------------------------------------------

interface DragState {
  agentId: string;
  z: number;
}
let drag: DragState | null = null;

function agentRootUnderPointer(px: number, py: number): DragState | null {
  const st = store.latest;
  if (!st || camera.mode !== "top") return null;
  const owners = new Map<string, Vec3>();
  for (const c of st.capsules) {
    if (c.owner !== "robot" && !owners.has(c.owner)) owners.set(c.owner, c.p0);
  }
  for (const [owner, p] of owners) {
    const s = project(p, camera);
    const dx = s[0] - px;
    const dy = s[1] - py;
    if (dx * dx + dy * dy < 40 * 40) return { agentId: owner, z: p[2] };
  }
  return null;
}

sceneCanvas.addEventListener("pointerdown", (ev) => {
  if (store.connection !== "open") return; // drags disabled while disconnected
  const rect = sceneCanvas.getBoundingClientRect();
  drag = agentRootUnderPointer(ev.clientX - rect.left, ev.clientY - rect.top);
  if (drag) sceneCanvas.setPointerCapture(ev.pointerId);
});

sceneCanvas.addEventListener("pointermove", (ev) => {
  if (!drag || store.connection !== "open") return;
  if (!dragLimiter.allow(performance.now())) return;
  const rect = sceneCanvas.getBoundingClientRect();
  const [wx, wy] = unprojectTop(ev.clientX - rect.left, ev.clientY - rect.top, camera);
  // motion stays in the XY plane: z is held fixed
  socket.send(controlMessage(++outSeq, [wx, wy, drag.z], drag.agentId));
});

sceneCanvas.addEventListener("pointerup", () => {
  drag = null; // last target holds server-side
});

// -- buttons -----------------------------------------------------------------

let paused = false;
document.getElementById("view")!.addEventListener("click", (ev) => {
  camera.mode = camera.mode === "top" ? "orbit" : "top";
  (ev.target as HTMLButtonElement).textContent = `view: ${camera.mode}`;
  scheduleRender();
});
document.getElementById("pause")!.addEventListener("click", (ev) => {
  paused = !paused;
  socket.send(scenarioCmdMessage(++outSeq, paused ? "pause" : "start"));
  (ev.target as HTMLButtonElement).textContent = paused ? "start" : "pause";
});
document.getElementById("reset")!.addEventListener("click", () => {
  socket.send(scenarioCmdMessage(++outSeq, "reset"));
});

// -- render loop -------------------------------------------------------------

let renderQueued = false;
function scheduleRender(): void {
  if (renderQueued) return;
  renderQueued = true;
  requestAnimationFrame(() => {
    renderQueued = false;
    render();
  });
}

function render(): void {
  const now = performance.now();
  const stale = store.isStale(now);
  const graph = buildScene(store.latest, stale);
  drawScene(sceneCtx, graph, camera, sceneCanvas.width, sceneCanvas.height);

  const samples = store.window();
  const dMin = store.latest?.params?.d_min ?? 0.05;
  paintStrip(
    strips.d.getContext("2d")!,
    layoutStrip(samples, (s) => s.d, strips.d.width, strips.d.height, { yMin: 0, marginValue: dMin }),
    strips.d.width, strips.d.height, "distance (m), margin dashed", "#6fc2ff",
  );
  paintStrip(
    strips.phi.getContext("2d")!,
    layoutStrip(samples, (s) => s.phi, strips.phi.width, strips.phi.height, { marginValue: 0 }),
    strips.phi.width, strips.phi.height, "safety index", "#c792ea",
  );
  paintActivityStrip(strips.act.getContext("2d")!, samples, strips.act.width, strips.act.height);

  const readout = buildReadout(store.latest);
  document.getElementById("status")!.textContent =
    store.connection + (stale ? " (stale)" : "") + (store.lastError ? ` | ${store.lastError}` : "");
  document.getElementById("readout")!.textContent =
    `t=${readout.t}  d=${readout.d}  phi=${readout.phi}  ${readout.active}  [${readout.pair}]`;
  syncSliders();
}

setInterval(scheduleRender, 250); // keep the stale indicator fresh
