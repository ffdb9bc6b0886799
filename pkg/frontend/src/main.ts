/** App wiring: drag-and-drop loading, orbit controls, playback UI,
 * render loop. URL flags: ?mode=full|group & autoplay=1. */

import { OrbitCamera } from "./camera.js";
import { SplatRenderer } from "./renderer.js";
import { HashMismatchError, SortMode, ViewerSession } from "./session.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const statusEl = document.getElementById("status")!;
const statsEl = document.getElementById("stats")!;
const playBtn = document.getElementById("play") as HTMLButtonElement;
const modeBtn = document.getElementById("mode") as HTMLButtonElement;
const scrubber = document.getElementById("scrub") as HTMLInputElement;
const dropzone = document.getElementById("dropzone")!;

const params = new URLSearchParams(location.search);

let session: ViewerSession | null = null;
let renderer: SplatRenderer | null = null;
const camera = new OrbitCamera();

const files: { bundle?: ArrayBuffer; rig?: string; clip?: string } = {};

function status(msg: string, isError = false) {
  statusEl.textContent = msg;
  statusEl.className = isError ? "error" : "";
}

async function tryLoad() {
  if (!files.bundle || !files.rig || !files.clip) {
    const missing = [
      !files.bundle && ".bundle",
      !files.rig && "rig.json",
      !files.clip && "anim.json",
    ].filter(Boolean).join(", ");
    status(`waiting for: ${missing}`);
    return;
  }
  try {
    session = await ViewerSession.load(files.bundle, files.rig, files.clip);
    session.mode = (params.get("mode") === "full" ? "full" : "group") as SortMode;
    session.playing = params.get("autoplay") === "1";
    modeBtn.textContent = `sort: ${session.mode}`;
    playBtn.textContent = session.playing ? "pause" : "play";
    scrubber.max = String(session.clip.duration);
    if (!renderer) renderer = new SplatRenderer(canvas);
    dropzone.classList.add("hidden");
    status(`${session.bundle.splatCount} splats, ${session.bundle.groups.length} groups, ` +
      `clip ${session.clip.duration.toFixed(2)} s`);
  } catch (err) {
    session = null;
    if (err instanceof HashMismatchError) {
      status(`rig mismatch: ${(err as Error).message}`, true);
    } else {
      status(`load failed: ${(err as Error).message}`, true);
    }
  }
}

async function consumeFile(file: File) {
  const name = file.name.toLowerCase();
  if (name.endsWith(".bundle")) {
    files.bundle = await file.arrayBuffer();
  } else if (name.includes("rig")) {
    files.rig = await file.text();
  } else if (name.endsWith(".json")) {
    files.clip = await file.text();
  } else {
    status(`unrecognized file: ${file.name}`, true);
    return;
  }
  await tryLoad();
}

for (const ev of ["dragover", "dragenter"]) {
  document.body.addEventListener(ev, (e) => e.preventDefault());
}
document.body.addEventListener("drop", async (e) => {
  e.preventDefault();
  for (const file of Array.from((e as DragEvent).dataTransfer?.files ?? [])) {
    await consumeFile(file);
  }
});
(document.getElementById("filepick") as HTMLInputElement).addEventListener("change", async (e) => {
  for (const file of Array.from((e.target as HTMLInputElement).files ?? [])) {
    await consumeFile(file);
  }
});

playBtn.addEventListener("click", () => {
  if (!session) return;
  session.playing = !session.playing;
  playBtn.textContent = session.playing ? "pause" : "play";
});
modeBtn.addEventListener("click", () => {
  if (!session) return;
  session.setMode(session.mode === "group" ? "full" : "group");
  modeBtn.textContent = `sort: ${session.mode}`;
});
scrubber.addEventListener("input", () => {
  if (!session) return;
  session.scrub(parseFloat(scrubber.value));
});

let dragging = false;
canvas.addEventListener("pointerdown", (e) => {
  dragging = true;
  canvas.setPointerCapture(e.pointerId);
});
canvas.addEventListener("pointerup", () => (dragging = false));
canvas.addEventListener("pointermove", (e) => {
  if (dragging) camera.rotate(e.movementX, e.movementY);
});
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  camera.zoom(Math.exp(e.deltaY * 0.001));
}, { passive: false });

// full-sort worker at reduced cadence
const worker = new Worker(new URL("./sort_worker.js", import.meta.url), { type: "module" });
let pendingJob = 0;
let freshOrder: Int32Array | undefined;
worker.onmessage = (e) => {
  if (e.data.jobId === pendingJob) {
    freshOrder = e.data.order as Int32Array;
    pendingJob = 0;
  }
};

let lastTime = performance.now();
let fpsAccum = 0;
let fpsCount = 0;

function frame(now: number) {
  requestAnimationFrame(frame);
  const dt = Math.min(0.1, (now - lastTime) / 1000);
  lastTime = now;
  if (!session || !renderer) return;

  canvas.width = canvas.clientWidth * devicePixelRatio;
  canvas.height = canvas.clientHeight * devicePixelRatio;

  const result = session.tick(dt, camera.position, camera.forward, freshOrder);
  freshOrder = undefined;

  if (session.mode === "full" && pendingJob === 0) {
    pendingJob = now;
    worker.postMessage({
      jobId: pendingJob,
      positions: result.state.positions.slice(),
      camPos: camera.position,
      camForward: camera.forward,
    });
  }

  renderer.draw(session.bundle, result.state, result.order,
    camera.viewMatrix(), camera.projectionMatrix(canvas.width / canvas.height));

  if (!session.playing) scrubber.value = String(result.t);
  fpsAccum += dt;
  fpsCount += 1;
  if (fpsAccum >= 0.5) {
    const fps = fpsCount / fpsAccum;
    const stale = session.mode === "full" && result.sortStaleness > 0
      ? ` (order ${result.sortStaleness} frames stale)` : "";
    statsEl.textContent =
      `${fps.toFixed(0)} fps | t=${result.t.toFixed(2)}s | ${session.mode} sort${stale}`;
    fpsAccum = 0;
    fpsCount = 0;
  }
}
requestAnimationFrame(frame);

status("drop an avatar (.bundle), its rig.json and an anim.json here");
