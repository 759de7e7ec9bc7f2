/** Wires the annotator UI: volume upload, slice navigation, brush strokes,
 * and the train/infer/regularize update loop against the session service. */

import { ApiError, Client, type Axis, type SessionInfo } from "./api.js";
import { planeToVoxels, rasterizeStroke, type PlanePoint } from "./brush.js";
import { SessionState } from "./state.js";
import { SliceViewer } from "./viewer.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const client = new Client("");
const state = new SessionState();
let session: SessionInfo | null = null;
let axis: Axis = "z";
let index = 0;
let viewer: SliceViewer;
let stroke: PlanePoint[] = [];
let drawing = false;

function say(msg: string, isError = false) {
  const el = $("status-line");
  el.textContent = msg;
  el.className = isError ? "error" : "";
}

function sliceDims(): [number, number] {
  const d = session!.dims;
  if (axis === "x") return [d[1], d[2]];
  if (axis === "y") return [d[0], d[2]];
  return [d[0], d[1]];
}

function axisLength(): number {
  const d = session!.dims;
  return axis === "x" ? d[0] : axis === "y" ? d[1] : d[2];
}

async function refreshSlice() {
  if (!session) return;
  const slice = await client.getSlice(session.id, axis, index);
  viewer.render(slice);
  $("slice-label").textContent = `${axis} = ${index} / ${axisLength() - 1}`;
}

function refreshButtons() {
  const btn = $<HTMLButtonElement>("update-btn");
  btn.disabled = !state.canUpdate();
  btn.title = state.blockedReason() ?? "train on the scribbles and refresh the mask";
  $("counts").textContent =
    `scribbles: ${state.counts.foreground} fg / ${state.counts.background} bg`;
}

async function openSession(file: File) {
  const method = $<HTMLSelectElement>("method").value;
  try {
    session = await client.createSession(file, file.name, method, {});
  } catch (e) {
    say(e instanceof ApiError ? `upload failed: ${e.message}` : `service unreachable: ${e}`, true);
    return;
  }
  axis = "z";
  index = Math.floor(session.dims[2] / 2); // middle axial slice
  state.setTotals({ foreground: 0, background: 0 });
  $("session-label").textContent =
    `session ${session.id} (${session.dims.join("x")}, ${method})`;
  $<HTMLInputElement>("slice-slider").max = String(axisLength() - 1);
  $<HTMLInputElement>("slice-slider").value = String(index);
  await refreshSlice();
  refreshButtons();
  say("session ready: draw foreground (left) and background (right or toggle), then update");
}

async function sendScribbles(cls: "foreground" | "background", voxels: number[][]) {
  if (!session || voxels.length === 0) return;
  if (state.updating) {
    state.queue(cls, voxels); // flushed after the running update
    return;
  }
  const payload = { foreground: [] as number[][], background: [] as number[][] };
  payload[cls] = voxels;
  const resp = await client.addScribbles(session.id, payload);
  state.setTotals(resp.total);
  refreshButtons();
}

async function flushQueued() {
  if (!session || !state.hasQueued()) return;
  const resp = await client.addScribbles(session.id, state.drainQueue());
  state.setTotals(resp.total);
}

async function requestUpdate() {
  if (!session) return;
  const blocked = state.blockedReason();
  if (blocked) {
    say(blocked, true);
    return;
  }
  state.updating = true;
  refreshButtons();
  say("updating: training on scribbles and re-inferring the volume...");
  try {
    const res = await client.update(session.id);
    const stability = res.stability_dice === null
      ? "" : `, stability ${res.stability_dice.toFixed(3)}`;
    say(`updated: ${res.mask_voxels} foreground voxels ` +
        `(train ${res.train_time.toFixed(2)}s, infer ${res.infer_time.toFixed(2)}s${stability})`);
  } catch (e) {
    if (e instanceof ApiError && e.code === 409) {
      say(e.message.includes("busy") ? "busy: try again in a moment"
                                     : "add scribbles of both classes", true);
    } else {
      say(`update failed: ${e instanceof Error ? e.message : e}`, true);
    }
  } finally {
    state.updating = false;
  }
  await flushQueued();
  await refreshSlice();
  refreshButtons();
}

function currentClass(buttons: number): "foreground" | "background" {
  const toggled = $<HTMLSelectElement>("brush-class").value === "background";
  const rightButton = (buttons & 2) !== 0;
  return toggled !== rightButton ? "background" : "foreground";
}

function setupDrawing(canvas: HTMLCanvasElement) {
  let cls: "foreground" | "background" = "foreground";
  canvas.addEventListener("contextmenu", (e) => e.preventDefault());
  canvas.addEventListener("pointerdown", (e) => {
    if (!session) return;
    drawing = true;
    cls = currentClass(e.buttons);
    stroke = [];
    const rect = canvas.getBoundingClientRect();
    const p = viewer.toPlane(e.clientX - rect.left, e.clientY - rect.top, ...sliceDims());
    if (p) stroke.push(p);
    viewer.setPendingStroke(strokePixels(), cls);
    void refreshSlice();
  });
  canvas.addEventListener("pointermove", (e) => {
    if (!drawing || !session) return;
    const rect = canvas.getBoundingClientRect();
    const p = viewer.toPlane(e.clientX - rect.left, e.clientY - rect.top, ...sliceDims());
    if (p) {
      stroke.push(p);
      viewer.setPendingStroke(strokePixels(), cls);
      void refreshSlice();
    }
  });
  const finish = async () => {
    if (!drawing || !session) return;
    drawing = false;
    const [w, h] = sliceDims();
    const radius = Number($<HTMLInputElement>("brush-radius").value);
    const pixels = rasterizeStroke(stroke, radius, w, h);
    viewer.setPendingStroke([], cls);
    await sendScribbles(cls, planeToVoxels(pixels, axis, index));
    stroke = [];
    await refreshSlice();
  };
  canvas.addEventListener("pointerup", () => void finish());
  canvas.addEventListener("pointerleave", () => void finish());
}

function strokePixels(): PlanePoint[] {
  const [w, h] = sliceDims();
  const radius = Number($<HTMLInputElement>("brush-radius").value);
  return rasterizeStroke(stroke, radius, w, h);
}

function main() {
  viewer = new SliceViewer($<HTMLCanvasElement>("slice-canvas"));
  setupDrawing($<HTMLCanvasElement>("slice-canvas"));
  $<HTMLInputElement>("volume-file").addEventListener("change", (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (file) void openSession(file);
  });
  $("update-btn").addEventListener("click", () => void requestUpdate());
  $<HTMLSelectElement>("axis-select").addEventListener("change", (e) => {
    axis = (e.target as HTMLSelectElement).value as Axis;
    index = Math.floor(axisLength() / 2);
    $<HTMLInputElement>("slice-slider").max = String(axisLength() - 1);
    $<HTMLInputElement>("slice-slider").value = String(index);
    void refreshSlice();
  });
  $<HTMLInputElement>("slice-slider").addEventListener("input", (e) => {
    index = Number((e.target as HTMLInputElement).value);
    void refreshSlice();
  });
  $<HTMLInputElement>("mask-opacity").addEventListener("input", (e) => {
    viewer.maskOpacity = Number((e.target as HTMLInputElement).value) / 100;
    void refreshSlice();
  });
  $<HTMLInputElement>("window-width").addEventListener("input", (e) => {
    viewer.windowLevel.width = Math.max(1, Number((e.target as HTMLInputElement).value));
    void refreshSlice();
  });
  $<HTMLInputElement>("window-level").addEventListener("input", (e) => {
    viewer.windowLevel.level = Number((e.target as HTMLInputElement).value);
    void refreshSlice();
  });
  $("download-btn").addEventListener("click", () => {
    if (session) window.open(client.maskDownloadUrl(session.id), "_blank");
  });
  say("upload a volume (.nii/.nii.gz) to begin");
}

main();
