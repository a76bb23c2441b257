import { ApiClient } from "./api.js";
import { debounce } from "./debounce.js";
import { downloadObj, vertexCount } from "./objExport.js";
import { EditorState, StateSnapshot } from "./state.js";
import { FEATURE_NAMES, FeatureName } from "./types.js";
import { Viewer } from "./viewer.js";

const FEATURE_LABELS: Record<FeatureName, string> = {
  volume: "Volume (unit³)",
  isthmus_area: "Isthmus area (unit²)",
  symmetry: "Symmetry (IoU)",
};

const api = new ApiClient("");
const state = new EditorState(api);
const viewer = new Viewer(document.getElementById("viewport")!);

const shapeSelect = document.getElementById("shape-select") as HTMLSelectElement;
const sliderBox = document.getElementById("sliders")!;
const statusLine = document.getElementById("status")!;
const banner = document.getElementById("banner")!;
const devPanel = document.getElementById("dev-panel")!;

interface SliderRow {
  input: HTMLInputElement;
  conditionedOut: HTMLElement;
  measuredOut: HTMLElement;
  deltaOut: HTMLElement;
}

const rows = new Map<FeatureName, SliderRow>();
const debouncedEdit = debounce((name: FeatureName, value: number) => {
  state.setSlider(name, value);
}, 150);

function buildSliders(): void {
  sliderBox.innerHTML = "";
  rows.clear();
  for (const name of FEATURE_NAMES) {
    const range = state.clampRanges[name];
    if (!range) continue;
    const row = document.createElement("div");
    row.className = "slider-row";
    const label = document.createElement("label");
    label.textContent = FEATURE_LABELS[name];
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(range.min);
    input.max = String(range.max);
    input.step = String((range.max - range.min) / 400);
    input.addEventListener("input", () => {
      debouncedEdit.call(name, Number(input.value));
    });
    const conditionedOut = document.createElement("span");
    conditionedOut.className = "readout conditioned";
    const measuredOut = document.createElement("span");
    measuredOut.className = "readout measured";
    const deltaOut = document.createElement("span");
    deltaOut.className = "readout delta";
    row.append(label, input, conditionedOut, measuredOut, deltaOut);
    sliderBox.appendChild(row);
    rows.set(name, { input, conditionedOut, measuredOut, deltaOut });
  }
}

function fmtNum(x: number | undefined | null, digits = 4): string {
  return x === undefined || x === null ? "–" : x.toFixed(digits);
}

function render(snap: StateSnapshot): void {
  for (const [name, row] of rows) {
    const value = snap.sliders[name];
    if (value !== undefined && document.activeElement !== row.input) {
      row.input.value = String(value);
    }
    row.conditionedOut.textContent = `set ${fmtNum(value)}`;
    const measured = snap.measured?.[name];
    row.measuredOut.textContent = `got ${fmtNum(measured)}`;
    const delta = measured !== undefined && value !== undefined
      ? measured - value : null;
    row.deltaOut.textContent = delta === null ? "" : `Δ ${fmtNum(delta)}`;
  }
  if (snap.mesh) {
    viewer.showMesh(snap.mesh);
    const note = snap.mesh.empty ? " (empty level set)" :
      snap.mesh.truncated ? " (truncated)" : "";
    statusLine.textContent =
      `${snap.mesh.n_faces} triangles${note}` + (snap.busy ? " · updating…" : "");
  } else {
    statusLine.textContent = snap.busy ? "updating…" : "pick a shape";
  }
  if (snap.error) {
    banner.textContent = snap.error.code === "unconditioned_model"
      ? "This checkpoint was trained without feature conditioning; editing is disabled."
      : `${snap.error.code}: ${snap.error.message} — your edits are kept; retry when ready.`;
    banner.classList.remove("hidden");
  } else {
    banner.classList.add("hidden");
  }
  devPanel.textContent = JSON.stringify(
    { sliders: snap.sliders, base: snap.baseFeatures, clamped: snap.clamped },
    null, 1);
}

async function selectShape(shapeId: string): Promise<void> {
  statusLine.textContent = "reconstructing…";
  const res = await api.reconstruct(shapeId, state.previewResolution);
  const entry = (await api.getShapes()).shapes.find((s) => s.id === shapeId);
  state.setBase(shapeId, entry ? entry.features : {}, res.mesh, null);
  state.requestEdit(); // identity edit refreshes the measured readouts
}

async function boot(): Promise<void> {
  const info = await api.getShapes();
  state.applyServerInfo(info);
  buildSliders();
  shapeSelect.innerHTML = "";
  for (const entry of info.shapes) {
    const option = document.createElement("option");
    option.value = entry.id;
    option.textContent = entry.id;
    shapeSelect.appendChild(option);
  }
  shapeSelect.addEventListener("change", () => {
    void selectShape(shapeSelect.value);
  });

  document.getElementById("btn-generate")!.addEventListener("click", async () => {
    const seed = Math.floor(Math.random() * 2 ** 31);
    statusLine.textContent = `generating (seed ${seed})…`;
    const res = await api.generate(seed, undefined, state.previewResolution);
    state.setBase(res.code, res.conditioned, res.mesh, res.measured);
  });
  document.getElementById("btn-reset")!.addEventListener("click", () => {
    debouncedEdit.dispose();
    state.resetSliders();
  });
  document.getElementById("btn-hq")!.addEventListener("click", () => {
    debouncedEdit.flush();
    state.requestEdit(state.finalResolution);
  });
  document.getElementById("btn-export")!.addEventListener("click", () => {
    const snap = state.snapshot();
    if (snap.mesh && !snap.mesh.empty) {
      statusLine.textContent =
        `exported ${vertexCount(snap.mesh)} vertices`;
      downloadObj(snap.mesh, "steershape-export.obj");
    }
  });
  document.getElementById("btn-devtoggle")!.addEventListener("click", () => {
    devPanel.classList.toggle("hidden");
  });

  state.subscribe(render);
  if (info.shapes.length) {
    shapeSelect.value = info.shapes[0].id;
    await selectShape(info.shapes[0].id);
  }
  if (!info.conditioned) {
    banner.textContent =
      "This checkpoint was trained without feature conditioning; sliders are disabled.";
    banner.classList.remove("hidden");
  }
}

void boot();
