import { ApiClient } from "./api.js";
import { LatestRequestQueue } from "./requestQueue.js";
import {
  ApiError,
  ClampRange,
  EditResponse,
  FeatureName,
  LatentCodePayload,
  MeshPayload,
  ShapesResponse,
} from "./types.js";

export interface HistoryStep {
  features: Partial<Record<FeatureName, number>>;
  measured: Record<FeatureName, number> | null;
}

export interface StateSnapshot {
  base: string | LatentCodePayload | null;
  sliders: Partial<Record<FeatureName, number>>;
  baseFeatures: Partial<Record<FeatureName, number>>;
  measured: Record<FeatureName, number> | null;
  mesh: MeshPayload | null;
  busy: boolean;
  error: { code: string; message: string } | null;
  clamped: boolean;
}

export type Listener = (snapshot: StateSnapshot) => void;

/** Editor session: one base shape or generated code, slider values in raw
 * display units, the current mesh, and a replayable edit history. Slider
 * bounds mirror the server's clamp range; one request in flight at a time
 * with newest-wins supersession. */
export class EditorState {
  private base: string | LatentCodePayload | null = null;
  private baseFeatures: Partial<Record<FeatureName, number>> = {};
  private sliders: Partial<Record<FeatureName, number>> = {};
  private measured: Record<FeatureName, number> | null = null;
  private mesh: MeshPayload | null = null;
  private error: { code: string; message: string } | null = null;
  private clamped = false;
  private queue = new LatestRequestQueue<EditResponse>();
  private listeners: Listener[] = [];
  readonly history: HistoryStep[] = [];
  clampRanges: Partial<Record<FeatureName, ClampRange>> = {};
  conditioned = false;
  previewResolution = 48;
  finalResolution = 64;

  constructor(private api: ApiClient) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) listener(snap);
  }

  snapshot(): StateSnapshot {
    return {
      base: this.base,
      sliders: { ...this.sliders },
      baseFeatures: { ...this.baseFeatures },
      measured: this.measured ? { ...this.measured } : null,
      mesh: this.mesh,
      busy: this.queue.busy,
      error: this.error,
      clamped: this.clamped,
    };
  }

  applyServerInfo(info: ShapesResponse): void {
    this.conditioned = info.conditioned;
    this.clampRanges = info.clamp;
    this.previewResolution = info.preview_resolution;
    this.finalResolution = info.final_resolution;
  }

  /** Clamp a slider value to the server's permitted range. */
  clampValue(name: FeatureName, value: number): number {
    const range = this.clampRanges[name];
    if (!range) return value;
    return Math.min(range.max, Math.max(range.min, value));
  }

  setBase(base: string | LatentCodePayload,
          features: Partial<Record<FeatureName, number>>,
          mesh: MeshPayload | null,
          measured: Record<FeatureName, number> | null): void {
    this.base = base;
    this.baseFeatures = { ...features };
    this.sliders = { ...features };
    this.mesh = mesh;
    this.measured = measured;
    this.error = null;
    this.clamped = false;
    this.history.length = 0;
    this.emit();
  }

  /** Slider movement: clamp the value and submit one edit request; the
   * caller debounces raw input events. */
  setSlider(name: FeatureName, value: number, resolution?: number): void {
    if (!this.conditioned) {
      this.error = { code: "unconditioned_model",
                     message: "this checkpoint has no feature conditioning" };
      this.emit();
      return;
    }
    this.sliders[name] = this.clampValue(name, value);
    this.requestEdit(resolution);
  }

  resetSliders(resolution?: number): void {
    this.sliders = { ...this.baseFeatures };
    this.requestEdit(resolution);
  }

  /** Differences from the base define the edit payload; empty means the
   * identity edit, which the server answers with the base reconstruction. */
  editPayload(): Partial<Record<FeatureName, number>> {
    const out: Partial<Record<FeatureName, number>> = {};
    for (const key of Object.keys(this.sliders) as FeatureName[]) {
      if (this.sliders[key] !== this.baseFeatures[key]) {
        out[key] = this.sliders[key];
      }
    }
    return out;
  }

  requestEdit(resolution?: number): void {
    if (this.base === null) return;
    const base = this.base;
    const features = this.editPayload();
    const res = resolution ?? this.previewResolution;
    this.emit(); // busy flag may flip
    this.queue.submit(
      () => this.api.edit(base, features, res),
      (response) => {
        this.mesh = response.mesh;
        this.measured = response.measured;
        this.clamped = response.clamped;
        this.error = null;
        this.history.push({ features, measured: response.measured });
        this.emit();
      },
      (err) => {
        if (err instanceof ApiError) {
          this.error = { code: err.code, message: err.message };
        } else {
          this.error = { code: "unknown", message: String(err) };
        }
        // state (sliders, base) is preserved for retry
        this.emit();
      },
    );
  }

  /** Replaying the recorded steps against a fresh state must land on the
   * same final request payload: the loop is idempotent. */
  replayPayloads(): Partial<Record<FeatureName, number>>[] {
    return this.history.map((h) => ({ ...h.features }));
  }
}
