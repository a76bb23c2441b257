export type FeatureName = "volume" | "isthmus_area" | "symmetry";

export const FEATURE_NAMES: FeatureName[] = ["volume", "isthmus_area", "symmetry"];

export interface MeshPayload {
  positions: number[];
  indices: number[];
  n_vertices: number;
  n_faces: number;
  truncated: boolean;
  empty: boolean;
}

export interface ShapeEntry {
  id: string;
  features: Record<FeatureName, number>;
}

export interface ClampRange {
  min: number;
  max: number;
  mean: number;
  std: number;
}

export interface ShapesResponse {
  shapes: ShapeEntry[];
  conditioned: boolean;
  feature_names: FeatureName[];
  clamp: Record<FeatureName, ClampRange>;
  preview_resolution: number;
  final_resolution: number;
}

export interface LatentCodePayload {
  fixed: number[];
  trainable: number[];
}

export interface EditResponse {
  resolution: number;
  mesh: MeshPayload;
  conditioned: Partial<Record<FeatureName, number>>;
  measured: Record<FeatureName, number> | null;
  clamped: boolean;
}

export interface ReconstructResponse {
  shape_id: string;
  resolution: number;
  mesh: MeshPayload;
  code: LatentCodePayload;
}

export interface GenerateResponse {
  seed: number;
  resolution: number;
  mesh: MeshPayload;
  code: LatentCodePayload;
  conditioned: Partial<Record<FeatureName, number>>;
  measured: Record<FeatureName, number> | null;
  extrapolated: boolean;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}
