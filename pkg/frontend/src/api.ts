import {
  ApiError,
  EditResponse,
  FeatureName,
  GenerateResponse,
  LatentCodePayload,
  ReconstructResponse,
  ShapesResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the editor service; all geometry comes from here. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request<T>(path: string, body?: unknown): Promise<T> {
    const init: RequestInit = body === undefined
      ? { method: "GET" }
      : {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      };
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, "network_error", String(err));
    }
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const code = payload?.error?.code ?? `http_${response.status}`;
      const message = payload?.error?.message ?? response.statusText;
      throw new ApiError(response.status, code, message);
    }
    return payload as T;
  }

  getShapes(): Promise<ShapesResponse> {
    return this.request<ShapesResponse>("/shapes");
  }

  reconstruct(shapeId: string, resolution?: number): Promise<ReconstructResponse> {
    return this.request<ReconstructResponse>("/reconstruct", {
      shape_id: shapeId,
      resolution,
    });
  }

  generate(seed: number, overrides?: Partial<Record<FeatureName, number>>,
           resolution?: number): Promise<GenerateResponse> {
    return this.request<GenerateResponse>("/generate", {
      seed,
      overrides,
      resolution,
    });
  }

  edit(base: string | LatentCodePayload,
       features: Partial<Record<FeatureName, number>>,
       resolution?: number): Promise<EditResponse> {
    return this.request<EditResponse>("/edit", { base, features, resolution });
  }
}
