import type {
  AssetSummary, JobRecord, MaskPreview, SamplerOptions, SceneSpec, VoxelView,
} from "./types";
import { validateVoxelView } from "./types";

export class ApiError extends Error {
  constructor(message: string, public status: number | null = null,
              public unreachable = false) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin typed client over the scene service. All server mutation goes through
 * the documented POST routes; GETs are side-effect free.
 */
export class ApiClient {
  constructor(
    public baseUrl: string,
    private fetchFn: FetchLike = (...a) => fetch(...a),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let res: Response;
    try {
      res = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`service unreachable: ${err}`, null, true);
    }
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-json error body */
      }
      throw new ApiError(detail, res.status);
    }
    return res;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request(path)).json() as Promise<T>;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const res = await this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    return res.json() as Promise<T>;
  }

  async listAssets(filter: { class_id?: number; kind?: string } = {}): Promise<AssetSummary[]> {
    const q = new URLSearchParams();
    if (filter.class_id !== undefined) q.set("class_id", String(filter.class_id));
    if (filter.kind !== undefined) q.set("kind", filter.kind);
    const qs = q.toString();
    const body = await this.getJson<{ assets: AssetSummary[] }>(
      `/assets${qs ? "?" + qs : ""}`);
    return body.assets;
  }

  async compose(spec: SceneSpec): Promise<MaskPreview> {
    return this.postJson<MaskPreview>("/scenes/compose", spec);
  }

  async submitJob(spec: SceneSpec, sampler: Partial<SamplerOptions>): Promise<{ id: string }> {
    return this.postJson<{ id: string }>("/jobs", { spec, sampler });
  }

  async getJob(jobId: string): Promise<JobRecord> {
    return this.getJson<JobRecord>(`/jobs/${jobId}`);
  }

  async getSceneView(sceneId: string): Promise<VoxelView> {
    const view = await this.getJson<VoxelView>(`/scenes/${sceneId}?format=json`);
    return validateVoxelView(view);
  }

  async evalScenes(pred: string, gt: string): Promise<{ iou: number; miou: number }> {
    return this.postJson("/eval", { pred, gt });
  }
}
