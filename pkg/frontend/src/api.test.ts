import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "./api";
import { emptySpec } from "./types";

interface Call { url: string; init?: RequestInit }

function stubFetch(handler: (url: string) => { status?: number; body?: unknown } | "down") {
  const calls: Call[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const out = handler(url);
    if (out === "down") throw new TypeError("fetch failed");
    const status = out.status ?? 200;
    return {
      ok: status < 400,
      status,
      statusText: `status ${status}`,
      json: async () => out.body,
    } as Response;
  };
  return { calls, fetchFn };
}

describe("ApiClient", () => {
  it("builds the asset query string from the filter", async () => {
    const { calls, fetchFn } = stubFetch(() => ({ body: { assets: [] } }));
    const api = new ApiClient("http://host:9/", fetchFn);
    await api.listAssets({ class_id: 4, kind: "basic" });
    expect(calls[0].url).toBe("http://host:9/assets?class_id=4&kind=basic");
    await api.listAssets();
    expect(calls[1].url).toBe("http://host:9/assets");
  });

  it("posts the spec and sampler together for a job", async () => {
    const { calls, fetchFn } = stubFetch(() => ({ body: { id: "j1" } }));
    const api = new ApiClient("http://host:9", fetchFn);
    await api.submitJob(emptySpec([8, 8, 4]), { steps: 10, seed: 3 });
    const sent = JSON.parse(String(calls[0].init?.body));
    expect(calls[0].url).toBe("http://host:9/jobs");
    expect(sent.spec.dims).toEqual([8, 8, 4]);
    expect(sent.sampler).toEqual({ steps: 10, seed: 3 });
  });

  it("surfaces the server's error detail", async () => {
    const { fetchFn } = stubFetch(() =>
      ({ status: 409, body: { detail: "asset id taken" } }));
    const api = new ApiClient("http://host:9", fetchFn);
    const err = await api.getJob("x").catch((e) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).message).toBe("asset id taken");
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).unreachable).toBe(false);
  });

  it("flags a dead service as unreachable", async () => {
    const { fetchFn } = stubFetch(() => "down");
    const api = new ApiClient("http://host:9", fetchFn);
    const err = await api.listAssets().catch((e) => e as ApiError);
    expect((err as ApiError).unreachable).toBe(true);
  });

  it("rejects a malformed scene view before it reaches rendering", async () => {
    const { fetchFn } = stubFetch(() => ({
      body: {
        dims: [4, 4, 2],
        palette: [{ name: "empty", color: [0, 0, 0] }],
        voxels: [[9, 0, 0, 0]], // x outside dims
      },
    }));
    const api = new ApiClient("http://host:9", fetchFn);
    await expect(api.getSceneView("s1")).rejects.toThrow(/outside dims/);
  });
});
