import { describe, expect, it } from "vitest";
import type { ApiClient } from "./api";
import { GenerationRunner, JobFailed, pollJob } from "./jobs";
import type { JobRecord, VoxelView } from "./types";
import { emptySpec } from "./types";

function job(state: JobRecord["state"], over: Partial<JobRecord> = {}): JobRecord {
  return { id: "j1", state, scene_id: null, timings: null, error: null, ...over };
}

/** ApiClient stand-in scripted with a sequence of job states. */
function scriptedApi(states: JobRecord[], view?: VoxelView) {
  let polls = 0;
  const api = {
    submitJob: async () => ({ id: "j1" }),
    getJob: async () => states[Math.min(polls++, states.length - 1)],
    getSceneView: async () => view,
  } as unknown as ApiClient;
  return { api, pollCount: () => polls };
}

const instantSleep = (waits: number[]) => async (ms: number) => { waits.push(ms); };

describe("pollJob", () => {
  it("backs off 500ms -> x1.5 capped at 5s", async () => {
    const states = [...Array<JobRecord>(9).fill(job("running")), job("done")];
    const { api } = scriptedApi(states);
    const waits: number[] = [];
    const done = await pollJob(api, "j1", { sleep: instantSleep(waits) });
    expect(done.state).toBe("done");
    expect(waits).toEqual([500, 750, 1125, 1688, 2532, 3798, 5000, 5000, 5000]);
  });

  it("resolves immediately when the job is already done", async () => {
    const { api, pollCount } = scriptedApi([job("done")]);
    const waits: number[] = [];
    await pollJob(api, "j1", { sleep: instantSleep(waits) });
    expect(pollCount()).toBe(1);
    expect(waits).toEqual([]);
  });

  it("carries the server diagnostic on failure", async () => {
    const { api } = scriptedApi([
      job("running"), job("failed", { error: "mask dims mismatch" })]);
    const err = await pollJob(api, "j1", { sleep: instantSleep([]) })
      .catch((e) => e as JobFailed);
    expect(err).toBeInstanceOf(JobFailed);
    expect((err as JobFailed).message).toBe("mask dims mismatch");
    expect((err as JobFailed).job.state).toBe("failed");
  });

  it("reports every status fetch through onUpdate", async () => {
    const { api } = scriptedApi([job("queued"), job("running"), job("done")]);
    const seen: string[] = [];
    await pollJob(api, "j1", {
      sleep: instantSleep([]),
      onUpdate: (j) => seen.push(j.state),
    });
    expect(seen).toEqual(["queued", "running", "done"]);
  });

  it("gives up after the timeout budget", async () => {
    const { api } = scriptedApi([job("running")]);
    await expect(pollJob(api, "j1", { sleep: instantSleep([]), timeoutMs: 2000 }))
      .rejects.toThrow(/still running/);
  });
});

describe("GenerationRunner", () => {
  const view: VoxelView = {
    dims: [8, 8, 4],
    palette: [{ name: "empty", color: [0, 0, 0] }],
    voxels: [],
  };

  it("submits, polls, and returns the scene view", async () => {
    const { api } = scriptedApi(
      [job("running"), job("done", { scene_id: "s9" })], view);
    const runner = new GenerationRunner(api, { sleep: instantSleep([]) });
    const got = await runner.run(emptySpec([8, 8, 4]), { steps: 5 });
    expect(got).toBe(view);
    expect(runner.lastJob?.scene_id).toBe("s9");
    expect(runner.busy).toBe(false);
  });

  it("rejects a second run while one is in flight", async () => {
    let release!: () => void;
    const gate = new Promise<void>((r) => { release = r; });
    const api = {
      submitJob: async () => { await gate; return { id: "j1" }; },
      getJob: async () => job("done", { scene_id: "s1" }),
      getSceneView: async () => view,
    } as unknown as ApiClient;
    const runner = new GenerationRunner(api, { sleep: instantSleep([]) });
    const first = runner.run(emptySpec([8, 8, 4]), {});
    await expect(runner.run(emptySpec([8, 8, 4]), {}))
      .rejects.toThrow(/already in flight/);
    release();
    await first;
    expect(runner.busy).toBe(false);
  });

  it("clears busy even when the job fails", async () => {
    const { api } = scriptedApi([job("failed", { error: "boom" })]);
    const runner = new GenerationRunner(api, { sleep: instantSleep([]) });
    await expect(runner.run(emptySpec([8, 8, 4]), {})).rejects.toThrow("boom");
    expect(runner.busy).toBe(false);
  });
});
