import type { ApiClient } from "./api";
import type { JobRecord, SamplerOptions, SceneSpec, VoxelView } from "./types";

export class JobFailed extends Error {
  constructor(public job: JobRecord) {
    super(job.error ?? `job ${job.id} failed`);
    this.name = "JobFailed";
  }
}

export interface PollOptions {
  initialMs?: number; // first wait; default 500
  factor?: number;    // backoff multiplier; default 1.5
  maxMs?: number;     // backoff cap; default 5000
  timeoutMs?: number; // give up after this much total waiting; default 10 min
  sleep?: (ms: number) => Promise<void>; // injectable for tests
  onUpdate?: (job: JobRecord) => void;   // called after every status fetch
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/**
 * Poll a job until it terminates. 500 ms interval with exponential backoff.
 * Resolves with the final record on "done"; throws JobFailed on "failed".
 */
export async function pollJob(api: ApiClient, jobId: string,
                              opts: PollOptions = {}): Promise<JobRecord> {
  const sleep = opts.sleep ?? defaultSleep;
  const factor = opts.factor ?? 1.5;
  const maxMs = opts.maxMs ?? 5000;
  const timeoutMs = opts.timeoutMs ?? 600_000;
  let wait = opts.initialMs ?? 500;
  let waited = 0;
  for (;;) {
    const job = await api.getJob(jobId);
    opts.onUpdate?.(job);
    if (job.state === "done") return job;
    if (job.state === "failed") throw new JobFailed(job);
    if (waited >= timeoutMs) {
      throw new Error(`job ${jobId} still ${job.state} after ${waited} ms`);
    }
    await sleep(wait);
    waited += wait;
    wait = Math.min(maxMs, Math.round(wait * factor));
  }
}

/**
 * One generation at a time per session: submit, poll, fetch the scene view.
 * Edits stay allowed while a job is in flight; a second run() while busy is
 * rejected before touching the server.
 */
export class GenerationRunner {
  busy = false;
  lastJob: JobRecord | null = null;

  constructor(private api: ApiClient, private poll: PollOptions = {}) {}

  async run(spec: SceneSpec, sampler: Partial<SamplerOptions>,
            onUpdate?: (job: JobRecord) => void): Promise<VoxelView> {
    if (this.busy) throw new Error("a generation job is already in flight");
    this.busy = true;
    try {
      const { id } = await this.api.submitJob(spec, sampler);
      const job = await pollJob(this.api, id,
        onUpdate ? { ...this.poll, onUpdate } : this.poll);
      this.lastJob = job;
      if (job.scene_id === null) throw new Error(`job ${id} done without scene`);
      return await this.api.getSceneView(job.scene_id);
    } finally {
      this.busy = false;
    }
  }
}
