/** Typed client for the clustering service HTTP API.
 *
 * Every displayed number in the viewer originates from one of these calls;
 * the client holds no derived state beyond the base URL.
 */

import { ParsedCloud, parsePointCloud } from "./pointcloud";

export interface VolumeInfo {
  volume_id: string;
  dims: [number, number, number];
  intensity_range: [number, number];
}

export interface HistogramPayload {
  histogram: { edges: number[]; counts: number[]; excluded: number };
  cusp: number | null;
}

export interface ClusterRequest {
  cutoff: number;
  min_weight: number;
  eps: number;
  include_border?: boolean;
}

export interface SubmitReply {
  job_id: string;
  status: JobStatus;
  cached: boolean;
}

export type JobStatus = "pending" | "running" | "done" | "failed";

export interface JobPayload {
  job_id: string;
  run_id: string;
  volume_id: string;
  status: JobStatus;
  params: ClusterRequest;
  error?: string;
  n_clusters?: number;
  n_points?: number;
  n_noise?: number;
}

export interface ClusterRow {
  id: number;
  size: number;
  core_count: number;
  total_intensity: number;
  max_intensity: number;
  centroid: [number, number, number];
  bbox_min: [number, number, number];
  bbox_max: [number, number, number];
}

export interface ClusterListing {
  run_id: string;
  key: string;
  n_clusters: number;
  n_points: number;
  n_noise: number;
  clusters: ClusterRow[];
}

export interface ShellStats {
  run_id: string;
  cluster_id: number;
  size: number;
  shell_size: number;
  interior_size: number;
  reduction_factor: number | null;
  peel_depth: number;
}

export interface StreamOptions {
  target?: number;
  mode?: "stride" | "importance";
  seed?: number;
}

/** An HTTP error from the service, with the body's detail kept verbatim. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service replied ${status}: ${detail}`);
    this.name = "ServiceError";
  }
}

type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

function renderDetail(body: unknown): string {
  if (typeof body === "string") return body;
  if (body && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === "string") return detail;
    if (Array.isArray(detail)) {
      // pydantic validation errors: [{loc, msg, type}, ...]
      return detail
        .map((d) => {
          const loc = Array.isArray(d.loc) ? d.loc.join(".") : String(d.loc);
          return `${loc}: ${d.msg}`;
        })
        .join("; ");
    }
  }
  return JSON.stringify(body);
}

export class ApiClient {
  private readonly fetchFn: FetchFn;

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchFn,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let body: unknown;
      try {
        body = await response.json();
      } catch {
        body = await response.text().catch(() => "");
      }
      throw new ServiceError(response.status, renderDetail(body));
    }
    return response;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request(path)).json() as Promise<T>;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return response.json() as Promise<T>;
  }

  loadVolume(path: string): Promise<VolumeInfo> {
    return this.postJson("/volumes", { path });
  }

  histogram(volumeId: string, bins = 128): Promise<HistogramPayload> {
    return this.getJson(`/volumes/${volumeId}/histogram?bins=${bins}`);
  }

  submitCluster(volumeId: string, params: ClusterRequest): Promise<SubmitReply> {
    return this.postJson(`/volumes/${volumeId}/cluster`, params);
  }

  job(jobId: string): Promise<JobPayload> {
    return this.getJson(`/jobs/${jobId}`);
  }

  /** Poll until the job leaves pending/running; resolves with done OR failed. */
  async pollJob(jobId: string, intervalMs = 150, timeoutMs = 120_000): Promise<JobPayload> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const payload = await this.job(jobId);
      if (payload.status === "done" || payload.status === "failed") return payload;
      if (Date.now() > deadline) {
        throw new ServiceError(0, `job ${jobId} still ${payload.status} after ${timeoutMs} ms`);
      }
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }

  listClusters(runId: string, key = "size"): Promise<ClusterListing> {
    return this.getJson(`/runs/${runId}/clusters?key=${key}`);
  }

  async clusterPoints(runId: string, clusterId: number, opts: StreamOptions = {}): Promise<ParsedCloud> {
    const response = await this.request(
      `/runs/${runId}/clusters/${clusterId}/points${streamQuery(opts)}`,
    );
    return parsePointCloud(await response.arrayBuffer());
  }

  computeShell(runId: string, clusterId: number, depth: number): Promise<ShellStats> {
    return this.postJson(`/runs/${runId}/shell`, { cluster_id: clusterId, depth });
  }

  async shellPoints(
    runId: string,
    clusterId: number,
    depth: number,
    opts: StreamOptions = {},
  ): Promise<ParsedCloud> {
    const query = streamQuery(opts, [`cluster_id=${clusterId}`, `depth=${depth}`]);
    const response = await this.request(`/runs/${runId}/shell/points${query}`);
    return parsePointCloud(await response.arrayBuffer());
  }

  async clusterMesh(runId: string, clusterId: number, iso: number): Promise<string> {
    const response = await this.request(`/runs/${runId}/clusters/${clusterId}/mesh?iso=${iso}`);
    return response.text();
  }
}

function streamQuery(opts: StreamOptions, extra: string[] = []): string {
  const parts = [...extra];
  if (opts.target !== undefined) parts.push(`target=${opts.target}`);
  if (opts.mode !== undefined) parts.push(`mode=${opts.mode}`);
  if (opts.seed !== undefined) parts.push(`seed=${opts.seed}`);
  return parts.length ? `?${parts.join("&")}` : "";
}
