/** Typed client for the gateway's public HTTP API.
 *
 * Every request must match one of the four public routes; anything else
 * throws RouteViolation before a connection is attempted, so "the UI
 * only ever talks to the public API" is enforced in code, not by
 * convention.
 */

import type { DetectorInfo, JobStatusDoc } from "./types.js";

const JOB_ID = "[A-Za-z0-9][A-Za-z0-9._-]*";

const PUBLIC_ROUTES: RegExp[] = [
  new RegExp("^/api/v1/detectors$"),
  new RegExp("^/api/v1/jobs$"),
  new RegExp(`^/api/v1/jobs/${JOB_ID}$`),
  new RegExp(`^/api/v1/jobs/${JOB_ID}/download$`),
];

export class RouteViolation extends Error {
  constructor(path: string) {
    super(`refusing request outside the public gateway API: ${path}`);
    this.name = "RouteViolation";
  }
}

/** A non-2xx gateway reply, carrying the machine-readable error code. */
export class GatewayApiError extends Error {
  constructor(
    public readonly code: string,
    public readonly status: number,
  ) {
    super(`gateway replied ${status}: ${code}`);
    this.name = "GatewayApiError";
  }
}

export interface SubmissionFields {
  file?: Blob & { name?: string };
  videoUrl?: string;
  detectors: string[];
  email: string;
  pin: string;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorCode(resp: Response): Promise<string> {
  try {
    const doc = (await resp.json()) as { error?: unknown };
    if (typeof doc.error === "string") return doc.error;
  } catch {
    /* non-JSON error body */
  }
  return `http-${resp.status}`;
}

export class GatewayClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string): string {
    if (!PUBLIC_ROUTES.some((route) => route.test(path))) {
      throw new RouteViolation(path);
    }
    return this.base + path;
  }

  async listDetectors(signal?: AbortSignal): Promise<DetectorInfo[]> {
    const resp = await this.fetchFn(this.url("/api/v1/detectors"), { signal });
    if (!resp.ok) throw new GatewayApiError(await errorCode(resp), resp.status);
    return (await resp.json()) as DetectorInfo[];
  }

  async submit(fields: SubmissionFields, signal?: AbortSignal): Promise<string> {
    const form = new FormData();
    if (fields.file !== undefined) {
      form.append("video", fields.file as Blob, fields.file.name ?? "upload.bin");
    }
    if (fields.videoUrl !== undefined) {
      form.append("video_url", fields.videoUrl);
    }
    form.append("detectors", fields.detectors.join(","));
    form.append("email", fields.email);
    form.append("pin", fields.pin);
    const resp = await this.fetchFn(this.url("/api/v1/jobs"), {
      method: "POST",
      body: form,
      signal,
    });
    if (resp.status !== 201) throw new GatewayApiError(await errorCode(resp), resp.status);
    const doc = (await resp.json()) as { job_id: string };
    return doc.job_id;
  }

  async status(jobId: string, signal?: AbortSignal): Promise<JobStatusDoc> {
    const resp = await this.fetchFn(this.url(`/api/v1/jobs/${jobId}`), { signal });
    if (!resp.ok) throw new GatewayApiError(await errorCode(resp), resp.status);
    return (await resp.json()) as JobStatusDoc;
  }

  async download(jobId: string, pin: string, signal?: AbortSignal): Promise<Uint8Array> {
    const resp = await this.fetchFn(this.url(`/api/v1/jobs/${jobId}/download`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ pin }),
      signal,
    });
    if (!resp.ok) throw new GatewayApiError(await errorCode(resp), resp.status);
    return new Uint8Array(await resp.arrayBuffer());
  }
}
