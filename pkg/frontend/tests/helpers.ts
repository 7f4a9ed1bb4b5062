/** Shared test utilities: a stored-zip writer for fixtures, a jsdom
 * page factory, and a scripted fetch double that records every call.
 */

import { File as NodeFile } from "node:buffer";
import { crc32 } from "node:zlib";
import { JSDOM } from "jsdom";

const encoder = new TextEncoder();

function toBytes(data: Uint8Array | string): Uint8Array {
  return typeof data === "string" ? encoder.encode(data) : data;
}

export interface StoredZipOptions {
  /** Stamp a different compression method (to build invalid fixtures). */
  methodOverride?: number;
}

/** Writes an archive with every entry stored uncompressed, the same
 * layout the result bundles use. */
export function storedZip(
  entries: Record<string, Uint8Array | string>,
  options: StoredZipOptions = {},
): Uint8Array {
  const method = options.methodOverride ?? 0;
  const chunks: Uint8Array[] = [];
  const central: Uint8Array[] = [];
  let offset = 0;

  for (const [name, raw] of Object.entries(entries)) {
    const nameBytes = encoder.encode(name);
    const data = toBytes(raw);
    const crc = crc32(data) >>> 0;

    const local = new Uint8Array(30 + nameBytes.length);
    const lv = new DataView(local.buffer);
    lv.setUint32(0, 0x04034b50, true);
    lv.setUint16(4, 20, true); // version needed
    lv.setUint16(8, method, true);
    lv.setUint32(14, crc, true);
    lv.setUint32(18, data.length, true); // compressed size (stored)
    lv.setUint32(22, data.length, true); // uncompressed size
    lv.setUint16(26, nameBytes.length, true);
    local.set(nameBytes, 30);
    chunks.push(local, data);

    const record = new Uint8Array(46 + nameBytes.length);
    const cv = new DataView(record.buffer);
    cv.setUint32(0, 0x02014b50, true);
    cv.setUint16(4, 20, true); // version made by
    cv.setUint16(6, 20, true); // version needed
    cv.setUint16(10, method, true);
    cv.setUint32(16, crc, true);
    cv.setUint32(20, data.length, true);
    cv.setUint32(24, data.length, true);
    cv.setUint16(28, nameBytes.length, true);
    cv.setUint32(42, offset, true); // local header offset
    record.set(nameBytes, 46);
    central.push(record);

    offset += local.length + data.length;
  }

  const centralSize = central.reduce((sum, part) => sum + part.length, 0);
  const eocd = new Uint8Array(22);
  const ev = new DataView(eocd.buffer);
  ev.setUint32(0, 0x06054b50, true);
  ev.setUint16(8, central.length, true); // entries on this disk
  ev.setUint16(10, central.length, true); // entries total
  ev.setUint32(12, centralSize, true);
  ev.setUint32(16, offset, true); // central directory offset

  const total = offset + centralSize + eocd.length;
  const out = new Uint8Array(total);
  let cursor = 0;
  for (const part of [...chunks, ...central, eocd]) {
    out.set(part, cursor);
    cursor += part.length;
  }
  return out;
}

/** A plausible results bundle for a two-detector job. */
export function bundleFixture(jobId = "job-1", frames = 20): Uint8Array {
  const constant = Array.from({ length: frames }, () => 0.25);
  const sinusoid = Array.from({ length: frames }, (_, i) =>
    Number((0.5 + 0.4 * Math.sin((2 * Math.PI * i) / frames)).toFixed(6)),
  );
  const summary = {
    job_id: jobId,
    detectors: {
      "mock-constant": { outcome: "succeeded", aggregate_score: 0.25, frame_count: frames },
      "mock-sinusoid": { outcome: "succeeded", aggregate_score: 0.5, frame_count: frames },
    },
  };
  const overlay = {
    frame_count: frames,
    detectors: [
      { detector_id: "mock-constant", soft_labels: constant },
      { detector_id: "mock-sinusoid", soft_labels: sinusoid },
    ],
  };
  const csv = (labels: number[]): string =>
    "frame_index,soft_label\n" + labels.map((v, i) => `${i},${v}`).join("\n") + "\n";
  return storedZip({
    "summary.json": JSON.stringify(summary),
    "overlay.json": JSON.stringify(overlay),
    "scores/mock-constant.csv": csv(constant),
    "scores/mock-sinusoid.csv": csv(sinusoid),
    "README.txt": "results bundle\n",
  });
}

export interface Page {
  dom: JSDOM;
  win: Window & typeof globalThis;
  doc: Document;
  root: HTMLElement;
}

export function makePage(url = "http://localhost/#/"): Page {
  const dom = new JSDOM('<!DOCTYPE html><div id="app"></div>', { url });
  const win = dom.window as unknown as Window & typeof globalThis;
  const doc = win.document;
  const root = doc.getElementById("app")!;
  return { dom, win, doc, root };
}

/** A File whose reported size can exceed its real content, so oversize
 * handling is testable without allocating 50 MB. */
export function fileOfSize(size: number, name = "clip.zip"): NodeFile {
  const file = new NodeFile([new Uint8Array(Math.min(size, 8))], name);
  Object.defineProperty(file, "size", { value: size, configurable: true });
  return file;
}

/** Plants a file on a jsdom file input and fires its change event. */
export function setFile(page: Page, input: HTMLInputElement, file: NodeFile): void {
  const fileList = {
    0: file,
    length: 1,
    item: (i: number) => (i === 0 ? file : null),
  } as unknown as FileList;
  Object.defineProperty(input, "files", { value: fileList, configurable: true });
  input.dispatchEvent(new page.win.Event("change", { bubbles: true }));
}

export interface RecordedCall {
  url: string;
  init?: RequestInit;
}

export type Responder = (url: string, init?: RequestInit) => Response | Promise<Response>;

/** Fetch double: dispatches on "METHOD path" and records every call. */
export class ScriptedFetch {
  readonly calls: RecordedCall[] = [];
  private readonly routes = new Map<string, Responder[]>();

  /** Queue a response for "GET /api/v1/..." etc. The last queued
   * responder for a key is reused once the queue drains. */
  on(key: string, responder: Responder): this {
    const queue = this.routes.get(key) ?? [];
    queue.push(responder);
    this.routes.set(key, queue);
    return this;
  }

  json(key: string, status: number, body: unknown): this {
    return this.on(key, () =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      }),
    );
  }

  bytes(key: string, status: number, body: Uint8Array): this {
    return this.on(key, () => new Response(body.slice(), { status }));
  }

  get fn(): (url: string, init?: RequestInit) => Promise<Response> {
    return async (url, init) => {
      this.calls.push({ url, init });
      const method = (init?.method ?? "GET").toUpperCase();
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      const key = `${method} ${path}`;
      const queue = this.routes.get(key);
      if (queue === undefined || queue.length === 0) {
        throw new Error(`unscripted fetch: ${key}`);
      }
      const responder = queue.length > 1 ? queue.shift()! : queue[0];
      return responder(url, init);
    };
  }

  posts(pathPrefix = "/api/v1/jobs"): RecordedCall[] {
    return this.calls.filter(
      (call) =>
        (call.init?.method ?? "GET").toUpperCase() === "POST" &&
        call.url.includes(pathPrefix),
    );
  }
}

/** Waits (real time) until `check` stops throwing / returns truthy. */
export async function waitFor<T>(
  check: () => T | null | undefined | false,
  timeoutMs = 15000,
  stepMs = 25,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  for (;;) {
    try {
      const value = check();
      if (value) return value;
    } catch (error) {
      lastError = error;
    }
    if (Date.now() > deadline) {
      throw new Error(`waitFor timed out after ${timeoutMs}ms: ${String(lastError ?? "condition stayed false")}`);
    }
    await new Promise((resolve) => setTimeout(resolve, stepMs));
  }
}

export const flush = (): Promise<void> => new Promise((resolve) => setTimeout(resolve, 0));

export const CATALOG = [
  {
    detector_id: "mock-constant",
    name: "Constant",
    version: "1.0",
    description: "flat score",
    source_repo: "https://example.org/constant",
    release_date: "2020-01-01",
  },
  {
    detector_id: "mock-sinusoid",
    name: "Sinusoid",
    version: "1.0",
    description: "wavy score",
    source_repo: "https://example.org/sinusoid",
    release_date: "2020-02-02",
  },
];
