import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { GatewayClient } from "../src/api.js";
import { renderStatusPage } from "../src/status.js";
import { bundleFixture, makePage, ScriptedFetch, type Page } from "./helpers.js";

const JOB = "j1";
const STATUS_KEY = `GET /api/v1/jobs/${JOB}`;
const DOWNLOAD_KEY = `POST /api/v1/jobs/${JOB}/download`;

const running = { state: "running", detail: "" };
const completed = { state: "completed", detail: "" };

function statusCalls(fetch: ScriptedFetch): number {
  return fetch.calls.filter((c) => (c.init?.method ?? "GET") === "GET").length;
}

describe("status page", () => {
  let page: Page;
  let fetch: ScriptedFetch;
  let save: ReturnType<typeof vi.fn>;

  beforeEach(() => {
    vi.useFakeTimers();
    page = makePage(`http://localhost/#/jobs/${JOB}`);
    fetch = new ScriptedFetch();
    save = vi.fn();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  function render(options: { pollMs?: number; signal?: AbortSignal } = {}): void {
    renderStatusPage(page.root, new GatewayClient("", fetch.fn), JOB, { save, ...options });
  }

  const settle = (): Promise<void> => vi.advanceTimersByTimeAsync(0).then(() => undefined);

  it("polls every 3 seconds by default until the job settles", async () => {
    fetch.json(STATUS_KEY, 200, running).json(STATUS_KEY, 200, running).json(STATUS_KEY, 200, completed);
    render();
    await settle();
    expect(statusCalls(fetch)).toBe(1);
    expect(page.root.querySelector("#state-text")!.textContent).toContain("Running");
    expect(page.root.querySelector<HTMLElement>(".spinner")!.hidden).toBe(false);
    expect(page.root.querySelector<HTMLElement>("#result-panel")!.hidden).toBe(true);

    await vi.advanceTimersByTimeAsync(2999);
    expect(statusCalls(fetch)).toBe(1); // not yet
    await vi.advanceTimersByTimeAsync(1);
    expect(statusCalls(fetch)).toBe(2); // exactly at 3000 ms

    await vi.advanceTimersByTimeAsync(3000);
    expect(statusCalls(fetch)).toBe(3);
    expect(page.root.querySelector("#state-text")!.textContent).toBe("Completed");
    expect(page.root.querySelector<HTMLElement>(".spinner")!.hidden).toBe(true);
    expect(page.root.querySelector<HTMLElement>("#result-panel")!.hidden).toBe(false);

    await vi.advanceTimersByTimeAsync(30000);
    expect(statusCalls(fetch)).toBe(3); // polling stopped at the terminal state
  });

  it("honors a custom poll interval", async () => {
    fetch.json(STATUS_KEY, 200, running).json(STATUS_KEY, 200, completed);
    render({ pollMs: 250 });
    await settle();
    expect(statusCalls(fetch)).toBe(1);
    await vi.advanceTimersByTimeAsync(250);
    expect(statusCalls(fetch)).toBe(2);
  });

  it("shows a warning banner naming the failed detectors on partial completion", async () => {
    fetch.json(STATUS_KEY, 200, {
      state: "partially_completed",
      detail: "1 of 2 detectors failed: spectral-phantom (unknown-detector)",
    });
    render();
    await settle();
    const banner = page.root.querySelector("#status-banner")!;
    expect(banner.classList.contains("warning")).toBe(true);
    expect(page.root.querySelector("#state-text")!.textContent).toContain("Partially completed");
    const detail = page.root.querySelector<HTMLElement>("#status-detail")!;
    expect(detail.hidden).toBe(false);
    expect(detail.textContent).toContain("spectral-phantom");
    expect(page.root.querySelector<HTMLElement>("#result-panel")!.hidden).toBe(false);
  });

  it("marks a failed job and offers no download", async () => {
    fetch.json(STATUS_KEY, 200, { state: "failed", detail: "oversize-video" });
    render();
    await settle();
    expect(page.root.querySelector("#status-banner")!.classList.contains("error")).toBe(true);
    expect(page.root.querySelector<HTMLElement>("#result-panel")!.hidden).toBe(true);
  });

  it("renders a 404 view for an unknown job and stops polling", async () => {
    fetch.json(STATUS_KEY, 404, { error: "not-found" });
    render();
    await settle();
    expect(page.root.textContent).toContain("404");
    expect(page.root.textContent).toContain(JOB);
    expect(page.root.querySelector("a")!.getAttribute("href")).toBe("#/");
    await vi.advanceTimersByTimeAsync(30000);
    expect(statusCalls(fetch)).toBe(1);
  });

  it("keeps polling through transient gateway outages", async () => {
    fetch
      .on(STATUS_KEY, () => {
        throw new TypeError("fetch failed");
      })
      .json(STATUS_KEY, 200, completed);
    render();
    await settle();
    expect(page.root.querySelector("#state-text")!.textContent).toContain("unreachable");
    await vi.advanceTimersByTimeAsync(3000);
    expect(page.root.querySelector("#state-text")!.textContent).toBe("Completed");
  });

  it("shows a toast for a wrong PIN without navigating away", async () => {
    fetch.json(STATUS_KEY, 200, completed);
    fetch.json(DOWNLOAD_KEY, 403, { error: "wrong-pin" });
    render();
    await settle();
    const pin = page.root.querySelector<HTMLInputElement>("#download-pin")!;
    expect(pin.type).toBe("password"); // PIN stays masked on the status page too
    pin.value = "0000";
    page.root.querySelector<HTMLButtonElement>("#download-button")!.click();
    await settle();
    const toast = page.root.querySelector<HTMLElement>("#download-toast")!;
    expect(toast.hidden).toBe(false);
    expect(toast.textContent).toContain("Wrong PIN (attempt 1)");
    expect(page.win.location.hash).toBe(`#/jobs/${JOB}`); // still on the job page
    expect(page.root.querySelector("#job-id")!.textContent).toBe(JOB);

    page.root.querySelector<HTMLButtonElement>("#download-button")!.click();
    await settle();
    expect(toast.textContent).toContain("Wrong PIN (attempt 2)"); // counter hint advances

    expect(page.win.localStorage.length).toBe(0); // the PIN is never persisted
    expect(page.win.sessionStorage.length).toBe(0);
  });

  it("announces the cooldown once the gateway locks the job", async () => {
    fetch.json(STATUS_KEY, 200, completed);
    fetch.json(DOWNLOAD_KEY, 429, { error: "locked-out" });
    render();
    await settle();
    page.root.querySelector<HTMLButtonElement>("#download-button")!.click();
    await settle();
    expect(page.root.querySelector("#download-toast")!.textContent).toContain("cooldown");
  });

  it("explains when results are not ready yet", async () => {
    fetch.json(STATUS_KEY, 200, completed);
    fetch.json(DOWNLOAD_KEY, 409, { error: "not-ready" });
    render();
    await settle();
    page.root.querySelector<HTMLButtonElement>("#download-button")!.click();
    await settle();
    expect(page.root.querySelector("#download-toast")!.textContent).toContain("not ready");
  });

  it("saves the bundle and charts both curves after a correct PIN", async () => {
    fetch.json(STATUS_KEY, 200, completed);
    fetch.bytes(DOWNLOAD_KEY, 200, bundleFixture(JOB, 20));
    render();
    await settle();
    const pin = page.root.querySelector<HTMLInputElement>("#download-pin")!;
    pin.value = "4321";
    page.root.querySelector<HTMLButtonElement>("#download-button")!.click();
    await settle();

    expect(save).toHaveBeenCalledTimes(1);
    const [bytes, filename] = save.mock.calls[0] as [Uint8Array, string];
    expect(filename).toBe(`${JOB}-results.zip`);
    expect(bytes.length).toBeGreaterThan(100);

    expect(page.root.querySelector<HTMLElement>("#bundle-view")!.hidden).toBe(false);
    const rows = page.root.querySelectorAll("#aggregate-table tbody tr");
    expect(rows).toHaveLength(2);
    expect(rows[0].textContent).toContain("mock-constant");
    expect(rows[0].textContent).toContain("0.250000");

    const curves = page.root.querySelectorAll("#chart-slot svg polyline.curve");
    expect(curves).toHaveLength(2);
    for (const curve of curves) {
      expect(curve.getAttribute("points")!.split(" ")).toHaveLength(20);
    }
    expect(page.root.querySelector<HTMLElement>("#download-toast")!.hidden).toBe(true);
    expect(page.win.localStorage.length).toBe(0);
    expect(page.win.sessionStorage.length).toBe(0);
  });

  it("renders the aggregate table without a chart when the bundle has no overlay", async () => {
    const { storedZip } = await import("./helpers.js");
    const bundle = storedZip({
      "summary.json": JSON.stringify({
        job_id: JOB,
        detectors: { "mock-unstable": { outcome: "failed", error_note: "crash (exit 3)" } },
      }),
      "README.txt": "x",
    });
    fetch.json(STATUS_KEY, 200, { state: "partially_completed", detail: "" });
    fetch.bytes(DOWNLOAD_KEY, 200, bundle);
    render();
    await settle();
    page.root.querySelector<HTMLButtonElement>("#download-button")!.click();
    await settle();
    const rows = page.root.querySelectorAll("#aggregate-table tbody tr");
    expect(rows).toHaveLength(1);
    expect(rows[0].textContent).toContain("crash (exit 3)");
    expect(page.root.querySelectorAll("#chart-slot svg")).toHaveLength(0);
  });

  it("stops polling when the page is aborted", async () => {
    fetch.json(STATUS_KEY, 200, running);
    const controller = new AbortController();
    render({ signal: controller.signal });
    await settle();
    expect(statusCalls(fetch)).toBe(1);
    controller.abort();
    await vi.advanceTimersByTimeAsync(60000);
    expect(statusCalls(fetch)).toBe(1); // no further requests
  });
});
