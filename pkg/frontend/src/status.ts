/** Job status page: polls until the job settles, then offers the
 * PIN-gated download and renders the per-frame score chart.
 *
 * The PIN is read from the input only at click time and never written
 * to storage; a wrong PIN surfaces as a toast on this same page.
 */

import { GatewayApiError, GatewayClient } from "./api.js";
import { renderChart } from "./chart.js";
import { readBundle } from "./zip.js";
import { TERMINAL_STATES, type JobStatusDoc } from "./types.js";

export interface StatusPageOptions {
  signal?: AbortSignal;
  /** Poll interval while the job is still in flight. */
  pollMs?: number;
  /** Override for tests: receives the bundle bytes and a file name. */
  save?: (bytes: Uint8Array, filename: string) => void;
}

const DEFAULT_POLL_MS = 3000;

const STATE_LABELS: Record<string, string> = {
  received: "Received — waiting to be queued",
  queued: "Queued — waiting for a worker",
  running: "Running detectors…",
  completed: "Completed",
  partially_completed: "Partially completed",
  failed: "Failed",
};

function defaultSave(doc: Document, bytes: Uint8Array, filename: string): void {
  const view = doc.defaultView!;
  const blob = new view.Blob([bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer], {
    type: "application/zip",
  });
  const url = view.URL.createObjectURL(blob);
  const anchor = doc.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  doc.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  view.URL.revokeObjectURL(url);
}

export function renderStatusPage(
  root: HTMLElement,
  client: GatewayClient,
  jobId: string,
  options: StatusPageOptions = {},
): void {
  const doc = root.ownerDocument;
  const pollMs = options.pollMs ?? DEFAULT_POLL_MS;
  const save = options.save ?? ((bytes, name) => defaultSave(doc, bytes, name));

  root.innerHTML = `
    <section class="card">
      <h1>Job <code id="job-id"></code></h1>
      <div id="status-banner" class="banner">
        <span class="spinner" role="progressbar" aria-label="working"></span>
        <span id="state-text">Checking status…</span>
      </div>
      <p id="status-detail" hidden></p>
      <div id="result-panel" hidden>
        <h2>Results</h2>
        <label for="download-pin">PIN</label>
        <input type="password" id="download-pin" inputmode="numeric" autocomplete="off" maxlength="6">
        <button id="download-button" type="button">Download results</button>
        <p id="download-toast" class="toast" hidden></p>
        <div id="bundle-view" hidden>
          <table id="aggregate-table">
            <thead><tr><th>Detector</th><th>Outcome</th><th>Aggregate score</th></tr></thead>
            <tbody></tbody>
          </table>
          <div id="chart-slot"></div>
        </div>
      </div>
    </section>`;

  root.querySelector<HTMLElement>("#job-id")!.textContent = jobId;
  const banner = root.querySelector<HTMLDivElement>("#status-banner")!;
  const spinner = root.querySelector<HTMLSpanElement>(".spinner")!;
  const stateText = root.querySelector<HTMLSpanElement>("#state-text")!;
  const detailText = root.querySelector<HTMLParagraphElement>("#status-detail")!;
  const resultPanel = root.querySelector<HTMLDivElement>("#result-panel")!;
  const pinInput = root.querySelector<HTMLInputElement>("#download-pin")!;
  const downloadButton = root.querySelector<HTMLButtonElement>("#download-button")!;
  const toast = root.querySelector<HTMLParagraphElement>("#download-toast")!;
  const bundleView = root.querySelector<HTMLDivElement>("#bundle-view")!;

  let timer: ReturnType<typeof setTimeout> | null = null;
  let wrongAttempts = 0;
  options.signal?.addEventListener("abort", () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
  });

  function showNotFound(): void {
    root.innerHTML = `
      <section class="card">
        <h1>404 — unknown job</h1>
        <p>No job <code>${jobId}</code> exists on this gateway.</p>
        <p><a href="#/">Submit a new job</a></p>
      </section>`;
  }

  function applyStatus(status: JobStatusDoc): void {
    stateText.textContent = STATE_LABELS[status.state] ?? status.state;
    banner.dataset.state = status.state;
    detailText.hidden = status.detail === "";
    detailText.textContent = status.detail;
    const terminal = TERMINAL_STATES.has(status.state);
    spinner.hidden = terminal;
    if (!terminal) return;
    if (status.state === "partially_completed") {
      banner.classList.add("warning");
      detailText.classList.add("warning");
    }
    if (status.state === "failed") banner.classList.add("error");
    else resultPanel.hidden = false;
  }

  function poll(): void {
    if (options.signal?.aborted) return;
    client
      .status(jobId, options.signal)
      .then((status) => {
        applyStatus(status);
        if (!TERMINAL_STATES.has(status.state) && !options.signal?.aborted) {
          timer = setTimeout(poll, pollMs);
        }
      })
      .catch((error: unknown) => {
        if (error instanceof GatewayApiError && error.code === "not-found") {
          showNotFound();
        } else if ((error as Error).name !== "AbortError") {
          stateText.textContent = "Gateway unreachable — retrying…";
          if (!options.signal?.aborted) timer = setTimeout(poll, pollMs);
        }
      });
  }

  function showToast(message: string): void {
    toast.hidden = false;
    toast.textContent = message;
  }

  downloadButton.addEventListener("click", () => {
    toast.hidden = true;
    downloadButton.disabled = true;
    client
      .download(jobId, pinInput.value, options.signal)
      .then((bytes) => {
        downloadButton.disabled = false;
        save(bytes, `${jobId}-results.zip`);
        const { summary, overlay } = readBundle(bytes);
        const tbody = root.querySelector<HTMLTableSectionElement>("#aggregate-table tbody")!;
        tbody.innerHTML = "";
        for (const [detectorId, entry] of Object.entries(summary.detectors)) {
          const row = doc.createElement("tr");
          const scoreCell =
            entry.outcome === "succeeded" && entry.aggregate_score !== undefined
              ? entry.aggregate_score.toFixed(6)
              : (entry.error_note ?? "—");
          for (const text of [detectorId, entry.outcome, scoreCell]) {
            const cell = doc.createElement("td");
            cell.textContent = text;
            row.appendChild(cell);
          }
          tbody.appendChild(row);
        }
        const chartSlot = root.querySelector<HTMLDivElement>("#chart-slot")!;
        chartSlot.innerHTML = "";
        if (overlay !== null) chartSlot.appendChild(renderChart(doc, overlay, summary));
        bundleView.hidden = false;
      })
      .catch((error: unknown) => {
        downloadButton.disabled = false;
        if (error instanceof GatewayApiError) {
          if (error.code === "wrong-pin") {
            wrongAttempts += 1;
            showToast(`Wrong PIN (attempt ${wrongAttempts}) — check the PIN from your submission.`);
          } else if (error.code === "locked-out") {
            showToast("Too many wrong PINs — downloads are paused for a cooldown period.");
          } else if (error.code === "not-ready") {
            showToast("Results are not ready yet.");
          } else {
            showToast(`Download failed: ${error.code}`);
          }
        } else if ((error as Error).name !== "AbortError") {
          showToast("Download failed: gateway unreachable.");
        }
      });
  });

  poll();
}
