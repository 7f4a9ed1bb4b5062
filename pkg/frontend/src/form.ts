/** Submission page: media source, detector selection, contact, PIN.
 *
 * The submit button stays disabled until every field is valid locally;
 * in particular a file larger than the server's 52,428,800-byte ceiling
 * is flagged inline and never uploaded. Server rejections are mapped
 * back onto the offending field.
 */

import { GatewayApiError, GatewayClient, type SubmissionFields } from "./api.js";
import { MAX_VIDEO_BYTES } from "./types.js";

export const OVERSIZE_MESSAGE = "exceeds 50 MB — choose a smaller file";

const FIELD_FOR_CODE: Record<string, string> = {
  "oversize-video": "video",
  "missing-video": "video",
  "ambiguous-video": "video",
  "fetch-failed": "video",
  "unsupported-scheme": "video",
  "invalid-email": "email",
  "invalid-pin": "pin",
  "empty-detector-list": "detectors",
  "duplicate-detector": "detectors",
};

const EMAIL_RE = /^[^@\s]+@[^@\s]+\.[^@\s]+$/;
const PIN_RE = /^[0-9]{4,6}$/;

export interface SubmitPageOptions {
  signal?: AbortSignal;
}

export function renderSubmitPage(
  root: HTMLElement,
  client: GatewayClient,
  navigate: (hash: string) => void,
  options: SubmitPageOptions = {},
): void {
  const doc = root.ownerDocument;
  root.innerHTML = `
    <section class="card">
      <h1>Submit a video for analysis</h1>
      <form id="submit-form" novalidate>
        <fieldset id="source-fieldset">
          <legend>Media source</legend>
          <label class="radio">
            <input type="radio" name="source" value="file" checked> Upload a file
          </label>
          <label class="radio">
            <input type="radio" name="source" value="url"> Fetch from a URL
          </label>
          <div class="field">
            <input type="file" id="video-file">
            <input type="url" id="video-url" placeholder="https://example.org/clip.zip" disabled hidden>
            <p class="field-error" data-for="video" hidden></p>
          </div>
        </fieldset>
        <div class="field">
          <label for="detectors">Detectors</label>
          <select id="detectors" multiple size="6" aria-label="detectors"></select>
          <p class="field-hint">Loading detector catalog…</p>
          <p class="field-error" data-for="detectors" hidden></p>
        </div>
        <div class="field">
          <label for="email">Notification email</label>
          <input type="email" id="email" autocomplete="off" placeholder="you@example.org">
          <p class="field-error" data-for="email" hidden></p>
        </div>
        <div class="field">
          <label for="pin">Download PIN (4–6 digits)</label>
          <input type="password" id="pin" inputmode="numeric" autocomplete="off" maxlength="6">
          <p class="field-error" data-for="pin" hidden></p>
        </div>
        <p class="field-error" data-for="form" hidden></p>
        <button type="submit" id="submit-button" disabled>Submit</button>
      </form>
    </section>`;

  const form = root.querySelector<HTMLFormElement>("#submit-form")!;
  const fileInput = root.querySelector<HTMLInputElement>("#video-file")!;
  const urlInput = root.querySelector<HTMLInputElement>("#video-url")!;
  const detectorSelect = root.querySelector<HTMLSelectElement>("#detectors")!;
  const catalogHint = root.querySelector<HTMLParagraphElement>(".field-hint")!;
  const emailInput = root.querySelector<HTMLInputElement>("#email")!;
  const pinInput = root.querySelector<HTMLInputElement>("#pin")!;
  const submitButton = root.querySelector<HTMLButtonElement>("#submit-button")!;

  const errorFor = (field: string): HTMLParagraphElement =>
    root.querySelector<HTMLParagraphElement>(`.field-error[data-for="${field}"]`)!;

  function setError(field: string, message: string | null): void {
    const el = errorFor(field);
    el.hidden = message === null;
    el.textContent = message ?? "";
  }

  function clearErrors(): void {
    for (const field of ["video", "detectors", "email", "pin", "form"]) setError(field, null);
  }

  function sourceMode(): "file" | "url" {
    const checked = form.querySelector<HTMLInputElement>('input[name="source"]:checked');
    return checked?.value === "url" ? "url" : "file";
  }

  function selectedFile(): File | undefined {
    return fileInput.files?.[0] ?? undefined;
  }

  function selectedDetectors(): string[] {
    return [...detectorSelect.selectedOptions].map((option) => option.value);
  }

  /** Local validity; also refreshes the inline oversize message. */
  function validate(): boolean {
    let mediaOk: boolean;
    if (sourceMode() === "file") {
      const file = selectedFile();
      if (file !== undefined && file.size > MAX_VIDEO_BYTES) {
        setError("video", OVERSIZE_MESSAGE);
        mediaOk = false;
      } else {
        setError("video", null);
        mediaOk = file !== undefined;
      }
    } else {
      const url = urlInput.value.trim();
      mediaOk = /^https?:\/\/\S+$/.test(url);
      setError("video", null);
    }
    const valid =
      mediaOk &&
      selectedDetectors().length > 0 &&
      EMAIL_RE.test(emailInput.value.trim()) &&
      PIN_RE.test(pinInput.value);
    submitButton.disabled = !valid;
    return valid;
  }

  for (const radio of form.querySelectorAll<HTMLInputElement>('input[name="source"]')) {
    radio.addEventListener("change", () => {
      const useFile = sourceMode() === "file";
      fileInput.disabled = !useFile;
      fileInput.hidden = !useFile;
      urlInput.disabled = useFile;
      urlInput.hidden = useFile;
      if (useFile) urlInput.value = "";
      else fileInput.value = "";
      validate();
    });
  }
  for (const input of [fileInput, urlInput, emailInput, pinInput]) {
    input.addEventListener("input", validate);
    input.addEventListener("change", validate);
  }
  detectorSelect.addEventListener("change", validate);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    clearErrors();
    if (!validate()) return; // never uploads while anything is invalid

    const fields: SubmissionFields = {
      detectors: selectedDetectors(),
      email: emailInput.value.trim(),
      pin: pinInput.value,
    };
    if (sourceMode() === "file") fields.file = selectedFile()!;
    else fields.videoUrl = urlInput.value.trim();

    submitButton.disabled = true;
    submitButton.textContent = "Submitting…";
    client
      .submit(fields, options.signal)
      .then((jobId) => navigate(`#/jobs/${jobId}`))
      .catch((error: unknown) => {
        submitButton.textContent = "Submit";
        submitButton.disabled = false;
        if (error instanceof GatewayApiError) {
          setError(FIELD_FOR_CODE[error.code] ?? "form", `rejected: ${error.code}`);
        } else if ((error as Error).name !== "AbortError") {
          setError("form", "the gateway could not be reached — try again");
        }
      });
  });

  client
    .listDetectors(options.signal)
    .then((catalog) => {
      detectorSelect.innerHTML = "";
      for (const detector of catalog) {
        const option = doc.createElement("option");
        option.value = detector.detector_id;
        option.textContent = `${detector.name} (${detector.release_date})`;
        detectorSelect.appendChild(option);
      }
      catalogHint.textContent = "Select one or more detectors.";
    })
    .catch((error: unknown) => {
      if ((error as Error).name !== "AbortError") {
        catalogHint.textContent = "Could not load the detector catalog — reload to retry.";
      }
    });

  validate();
}
