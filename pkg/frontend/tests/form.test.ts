import { beforeEach, describe, expect, it, vi } from "vitest";

import { GatewayClient } from "../src/api.js";
import { renderSubmitPage } from "../src/form.js";
import { MAX_VIDEO_BYTES } from "../src/types.js";
import {
  CATALOG,
  fileOfSize,
  flush,
  makePage,
  ScriptedFetch,
  setFile,
  type Page,
} from "./helpers.js";

interface Harness {
  page: Page;
  fetch: ScriptedFetch;
  navigate: ReturnType<typeof vi.fn>;
  form: HTMLFormElement;
  fileInput: HTMLInputElement;
  urlInput: HTMLInputElement;
  detectorSelect: HTMLSelectElement;
  emailInput: HTMLInputElement;
  pinInput: HTMLInputElement;
  submitButton: HTMLButtonElement;
  errorText: (field: string) => { hidden: boolean; text: string };
  typeInto: (input: HTMLInputElement, value: string) => void;
  pickDetector: (id: string) => void;
  submit: () => void;
}

async function mount(fetch?: ScriptedFetch): Promise<Harness> {
  const page = makePage();
  const scripted = fetch ?? new ScriptedFetch().json("GET /api/v1/detectors", 200, CATALOG);
  const navigate = vi.fn();
  renderSubmitPage(page.root, new GatewayClient("", scripted.fn), navigate);
  await flush(); // let the catalog request settle
  const q = <T extends Element>(sel: string): T => page.root.querySelector<T>(sel)!;
  const form = q<HTMLFormElement>("#submit-form");
  return {
    page,
    fetch: scripted,
    navigate,
    form,
    fileInput: q<HTMLInputElement>("#video-file"),
    urlInput: q<HTMLInputElement>("#video-url"),
    detectorSelect: q<HTMLSelectElement>("#detectors"),
    emailInput: q<HTMLInputElement>("#email"),
    pinInput: q<HTMLInputElement>("#pin"),
    submitButton: q<HTMLButtonElement>("#submit-button"),
    errorText: (field) => {
      const el = q<HTMLParagraphElement>(`.field-error[data-for="${field}"]`);
      return { hidden: el.hidden, text: el.textContent ?? "" };
    },
    typeInto: (input, value) => {
      input.value = value;
      input.dispatchEvent(new page.win.Event("input", { bubbles: true }));
    },
    pickDetector: (id) => {
      const select = q<HTMLSelectElement>("#detectors");
      for (const option of select.options) {
        if (option.value === id) option.selected = true;
      }
      select.dispatchEvent(new page.win.Event("change", { bubbles: true }));
    },
    submit: () => {
      form.dispatchEvent(new page.win.Event("submit", { bubbles: true, cancelable: true }));
    },
  };
}

async function fillValid(h: Harness, fileSize = 1024): Promise<void> {
  setFile(h.page, h.fileInput, fileOfSize(fileSize));
  h.pickDetector("mock-constant");
  h.typeInto(h.emailInput, "user@example.org");
  h.typeInto(h.pinInput, "4321");
  await flush();
}

describe("submission form", () => {
  let h: Harness;
  beforeEach(async () => {
    h = await mount();
  });

  it("populates the detector list from the catalog", () => {
    const labels = [...h.detectorSelect.options].map((o) => o.textContent);
    expect(labels).toEqual(["Constant (2020-01-01)", "Sinusoid (2020-02-02)"]);
    expect([...h.detectorSelect.options].map((o) => o.value)).toEqual([
      "mock-constant",
      "mock-sinusoid",
    ]);
  });

  it("masks the PIN and disables autocomplete", () => {
    expect(h.pinInput.type).toBe("password");
    expect(h.pinInput.maxLength).toBe(6);
    expect(h.pinInput.autocomplete).toBe("off");
  });

  it("keeps submit disabled until every field is valid", async () => {
    expect(h.submitButton.disabled).toBe(true);
    setFile(h.page, h.fileInput, fileOfSize(100));
    expect(h.submitButton.disabled).toBe(true);
    h.pickDetector("mock-sinusoid");
    expect(h.submitButton.disabled).toBe(true);
    h.typeInto(h.emailInput, "user@example.org");
    expect(h.submitButton.disabled).toBe(true);
    h.typeInto(h.pinInput, "123"); // too short
    expect(h.submitButton.disabled).toBe(true);
    h.typeInto(h.pinInput, "1234");
    expect(h.submitButton.disabled).toBe(false);
    h.typeInto(h.emailInput, "not-an-email");
    expect(h.submitButton.disabled).toBe(true);
  });

  it("flags an oversize file inline and never uploads it", async () => {
    await fillValid(h);
    expect(h.submitButton.disabled).toBe(false);
    setFile(h.page, h.fileInput, fileOfSize(MAX_VIDEO_BYTES + 1, "big.mp4"));
    const error = h.errorText("video");
    expect(error.hidden).toBe(false);
    expect(error.text).toContain("exceeds 50 MB");
    expect(h.submitButton.disabled).toBe(true);
    h.submit(); // even a forced submit must stay local
    await flush();
    expect(h.fetch.posts()).toHaveLength(0);
    expect(h.navigate).not.toHaveBeenCalled();
  });

  it("accepts a file of exactly the ceiling size", async () => {
    await fillValid(h, MAX_VIDEO_BYTES);
    expect(h.errorText("video").hidden).toBe(true);
    expect(h.submitButton.disabled).toBe(false);
  });

  it("clears the oversize message once a smaller file is chosen", async () => {
    await fillValid(h);
    setFile(h.page, h.fileInput, fileOfSize(MAX_VIDEO_BYTES + 1));
    expect(h.errorText("video").hidden).toBe(false);
    setFile(h.page, h.fileInput, fileOfSize(10));
    expect(h.errorText("video").hidden).toBe(true);
    expect(h.submitButton.disabled).toBe(false);
  });

  it("makes file and URL sources mutually exclusive", async () => {
    const urlRadio = h.form.querySelector<HTMLInputElement>('input[value="url"]')!;
    urlRadio.checked = true;
    urlRadio.dispatchEvent(new h.page.win.Event("change", { bubbles: true }));
    expect(h.fileInput.disabled).toBe(true);
    expect(h.fileInput.hidden).toBe(true);
    expect(h.urlInput.disabled).toBe(false);
    expect(h.urlInput.hidden).toBe(false);

    h.typeInto(h.urlInput, "http://media.example.org/clip.zip");
    h.pickDetector("mock-constant");
    h.typeInto(h.emailInput, "user@example.org");
    h.typeInto(h.pinInput, "123456");
    expect(h.submitButton.disabled).toBe(false);

    const fileRadio = h.form.querySelector<HTMLInputElement>('input[value="file"]')!;
    fileRadio.checked = true;
    fileRadio.dispatchEvent(new h.page.win.Event("change", { bubbles: true }));
    expect(h.urlInput.value).toBe(""); // switching back clears the URL
    expect(h.urlInput.disabled).toBe(true);
    expect(h.submitButton.disabled).toBe(true); // no file chosen yet
  });

  it("submits a URL source as video_url", async () => {
    h.fetch.json("POST /api/v1/jobs", 201, { job_id: "j-url" });
    const urlRadio = h.form.querySelector<HTMLInputElement>('input[value="url"]')!;
    urlRadio.checked = true;
    urlRadio.dispatchEvent(new h.page.win.Event("change", { bubbles: true }));
    h.typeInto(h.urlInput, "http://media.example.org/clip.zip");
    h.pickDetector("mock-sinusoid");
    h.typeInto(h.emailInput, "user@example.org");
    h.typeInto(h.pinInput, "9876");
    h.submit();
    await flush();
    const body = h.fetch.posts()[0].init?.body as FormData;
    expect(body.get("video_url")).toBe("http://media.example.org/clip.zip");
    expect(body.get("video")).toBeNull();
    expect(h.navigate).toHaveBeenCalledWith("#/jobs/j-url");
  });

  it("navigates to the job page after a successful upload", async () => {
    h.fetch.json("POST /api/v1/jobs", 201, { job_id: "job-abc123" });
    await fillValid(h);
    h.submit();
    await flush();
    expect(h.fetch.posts()).toHaveLength(1);
    const body = h.fetch.posts()[0].init?.body as FormData;
    expect((body.get("video") as File).name).toBe("clip.zip");
    expect(body.get("detectors")).toBe("mock-constant");
    expect(body.get("pin")).toBe("4321");
    expect(h.navigate).toHaveBeenCalledWith("#/jobs/job-abc123");
  });

  it("maps server rejections onto the offending field", async () => {
    h.fetch.json("POST /api/v1/jobs", 422, { error: "invalid-email" });
    await fillValid(h);
    h.submit();
    await flush();
    const error = h.errorText("email");
    expect(error.hidden).toBe(false);
    expect(error.text).toContain("invalid-email");
    expect(h.navigate).not.toHaveBeenCalled();
    expect(h.submitButton.disabled).toBe(false); // user can correct and retry
    expect(h.submitButton.textContent).toBe("Submit");
  });

  it("shows unattributable server errors at the form level", async () => {
    h.fetch.json("POST /api/v1/jobs", 503, { error: "exchange-unavailable" });
    await fillValid(h);
    h.submit();
    await flush();
    const error = h.errorText("form");
    expect(error.hidden).toBe(false);
    expect(error.text).toContain("exchange-unavailable");
  });

  it("shows a form-level message when the gateway is unreachable", async () => {
    h.fetch.on("POST /api/v1/jobs", () => {
      throw new TypeError("fetch failed");
    });
    await fillValid(h);
    h.submit();
    await flush();
    const error = h.errorText("form");
    expect(error.hidden).toBe(false);
    expect(error.text).toContain("could not be reached");
  });

  it("reports a catalog outage in the hint text", async () => {
    const broken = new ScriptedFetch().json("GET /api/v1/detectors", 503, {
      error: "exchange-unavailable",
    });
    const other = await mount(broken);
    const hint = other.page.root.querySelector(".field-hint")!;
    expect(hint.textContent).toContain("Could not load the detector catalog");
  });
});
