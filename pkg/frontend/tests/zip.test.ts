import { describe, expect, it } from "vitest";

import { BundleFormatError, readBundle, readZip } from "../src/zip.js";
import { bundleFixture, storedZip } from "./helpers.js";

const decoder = new TextDecoder();

describe("readZip", () => {
  it("round-trips every stored entry byte for byte", () => {
    const payload = { "a.txt": "alpha", "dir/b.bin": new Uint8Array([0, 255, 7]), "c.json": "{}" };
    const entries = readZip(storedZip(payload));
    expect([...entries.keys()].sort()).toEqual(["a.txt", "c.json", "dir/b.bin"]);
    expect(decoder.decode(entries.get("a.txt")!)).toBe("alpha");
    expect([...entries.get("dir/b.bin")!]).toEqual([0, 255, 7]);
  });

  it("handles an empty archive", () => {
    expect(readZip(storedZip({})).size).toBe(0);
  });

  it("rejects compressed entries by method", () => {
    const deflated = storedZip({ "a.txt": "alpha" }, { methodOverride: 8 });
    expect(() => readZip(deflated)).toThrow(BundleFormatError);
    expect(() => readZip(deflated)).toThrow(/method 8/);
  });

  it("rejects archives too short to hold a directory record", () => {
    expect(() => readZip(new Uint8Array(10))).toThrow(BundleFormatError);
  });

  it("rejects archives whose tail was cut off", () => {
    const whole = storedZip({ "a.txt": "some content here" });
    expect(() => readZip(whole.subarray(0, whole.length - 25))).toThrow(BundleFormatError);
  });

  it("rejects random bytes", () => {
    const junk = new Uint8Array(128);
    for (let i = 0; i < junk.length; i++) junk[i] = (i * 37 + 11) % 256;
    expect(() => readZip(junk)).toThrow(BundleFormatError);
  });

  it("rejects entries whose data would run past the archive end", () => {
    const bytes = storedZip({ "a.txt": "alpha" });
    // Inflate the recorded size in the central directory (offset 20 of
    // the record, which follows local header + name + data).
    const centralStart = 30 + "a.txt".length + "alpha".length;
    const view = new DataView(bytes.buffer, bytes.byteOffset);
    view.setUint32(centralStart + 20, 10_000, true);
    expect(() => readZip(bytes)).toThrow(/past end/);
  });
});

describe("readBundle", () => {
  it("parses summary and overlay from a results bundle", () => {
    const { summary, overlay, entryNames } = readBundle(bundleFixture("job-42", 20));
    expect(summary.job_id).toBe("job-42");
    expect(Object.keys(summary.detectors).sort()).toEqual(["mock-constant", "mock-sinusoid"]);
    expect(overlay).not.toBeNull();
    expect(overlay!.frame_count).toBe(20);
    expect(overlay!.detectors).toHaveLength(2);
    expect(overlay!.detectors[0].soft_labels).toHaveLength(20);
    expect(entryNames).toContain("scores/mock-constant.csv");
    expect(entryNames).toContain("README.txt");
  });

  it("reports a missing overlay as null (all-failed jobs ship none)", () => {
    const bytes = storedZip({
      "summary.json": JSON.stringify({ job_id: "j", detectors: {} }),
      "README.txt": "x",
    });
    const { overlay } = readBundle(bytes);
    expect(overlay).toBeNull();
  });

  it("rejects a bundle without summary.json", () => {
    const bytes = storedZip({ "README.txt": "x" });
    expect(() => readBundle(bytes)).toThrow(/summary\.json/);
  });
});
