/** Minimal reader for the result-bundle archives.
 *
 * Bundles are built deterministically with every entry stored
 * uncompressed, so a full inflate implementation would be dead weight;
 * this reads the central directory and slices entry bytes out directly.
 * Anything that is not a well-formed all-stored archive is rejected.
 */

import type { OverlayDoc, SummaryDoc } from "./types.js";

const EOCD_SIG = 0x06054b50;
const CENTRAL_SIG = 0x02014b50;
const LOCAL_SIG = 0x04034b50;

export class BundleFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BundleFormatError";
  }
}

function findEndOfCentralDirectory(view: DataView): number {
  // The record is 22 bytes plus a comment of up to 65535 bytes.
  const earliest = Math.max(0, view.byteLength - 22 - 65535);
  for (let offset = view.byteLength - 22; offset >= earliest; offset--) {
    if (view.getUint32(offset, true) === EOCD_SIG) return offset;
  }
  throw new BundleFormatError("not a zip archive: end-of-directory record missing");
}

/** All entries of an all-stored zip archive, by name. */
export function readZip(bytes: Uint8Array): Map<string, Uint8Array> {
  if (bytes.byteLength < 22) throw new BundleFormatError("archive truncated");
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const eocd = findEndOfCentralDirectory(view);
  const entryCount = view.getUint16(eocd + 10, true);
  let offset = view.getUint32(eocd + 16, true);

  const decoder = new TextDecoder();
  const entries = new Map<string, Uint8Array>();
  for (let i = 0; i < entryCount; i++) {
    if (offset + 46 > eocd || view.getUint32(offset, true) !== CENTRAL_SIG) {
      throw new BundleFormatError("central directory corrupt");
    }
    const method = view.getUint16(offset + 10, true);
    const compressedSize = view.getUint32(offset + 20, true);
    const nameLength = view.getUint16(offset + 28, true);
    const extraLength = view.getUint16(offset + 30, true);
    const commentLength = view.getUint16(offset + 32, true);
    const localOffset = view.getUint32(offset + 42, true);
    const name = decoder.decode(bytes.subarray(offset + 46, offset + 46 + nameLength));

    if (method !== 0) {
      throw new BundleFormatError(
        `entry ${name} uses compression method ${method}; bundles are stored uncompressed`,
      );
    }
    if (localOffset + 30 > bytes.byteLength || view.getUint32(localOffset, true) !== LOCAL_SIG) {
      throw new BundleFormatError(`local header for ${name} corrupt`);
    }
    const localName = view.getUint16(localOffset + 26, true);
    const localExtra = view.getUint16(localOffset + 28, true);
    const dataStart = localOffset + 30 + localName + localExtra;
    if (dataStart + compressedSize > bytes.byteLength) {
      throw new BundleFormatError(`entry ${name} extends past end of archive`);
    }
    entries.set(name, bytes.subarray(dataStart, dataStart + compressedSize));
    offset += 46 + nameLength + extraLength + commentLength;
  }
  return entries;
}

export interface BundleContents {
  summary: SummaryDoc;
  /** Absent when no detector produced a curve (all failed). */
  overlay: OverlayDoc | null;
  entryNames: string[];
}

export function readBundle(bytes: Uint8Array): BundleContents {
  const entries = readZip(bytes);
  const summaryBytes = entries.get("summary.json");
  if (summaryBytes === undefined) {
    throw new BundleFormatError("bundle has no summary.json");
  }
  const decoder = new TextDecoder();
  const summary = JSON.parse(decoder.decode(summaryBytes)) as SummaryDoc;
  const overlayBytes = entries.get("overlay.json");
  const overlay =
    overlayBytes === undefined
      ? null
      : (JSON.parse(decoder.decode(overlayBytes)) as OverlayDoc);
  return { summary, overlay, entryNames: [...entries.keys()] };
}
