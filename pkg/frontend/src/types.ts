/** Shapes exchanged with the gateway's public HTTP API. */

export interface DetectorInfo {
  detector_id: string;
  name: string;
  version: string;
  description: string;
  source_repo: string;
  release_date: string;
}

export interface JobStatusDoc {
  state: string;
  detail: string;
}

export interface OverlayDetector {
  detector_id: string;
  soft_labels: number[];
}

/** Chart-ready document bundled as overlay.json: every succeeded
 * detector's per-frame soft labels over a shared frame axis. */
export interface OverlayDoc {
  frame_count: number;
  detectors: OverlayDetector[];
}

export interface SummaryDetectorEntry {
  outcome: string;
  aggregate_score?: number;
  frame_count?: number;
  error_note?: string;
}

export interface SummaryDoc {
  job_id: string;
  detectors: Record<string, SummaryDetectorEntry>;
}

export const TERMINAL_STATES = new Set(["completed", "partially_completed", "failed"]);

/** Mirrors the server-side upload ceiling exactly (50 MB, binary). */
export const MAX_VIDEO_BYTES = 52_428_800;
