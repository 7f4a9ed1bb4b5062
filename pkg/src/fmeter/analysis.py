"""Turns per-detector scores into deliverables.

Given the :class:`~fmeter.scores.DetectorRun` values produced for a job,
this module renders the per-frame curve files, the aggregate score (area
under the ascending-sorted score curve), the multi-detector overlay used
for charting, and finally the zipped result bundle. Bundle construction
is deterministic: the same inputs always produce byte-identical archives,
which lets the exchange and tests verify payloads by digest.

Everything here is a pure function over immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

from .model import Job, RunOutcome
from .scores import FrameScore, ScoreSeries
from .ziputil import deterministic_zip

CURVE_HEADER = "frame_index,soft_label,hard_label,face_found"

SUMMARY_ENTRY = "summary.json"
OVERLAY_ENTRY = "overlay.json"
README_ENTRY = "README.txt"

_README_TEXT = """\
Analysis results for job {job_id}.

Contents:
  summary.json            per-detector outcome and aggregate score
  overlay.json            per-frame soft labels for all succeeded detectors
  scores/<detector>.csv   per-frame curve (one file per succeeded detector)

Soft labels are in [0, 1]; lower means more likely forged. The aggregate
score is the area under the detector's ascending-sorted score curve.
"""


class AnalysisError(ValueError):
    """Base for result-assembly failures; `code` is machine readable."""

    code = "analysis-error"


class EmptySeries(AnalysisError):
    code = "empty-series"


class LengthMismatch(AnalysisError):
    code = "length-mismatch"


class CoverageMismatch(AnalysisError):
    code = "coverage-mismatch"


class CurveFormatError(AnalysisError):
    code = "curve-format"


@dataclass(frozen=True)
class ResultBundle:
    """A finished, zipped result set plus its content digest."""

    job_id: str
    entry_names: tuple[str, ...]
    zip_bytes: bytes
    digest: str  # sha256 hex of zip_bytes


def aggregate_score(series: ScoreSeries | list[float] | tuple[float, ...]) -> float:
    """Area under the ascending-sorted score curve, in [min, max] of the input.

    The soft labels are sorted ascending and treated as samples of a curve
    over evenly spaced x in [0, 1]; the result is that curve's trapezoidal
    area. A constant series (including a single frame) returns the constant
    exactly rather than paying float round-off for a flat curve.
    """
    if isinstance(series, ScoreSeries):
        values = series.soft_labels()
    else:
        values = list(series)
    if not values:
        raise EmptySeries("cannot aggregate an empty score series")
    ordered = sorted(values)
    if ordered[0] == ordered[-1]:
        return ordered[0]
    n = len(ordered)
    area = math.fsum(ordered[i] + ordered[i + 1] for i in range(n - 1)) / (2 * (n - 1))
    # fsum is exactly rounded, but the final division can still nudge the
    # result past an endpoint; the true area always lies within the range.
    return min(max(area, ordered[0]), ordered[-1])


def curve_export(series: ScoreSeries) -> str:
    """Render a score series as CSV text with fixed 6-decimal soft labels.

    The fixed formatting keeps the file byte-stable across platforms.
    """
    if series.frame_count == 0:
        raise EmptySeries("cannot export an empty score series")
    lines = [CURVE_HEADER]
    for s in series.frame_scores:
        face = "true" if s.face_found else "false"
        lines.append(f"{s.frame_index},{s.soft_label:.6f},{s.hard_label},{face}")
    return "\n".join(lines) + "\n"


def parse_curve(text: str, detector_id: str) -> ScoreSeries:
    """Inverse of :func:`curve_export` for labels with <= 6 decimal places."""
    lines = text.splitlines()
    if not lines or lines[0] != CURVE_HEADER:
        raise CurveFormatError("missing or wrong curve header")
    scores = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise CurveFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        idx, soft, hard, face = parts
        if face not in ("true", "false"):
            raise CurveFormatError(f"line {lineno}: bad face_found flag {face!r}")
        try:
            score = FrameScore(int(idx), float(soft), hard, face == "true")
        except ValueError as exc:
            raise CurveFormatError(f"line {lineno}: {exc}") from exc
        scores.append(score)
    try:
        return ScoreSeries(detector_id, tuple(scores))
    except ValueError as exc:
        raise CurveFormatError(str(exc)) from exc


def overlay(series_list: list[ScoreSeries] | tuple[ScoreSeries, ...]) -> dict:
    """Chart-ready document: every detector's soft labels over shared frames."""
    if not series_list:
        raise EmptySeries("overlay needs at least one score series")
    frame_count = series_list[0].frame_count
    for series in series_list:
        if series.frame_count != frame_count:
            raise LengthMismatch(
                f"series lengths differ: {series.detector_id} has "
                f"{series.frame_count} frames, expected {frame_count}"
            )
    return {
        "frame_count": frame_count,
        "detectors": [
            {"detector_id": s.detector_id, "soft_labels": s.soft_labels()}
            for s in series_list
        ],
    }


def summary_document(job: Job, runs_by_id: dict[str, "DetectorRun"]) -> dict:
    detectors = {}
    for detector_id in job.detectors:
        run = runs_by_id[detector_id]
        entry: dict = {"outcome": run.outcome.value}
        if run.outcome is RunOutcome.SUCCEEDED:
            entry["aggregate_score"] = aggregate_score(run.scores)
            entry["frame_count"] = run.scores.frame_count
        else:
            entry["error_note"] = run.error_note
        detectors[detector_id] = entry
    return {
        "schema_version": 1,
        "job_id": job.job_id,
        "video": {
            "origin": job.video.origin.value,
            "media_kind": job.video.media_kind.value,
            "byte_size": job.video.byte_size,
        },
        "detectors": detectors,
        "created_at": job.created_at.isoformat(),
    }


def _json_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def build_bundle(job: Job, runs) -> ResultBundle:
    """Assemble the downloadable zip for a finished job.

    `runs` must cover exactly `job.detectors` (one run each, any order).
    Entry order is fixed — summary, overlay, one curve per succeeded
    detector in selection order, README — and timestamps are pinned, so
    identical inputs yield byte-identical archives.
    """
    runs_by_id = {}
    for run in runs:
        if run.detector_id in runs_by_id:
            raise CoverageMismatch(f"two runs for detector {run.detector_id}")
        runs_by_id[run.detector_id] = run
    if set(runs_by_id) != set(job.detectors):
        missing = sorted(set(job.detectors) - set(runs_by_id))
        extra = sorted(set(runs_by_id) - set(job.detectors))
        raise CoverageMismatch(
            f"runs do not cover the job's detectors (missing={missing}, extra={extra})"
        )

    succeeded = [
        runs_by_id[d] for d in job.detectors
        if runs_by_id[d].outcome is RunOutcome.SUCCEEDED
    ]

    entries: list[tuple[str, bytes]] = [
        (SUMMARY_ENTRY, _json_bytes(summary_document(job, runs_by_id)))
    ]
    if succeeded:
        entries.append(
            (OVERLAY_ENTRY, _json_bytes(overlay([run.scores for run in succeeded])))
        )
        for run in succeeded:
            entries.append(
                (f"scores/{run.detector_id}.csv", curve_export(run.scores).encode("utf-8"))
            )
    entries.append((README_ENTRY, _README_TEXT.format(job_id=job.job_id).encode("utf-8")))

    zip_bytes = deterministic_zip(entries)
    return ResultBundle(
        job_id=job.job_id,
        entry_names=tuple(name for name, _ in entries),
        zip_bytes=zip_bytes,
        digest=hashlib.sha256(zip_bytes).hexdigest(),
    )
