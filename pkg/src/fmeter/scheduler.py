"""Back-end job loop.

Consumes submission envelopes from the inbox, fans each job out to its
selected detector plugins (bounded concurrency at both the job and the
detector level), enforces per-detector timeouts, assembles the result
bundle, and publishes it to the outbox.

Crash safety rests on an append-only journal next to the work area:
"consumed" is journaled *before* the envelope is claimed, "answered"
after results are published. On startup, every job that was consumed but
never answered is re-executed, reading its payload from the retained
``<id>.consumed`` directory (or from the inbox, if the crash landed
between the journal write and the claim). Republishing results for a job
that already has some raises DuplicateEnvelope, which recovery treats as
success — so each submission is answered exactly once no matter where
the previous process died.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import analysis, exchange, media, model
from .exchange import ExchangeDirs
from .model import Job, JobState, MediaKind, RunOutcome
from .plugin.registry import Registry
from .plugin.session import ResponseTimeout, SandboxConfig, spawn
from .plugin.wire import SessionError
from .scores import DetectorRun

log = logging.getLogger(__name__)

JOURNAL_NAME = "scheduler.journal"

EVENT_CONSUMED = "consumed"
EVENT_RUNNING = "running"
EVENT_ANSWERED = "answered"


@dataclass(frozen=True)
class SchedulerConfig:
    max_parallel_jobs: int = 2
    max_parallel_detectors_per_job: int = 2
    detector_timeout: float = 300.0
    poll_interval: float = 0.5

    def __post_init__(self):
        if self.max_parallel_jobs < 1 or self.max_parallel_detectors_per_job < 1:
            raise ValueError("parallelism bounds must be >= 1")
        if self.detector_timeout <= 0 or self.poll_interval <= 0:
            raise ValueError("timeouts must be positive")


class Journal:
    """Append-only JSON-lines journal of job lifecycle events.

    Appends are fsynced so an entry either fully survives a crash or was
    never made; a torn final line is ignored on load.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, job_id: str, event: str) -> None:
        record = {
            "job_id": job_id,
            "event": event,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="microseconds"),
        }
        line = json.dumps(record, separators=(",", ":")) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()
                os.fsync(f.fileno())

    def entries(self) -> list[dict]:
        if not self.path.is_file():
            return []
        records = []
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.endswith("\n"):
                    break  # torn tail from a crash mid-append
                try:
                    records.append(json.loads(line))
                except ValueError:
                    break
        return records

    def events_by_job(self) -> dict[str, list[str]]:
        grouped: dict[str, list[str]] = {}
        for record in self.entries():
            grouped.setdefault(record["job_id"], []).append(record["event"])
        return grouped

    def unanswered(self) -> list[str]:
        """Job ids consumed but never answered, in first-consumed order."""
        pending = []
        for job_id, events in self.events_by_job().items():
            if EVENT_CONSUMED in events and EVENT_ANSWERED not in events:
                pending.append(job_id)
        return pending


def classify_outcome(runs: list[DetectorRun] | tuple[DetectorRun, ...]) -> JobState:
    """Terminal job state implied by the per-detector outcomes."""
    return model.terminal_state_for([run.outcome for run in runs])


class Scheduler:
    """One back-end worker: poll, claim, execute, answer."""

    def __init__(
        self,
        dirs: ExchangeDirs,
        registry: Registry,
        config: SchedulerConfig,
        work_root: Path,
    ):
        self.dirs = dirs
        self.registry = registry
        self.config = config
        # Resolve so frame paths handed to plugins stay valid from any cwd
        # (plugin subprocesses run inside their own scratch directories).
        self.work_root = Path(work_root).resolve()
        self.work_root.mkdir(parents=True, exist_ok=True)
        self.journal = Journal(self.work_root / JOURNAL_NAME)
        self._pool = ThreadPoolExecutor(
            max_workers=config.max_parallel_jobs, thread_name_prefix="job"
        )
        self._lock = threading.Lock()
        self._inflight: set[str] = set()
        self._reported_corrupt: set[str] = set()

    # -- detector execution ---------------------------------------------------

    def _prepare_frames(self, job: Job, payload_path: Path) -> tuple[Path, ...]:
        if job.video.media_kind is MediaKind.FRAME_SEQUENCE:
            extract_dir = self.work_root / "media" / job.job_id
            seq = media.load_frameseq(payload_path, extract_to=extract_dir)
            return seq.frame_paths
        # Opaque video: hand the payload file itself to plugins that
        # declared they can decode it.
        return (Path(payload_path),)

    def _run_one_detector(
        self,
        job: Job,
        detector_id: str,
        frames: tuple[Path, ...] | None,
        prep_error: str | None,
    ) -> DetectorRun:
        start = time.monotonic()

        def finish(outcome, scores=None, error_note=None):
            return DetectorRun(
                job_id=job.job_id,
                detector_id=detector_id,
                outcome=outcome,
                scores=scores,
                error_note=error_note,
                wall_time=time.monotonic() - start,
            )

        descriptor = self.registry.get(detector_id)
        if descriptor is None:
            return finish(RunOutcome.FAILED, error_note=f"unknown-detector: {detector_id}")
        if prep_error is not None:
            return finish(RunOutcome.FAILED, error_note=prep_error)
        if not descriptor.accepts(job.video.media_kind.value):
            return finish(
                RunOutcome.FAILED,
                error_note=(
                    f"media-kind-unsupported: {detector_id} does not accept "
                    f"{job.video.media_kind.value}"
                ),
            )

        sandbox = SandboxConfig(
            scratch_root=self.work_root / "sandbox",
            response_timeout=self.config.detector_timeout,
        )
        deadline = start + self.config.detector_timeout
        try:
            session = spawn(descriptor, sandbox)
        except SessionError as exc:
            return finish(RunOutcome.FAILED, error_note=f"{exc.code}: {exc}")
        try:
            series = session.run_video(frames, deadline=deadline)
            return finish(RunOutcome.SUCCEEDED, scores=series)
        except ResponseTimeout as exc:
            return finish(
                RunOutcome.TIMED_OUT,
                error_note=f"no result within {self.config.detector_timeout:.0f}s: {exc}",
            )
        except SessionError as exc:
            return finish(RunOutcome.FAILED, error_note=f"{exc.code}: {exc}")
        finally:
            session.close()

    def execute_job(self, job: Job, payload_path: Path) -> list[DetectorRun]:
        """One DetectorRun per selected detector, selection order preserved,
        detectors running concurrently up to the per-job bound."""
        frames: tuple[Path, ...] | None = None
        prep_error: str | None = None
        try:
            frames = self._prepare_frames(job, payload_path)
        except (media.MediaError, OSError) as exc:
            prep_error = f"bad-media: {exc}"
        with ThreadPoolExecutor(
            max_workers=self.config.max_parallel_detectors_per_job,
            thread_name_prefix=f"det-{job.job_id[:8]}",
        ) as pool:
            futures = [
                pool.submit(self._run_one_detector, job, detector_id, frames, prep_error)
                for detector_id in job.detectors
            ]
            return [f.result() for f in futures]

    # -- envelope lifecycle -----------------------------------------------------

    def _execute_from_dir(self, job_id: str, payload_dir: Path) -> None:
        job = model.job_from_dict(
            json.loads((payload_dir / exchange.JOB_RECORD).read_text(encoding="utf-8"))
        )
        self.journal.append(job_id, EVENT_RUNNING)
        runs = self.execute_job(job, payload_dir / exchange.SUBMISSION_PAYLOAD)
        bundle = analysis.build_bundle(job, runs)
        try:
            exchange.publish_results(self.dirs, job.job_id, bundle.zip_bytes)
        except exchange.DuplicateEnvelope:
            log.info("results for %s already published; treating as answered", job_id)
        self.journal.append(job_id, EVENT_ANSWERED)
        log.info(
            "job %s answered: %s",
            job_id,
            ", ".join(f"{r.detector_id}={r.outcome.value}" for r in runs),
        )

    def _process_envelope(self, envelope_id: str) -> None:
        # Journal first: if we die right after the claim, recovery can tell
        # this job was ours.
        self.journal.append(envelope_id, EVENT_CONSUMED)
        env = exchange.consume_inbox(self.dirs, envelope_id)
        self._execute_from_dir(envelope_id, env.directory)

    def _process_envelope_safely(self, envelope_id: str) -> None:
        try:
            self._process_envelope(envelope_id)
        except Exception:
            log.exception("job %s failed irrecoverably", envelope_id)

    def poll_and_dispatch(self) -> int:
        with self._lock:
            seen = set(self._inflight)
        result = exchange.poll_inbox(self.dirs, seen=seen)
        for corrupt in result.corrupt:
            if corrupt.envelope_id not in self._reported_corrupt:
                self._reported_corrupt.add(corrupt.envelope_id)
                log.warning("ignoring corrupt submission envelope: %s", corrupt)
        dispatched = 0
        for env in result.ready:
            with self._lock:
                if env.envelope_id in self._inflight:
                    continue
                self._inflight.add(env.envelope_id)
            self._pool.submit(self._process_envelope_safely, env.envelope_id)
            dispatched += 1
        return dispatched

    def recover(self) -> list[str]:
        """Re-execute every consumed-but-unanswered job from the journal."""
        recovered = []
        for job_id in self.journal.unanswered():
            with self._lock:
                self._inflight.add(job_id)
            inbox_dir = self.dirs.inbox_root / job_id
            if (inbox_dir / "manifest.json").is_file():
                # died between the journal write and the claim rename
                try:
                    exchange.consume_inbox(self.dirs, job_id)
                except exchange.ExchangeError as exc:
                    log.error("cannot reclaim %s: %s", job_id, exc)
                    continue
            payload_dir = exchange.consumed_payload_dir(self.dirs.inbox_root, job_id)
            if payload_dir is None:
                log.error("job %s unrecoverable: consumed payload purged", job_id)
                continue
            log.info("recovering job %s", job_id)
            try:
                self._execute_from_dir(job_id, payload_dir)
                recovered.append(job_id)
            except Exception:
                log.exception("recovery of job %s failed", job_id)
        return recovered

    # -- service loop -----------------------------------------------------------

    def run_forever(self, stop_event: threading.Event) -> None:
        """Recover, then poll until `stop_event` is set; drains in-flight
        jobs before returning."""
        self.recover()
        while not stop_event.is_set():
            try:
                self.poll_and_dispatch()
            except Exception:
                log.exception("poll cycle failed; continuing")
            stop_event.wait(self.config.poll_interval)
        self._pool.shutdown(wait=True)

    def close(self) -> None:
        self._pool.shutdown(wait=True)
