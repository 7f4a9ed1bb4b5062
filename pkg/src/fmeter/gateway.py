"""Front-end service logic: submission intake, status tracking, and
PIN-gated result downloads.

The gateway shares no memory with the analysis back-end. The only
channel between the two services is the two-folder file exchange:
submissions go out through the inbox, result bundles come back through
the outbox. Everything the gateway must remember across restarts lives
under a state directory::

    <state_dir>/jobs/<job_id>.json     job record (written atomically)
    <state_dir>/videos/<job_id>.dat    submitted media, kept for republish
    <state_dir>/bundles/<job_id>.zip   result bundle pulled from the outbox

Submission write order is payload file, then job record, then inbox
envelope. A janitor pass (``tick``) re-publishes the envelope for any
aging job record that has no envelope in flight and no results, so a
crash between the record and envelope writes heals on the next pass
instead of stranding the job.

Progress is inferred from the exchange alone: an envelope still
visible in the inbox means the job is queued, the ``.consumed`` marker
means the back-end picked it up, and a results envelope in the outbox
means the job is finished. Downloads require the submission PIN; after
``pin_attempt_limit`` wrong guesses every further attempt for that job
is refused for a cool-down period, correct PIN or not.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
import os
import re
import shutil
import threading
import time
import uuid
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable
from urllib.parse import urlsplit

import requests

from . import exchange, media, model, notify
from .exchange import (
    CorruptEnvelope,
    DuplicateEnvelope,
    EnvelopeNotFound,
    ExchangeDirs,
    results_envelope_id,
)
from .model import (
    Job,
    JobState,
    JobStatus,
    MediaKind,
    RunOutcome,
    TERMINAL_STATES,
    ValidationError,
    VideoOrigin,
    VideoRef,
)

log = logging.getLogger(__name__)

DEFAULT_PIN_ATTEMPT_LIMIT = 10
DEFAULT_PIN_COOLDOWN_SECONDS = 300.0
DEFAULT_REPUBLISH_AFTER_SECONDS = 30.0
FETCH_CHUNK_BYTES = 64 * 1024
MAX_REDIRECTS = 5

# Fired after each durable step of submit(); tests substitute a raising
# callable to simulate a crash at that exact point.
SUBMIT_STAGES = ("payload", "record", "published")
Checkpoint = Callable[[str], None]

# Guards user-supplied ids before they touch the filesystem.
_SAFE_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class GatewayError(Exception):
    """Service-level failure with a machine-readable code."""

    code = "gateway-error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class NotFound(GatewayError):
    code = "not-found"


class WrongPin(GatewayError):
    code = "wrong-pin"


class NotReady(GatewayError):
    code = "not-ready"


class LockedOut(GatewayError):
    code = "locked-out"


class FetchFailed(GatewayError):
    code = "fetch-failed"


class UnsupportedScheme(GatewayError):
    code = "unsupported-scheme"


class OversizeVideo(GatewayError):
    code = "oversize-video"


def _no_checkpoint(_: str) -> None:
    return None


def _safe_record_id(job_id: str) -> bool:
    """Reject ids that could escape the state directory."""
    return bool(_SAFE_ID.match(job_id)) and ".." not in job_id


def fetch_remote_video(
    url: str,
    dest: Path,
    *,
    limit: int = model.MAX_VIDEO_BYTES,
    timeout: float = 30.0,
    session: requests.Session | None = None,
) -> int:
    """Download a remote media file into ``dest``.

    Streams the body reading at most ``limit + 1`` bytes; one byte past
    the limit aborts the download, removes the partial file and raises
    OversizeVideo. Only http/https URLs are accepted and at most five
    redirects are followed. Returns the byte count written.
    """
    scheme = urlsplit(url).scheme.lower()
    if scheme not in ("http", "https"):
        raise UnsupportedScheme(f"refusing scheme {scheme or '<none>'!r} for {url!r}")

    dest = Path(dest)
    sess = session if session is not None else requests.Session()
    owns_session = session is None
    try:
        sess.max_redirects = MAX_REDIRECTS
        try:
            resp = sess.get(url, stream=True, timeout=timeout, allow_redirects=True)
        except requests.RequestException as exc:
            raise FetchFailed(f"cannot fetch {url!r}: {exc}") from exc
        try:
            if resp.status_code != 200:
                raise FetchFailed(f"HTTP {resp.status_code} fetching {url!r}")
            declared = resp.headers.get("Content-Length", "")
            if declared.isdigit() and int(declared) > limit:
                raise OversizeVideo(
                    f"remote resource declares {declared} bytes; limit is {limit}"
                )
            total = 0
            try:
                with open(dest, "wb") as fh:
                    while True:
                        want = min(FETCH_CHUNK_BYTES, limit + 1 - total)
                        chunk = resp.raw.read(want, decode_content=True)
                        if not chunk:
                            break
                        total += len(chunk)
                        if total > limit:
                            raise OversizeVideo(
                                f"remote resource exceeds the {limit}-byte limit"
                            )
                        fh.write(chunk)
            except OSError as exc:
                raise FetchFailed(f"reading {url!r} failed: {exc}") from exc
            except Exception:
                dest.unlink(missing_ok=True)
                raise
            return total
        finally:
            resp.close()
    finally:
        if owns_session:
            sess.close()


class JobStore:
    """Durable job records, one JSON document per job.

    Writes go through a temp file plus ``os.replace`` so a crashed
    writer never leaves a torn record, and a lock serialises writers
    within the process.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def path(self, job_id: str) -> Path:
        return self.root / f"{job_id}.json"

    def save(self, job: Job) -> None:
        doc = json.dumps(model.job_to_dict(job), indent=2) + "\n"
        with self._lock:
            tmp = self.root / f".{job_id_for_tmp(job.job_id)}.tmp"
            tmp.write_text(doc, encoding="utf-8")
            os.replace(tmp, self.path(job.job_id))

    def load(self, job_id: str) -> Job | None:
        if not _safe_record_id(job_id):
            return None
        path = self.path(job_id)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        return model.job_from_dict(doc)

    def ids(self) -> list[str]:
        return sorted(
            p.stem for p in self.root.glob("*.json") if not p.name.startswith(".")
        )


def job_id_for_tmp(job_id: str) -> str:
    return job_id.replace(os.sep, "_")


class PinGuard:
    """Per-job failed-attempt counter with a lockout cool-down."""

    def __init__(self, limit: int, cooldown_seconds: float, clock: Callable[[], float]):
        if limit < 1:
            raise ValueError("attempt limit must be >= 1")
        self.limit = limit
        self.cooldown = float(cooldown_seconds)
        self._clock = clock
        self._lock = threading.Lock()
        self._failures: dict[str, int] = {}
        self._locked_until: dict[str, float] = {}

    def check(self, job_id: str) -> None:
        """Raise LockedOut while the job's cool-down is active."""
        with self._lock:
            until = self._locked_until.get(job_id)
            if until is None:
                return
            now = self._clock()
            if now < until:
                remaining = until - now
                raise LockedOut(
                    f"too many wrong PIN attempts; retry in {remaining:.0f}s"
                )
            # Cool-down over: fresh start.
            del self._locked_until[job_id]
            self._failures.pop(job_id, None)

    def record_failure(self, job_id: str) -> None:
        with self._lock:
            count = self._failures.get(job_id, 0) + 1
            self._failures[job_id] = count
            if count >= self.limit:
                self._locked_until[job_id] = self._clock() + self.cooldown

    def record_success(self, job_id: str) -> None:
        with self._lock:
            self._failures.pop(job_id, None)

    def failures(self, job_id: str) -> int:
        with self._lock:
            return self._failures.get(job_id, 0)


@dataclass(frozen=True)
class DownloadResult:
    job_id: str
    bundle: bytes
    digest: str


class GatewayService:
    """Front-end brains behind the HTTP surface.

    Holds no references to back-end objects; all coupling is through
    the exchange directories and the on-disk state tree.
    """

    def __init__(
        self,
        dirs: ExchangeDirs,
        state_dir: Path,
        *,
        notifier: notify.Notifier | None = None,
        max_video_bytes: int = model.MAX_VIDEO_BYTES,
        pin_attempt_limit: int = DEFAULT_PIN_ATTEMPT_LIMIT,
        pin_cooldown_seconds: float = DEFAULT_PIN_COOLDOWN_SECONDS,
        republish_after_seconds: float = DEFAULT_REPUBLISH_AFTER_SECONDS,
        clock: Callable[[], float] = time.time,
        checkpoint: Checkpoint = _no_checkpoint,
    ):
        self.dirs = dirs
        # Resolved so stored payload paths survive a restart from another cwd.
        self.state_dir = Path(state_dir).resolve()
        self.jobs = JobStore(self.state_dir / "jobs")
        self.videos_dir = self.state_dir / "videos"
        self.bundles_dir = self.state_dir / "bundles"
        self.videos_dir.mkdir(parents=True, exist_ok=True)
        self.bundles_dir.mkdir(parents=True, exist_ok=True)
        self.notifier = notifier
        self.max_video_bytes = int(max_video_bytes)
        self.republish_after = float(republish_after_seconds)
        self.pins = PinGuard(pin_attempt_limit, pin_cooldown_seconds, clock)
        self._clock = clock
        self._checkpoint = checkpoint
        self._ingest_lock = threading.Lock()
        self._ignored_results: set[str] = set()

    # -- submission ----------------------------------------------------

    def submit_upload(
        self, video_path: Path, detectors: list[str], email: str, pin: str
    ) -> str:
        """Accept an already-spooled upload. Takes ownership of the file."""
        return self._submit(
            Path(video_path), VideoOrigin.DIRECT_UPLOAD, detectors, email, pin
        )

    def submit_remote(
        self, video_url: str, detectors: list[str], email: str, pin: str
    ) -> str:
        """Fetch a remote video, then submit it like an upload."""
        # Validate the cheap fields before pulling bytes off the network.
        model.validate_detectors(detectors)
        model.validate_email(email)
        model.validate_pin(pin)
        tmp = self.videos_dir / f".fetch-{uuid.uuid4().hex}.tmp"
        try:
            fetch_remote_video(video_url, tmp, limit=self.max_video_bytes)
            return self._submit(tmp, VideoOrigin.REMOTE_URL, detectors, email, pin)
        finally:
            tmp.unlink(missing_ok=True)

    def _submit(
        self,
        video_tmp: Path,
        origin: VideoOrigin,
        detectors: list[str],
        email: str,
        pin: str,
    ) -> str:
        try:
            byte_size = video_tmp.stat().st_size
        except OSError as exc:
            raise ValidationError("missing-video", "video", f"no payload: {exc}")
        if byte_size > self.max_video_bytes:
            raise ValidationError(
                "oversize-video",
                "video",
                f"payload is {byte_size} bytes; limit is {self.max_video_bytes}",
            )
        kind = (
            MediaKind.FRAME_SEQUENCE
            if media.is_frameseq_zip(video_tmp)
            else MediaKind.OPAQUE_VIDEO
        )
        job = model.create_job(
            VideoRef(origin, str(video_tmp), byte_size, kind), detectors, email, pin
        )
        stored = self.videos_dir / f"{job.job_id}.dat"
        job = dataclasses.replace(
            job, video=dataclasses.replace(job.video, content_path=str(stored))
        )

        shutil.move(str(video_tmp), stored)
        self._checkpoint("payload")
        self.jobs.save(job)
        self._checkpoint("record")
        exchange.publish_submission(self.dirs, job, stored)
        self._checkpoint("published")
        self._queue_notification(notify.received_notification(job))
        return job.job_id

    # -- status --------------------------------------------------------

    def status(self, job_id: str) -> JobStatus:
        job = self.jobs.load(job_id)
        if job is None:
            raise NotFound(f"no job {job_id!r}")
        return self._refresh(job).status

    def get_job(self, job_id: str) -> Job:
        job = self.jobs.load(job_id)
        if job is None:
            raise NotFound(f"no job {job_id!r}")
        return job

    def _refresh(self, job: Job) -> Job:
        """Reconcile a record with what the exchange currently shows."""
        if job.status.state in TERMINAL_STATES:
            return job
        rid = results_envelope_id(job.job_id)
        if (self.dirs.outbox_root / rid / "manifest.json").exists():
            return self._ingest_results(job.job_id, rid)
        consumed = (
            self.dirs.inbox_root / (job.job_id + exchange.CONSUMED_SUFFIX)
        ).exists()
        if consumed and job.status.state in (JobState.RECEIVED, JobState.QUEUED):
            job = self._advance(job, JobState.RUNNING, "analysis in progress")
            self.jobs.save(job)
        return job

    @staticmethod
    def _advance(job: Job, target: JobState, detail: str | None = None) -> Job:
        """Walk the lifecycle chain up to ``target`` one legal edge at a time."""
        ladder = [JobState.RECEIVED, JobState.QUEUED, JobState.RUNNING]
        while job.status.state is not target:
            state = job.status.state
            if state in ladder and target in ladder:
                nxt = ladder[ladder.index(state) + 1]
            elif state in ladder and target in TERMINAL_STATES:
                nxt = ladder[ladder.index(state) + 1] if state is not JobState.RUNNING else target
            else:
                raise model.IllegalTransition(state, target)
            job = model.transition(job, nxt, detail if nxt is target else None)
        return job

    # -- results ingestion ----------------------------------------------

    def bundle_path(self, job_id: str) -> Path:
        return self.bundles_dir / f"{job_id}.zip"

    def _ingest_results(self, job_id: str, envelope_id: str) -> Job:
        with self._ingest_lock:
            job = self.jobs.load(job_id)
            if job is None:
                raise NotFound(f"no job {job_id!r}")
            if job.status.state in TERMINAL_STATES:
                return job
            try:
                envelope = exchange.consume_outbox(self.dirs, envelope_id)
            except EnvelopeNotFound:
                return job  # lost a race with another refresh; record is current
            except CorruptEnvelope as exc:
                log.error("results envelope for %s is corrupt: %s", job_id, exc)
                return job
            bundle_bytes = envelope.payload_path(exchange.BUNDLE_PAYLOAD).read_bytes()
            tmp = self.bundles_dir / f".{job_id_for_tmp(job_id)}.tmp"
            tmp.write_bytes(bundle_bytes)
            os.replace(tmp, self.bundle_path(job_id))
            try:
                terminal, detail = _classify_bundle(bundle_bytes)
            except Exception as exc:  # malformed bundle from the back-end
                log.error("results bundle for %s unreadable: %s", job_id, exc)
                terminal, detail = JobState.FAILED, "results bundle unreadable"
            job = self._advance(job, terminal, detail)
            self.jobs.save(job)
        if terminal is JobState.FAILED:
            self._queue_notification(notify.failed_notification(job, detail or ""))
        else:
            self._queue_notification(notify.results_ready_notification(job))
        return job

    def _queue_notification(self, n: notify.Notification) -> None:
        if self.notifier is not None:
            self.notifier.enqueue(n)

    # -- download -------------------------------------------------------

    def download(self, job_id: str, pin: str) -> DownloadResult:
        """Return the result bundle iff the PIN matches and results exist.

        Every wrong PIN is counted; once the per-job limit is reached
        all further attempts (right or wrong) raise LockedOut until the
        cool-down expires.
        """
        job = self.jobs.load(job_id)
        if job is None:
            raise NotFound(f"no job {job_id!r}")
        self.pins.check(job_id)
        if not model.verify_pin(job, pin):
            self.pins.record_failure(job_id)
            raise WrongPin("PIN does not match this job")
        self.pins.record_success(job_id)
        job = self._refresh(job)
        path = self.bundle_path(job_id)
        if job.status.state not in TERMINAL_STATES or not path.exists():
            raise NotReady(f"job is {job.status.state.value}; results not available")
        data = path.read_bytes()
        return DownloadResult(job_id, data, hashlib.sha256(data).hexdigest())

    # -- maintenance ----------------------------------------------------

    def tick(self) -> dict[str, int]:
        """One maintenance pass: ingest finished results, re-publish
        envelopes for submissions that never made it to the inbox."""
        ingested = self._ingest_ready_results()
        republished = self._republish_stale()
        return {"ingested": ingested, "republished": republished}

    def _ingest_ready_results(self) -> int:
        count = 0
        result = exchange.poll_outbox(self.dirs, seen=self._ignored_results)
        for corrupt in result.corrupt:
            if corrupt.envelope_id not in self._ignored_results:
                log.error("corrupt results envelope: %s", corrupt)
                self._ignored_results.add(corrupt.envelope_id)
        for envelope in result.ready:
            eid = envelope.envelope_id
            try:
                job_id = exchange.job_id_from_results_envelope(eid)
            except ValueError:
                log.warning("ignoring non-results envelope %s in outbox", eid)
                self._ignored_results.add(eid)
                continue
            if self.jobs.load(job_id) is None:
                log.warning("results for unknown job %s left in outbox", job_id)
                self._ignored_results.add(eid)
                continue
            after = self._ingest_results(job_id, eid)
            if after.status.state in TERMINAL_STATES:
                count += 1
        return count

    def _republish_stale(self) -> int:
        count = 0
        now = self._clock()
        for job_id in self.jobs.ids():
            job = self.jobs.load(job_id)
            if job is None or job.status.state in TERMINAL_STATES:
                continue
            live = (self.dirs.inbox_root / job_id / "manifest.json").exists()
            consumed = (
                self.dirs.inbox_root / (job_id + exchange.CONSUMED_SUFFIX)
            ).exists()
            results = (
                self.dirs.outbox_root / (results_envelope_id(job_id)) / "manifest.json"
            ).exists()
            if live or consumed or results or self.bundle_path(job_id).exists():
                continue
            age = now - job.created_at.timestamp()
            if age < self.republish_after:
                continue
            payload = self.videos_dir / f"{job_id}.dat"
            if not payload.exists():
                log.error("job %s lost its payload; cannot republish", job_id)
                continue
            try:
                exchange.publish_submission(self.dirs, job, payload)
                count += 1
                log.info("republished submission envelope for %s", job_id)
            except DuplicateEnvelope:
                pass  # someone beat us to it
        return count


def _classify_bundle(bundle_bytes: bytes) -> tuple[JobState, str]:
    """Derive the job's terminal state from the bundle's summary document."""
    with zipfile.ZipFile(io.BytesIO(bundle_bytes)) as zf:
        summary = json.loads(zf.read("summary.json"))
    per_detector = summary["detectors"]
    outcomes = [RunOutcome(entry["outcome"]) for entry in per_detector.values()]
    terminal = model.terminal_state_for(outcomes)
    failed = sorted(
        det_id
        for det_id, entry in per_detector.items()
        if RunOutcome(entry["outcome"]) is not RunOutcome.SUCCEEDED
    )
    wins = len(outcomes) - len(failed)
    if terminal is JobState.COMPLETED:
        detail = f"{wins}/{len(outcomes)} detectors succeeded; results ready"
    elif terminal is JobState.FAILED:
        detail = "all detectors failed: " + ", ".join(failed)
    else:
        detail = (
            f"{wins}/{len(outcomes)} detectors succeeded; failed: " + ", ".join(failed)
        )
    return terminal, detail
