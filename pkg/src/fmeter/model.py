"""Core domain types and the job lifecycle state machine.

Everything here is an immutable snapshot: services hand `Job` values
around freely and derive new ones via :func:`transition` instead of
mutating shared state.
"""

from __future__ import annotations

import dataclasses
import hashlib
import hmac
import re
import secrets
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

MAX_VIDEO_BYTES = 50 * 2**20  # 50 MB upload ceiling, binary interpretation

_PIN_RE = re.compile(r"^[0-9]{4,6}$")


class ValidationError(ValueError):
    """Input rejected by a domain invariant.

    `code` is the machine-readable error code surfaced over HTTP and the
    CLI; `field` names the offending submission field.
    """

    def __init__(self, code: str, field: str, message: str):
        super().__init__(message)
        self.code = code
        self.field = field


class IllegalTransition(ValueError):
    def __init__(self, current: "JobState", requested: "JobState"):
        super().__init__(f"illegal transition {current.value} -> {requested.value}")
        self.code = "illegal-transition"
        self.current = current
        self.requested = requested


class VideoOrigin(str, Enum):
    DIRECT_UPLOAD = "direct-upload"
    REMOTE_URL = "remote-url"


class MediaKind(str, Enum):
    OPAQUE_VIDEO = "opaque-video"
    FRAME_SEQUENCE = "frame-sequence"


class JobState(str, Enum):
    RECEIVED = "received"
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    PARTIALLY_COMPLETED = "partially_completed"
    FAILED = "failed"


TERMINAL_STATES = frozenset(
    {JobState.COMPLETED, JobState.PARTIALLY_COMPLETED, JobState.FAILED}
)

# received -> failed covers validation failures discovered after intake.
ALLOWED_TRANSITIONS: dict[JobState, frozenset[JobState]] = {
    JobState.RECEIVED: frozenset({JobState.QUEUED, JobState.FAILED}),
    JobState.QUEUED: frozenset({JobState.RUNNING}),
    JobState.RUNNING: TERMINAL_STATES,
    JobState.COMPLETED: frozenset(),
    JobState.PARTIALLY_COMPLETED: frozenset(),
    JobState.FAILED: frozenset(),
}


class RunOutcome(str, Enum):
    """Per-detector execution outcome, shared vocabulary across services."""

    SUCCEEDED = "succeeded"
    FAILED = "failed"
    TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class JobStatus:
    state: JobState
    detail: str | None = None


@dataclass(frozen=True)
class VideoRef:
    """Reference to a stored media payload."""

    origin: VideoOrigin
    content_path: str
    byte_size: int
    media_kind: MediaKind


@dataclass(frozen=True)
class Job:
    """One user submission. The raw PIN never appears here."""

    job_id: str
    video: VideoRef
    detectors: tuple[str, ...]
    email: str
    pin_digest: str
    created_at: datetime
    status: JobStatus


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def new_job_id() -> str:
    return uuid.uuid4().hex


def validate_email(email: str) -> None:
    """Syntactic check only: one '@', non-empty local and domain parts,
    domain contains a '.'."""
    if email.count("@") != 1:
        raise ValidationError("invalid-email", "email", f"not a valid address: {email!r}")
    local, domain = email.split("@")
    if not local or not domain or "." not in domain:
        raise ValidationError("invalid-email", "email", f"not a valid address: {email!r}")


def validate_pin(pin: str) -> None:
    if not _PIN_RE.match(pin):
        raise ValidationError("invalid-pin", "pin", "PIN must be 4-6 digits")


def is_valid_pin(pin: str) -> bool:
    return bool(isinstance(pin, str) and _PIN_RE.match(pin))


def hash_pin(pin: str, salt: bytes | None = None) -> str:
    """Salted digest in the form ``s256$<salt_hex>$<digest_hex>``."""
    if salt is None:
        salt = secrets.token_bytes(16)
    digest = hashlib.sha256(salt + pin.encode("ascii")).hexdigest()
    return f"s256${salt.hex()}${digest}"


def verify_pin(job: Job, candidate: str) -> bool:
    """True iff `candidate` matches the job's stored PIN digest.

    The digest comparison is constant-time; malformed candidates simply
    return False.
    """
    if not is_valid_pin(candidate):
        return False
    try:
        scheme, salt_hex, stored = job.pin_digest.split("$")
        salt = bytes.fromhex(salt_hex)
    except ValueError:
        return False
    if scheme != "s256":
        return False
    computed = hashlib.sha256(salt + candidate.encode("ascii")).hexdigest()
    return hmac.compare_digest(computed, stored)


def validate_video(video: VideoRef) -> None:
    if video.byte_size > MAX_VIDEO_BYTES:
        raise ValidationError(
            "oversize-video",
            "video",
            f"payload is {video.byte_size} bytes, limit is {MAX_VIDEO_BYTES}",
        )


def validate_detectors(detectors: list[str] | tuple[str, ...]) -> None:
    if not detectors:
        raise ValidationError("empty-detector-list", "detectors", "select at least one detector")
    seen = set()
    for d in detectors:
        if d in seen:
            raise ValidationError("duplicate-detector", "detectors", f"detector listed twice: {d}")
        seen.add(d)


def create_job(video: VideoRef, detectors: list[str] | tuple[str, ...], email: str, pin: str) -> Job:
    """Validate a submission and mint a Received job with a fresh id.

    Raises ValidationError with codes invalid-email, invalid-pin,
    empty-detector-list, duplicate-detector or oversize-video.
    """
    validate_video(video)
    validate_detectors(detectors)
    validate_email(email)
    validate_pin(pin)
    return Job(
        job_id=new_job_id(),
        video=video,
        detectors=tuple(detectors),
        email=email,
        pin_digest=hash_pin(pin),
        created_at=utc_now(),
        status=JobStatus(JobState.RECEIVED),
    )


def transition(job: Job, next_state: JobState, detail: str | None = None) -> Job:
    """Return a copy of `job` moved along one edge of the lifecycle DAG."""
    current = job.status.state
    if next_state not in ALLOWED_TRANSITIONS[current]:
        raise IllegalTransition(current, next_state)
    return dataclasses.replace(job, status=JobStatus(next_state, detail))


def terminal_state_for(outcomes: list[RunOutcome] | tuple[RunOutcome, ...]) -> JobState:
    """Map per-detector outcomes to the job's terminal state: all succeeded ->
    completed, none succeeded -> failed, otherwise partially completed."""
    if not outcomes:
        raise ValueError("no outcomes to classify")
    wins = sum(1 for o in outcomes if o is RunOutcome.SUCCEEDED)
    if wins == len(outcomes):
        return JobState.COMPLETED
    if wins == 0:
        return JobState.FAILED
    return JobState.PARTIALLY_COMPLETED


def job_to_dict(job: Job) -> dict:
    """JSON-ready representation used for persistence and the exchange."""
    return {
        "job_id": job.job_id,
        "video": {
            "origin": job.video.origin.value,
            "content_path": job.video.content_path,
            "byte_size": job.video.byte_size,
            "media_kind": job.video.media_kind.value,
        },
        "detectors": list(job.detectors),
        "email": job.email,
        "pin_digest": job.pin_digest,
        "created_at": job.created_at.isoformat(),
        "status": {"state": job.status.state.value, "detail": job.status.detail},
    }


def job_from_dict(doc: dict) -> Job:
    video = doc["video"]
    status = doc.get("status") or {"state": "received", "detail": None}
    return Job(
        job_id=doc["job_id"],
        video=VideoRef(
            origin=VideoOrigin(video["origin"]),
            content_path=video["content_path"],
            byte_size=int(video["byte_size"]),
            media_kind=MediaKind(video["media_kind"]),
        ),
        detectors=tuple(doc["detectors"]),
        email=doc["email"],
        pin_digest=doc["pin_digest"],
        created_at=datetime.fromisoformat(doc["created_at"]),
        status=JobStatus(JobState(status["state"]), status.get("detail")),
    )
