"""File-based exchange between front-end and back-end.

Two shared directories connect the services: an inbox carrying
submissions (front-end writes, back-end reads) and an outbox carrying
results (back-end writes, front-end reads). An envelope is a directory
holding payload files plus a ``manifest.json`` recording a SHA-256
digest per file. Atomic visibility comes from a stage-then-rename
protocol: payloads are written under ``<root>/.staging/<id>/``, the
manifest is written last, and the whole directory is renamed into the
root in one step. Pollers treat a missing manifest or a failing digest
as "not an envelope", so a crashed publisher can never expose a torn
write. Consumption renames the envelope to ``<id>.consumed`` so it is
delivered at most once.

Layout, bit-exact::

    <root>/<envelope_id>/manifest.json     complete envelope (+ payloads)
    <root>/.staging/<envelope_id>/         in-flight publish
    <root>/<envelope_id>.consumed/         delivered envelope
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import shutil
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from .model import Job, job_to_dict

SCHEMA_VERSION = 1
STAGING_DIR = ".staging"
CONSUMED_SUFFIX = ".consumed"
RESULTS_SUFFIX = ".results"

SUBMISSION_PAYLOAD = "video.dat"
JOB_RECORD = "job.json"
BUNDLE_PAYLOAD = "bundle.zip"

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")

# Called at each write/rename boundary of publish(); tests substitute a
# raising callable to simulate a crash at that exact point.
Checkpoint = Callable[[str], None]


def _no_checkpoint(_: str) -> None:
    return None


class ExchangeError(Exception):
    code = "io-error"


class DuplicateEnvelope(ExchangeError):
    code = "duplicate-envelope"

    def __init__(self, envelope_id: str):
        super().__init__(f"envelope already published: {envelope_id}")
        self.envelope_id = envelope_id


class EnvelopeNotFound(ExchangeError):
    code = "not-found"

    def __init__(self, envelope_id: str):
        super().__init__(f"no such envelope: {envelope_id}")
        self.envelope_id = envelope_id


class CorruptEnvelope(ExchangeError):
    code = "corrupt-envelope"

    def __init__(self, envelope_id: str, reason: str):
        super().__init__(f"corrupt envelope {envelope_id}: {reason}")
        self.envelope_id = envelope_id
        self.reason = reason


@dataclass(frozen=True)
class ExchangeDirs:
    """The two shared roots. Writers only ever create envelopes in their
    designated root: front-end publishes to inbox, back-end to outbox."""

    inbox_root: Path
    outbox_root: Path

    def __post_init__(self):
        inbox = Path(self.inbox_root).resolve()
        outbox = Path(self.outbox_root).resolve()
        if inbox == outbox:
            raise ValueError("inbox and outbox roots must be distinct")
        object.__setattr__(self, "inbox_root", inbox)
        object.__setattr__(self, "outbox_root", outbox)


@dataclass(frozen=True)
class ExchangeEnvelope:
    envelope_id: str
    kind: str
    directory: Path
    payload_files: tuple[str, ...]
    manifest: dict
    created_at: str

    def payload_path(self, name: str) -> Path:
        if name not in self.payload_files:
            raise KeyError(name)
        return self.directory / name


@dataclass(frozen=True)
class PollResult:
    ready: tuple[ExchangeEnvelope, ...]
    corrupt: tuple[CorruptEnvelope, ...]


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _validate_envelope_id(envelope_id: str) -> None:
    if not _ID_RE.match(envelope_id) or envelope_id.endswith(CONSUMED_SUFFIX):
        raise ValueError(f"invalid envelope id: {envelope_id!r}")


def publish(
    root: Path,
    envelope_id: str,
    kind: str,
    files: dict[str, bytes | Path],
    checkpoint: Checkpoint = _no_checkpoint,
) -> str:
    """Atomically publish an envelope into `root`.

    `files` maps payload file names to bytes or source paths. Raises
    DuplicateEnvelope if the id was already published (including already
    consumed); on any failure before the final rename nothing becomes
    visible to pollers.
    """
    _validate_envelope_id(envelope_id)
    root = Path(root)
    final_dir = root / envelope_id
    consumed_dir = root / (envelope_id + CONSUMED_SUFFIX)
    if final_dir.exists() or consumed_dir.exists():
        raise DuplicateEnvelope(envelope_id)

    staging = root / STAGING_DIR / envelope_id
    if staging.exists():
        # leftover from a crashed attempt; restart cleanly
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    checkpoint("staged")

    digests: dict[str, str] = {}
    for name, source in files.items():
        target = staging / name
        if isinstance(source, (bytes, bytearray)):
            target.write_bytes(source)
        else:
            shutil.copyfile(source, target)
        digests[name] = _sha256_file(target)
        checkpoint(f"payload:{name}")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "envelope_id": envelope_id,
        "kind": kind,
        "payload_digest": digests,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="microseconds"),
    }
    # manifest written last: its presence certifies a complete envelope
    (staging / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    checkpoint("manifest")

    try:
        os.replace(staging, final_dir)
    except OSError as exc:
        # lost a race with a concurrent publisher of the same id
        if final_dir.exists():
            raise DuplicateEnvelope(envelope_id) from exc
        raise
    checkpoint("published")
    return envelope_id


def _read_envelope(root: Path, envelope_id: str, directory: Path) -> ExchangeEnvelope:
    """Parse and digest-verify one envelope directory; raises CorruptEnvelope."""
    manifest_path = directory / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CorruptEnvelope(envelope_id, f"unreadable manifest: {exc}") from exc
    digests = manifest.get("payload_digest")
    if not isinstance(digests, dict) or manifest.get("envelope_id") != envelope_id:
        raise CorruptEnvelope(envelope_id, "malformed manifest")
    for name, expected in digests.items():
        path = directory / name
        if not path.is_file():
            raise CorruptEnvelope(envelope_id, f"missing payload file: {name}")
        actual = _sha256_file(path)
        if actual != expected:
            raise CorruptEnvelope(envelope_id, f"digest mismatch on {name}")
    return ExchangeEnvelope(
        envelope_id=envelope_id,
        kind=str(manifest.get("kind", "")),
        directory=directory,
        payload_files=tuple(digests.keys()),
        manifest=manifest,
        created_at=str(manifest.get("created_at", "")),
    )


def poll(root: Path, seen: Iterable[str] = ()) -> PollResult:
    """Scan `root` for complete, digest-verified envelopes not in `seen`.

    Staged, consumed and manifest-less directories are skipped silently;
    envelopes failing verification are reported in `corrupt` without
    aborting the poll. Ready envelopes are ordered by manifest
    created_at, then id.
    """
    root = Path(root)
    seen_set = set(seen)
    ready: list[ExchangeEnvelope] = []
    corrupt: list[CorruptEnvelope] = []
    if not root.is_dir():
        return PollResult((), ())
    for entry in os.scandir(root):
        name = entry.name
        if not entry.is_dir() or name.startswith(".") or name.endswith(CONSUMED_SUFFIX):
            continue
        if name in seen_set:
            continue
        directory = root / name
        if not (directory / "manifest.json").is_file():
            continue  # staged or torn: manifest-last rule says not ready
        try:
            ready.append(_read_envelope(root, name, directory))
        except CorruptEnvelope as exc:
            corrupt.append(exc)
    ready.sort(key=lambda e: (e.created_at, e.envelope_id))
    return PollResult(tuple(ready), tuple(corrupt))


def consume(root: Path, envelope_id: str) -> ExchangeEnvelope:
    """Verify and claim an envelope, renaming it to ``<id>.consumed`` so
    it is never re-delivered. Returns handles pointing at the consumed
    location."""
    root = Path(root)
    directory = root / envelope_id
    if not directory.is_dir():
        raise EnvelopeNotFound(envelope_id)
    _read_envelope(root, envelope_id, directory)  # digest check before claim
    consumed_dir = root / (envelope_id + CONSUMED_SUFFIX)
    os.replace(directory, consumed_dir)
    return _read_envelope(root, envelope_id, consumed_dir)


def consumed_payload_dir(root: Path, envelope_id: str) -> Path | None:
    """Locate a previously consumed envelope's directory, if still retained."""
    consumed_dir = Path(root) / (envelope_id + CONSUMED_SUFFIX)
    return consumed_dir if consumed_dir.is_dir() else None


def purge_consumed(root: Path, older_than_seconds: float, now: float | None = None) -> int:
    """Janitor: delete consumed envelopes past the retention window."""
    root = Path(root)
    if not root.is_dir():
        return 0
    cutoff = (now if now is not None else datetime.now(timezone.utc).timestamp()) - older_than_seconds
    removed = 0
    for entry in os.scandir(root):
        if entry.is_dir() and entry.name.endswith(CONSUMED_SUFFIX):
            if entry.stat().st_mtime < cutoff:
                shutil.rmtree(root / entry.name)
                removed += 1
    return removed


# -- role-specific wrappers -------------------------------------------------

def publish_submission(
    dirs: ExchangeDirs,
    job: Job,
    video_payload: Path,
    checkpoint: Checkpoint = _no_checkpoint,
) -> str:
    """Front-end publish: job record + media payload into the inbox."""
    files: dict[str, bytes | Path] = {
        JOB_RECORD: (json.dumps(job_to_dict(job), indent=2) + "\n").encode("utf-8"),
        SUBMISSION_PAYLOAD: Path(video_payload),
    }
    return publish(dirs.inbox_root, job.job_id, "submission", files, checkpoint)


def publish_results(
    dirs: ExchangeDirs,
    job_id: str,
    bundle: bytes | Path,
    checkpoint: Checkpoint = _no_checkpoint,
) -> str:
    """Back-end publish: the zipped result bundle into the outbox.

    The exchange is dumb transport: no check that job_id is known."""
    envelope_id = job_id + RESULTS_SUFFIX
    return publish(dirs.outbox_root, envelope_id, "results", {BUNDLE_PAYLOAD: bundle}, checkpoint)


def poll_inbox(dirs: ExchangeDirs, seen: Iterable[str] = ()) -> PollResult:
    return poll(dirs.inbox_root, seen)


def poll_outbox(dirs: ExchangeDirs, seen: Iterable[str] = ()) -> PollResult:
    return poll(dirs.outbox_root, seen)


def consume_inbox(dirs: ExchangeDirs, envelope_id: str) -> ExchangeEnvelope:
    return consume(dirs.inbox_root, envelope_id)


def consume_outbox(dirs: ExchangeDirs, envelope_id: str) -> ExchangeEnvelope:
    return consume(dirs.outbox_root, envelope_id)


def results_envelope_id(job_id: str) -> str:
    return job_id + RESULTS_SUFFIX


def job_id_from_results_envelope(envelope_id: str) -> str:
    if not envelope_id.endswith(RESULTS_SUFFIX):
        raise ValueError(f"not a results envelope id: {envelope_id}")
    return envelope_id[: -len(RESULTS_SUFFIX)]
