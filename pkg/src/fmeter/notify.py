"""Email-style notifications with pluggable transports.

The platform notifies on submission receipt and on job completion. A
transport is anything with a `transport_id` and a `send(notification)`
method raising :class:`TransportError` on failure; the file transport is
the test/deployment default (drops one text file per message), the SMTP
transport talks to a real relay. Delivery retries with exponential
backoff; messages that exhaust their retries are appended to a
dead-letter log instead of being lost silently.

Notification bodies never include the download PIN — the submitter
already knows it, and mail is the least private channel involved.
"""

from __future__ import annotations

import json
import logging
import queue
import smtplib
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from email.message import EmailMessage
from pathlib import Path

from .model import Job

log = logging.getLogger(__name__)

KINDS = ("received", "results_ready", "failed")

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.1  # seconds; doubles per retry


class TransportError(Exception):
    pass


@dataclass(frozen=True)
class Notification:
    recipient: str
    kind: str
    job_id: str
    body: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown notification kind: {self.kind!r}")
        if not self.body:
            raise ValueError("notification body must be non-empty")


@dataclass(frozen=True)
class DeliveryReceipt:
    job_id: str
    kind: str
    transport_id: str
    timestamp: datetime
    attempts: int  # 1 = delivered first try


class FileTransport:
    """Writes one UTF-8 text file per message into `mail_dir`."""

    transport_id = "file"

    def __init__(self, mail_dir: Path):
        self.mail_dir = Path(mail_dir)

    def send(self, n: Notification) -> None:
        try:
            self.mail_dir.mkdir(parents=True, exist_ok=True)
            stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
            path = self.mail_dir / f"{stamp}_{n.job_id}_{n.kind}.txt"
            path.write_text(f"To: {n.recipient}\n\n{n.body}\n", encoding="utf-8")
        except OSError as exc:
            raise TransportError(f"cannot write mail file: {exc}") from exc


class SmtpTransport:
    transport_id = "smtp"

    def __init__(
        self,
        host: str,
        port: int = 25,
        username: str | None = None,
        password: str | None = None,
        sender: str = "noreply@localhost",
        timeout: float = 10.0,
    ):
        self.host = host
        self.port = port
        self.username = username
        self.password = password
        self.sender = sender
        self.timeout = timeout

    def send(self, n: Notification) -> None:
        msg = EmailMessage()
        msg["From"] = self.sender
        msg["To"] = n.recipient
        msg["Subject"] = f"[analysis] job {n.job_id}: {n.kind.replace('_', ' ')}"
        msg.set_content(n.body)
        try:
            with smtplib.SMTP(self.host, self.port, timeout=self.timeout) as smtp:
                if self.username:
                    smtp.login(self.username, self.password or "")
                smtp.send_message(msg)
        except (OSError, smtplib.SMTPException) as exc:
            raise TransportError(f"smtp delivery failed: {exc}") from exc


def notify(
    transport,
    n: Notification,
    retries: int = DEFAULT_RETRIES,
    backoff: float = DEFAULT_BACKOFF,
    dead_letter_path: Path | None = None,
    sleep=time.sleep,
) -> DeliveryReceipt | None:
    """Hand `n` to the transport, retrying with exponential backoff.

    Returns a receipt on delivery; after `retries` failed retries the
    message is appended to the dead-letter log and None is returned.
    """
    attempts = 0
    delay = backoff
    while True:
        attempts += 1
        try:
            transport.send(n)
        except TransportError as exc:
            if attempts > retries:
                _dead_letter(n, transport, attempts, exc, dead_letter_path)
                return None
            log.warning(
                "notification %s/%s attempt %d failed (%s); retrying in %.2fs",
                n.job_id, n.kind, attempts, exc, delay,
            )
            sleep(delay)
            delay *= 2
            continue
        return DeliveryReceipt(
            job_id=n.job_id,
            kind=n.kind,
            transport_id=transport.transport_id,
            timestamp=datetime.now(timezone.utc),
            attempts=attempts,
        )


def _dead_letter(n, transport, attempts, exc, path: Path | None) -> None:
    entry = {
        "job_id": n.job_id,
        "kind": n.kind,
        "recipient": n.recipient,
        "transport_id": transport.transport_id,
        "attempts": attempts,
        "error": str(exc),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    log.error("notification dead-lettered: %s", entry)
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry) + "\n")
        except OSError:
            log.exception("cannot write dead-letter log %s", path)


class Notifier:
    """Thread-safe enqueue feeding a single background dispatcher."""

    def __init__(
        self,
        transport,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        dead_letter_path: Path | None = None,
    ):
        self.transport = transport
        self.retries = retries
        self.backoff = backoff
        self.dead_letter_path = dead_letter_path
        self.receipts: list[DeliveryReceipt] = []
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._dispatch, daemon=True)
        self._thread.start()

    def enqueue(self, n: Notification) -> None:
        self._queue.put(n)

    def _dispatch(self) -> None:
        while True:
            n = self._queue.get()
            if n is None:
                return
            try:
                receipt = notify(
                    self.transport, n,
                    retries=self.retries,
                    backoff=self.backoff,
                    dead_letter_path=self.dead_letter_path,
                )
                if receipt is not None:
                    self.receipts.append(receipt)
            except Exception:
                log.exception("notification dispatch crashed; message dropped")
            finally:
                self._queue.task_done()

    def drain(self, timeout: float = 10.0) -> None:
        """Block until everything enqueued so far has been dispatched."""
        deadline = time.monotonic() + timeout
        while not self._queue.empty() and time.monotonic() < deadline:
            time.sleep(0.01)
        self._queue.join()

    def close(self) -> None:
        self.drain()
        self._queue.put(None)
        self._thread.join(timeout=5)


# -- message composition ------------------------------------------------------


def received_notification(job: Job) -> Notification:
    body = (
        f"Your submission was received and queued for analysis.\n"
        f"Job id: {job.job_id}\n"
        f"Detectors: {', '.join(job.detectors)}\n"
        f"You will get another message when the results are ready."
    )
    return Notification(job.email, "received", job.job_id, body)


def results_ready_notification(job: Job) -> Notification:
    body = (
        f"Analysis of your submission is complete.\n"
        f"Job id: {job.job_id}\n"
        f"Download your result bundle from the web interface or via the\n"
        f"command line using this job id and the PIN you chose at submission.\n"
        f"For your security the PIN is not included in this message."
    )
    return Notification(job.email, "results_ready", job.job_id, body)


def failed_notification(job: Job, detail: str = "") -> Notification:
    body = (
        f"Analysis of your submission did not complete.\n"
        f"Job id: {job.job_id}\n"
        + (f"Detail: {detail}\n" if detail else "")
        + "You may resubmit or contact the operator."
    )
    return Notification(job.email, "failed", job.job_id, body)
