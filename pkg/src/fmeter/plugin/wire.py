"""Wire protocol spoken with detector plugins.

Newline-delimited JSON over the child's stdin/stdout, UTF-8, one object
per line, responses flushed per line. The child opens with a hello; the
host acknowledges, then sends analyze_frame requests (pipelining is
allowed, responses may arrive out of order and are matched by
frame_index) and finally a shutdown message::

    plugin -> host  {"type": "hello", "protocol_version": 1, "detector_id": "..."}
    host -> plugin  {"type": "hello_ack"}
    host -> plugin  {"type": "analyze_frame", "frame_path": "...", "frame_index": n}
    plugin -> host  {"type": "frame_score", "frame_index": n, "soft_label": x,
                     "hard_label": "real"|"fake", "face_found": bool}
    host -> plugin  {"type": "shutdown"}

A process boundary keeps the contract language-agnostic: any runtime
that can read lines and write JSON can ship a detector.
"""

from __future__ import annotations

import json

from ..scores import FrameScore

PROTOCOL_VERSION = 1


class SessionError(Exception):
    """Base for plugin session failures; `code` is machine-readable."""

    code = "plugin-error"

    def __init__(self, message: str, detector_id: str | None = None):
        super().__init__(message)
        self.detector_id = detector_id


class SpawnFailed(SessionError):
    code = "spawn-failed"


class HandshakeTimeout(SessionError):
    code = "handshake-timeout"


class ProtocolMismatch(SessionError):
    code = "protocol-mismatch"


class PluginCrashed(SessionError):
    code = "plugin-crashed"


class MalformedResponse(SessionError):
    code = "malformed-response"


class OutOfRangeScore(SessionError):
    code = "out-of-range-score"


def encode(message: dict) -> bytes:
    return (json.dumps(message, separators=(",", ":")) + "\n").encode("utf-8")


def hello_ack() -> dict:
    return {"type": "hello_ack"}


def analyze_frame_request(frame_path: str, frame_index: int) -> dict:
    return {"type": "analyze_frame", "frame_path": frame_path, "frame_index": frame_index}


def shutdown_request() -> dict:
    return {"type": "shutdown"}


def parse_hello(line: str, expected_detector_id: str) -> int:
    """Validate the plugin's opening message; returns the negotiated
    protocol version. Anything else on the line is a protocol mismatch."""
    try:
        msg = json.loads(line)
    except ValueError:
        raise ProtocolMismatch(
            f"expected hello, got unparseable line: {line[:200]!r}", expected_detector_id
        )
    if not isinstance(msg, dict) or msg.get("type") != "hello":
        raise ProtocolMismatch(f"expected hello, got: {line[:200]!r}", expected_detector_id)
    version = msg.get("protocol_version")
    if version != PROTOCOL_VERSION:
        raise ProtocolMismatch(
            f"unsupported protocol_version: {version!r}", expected_detector_id
        )
    announced = msg.get("detector_id")
    if announced != expected_detector_id:
        raise ProtocolMismatch(
            f"plugin announced {announced!r}, descriptor says {expected_detector_id!r}",
            expected_detector_id,
        )
    return version


def parse_frame_score(line: str, detector_id: str) -> FrameScore:
    """Parse one frame_score response line.

    Raises MalformedResponse for structural problems and OutOfRangeScore
    when soft_label leaves [0, 1]; scores are never silently clamped.
    """
    try:
        msg = json.loads(line)
    except ValueError:
        raise MalformedResponse(f"unparseable response: {line[:200]!r}", detector_id)
    if not isinstance(msg, dict) or msg.get("type") != "frame_score":
        raise MalformedResponse(f"unexpected message: {line[:200]!r}", detector_id)
    frame_index = msg.get("frame_index")
    soft = msg.get("soft_label")
    hard = msg.get("hard_label")
    face_found = msg.get("face_found", True)
    if not isinstance(frame_index, int) or isinstance(frame_index, bool) or frame_index < 0:
        raise MalformedResponse(f"bad frame_index: {frame_index!r}", detector_id)
    if not isinstance(soft, (int, float)) or isinstance(soft, bool):
        raise MalformedResponse(f"bad soft_label: {soft!r}", detector_id)
    if not 0.0 <= float(soft) <= 1.0:
        raise OutOfRangeScore(
            f"soft_label {soft!r} outside [0,1] at frame {frame_index}", detector_id
        )
    if hard not in ("real", "fake"):
        raise MalformedResponse(f"bad hard_label: {hard!r}", detector_id)
    if not isinstance(face_found, bool):
        raise MalformedResponse(f"bad face_found: {face_found!r}", detector_id)
    return FrameScore(
        frame_index=frame_index,
        soft_label=float(soft),
        hard_label=hard,
        face_found=face_found,
    )
