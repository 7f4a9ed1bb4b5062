"""HTTP surface of the gateway.

A threaded stdlib server exposing four JSON/zip routes plus optional
static-asset serving for the web client::

    POST /api/v1/jobs                     multipart submission -> {"job_id"}
    GET  /api/v1/jobs/<job_id>            -> {"state", "detail"}
    GET  /api/v1/detectors                -> catalog array
    POST /api/v1/jobs/<job_id>/download   {"pin"} -> application/zip

Uploads are parsed by an incremental multipart reader that spools the
video part straight to disk in 64 KB chunks — request memory stays flat
no matter how large the body is. The moment the video part runs past
the configured byte limit the spool is dropped; the remaining body is
read and discarded (so well-behaved clients still get the response)
and the request fails with 413 ``oversize-video``.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import re
import sys
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

from . import model
from .gateway import GatewayError, GatewayService, LockedOut, NotFound, NotReady, WrongPin
from .plugin import Registry

log = logging.getLogger(__name__)

CHUNK = 64 * 1024
FIELD_CAP = 64 * 1024  # plain form fields larger than this are nonsense
HEADER_CAP = 16 * 1024
VIDEO_FIELD = "video"

_JOB_ROUTE = re.compile(r"^/api/v1/jobs/([A-Za-z0-9._-]+)$")
_DOWNLOAD_ROUTE = re.compile(r"^/api/v1/jobs/([A-Za-z0-9._-]+)/download$")

# error code -> HTTP status; anything unlisted is a plain 400
_STATUS_FOR_CODE = {
    "oversize-video": 413,
    "wrong-pin": 403,
    "not-found": 404,
    "not-ready": 409,
    "locked-out": 429,
}


def _error_tuple(code: str, default_status: int = 400) -> tuple[int, dict]:
    return _STATUS_FOR_CODE.get(code, default_status), {"error": code}


class MultipartError(Exception):
    """The request body is not well-formed multipart/form-data."""


class OversizePart(Exception):
    """The video file part exceeded the configured limit."""


def _parse_disposition(value: str) -> tuple[str | None, str | None]:
    """Pull name= and filename= out of a Content-Disposition header."""
    params = dict(re.findall(r'(\w+)="([^"]*)"', value))
    return params.get("name"), params.get("filename")


class FormResult:
    """What the multipart reader hands back to the route handler."""

    def __init__(self) -> None:
        self.fields: dict[str, str] = {}
        self.video_path: Path | None = None
        self.video_bytes: int = 0
        self.video_filename: str | None = None


def parse_form(
    read: Callable[[int], bytes],
    boundary: bytes,
    spool_dir: Path,
    max_video_bytes: int,
    out: FormResult | None = None,
) -> FormResult:
    """Incrementally parse a multipart/form-data body.

    ``read(n)`` must return at most n bytes and b"" at end of body.
    Plain fields are collected into strings; the ``video`` file part is
    streamed to a spool file under ``spool_dir``. Raises OversizePart
    as soon as that part exceeds ``max_video_bytes`` and MultipartError
    for framing problems. Pass ``out`` to keep access to the partially
    filled result (and its spool path) when the parse raises.
    """
    delim = b"\r\n--" + boundary
    if out is None:
        out = FormResult()
    buf = bytearray(b"\r\n")  # virtual CRLF so the first boundary matches delim
    eof = False

    def more() -> bool:
        nonlocal eof
        if eof:
            return False
        chunk = read(CHUNK)
        if not chunk:
            eof = True
            return False
        buf.extend(chunk)
        return True

    # Skip any preamble up to the first delimiter.
    while True:
        i = buf.find(delim)
        if i >= 0:
            del buf[: i + len(delim)]
            break
        keep = len(delim) - 1
        if len(buf) > keep:
            del buf[: len(buf) - keep]
        if not more():
            raise MultipartError("no opening boundary")

    spool_fh = None
    try:
        while True:
            while len(buf) < 2:
                if not more():
                    raise MultipartError("truncated after boundary")
            if buf[:2] == b"--":
                return out  # closing delimiter; epilogue is the caller's to drain
            if buf[:2] != b"\r\n":
                raise MultipartError("malformed boundary tail")
            del buf[:2]

            # Part headers end with a blank line.
            while True:
                j = buf.find(b"\r\n\r\n")
                if j >= 0:
                    break
                if len(buf) > HEADER_CAP:
                    raise MultipartError("part headers too large")
                if not more():
                    raise MultipartError("truncated part headers")
            header_block = bytes(buf[: j]).decode("utf-8", "replace")
            del buf[: j + 4]
            disposition = ""
            for line in header_block.split("\r\n"):
                key, _, val = line.partition(":")
                if key.strip().lower() == "content-disposition":
                    disposition = val.strip()
            name, filename = _parse_disposition(disposition)
            if name is None:
                raise MultipartError("part without a field name")

            is_video = name == VIDEO_FIELD
            field_data = bytearray()
            if is_video:
                out.video_filename = filename
                out.video_path = spool_dir / f".upload-{uuid.uuid4().hex}.part"
                spool_fh = open(out.video_path, "wb")

            def emit(data: bytes) -> None:
                nonlocal spool_fh
                if not data:
                    return
                if is_video:
                    out.video_bytes += len(data)
                    if out.video_bytes > max_video_bytes:
                        raise OversizePart()
                    spool_fh.write(data)
                else:
                    if len(field_data) + len(data) > FIELD_CAP:
                        raise MultipartError(f"field {name!r} too large")
                    field_data.extend(data)

            # Stream the body until the next delimiter.
            while True:
                k = buf.find(delim)
                if k >= 0:
                    emit(bytes(buf[:k]))
                    del buf[: k + len(delim)]
                    break
                flushable = len(buf) - (len(delim) - 1)
                if flushable > 0:
                    emit(bytes(buf[:flushable]))
                    del buf[:flushable]
                if not more():
                    raise MultipartError("unterminated part")

            if is_video:
                spool_fh.close()
                spool_fh = None
                if not out.video_filename and out.video_bytes == 0:
                    # Empty file input on a URL submission: not a video.
                    out.video_path.unlink(missing_ok=True)
                    out.video_path = None
            else:
                out.fields[name] = field_data.decode("utf-8", "replace")
    finally:
        if spool_fh is not None:
            spool_fh.close()


class _Bounded:
    """Content-Length-bounded reader over the connection's rfile."""

    def __init__(self, raw, length: int):
        self._raw = raw
        self.remaining = length

    def read(self, n: int) -> bytes:
        if self.remaining <= 0:
            return b""
        data = self._raw.read(min(n, self.remaining))
        self.remaining -= len(data)
        return data

    def drain(self) -> None:
        while self.read(CHUNK):
            pass


class GatewayHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        service: GatewayService,
        registry: Registry,
        *,
        static_dir: Path | None = None,
    ):
        self.service = service
        self.registry = registry
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        super().__init__(address, _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def handle_error(self, request, client_address):
        exc = sys.exc_info()[1]
        if isinstance(exc, (BrokenPipeError, ConnectionResetError, TimeoutError)):
            log.debug("client %s dropped the connection: %s", client_address, exc)
            return
        super().handle_error(request, client_address)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    timeout = 120
    server: GatewayHTTPServer

    # -- plumbing --------------------------------------------------------

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, doc: dict) -> None:
        body = (json.dumps(doc) + "\n").encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_code(self, code: str, default_status: int = 400) -> None:
        self._send_json(_STATUS_FOR_CODE.get(code, default_status), {"error": code})

    def _body_reader(self) -> _Bounded | None:
        length = self.headers.get("Content-Length", "")
        if not length.isdigit():
            # Without a length we cannot frame the body; drop the connection
            # so leftover bytes are not misread as a follow-up request.
            self.close_connection = True
            self._send_error_code("length-required", 411)
            return None
        return _Bounded(self.rfile, int(length))

    # -- routing -----------------------------------------------------------

    def do_GET(self) -> None:
        path = self.path.split("?", 1)[0]
        if path == "/api/v1/detectors":
            return self._get_detectors()
        m = _JOB_ROUTE.match(path)
        if m:
            return self._get_status(m.group(1))
        if path.startswith("/api/"):
            return self._send_error_code("not-found", 404)
        return self._get_static(path)

    def do_POST(self) -> None:
        path = self.path.split("?", 1)[0]
        if path == "/api/v1/jobs":
            return self._post_job()
        m = _DOWNLOAD_ROUTE.match(path)
        if m:
            return self._post_download(m.group(1))
        return self._send_error_code("not-found", 404)

    # -- routes ------------------------------------------------------------

    def _get_detectors(self) -> None:
        catalog = [
            {
                "detector_id": d.detector_id,
                "name": d.display_name,
                "version": d.version,
                "description": d.description,
                "source_repo": d.source_repo,
                "release_date": d.release_date,
            }
            for d in self.server.registry
        ]
        body = (json.dumps(catalog) + "\n").encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _get_status(self, job_id: str) -> None:
        try:
            status = self.server.service.status(job_id)
        except NotFound:
            return self._send_error_code("not-found", 404)
        self._send_json(200, {"state": status.state.value, "detail": status.detail or ""})

    def _post_job(self) -> None:
        reader = self._body_reader()
        if reader is None:
            return
        ctype = self.headers.get("Content-Type", "")
        m = re.search(r'boundary="?([^";]+)"?', ctype)
        if "multipart/form-data" not in ctype or not m:
            reader.drain()
            return self._send_error_code("malformed-request")
        boundary = m.group(1).encode("ascii", "replace")

        service = self.server.service
        form = FormResult()
        try:
            parse_form(
                reader.read, boundary, service.videos_dir, service.max_video_bytes, form
            )
            reader.drain()
            status, doc = self._handle_submission(form)
        except OversizePart:
            # Stop spooling, politely swallow the rest of the body so the
            # client can read the response, then reject.
            reader.drain()
            status, doc = 413, {"error": "oversize-video"}
        except MultipartError as exc:
            reader.drain()
            log.debug("bad multipart request: %s", exc)
            status, doc = 400, {"error": "malformed-request"}
        except Exception:
            log.exception("submission handling failed")
            status, doc = 500, {"error": "internal-error"}
        finally:
            # Clean up before responding, so a client that has seen the
            # reply never observes a leftover spool file.
            if form.video_path is not None:
                Path(form.video_path).unlink(missing_ok=True)
                form.video_path = None
        self._send_json(status, doc)

    def _handle_submission(self, form: FormResult) -> tuple[int, dict]:
        url = form.fields.get("video_url", "").strip()
        detectors = [
            d.strip() for d in form.fields.get("detectors", "").split(",") if d.strip()
        ]
        email = form.fields.get("email", "")
        pin = form.fields.get("pin", "")

        if form.video_path is not None and url:
            return _error_tuple("ambiguous-video")
        if form.video_path is None and not url:
            return _error_tuple("missing-video")

        service = self.server.service
        try:
            if form.video_path is not None:
                job_id = service.submit_upload(form.video_path, detectors, email, pin)
                form.video_path = None  # ownership passed to the service
            else:
                job_id = service.submit_remote(url, detectors, email, pin)
        except (model.ValidationError, GatewayError) as exc:
            return _error_tuple(exc.code)
        return 201, {"job_id": job_id}

    def _post_download(self, job_id: str) -> None:
        reader = self._body_reader()
        if reader is None:
            return
        raw = bytearray()
        while True:
            chunk = reader.read(CHUNK)
            if not chunk:
                break
            raw.extend(chunk)
            if len(raw) > FIELD_CAP:
                return self._send_error_code("malformed-request")
        try:
            doc = json.loads(raw.decode("utf-8"))
            pin = str(doc["pin"])
        except (ValueError, KeyError, UnicodeDecodeError):
            return self._send_error_code("malformed-request")
        try:
            result = self.server.service.download(job_id, pin)
        except (WrongPin, NotFound, NotReady, LockedOut) as exc:
            return self._send_error_code(exc.code)
        self.send_response(200)
        self.send_header("Content-Type", "application/zip")
        self.send_header(
            "Content-Disposition", f'attachment; filename="{job_id}-results.zip"'
        )
        self.send_header("X-Bundle-Sha256", result.digest)
        self.send_header("Content-Length", str(len(result.bundle)))
        self.end_headers()
        self.wfile.write(result.bundle)

    # -- static assets -------------------------------------------------------

    def _get_static(self, path: str) -> None:
        root = self.server.static_dir
        if root is None:
            return self._send_error_code("not-found", 404)
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            return self._send_error_code("not-found", 404)
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return self._send_error_code("not-found", 404)
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    host: str,
    port: int,
    service: GatewayService,
    registry: Registry,
    *,
    static_dir: Path | None = None,
) -> GatewayHTTPServer:
    """Bind the gateway HTTP server (port 0 picks a free port)."""
    return GatewayHTTPServer((host, port), service, registry, static_dir=static_dir)


class Ticker(threading.Thread):
    """Background maintenance loop driving GatewayService.tick()."""

    def __init__(self, service: GatewayService, interval: float = 0.5):
        super().__init__(name="gateway-ticker", daemon=True)
        self.service = service
        self.interval = interval
        self._stop = threading.Event()

    def run(self) -> None:
        while not self._stop.wait(self.interval):
            try:
                self.service.tick()
            except Exception:
                log.exception("gateway maintenance pass failed")

    def stop(self) -> None:
        self._stop.set()
        self.join(timeout=5)
