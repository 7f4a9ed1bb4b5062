"""Sandboxed plugin sessions.

One session = one child process, owned by one worker. The sandbox is a
process-isolation abstraction: a per-run scratch working directory, an
environment scrubbed to an allowlist, and kill-on-timeout. A container
runner can be slotted behind the same spawn interface later.
"""

from __future__ import annotations

import collections
import os
import queue
import shutil
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..scores import FrameScore, ScoreSeries
from . import wire
from .registry import DetectorDescriptor
from .wire import (
    HandshakeTimeout,
    MalformedResponse,
    PluginCrashed,
    ProtocolMismatch,
    SessionError,
    SpawnFailed,
)

DEFAULT_ENV_ALLOWLIST = ("PATH", "LANG", "LC_ALL", "TZ", "SYSTEMROOT")

_EOF = object()

_stats_lock = threading.Lock()
_live_sessions = 0
_peak_sessions = 0


class ResponseTimeout(SessionError):
    code = "response-timeout"


def session_stats() -> tuple[int, int]:
    """(currently live, high-water mark) of plugin child processes."""
    with _stats_lock:
        return _live_sessions, _peak_sessions


def reset_session_stats() -> None:
    global _peak_sessions
    with _stats_lock:
        _peak_sessions = _live_sessions


def _track_spawn() -> None:
    global _live_sessions, _peak_sessions
    with _stats_lock:
        _live_sessions += 1
        _peak_sessions = max(_peak_sessions, _live_sessions)


def _track_exit() -> None:
    global _live_sessions
    with _stats_lock:
        _live_sessions -= 1


@dataclass(frozen=True)
class SandboxConfig:
    scratch_root: Path
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST
    handshake_timeout: float = 10.0
    response_timeout: float = 30.0
    shutdown_grace: float = 2.0
    extra_env: dict[str, str] = field(default_factory=dict)


class PluginSession:
    """Live conversation with one sandboxed detector process.

    Requests may be pipelined; responses are matched by frame_index and
    may arrive in any order. Not thread-safe: one worker per session.
    """

    def __init__(
        self,
        descriptor: DetectorDescriptor,
        config: SandboxConfig,
        proc: subprocess.Popen,
        scratch_dir: Path,
    ):
        self.descriptor = descriptor
        self.config = config
        self.proc = proc
        self.scratch_dir = scratch_dir
        self.protocol_version = wire.PROTOCOL_VERSION
        self._lines: queue.Queue = queue.Queue()
        self._stderr_tail: collections.deque[str] = collections.deque(maxlen=50)
        self._pending: set[int] = set()
        self._buffered: dict[int, FrameScore] = {}
        self._closed = False
        self._reaped = False
        self._stdout_thread = threading.Thread(target=self._read_stdout, daemon=True)
        self._stderr_thread = threading.Thread(target=self._read_stderr, daemon=True)
        self._stdout_thread.start()
        self._stderr_thread.start()

    # -- io plumbing --------------------------------------------------------

    def _read_stdout(self) -> None:
        try:
            for raw in self.proc.stdout:  # type: ignore[union-attr]
                self._lines.put(raw.decode("utf-8", errors="replace").rstrip("\r\n"))
        except ValueError:
            pass  # pipe closed under us
        self._lines.put(_EOF)

    def _read_stderr(self) -> None:
        try:
            for raw in self.proc.stderr:  # type: ignore[union-attr]
                self._stderr_tail.append(raw.decode("utf-8", errors="replace").rstrip("\r\n"))
        except ValueError:
            pass

    def stderr_excerpt(self) -> str:
        return "\n".join(self._stderr_tail)

    def _next_line(self, timeout: float) -> str:
        try:
            item = self._lines.get(timeout=max(timeout, 0.0))
        except queue.Empty:
            raise ResponseTimeout(
                f"no response within {timeout:.1f}s", self.descriptor.detector_id
            )
        if item is _EOF:
            self._lines.put(_EOF)  # keep the sentinel for later readers
            code = self.proc.poll()
            detail = f" (exit code {code})" if code is not None else ""
            tail = self.stderr_excerpt()
            suffix = f"; stderr: {tail}" if tail else ""
            raise PluginCrashed(
                f"plugin exited mid-session{detail}{suffix}", self.descriptor.detector_id
            )
        return item

    def _send(self, message: dict) -> None:
        try:
            self.proc.stdin.write(wire.encode(message))  # type: ignore[union-attr]
            self.proc.stdin.flush()  # type: ignore[union-attr]
        except (BrokenPipeError, OSError):
            raise PluginCrashed(
                f"plugin closed stdin; stderr: {self.stderr_excerpt()}",
                self.descriptor.detector_id,
            )

    # -- protocol operations ------------------------------------------------

    def send_request(self, frame_path: str | Path, frame_index: int) -> None:
        if frame_index in self._pending or frame_index in self._buffered:
            raise ValueError(f"frame_index {frame_index} already in flight")
        self._send(wire.analyze_frame_request(str(frame_path), frame_index))
        self._pending.add(frame_index)

    def _receive_one(self, timeout: float) -> FrameScore:
        line = self._next_line(timeout)
        score = wire.parse_frame_score(line, self.descriptor.detector_id)
        if score.frame_index not in self._pending:
            raise MalformedResponse(
                f"response for frame {score.frame_index}, which was never requested",
                self.descriptor.detector_id,
            )
        self._pending.discard(score.frame_index)
        return score

    def wait_for(self, frame_index: int, timeout: float | None = None) -> FrameScore:
        """Block until the response for `frame_index` arrives, buffering
        any other pipelined responses that show up first."""
        timeout = self.config.response_timeout if timeout is None else timeout
        deadline = time.monotonic() + timeout
        try:
            while True:
                if frame_index in self._buffered:
                    return self._buffered.pop(frame_index)
                score = self._receive_one(deadline - time.monotonic())
                if score.frame_index == frame_index:
                    return score
                self._buffered[score.frame_index] = score
        except PluginCrashed as exc:
            raise PluginCrashed(
                f"frame {frame_index}: {exc}", self.descriptor.detector_id
            ) from exc

    def analyze_frame(
        self, frame_path: str | Path, frame_index: int, timeout: float | None = None
    ) -> FrameScore:
        self.send_request(frame_path, frame_index)
        return self.wait_for(frame_index, timeout)

    def collect(self, indices: set[int], deadline: float) -> dict[int, FrameScore]:
        """Gather responses for `indices` (already requested), tolerating
        any arrival order, until `deadline` (monotonic)."""
        got: dict[int, FrameScore] = {}
        for idx in list(indices):
            if idx in self._buffered:
                got[idx] = self._buffered.pop(idx)
        while len(got) < len(indices):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ResponseTimeout(
                    f"still waiting on frames {sorted(indices - set(got))}",
                    self.descriptor.detector_id,
                )
            score = self._receive_one(remaining)
            if score.frame_index in indices and score.frame_index not in got:
                got[score.frame_index] = score
            else:
                self._buffered[score.frame_index] = score
        return got

    def run_video(
        self,
        frame_paths: list[Path] | tuple[Path, ...],
        deadline: float | None = None,
        window: int = 32,
    ) -> ScoreSeries:
        """Analyze an ordered frame sequence, pipelining up to `window`
        requests. Errors propagate naming the failing frame index."""
        if not frame_paths:
            raise ValueError("run_video needs at least one frame")
        if deadline is None:
            deadline = time.monotonic() + self.config.response_timeout * len(frame_paths)
        results: dict[int, FrameScore] = {}
        next_to_send = 0
        total = len(frame_paths)
        try:
            while len(results) < total:
                while next_to_send < total and next_to_send - len(results) < window:
                    self.send_request(frame_paths[next_to_send], next_to_send)
                    next_to_send += 1
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ResponseTimeout(
                        f"deadline exceeded at frame {min(self._pending, default=len(results))}",
                        self.descriptor.detector_id,
                    )
                score = self._receive_one(remaining)
                if score.frame_index in results:
                    raise MalformedResponse(
                        f"duplicate response for frame {score.frame_index}",
                        self.descriptor.detector_id,
                    )
                results[score.frame_index] = score
        except PluginCrashed as exc:
            failing = min(self._pending, default=len(results))
            raise PluginCrashed(
                f"frame {failing}: {exc}", self.descriptor.detector_id
            ) from exc
        ordered = tuple(results[i] for i in range(total))
        return ScoreSeries(detector_id=self.descriptor.detector_id, frame_scores=ordered)

    # -- lifecycle ----------------------------------------------------------

    def shutdown(self, grace: float | None = None) -> bool:
        """Ask the plugin to exit; True iff it left cleanly (code 0)
        within the grace period. Stragglers are killed."""
        grace = self.config.shutdown_grace if grace is None else grace
        try:
            self._send(wire.shutdown_request())
            self.proc.stdin.close()  # type: ignore[union-attr]
        except (PluginCrashed, OSError):
            pass
        try:
            code = self.proc.wait(timeout=grace)
            return code == 0
        except subprocess.TimeoutExpired:
            self.kill()
            return False

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()

    def close(self, grace: float | None = None, remove_scratch: bool = True) -> bool:
        """Shutdown + reap + scratch cleanup. Idempotent."""
        if self._closed:
            return True
        self._closed = True
        clean = self.shutdown(grace)
        if self.proc.poll() is None:
            self.kill()
        if not self._reaped:
            self._reaped = True
            _track_exit()
        self._stdout_thread.join(timeout=2)
        self._stderr_thread.join(timeout=2)
        if remove_scratch:
            shutil.rmtree(self.scratch_dir, ignore_errors=True)
        return clean

    def __enter__(self) -> "PluginSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _sandbox_env(config: SandboxConfig, scratch: Path) -> dict[str, str]:
    env = {k: os.environ[k] for k in config.env_allowlist if k in os.environ}
    env.update(config.extra_env)
    env["HOME"] = str(scratch)
    env["TMPDIR"] = str(scratch)
    return env


def spawn(descriptor: DetectorDescriptor, config: SandboxConfig) -> PluginSession:
    """Start and handshake a plugin process.

    The child runs confined to a fresh scratch directory with a scrubbed
    environment. Raises SpawnFailed, HandshakeTimeout or ProtocolMismatch;
    on any failure the child is reaped and the scratch removed.
    """
    scratch_root = Path(config.scratch_root)
    scratch_root.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f"{descriptor.detector_id}-", dir=scratch_root))
    command = descriptor.launch_command()
    try:
        proc = subprocess.Popen(
            command,
            cwd=scratch,
            env=_sandbox_env(config, scratch),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,
        )
    except (OSError, ValueError) as exc:
        shutil.rmtree(scratch, ignore_errors=True)
        raise SpawnFailed(f"cannot launch {command!r}: {exc}", descriptor.detector_id) from exc
    _track_spawn()
    session = PluginSession(descriptor, config, proc, scratch)
    try:
        line = session._next_line(config.handshake_timeout)
        session.protocol_version = wire.parse_hello(line, descriptor.detector_id)
        session._send(wire.hello_ack())
    except ResponseTimeout:
        session.close()
        raise HandshakeTimeout(
            f"no handshake within {config.handshake_timeout:.0f}s", descriptor.detector_id
        )
    except PluginCrashed as exc:
        session.close()
        raise ProtocolMismatch(f"plugin exited before handshake: {exc}", descriptor.detector_id)
    except SessionError:
        session.close()
        raise
    return session
