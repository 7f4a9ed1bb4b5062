"""Conformance suite for detector plugins.

Six checks, each against a fresh sandboxed session so one failure mode
cannot bleed into another:

  handshake           hello/hello_ack completes with protocol version 1
  score_range         a 20-frame probe yields well-formed scores in [0, 1]
  determinism         two identical passes are byte-identical
  no_face_convention  face_found=false responses carry soft 1.0, hard real
  pipelining          a shuffled pipelined batch is answered exactly once
                      per requested index, any arrival order
  clean_shutdown      plugin exits 0 within the grace period on shutdown

Every check additionally fails if the plugin left files outside its
scratch directory (within the monitored sandbox area): integrators get
isolation violations flagged on the check during which they happened.
"""

from __future__ import annotations

import json
import random
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .. import media
from ..scores import ScoreSeries
from .registry import DetectorDescriptor
from .session import PluginSession, SandboxConfig, spawn
from .wire import SessionError

CHECK_NAMES = (
    "handshake",
    "score_range",
    "determinism",
    "no_face_convention",
    "pipelining",
    "clean_shutdown",
)

PROBE_FRAMES = 20
_PIPELINE_BASE_INDEX = 100  # disjoint from probe indices so misfires are visible


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class ConformanceReport:
    detector_id: str
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def summary(self) -> str:
        ok = sum(1 for c in self.checks if c.passed)
        return f"{ok}/{len(self.checks)} checks passed"


def _series_fingerprint(series: ScoreSeries) -> bytes:
    rows = [
        [s.frame_index, s.soft_label, s.hard_label, s.face_found]
        for s in series.frame_scores
    ]
    return json.dumps(rows, separators=(",", ":")).encode("utf-8")


def _scan_strays(sandbox_root: Path) -> list[str]:
    """Anything left in the sandbox area after scratch cleanup escaped
    its scratch directory."""
    strays = []
    for path in sorted(sandbox_root.rglob("*")):
        if path.is_file():
            strays.append(str(path.relative_to(sandbox_root)))
    return strays


class _Probe:
    def __init__(self, work_dir: Path):
        self.seq = media.generate_frameseq(work_dir / "probe", PROBE_FRAMES, "gradient")
        self.green = media.write_no_face_frame(work_dir / "probe_green.ppm")


def _run_check(
    name: str,
    work_dir: Path,
    descriptor: DetectorDescriptor,
    response_timeout: float,
    body: Callable[[SandboxConfig], tuple[bool, str]],
) -> CheckResult:
    sandbox_root = work_dir / f"sb_{name}"
    sandbox_root.mkdir(parents=True, exist_ok=True)
    config = SandboxConfig(scratch_root=sandbox_root, response_timeout=response_timeout)
    try:
        ok, note = body(config)
    except SessionError as exc:
        ok, note = False, f"{exc.code}: {exc}"
    strays = _scan_strays(sandbox_root)
    if strays:
        ok = False
        joined = ", ".join(strays[:5])
        note = (note + "; " if note else "") + f"wrote outside scratch: {joined}"
    shutil.rmtree(sandbox_root, ignore_errors=True)
    return CheckResult(name, ok, note)


def verify_conformance(
    descriptor: DetectorDescriptor,
    work_dir: Path | None = None,
    response_timeout: float = 15.0,
) -> ConformanceReport:
    """Run all checks against `descriptor`; failures are report entries,
    never exceptions."""
    own_tmp = work_dir is None
    work_dir = Path(tempfile.mkdtemp(prefix="conformance-")) if own_tmp else Path(work_dir)
    try:
        probe = _Probe(work_dir)
        checks = []

        def handshake(config: SandboxConfig) -> tuple[bool, str]:
            session = spawn(descriptor, config)
            session.close()
            return True, f"protocol_version {session.protocol_version}"

        def score_range(config: SandboxConfig) -> tuple[bool, str]:
            with spawn(descriptor, config) as session:
                deadline = time.monotonic() + response_timeout * 2
                session.run_video(probe.seq.frame_paths, deadline=deadline)
            return True, f"{PROBE_FRAMES} frames in range"

        def determinism(config: SandboxConfig) -> tuple[bool, str]:
            passes = []
            for _ in range(2):
                with spawn(descriptor, config) as session:
                    deadline = time.monotonic() + response_timeout * 2
                    passes.append(session.run_video(probe.seq.frame_paths, deadline=deadline))
            if _series_fingerprint(passes[0]) != _series_fingerprint(passes[1]):
                return False, "two identical passes produced different scores"
            return True, ""

        def no_face_convention(config: SandboxConfig) -> tuple[bool, str]:
            frames = [probe.seq.frame_paths[0], probe.green, probe.seq.frame_paths[1]]
            with spawn(descriptor, config) as session:
                deadline = time.monotonic() + response_timeout * 2
                series = session.run_video(frames, deadline=deadline)
            exercised = False
            for s in series.frame_scores:
                if not s.face_found:
                    exercised = True
                    if s.soft_label != 1.0 or s.hard_label != "real":
                        return False, (
                            f"frame {s.frame_index}: face_found=false but "
                            f"soft={s.soft_label}, hard={s.hard_label}"
                        )
            return True, "" if exercised else "plugin never reported face_found=false"

        def pipelining(config: SandboxConfig) -> tuple[bool, str]:
            indices = list(range(_PIPELINE_BASE_INDEX, _PIPELINE_BASE_INDEX + PROBE_FRAMES))
            order = indices[:]
            random.Random(7).shuffle(order)
            with spawn(descriptor, config) as session:
                for idx in order:
                    frame = probe.seq.frame_paths[idx - _PIPELINE_BASE_INDEX]
                    session.send_request(frame, idx)
                got = session.collect(set(indices), time.monotonic() + response_timeout * 2)
            if sorted(got) != indices:
                return False, f"answered {sorted(got)}, requested {indices}"
            return True, ""

        def clean_shutdown(config: SandboxConfig) -> tuple[bool, str]:
            session = spawn(descriptor, config)
            clean = session.close()
            if not clean:
                return False, "plugin did not exit cleanly within the grace period"
            return True, ""

        bodies = {
            "handshake": handshake,
            "score_range": score_range,
            "determinism": determinism,
            "no_face_convention": no_face_convention,
            "pipelining": pipelining,
            "clean_shutdown": clean_shutdown,
        }
        for name in CHECK_NAMES:
            checks.append(_run_check(name, work_dir, descriptor, response_timeout, bodies[name]))
        return ConformanceReport(descriptor.detector_id, tuple(checks))
    finally:
        if own_tmp:
            shutil.rmtree(work_dir, ignore_errors=True)
