"""Live plugin sessions: spawn, handshake, pipelining, sandbox, shutdown."""

import json
import time
from pathlib import Path

import pytest

from fmeter import media
from fmeter.plugin import (
    HandshakeTimeout,
    MalformedResponse,
    OutOfRangeScore,
    PluginCrashed,
    ProtocolMismatch,
    Registry,
    SandboxConfig,
    SpawnFailed,
    spawn,
)
from fmeter.plugin.registry import Capabilities, DetectorDescriptor
from fmeter.plugin.session import reset_session_stats, session_stats

PLUGINS_DIR = Path(__file__).parent.parent / "plugins"


@pytest.fixture(scope="module")
def registry():
    return Registry.load(PLUGINS_DIR / "detectors.json", PLUGINS_DIR)


@pytest.fixture
def config(tmp_path):
    return SandboxConfig(
        scratch_root=tmp_path / "sandbox",
        handshake_timeout=10.0,
        response_timeout=10.0,
        shutdown_grace=2.0,
    )


@pytest.fixture
def frames(tmp_path):
    seq = media.generate_frameseq(tmp_path / "seq", frames=20, pattern="gradient")
    return seq.frame_paths


def inline_descriptor(tmp_path, detector_id, body, args=()):
    """Write a one-off plugin script and a descriptor that launches it."""
    script = tmp_path / f"{detector_id}.py"
    script.write_text(body)
    return DetectorDescriptor(
        detector_id=detector_id,
        display_name=detector_id,
        version="0",
        description="test plugin",
        source_repo="none",
        release_date="2026-08",
        launch=("python3", "{plugin_dir}/" + script.name, *args),
        capabilities=Capabilities(),
        plugin_dir=tmp_path,
    )


ROGUE_PLUGIN = """\
import json, sys
print(json.dumps({"type": "hello", "protocol_version": 1, "detector_id": "rogue"}), flush=True)
mode = sys.argv[1]
def emit(i, soft=0.5):
    print(json.dumps({"type": "frame_score", "frame_index": i, "soft_label": soft,
                      "hard_label": "real", "face_found": True}), flush=True)
for line in sys.stdin:
    msg = json.loads(line)
    kind = msg.get("type")
    if kind == "shutdown":
        break
    if kind != "analyze_frame":
        continue
    i = msg["frame_index"]
    if mode == "unrequested":
        emit(i + 1000)
    elif mode == "duplicate":
        emit(i); emit(i)
    elif mode == "oob":
        emit(i, soft=1.5)
"""


# ---------------------------------------------------------------------------
# happy paths
# ---------------------------------------------------------------------------


def test_constant_mock_scores_frames(registry, config, frames):
    with spawn(registry.get("mock-constant"), config) as session:
        score = session.analyze_frame(frames[0], 0)
    assert score.soft_label == 0.25
    assert score.hard_label == "fake"
    assert score.face_found is True


def test_node_mock_speaks_the_same_protocol(registry, config, frames):
    """The cross-language plugin (JavaScript) scores frames identically."""
    with spawn(registry.get("mock-constant-node"), config) as session:
        a = session.analyze_frame(frames[0], 0)
        b = session.analyze_frame(frames[5], 5)
    assert (a.soft_label, a.hard_label) == (0.75, "real")
    assert b.soft_label == 0.75


def test_luminance_mock_tracks_gradient(registry, config, frames):
    with spawn(registry.get("mock-luminance"), config) as session:
        series = session.run_video(frames)
    assert series.frame_count == 20
    for i, score in enumerate(series.frame_scores):
        level = round(255 * i / 19)
        assert score.soft_label == round(level / 255, 6)
        assert score.hard_label == ("fake" if score.soft_label < 0.5 else "real")


def test_no_face_frame_convention(registry, config, tmp_path):
    green = media.write_no_face_frame(tmp_path / "green.ppm")
    with spawn(registry.get("mock-luminance"), config) as session:
        score = session.analyze_frame(green, 0)
    assert score.face_found is False
    assert score.soft_label == 1.0
    assert score.hard_label == "real"


def test_pipelined_out_of_order_collection(registry, config, frames):
    with spawn(registry.get("mock-luminance"), config) as session:
        for i in (7, 3, 11, 0):
            session.send_request(frames[i], i)
        got = session.collect({7, 3, 11, 0}, deadline=time.monotonic() + 10)
    assert sorted(got) == [0, 3, 7, 11]
    # wait_for buffers interleaved responses
    with spawn(registry.get("mock-constant"), config) as session:
        session.send_request(frames[0], 0)
        session.send_request(frames[1], 1)
        later = session.wait_for(1)
        earlier = session.wait_for(0)
    assert (earlier.frame_index, later.frame_index) == (0, 1)


def test_run_video_pipelines_within_window(registry, config, frames):
    with spawn(registry.get("mock-constant"), config) as session:
        series = session.run_video(frames, window=4)
    assert series.soft_labels() == [0.25] * 20


def test_duplicate_inflight_index_rejected(registry, config, frames):
    with spawn(registry.get("mock-constant"), config) as session:
        session.send_request(frames[0], 0)
        with pytest.raises(ValueError):
            session.send_request(frames[0], 0)
        session.wait_for(0)


# ---------------------------------------------------------------------------
# failure modes
# ---------------------------------------------------------------------------


def test_spawn_failure(config):
    descriptor = DetectorDescriptor(
        detector_id="ghost",
        display_name="Ghost",
        version="0",
        description="",
        source_repo="none",
        release_date="2026-08",
        launch=("/definitely/not/a/binary",),
    )
    with pytest.raises(SpawnFailed):
        spawn(descriptor, config)
    assert session_stats()[0] == 0  # no live session leaked


def test_handshake_timeout(tmp_path, config):
    import dataclasses

    descriptor = inline_descriptor(tmp_path, "mute", "import time\ntime.sleep(30)\n")
    quick = dataclasses.replace(config, handshake_timeout=0.5)
    start = time.monotonic()
    with pytest.raises(HandshakeTimeout):
        spawn(descriptor, quick)
    assert time.monotonic() - start < 5


def test_protocol_mismatch_on_garbage_hello(tmp_path, config):
    descriptor = inline_descriptor(tmp_path, "chatty", "print('hello there')\n")
    with pytest.raises(ProtocolMismatch):
        spawn(descriptor, config)


def test_protocol_mismatch_on_wrong_version(tmp_path, config):
    body = (
        "import json\n"
        'print(json.dumps({"type": "hello", "protocol_version": 99, '
        '"detector_id": "futurist"}), flush=True)\n'
        "import time; time.sleep(5)\n"
    )
    descriptor = inline_descriptor(tmp_path, "futurist", body)
    with pytest.raises(ProtocolMismatch):
        spawn(descriptor, config)


def test_crash_mid_video_names_failing_frame(registry, config, frames):
    with spawn(registry.get("mock-crasher"), config) as session:
        # below the crash threshold everything works
        assert session.analyze_frame(frames[0], 0).soft_label == 0.5
        with pytest.raises(PluginCrashed) as exc:
            session.analyze_frame(frames[1], 100)
    assert "100" in str(exc.value)


def test_unrequested_response_is_malformed(tmp_path, config, frames):
    descriptor = inline_descriptor(tmp_path, "rogue", ROGUE_PLUGIN, args=("unrequested",))
    with spawn(descriptor, config) as session:
        with pytest.raises(MalformedResponse):
            session.analyze_frame(frames[0], 0)


def test_duplicate_response_is_malformed(tmp_path, config, frames):
    descriptor = inline_descriptor(tmp_path, "rogue", ROGUE_PLUGIN, args=("duplicate",))
    with spawn(descriptor, config) as session:
        with pytest.raises(MalformedResponse):
            session.run_video(frames[:3])


def test_out_of_range_score_not_clamped(tmp_path, config, frames):
    descriptor = inline_descriptor(tmp_path, "rogue", ROGUE_PLUGIN, args=("oob",))
    with spawn(descriptor, config) as session:
        with pytest.raises(OutOfRangeScore):
            session.analyze_frame(frames[0], 0)


# ---------------------------------------------------------------------------
# sandbox and lifecycle
# ---------------------------------------------------------------------------

ENVDUMP_PLUGIN = """\
import json, os, sys
print(json.dumps({"type": "hello", "protocol_version": 1, "detector_id": "envdump"}), flush=True)
for line in sys.stdin:
    msg = json.loads(line)
    if msg.get("type") == "shutdown":
        break
    if msg.get("type") != "analyze_frame":
        continue
    with open("env.json", "w") as f:
        json.dump({"env": dict(os.environ), "cwd": os.getcwd()}, f)
    print(json.dumps({"type": "frame_score", "frame_index": msg["frame_index"],
                      "soft_label": 1.0, "hard_label": "real", "face_found": True}),
          flush=True)
"""


def test_sandbox_scrubs_environment(tmp_path, config, frames, monkeypatch):
    monkeypatch.setenv("SUPER_SECRET_TOKEN", "do-not-leak")
    descriptor = inline_descriptor(tmp_path, "envdump", ENVDUMP_PLUGIN)
    session = spawn(descriptor, config)
    try:
        session.analyze_frame(frames[0], 0)
        report = json.loads((session.scratch_dir / "env.json").read_text())
    finally:
        scratch = session.scratch_dir
        assert session.close() is True
    assert "SUPER_SECRET_TOKEN" not in report["env"]
    assert report["env"]["HOME"] == str(scratch)
    assert report["env"]["TMPDIR"] == str(scratch)
    assert report["cwd"] == str(scratch)
    # scratch is removed on close
    assert not scratch.exists()


def test_clean_shutdown_and_idempotent_close(registry, config, frames):
    session = spawn(registry.get("mock-constant"), config)
    session.analyze_frame(frames[0], 0)
    assert session.close() is True
    assert session.close() is True  # second close is a no-op
    assert session.proc.returncode == 0


def test_sleeper_is_killed_after_grace(registry, config):
    import dataclasses

    quick = dataclasses.replace(config, shutdown_grace=0.5)
    session = spawn(registry.get("mock-sleeper"), quick)
    start = time.monotonic()
    assert session.close() is False  # did not exit cleanly, had to be killed
    assert time.monotonic() - start < 5
    assert session.proc.returncode != 0


def test_session_counters_track_live_and_peak(registry, config, frames):
    reset_session_stats()
    sessions = [spawn(registry.get("mock-constant"), config) for _ in range(3)]
    try:
        assert session_stats() == (3, 3)
    finally:
        for s in sessions:
            s.close()
    live, peak = session_stats()
    assert (live, peak) == (0, 3)
