"""FrameSeq media format: codec-free frame sequences for desk-scale runs.

A FrameSeq is a directory (or zip of one) holding ``meta.json`` with
{width, height, frame_count, fps} and binary 8-bit P6 PPM frames at
``frames/%06d.ppm``. It is the only media kind the shipped detectors
accept; opaque video payloads pass through untouched to plugins that
declare that capability.
"""

from __future__ import annotations

import json
import shutil
import zipfile
from dataclasses import dataclass
from pathlib import Path

from .ziputil import deterministic_zip

PATTERNS = ("black", "white", "gradient")

# Sentinel "no face in this frame" pixel: shipped mocks report
# face_found=false on frames that are uniformly this color.
NO_FACE_PIXEL = (0, 255, 0)


class MediaError(Exception):
    pass


@dataclass(frozen=True)
class FrameSeq:
    directory: Path
    width: int
    height: int
    fps: float
    frame_paths: tuple[Path, ...]

    @property
    def frame_count(self) -> int:
        return len(self.frame_paths)


def write_ppm(path: Path, width: int, height: int, pixels: bytes) -> None:
    if len(pixels) != width * height * 3:
        raise MediaError(f"pixel buffer is {len(pixels)} bytes, want {width * height * 3}")
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (width, height))
        f.write(pixels)


def read_ppm(path: Path) -> tuple[int, int, bytes]:
    """Parse a binary P6, 8-bit PPM; returns (width, height, rgb bytes)."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise MediaError(f"not a P6 PPM: {path}")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed between them
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3 and pos < len(data):
        c = data[pos : pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl == -1 else nl + 1
        else:
            end = pos
            while end < len(data) and data[end : end + 1] not in b" \t\r\n":
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) < 3:
        raise MediaError(f"truncated PPM header: {path}")
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise MediaError(f"only 8-bit PPM supported, got maxval {maxval}")
    pos += 1  # single whitespace after maxval
    pixels = data[pos : pos + width * height * 3]
    if len(pixels) != width * height * 3:
        raise MediaError(f"truncated PPM pixel data: {path}")
    return width, height, pixels


def mean_luminance(pixels: bytes) -> float:
    """Mean per-pixel luma (0.299 R + 0.587 G + 0.114 B) / 255, in [0, 1].

    Integer arithmetic keeps the result exactly bounded: all-black -> 0.0,
    all-white -> 1.0.
    """
    if not pixels:
        raise MediaError("empty pixel buffer")
    total = 0
    for i in range(0, len(pixels), 3):
        total += 299 * pixels[i] + 587 * pixels[i + 1] + 114 * pixels[i + 2]
    return total / (1000 * 255 * (len(pixels) // 3))


def _pattern_level(pattern: str, index: int, count: int) -> int:
    if pattern == "black":
        return 0
    if pattern == "white":
        return 255
    if pattern == "gradient":
        if count == 1:
            return 127
        return round(255 * index / (count - 1))
    raise MediaError(f"unknown pattern: {pattern}")


def generate_frameseq(
    out_dir: Path,
    frames: int,
    pattern: str = "gradient",
    width: int = 16,
    height: int = 16,
    fps: float = 10.0,
) -> FrameSeq:
    """Write a deterministic synthetic FrameSeq directory."""
    if frames < 1:
        raise MediaError("frame count must be >= 1")
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(frames):
        level = _pattern_level(pattern, i, frames)
        pixels = bytes([level, level, level]) * (width * height)
        path = frames_dir / f"{i:06d}.ppm"
        write_ppm(path, width, height, pixels)
        paths.append(path)
    meta = {"width": width, "height": height, "frame_count": frames, "fps": fps}
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return FrameSeq(out_dir, width, height, fps, tuple(paths))


def write_no_face_frame(path: Path, width: int = 16, height: int = 16) -> Path:
    """A frame carrying the uniform no-face sentinel color."""
    pixels = bytes(NO_FACE_PIXEL) * (width * height)
    write_ppm(path, width, height, pixels)
    return Path(path)


def pack_frameseq(src_dir: Path) -> bytes:
    """Deterministic FrameSeq zip: meta.json first, then frames in order."""
    src_dir = Path(src_dir)
    meta_path = src_dir / "meta.json"
    if not meta_path.is_file():
        raise MediaError(f"not a FrameSeq directory: {src_dir}")
    entries = [("meta.json", meta_path.read_bytes())]
    for frame in sorted((src_dir / "frames").glob("*.ppm")):
        entries.append((f"frames/{frame.name}", frame.read_bytes()))
    return deterministic_zip(entries)


def is_frameseq_zip(path: Path) -> bool:
    try:
        with zipfile.ZipFile(path) as zf:
            names = set(zf.namelist())
    except (OSError, zipfile.BadZipFile):
        return False
    return "meta.json" in names and any(n.startswith("frames/") for n in names)


def load_frameseq(source: Path, extract_to: Path | None = None) -> FrameSeq:
    """Open a FrameSeq directory or zip; zips are extracted to `extract_to`."""
    source = Path(source)
    if source.is_dir():
        directory = source
    else:
        if extract_to is None:
            raise MediaError("extract_to required for zipped FrameSeq")
        directory = Path(extract_to)
        if directory.exists():
            shutil.rmtree(directory)
        directory.mkdir(parents=True)
        try:
            with zipfile.ZipFile(source) as zf:
                for info in zf.infolist():
                    name = Path(info.filename)
                    if name.is_absolute() or ".." in name.parts:
                        raise MediaError(f"unsafe zip entry: {info.filename}")
                zf.extractall(directory)
        except zipfile.BadZipFile as exc:
            raise MediaError(f"not a FrameSeq zip: {source}: {exc}") from exc
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise MediaError(f"missing meta.json in {directory}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    frame_paths = tuple(sorted((directory / "frames").glob("*.ppm")))
    if len(frame_paths) != int(meta["frame_count"]):
        raise MediaError(
            f"meta says {meta['frame_count']} frames, found {len(frame_paths)}"
        )
    if not frame_paths:
        raise MediaError("FrameSeq has no frames")
    return FrameSeq(
        directory=directory,
        width=int(meta["width"]),
        height=int(meta["height"]),
        fps=float(meta["fps"]),
        frame_paths=frame_paths,
    )
