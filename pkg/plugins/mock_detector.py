#!/usr/bin/env python3
"""Reference detector plugin for the fmeter wire protocol.

Standalone on purpose: stdlib only, no imports from the host package,
so the stdio protocol is the entire integration surface. Selectable
behaviors (--kind) cover the deterministic reference detectors plus
misbehaving variants used by the negative conformance tests:

  constant   fixed soft label for every frame with a face
  sinusoid   (1 + sin(2*pi*index/period)) / 2
  luminance  mean pixel luma / 255, darker frames score "faker"
  jitter     nondeterministic noise (breaks the determinism check)
  sleeper    ignores shutdown for --delay seconds, or stalls every
             analyze when --sleep-at analyze (breaks timeouts)
  crasher    exits abruptly on frame_index >= --at-frame
  escape     writes a file outside its scratch directory

Integrators: subclass FrameAnalyzer and fill in the lifecycle stages.
run() is the single entry point per frame; crop_face, preproc and
postproc are optional (identity if not overridden).
"""

import argparse
import json
import math
import os
import random
import sys
import time

NO_FACE_PIXEL = b"\x00\xff\x00"  # uniform green marks "no face in frame"


def read_ppm(path):
    """Minimal binary P6, 8-bit PPM reader: (width, height, rgb bytes)."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise ValueError("not a P6 PPM: %s" % path)
    tokens, pos = [], 2
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
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError("only 8-bit PPM supported")
    pixels = data[pos + 1 : pos + 1 + width * height * 3]
    if len(pixels) != width * height * 3:
        raise ValueError("truncated PPM: %s" % path)
    return width, height, pixels


class FrameAnalyzer:
    """Per-frame lifecycle. run() applies crop_face, preproc, postproc,
    get_softlabel and get_hardlabel in order; same frame, same output."""

    def __init__(self, tau=0.5):
        self.tau = tau

    def run(self, frame_path, frame_index):
        image = read_ppm(frame_path)
        face = self.crop_face(image)
        if face is None:
            # no face found: no evidence of forgery
            return {"soft_label": 1.0, "hard_label": "real", "face_found": False}
        face = self.preproc(face)
        face = self.postproc(face)
        soft = round(float(self.get_softlabel(face, frame_index)), 6)
        return {
            "soft_label": soft,
            "hard_label": self.get_hardlabel(soft),
            "face_found": True,
        }

    def crop_face(self, image):
        width, height, pixels = image
        if pixels == NO_FACE_PIXEL * (width * height):
            return None
        return image

    def preproc(self, face):
        return face

    def postproc(self, face):
        return face

    def get_softlabel(self, face, frame_index):
        raise NotImplementedError

    def get_hardlabel(self, soft):
        return "fake" if soft < self.tau else "real"


class ConstantAnalyzer(FrameAnalyzer):
    def __init__(self, value, tau=0.5):
        super().__init__(tau)
        self.value = value

    def get_softlabel(self, face, frame_index):
        return self.value


class SinusoidAnalyzer(FrameAnalyzer):
    def __init__(self, period, tau=0.5):
        super().__init__(tau)
        self.period = period

    def get_softlabel(self, face, frame_index):
        return (1.0 + math.sin(2.0 * math.pi * frame_index / self.period)) / 2.0


class LuminanceAnalyzer(FrameAnalyzer):
    def get_softlabel(self, face, frame_index):
        width, height, pixels = face
        total = 0
        for i in range(0, len(pixels), 3):
            total += 299 * pixels[i] + 587 * pixels[i + 1] + 114 * pixels[i + 2]
        return total / (1000.0 * 255.0 * (len(pixels) // 3))


class JitterAnalyzer(FrameAnalyzer):
    def get_softlabel(self, face, frame_index):
        return min(1.0, max(0.0, 0.5 + random.uniform(-0.45, 0.45)))


class EscapeAnalyzer(ConstantAnalyzer):
    def __init__(self, tau=0.5):
        super().__init__(0.5, tau)
        self.escaped = False

    def get_softlabel(self, face, frame_index):
        if not self.escaped:
            self.escaped = True
            with open(os.path.join("..", "escaped.txt"), "w") as f:
                f.write("wrote outside scratch\n")
        return self.value


def send(msg):
    sys.stdout.write(json.dumps(msg) + "\n")
    sys.stdout.flush()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--id", required=True, dest="detector_id")
    parser.add_argument("--kind", default="constant",
                        choices=["constant", "sinusoid", "luminance", "jitter",
                                 "sleeper", "crasher", "escape"])
    parser.add_argument("--value", type=float, default=0.25)
    parser.add_argument("--period", type=float, default=10.0)
    parser.add_argument("--tau", type=float, default=0.5)
    parser.add_argument("--delay", type=float, default=30.0)
    parser.add_argument("--at-frame", type=int, default=100)
    parser.add_argument("--sleep-at", default="shutdown", choices=["shutdown", "analyze"])
    args = parser.parse_args()

    if args.kind == "constant":
        analyzer = ConstantAnalyzer(args.value, args.tau)
    elif args.kind == "sinusoid":
        analyzer = SinusoidAnalyzer(args.period, args.tau)
    elif args.kind == "luminance":
        analyzer = LuminanceAnalyzer(args.tau)
    elif args.kind == "jitter":
        analyzer = JitterAnalyzer(args.tau)
    elif args.kind == "escape":
        analyzer = EscapeAnalyzer(args.tau)
    else:  # sleeper and crasher answer like constant(0.5) until they misbehave
        analyzer = ConstantAnalyzer(0.5, args.tau)

    send({"type": "hello", "protocol_version": 1, "detector_id": args.detector_id})

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "hello_ack":
            continue
        if kind == "shutdown":
            if args.kind == "sleeper" and args.sleep_at == "shutdown":
                time.sleep(args.delay)
            return 0
        if kind == "analyze_frame":
            index = msg["frame_index"]
            if args.kind == "crasher" and index >= args.at_frame:
                os._exit(13)
            if args.kind == "sleeper" and args.sleep_at == "analyze":
                time.sleep(args.delay)
            result = analyzer.run(msg["frame_path"], index)
            result["type"] = "frame_score"
            result["frame_index"] = index
            send(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
