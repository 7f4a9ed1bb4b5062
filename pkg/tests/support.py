"""Shared helpers for the test suite: crash injection and small utilities."""

import random

from fmeter import exchange


class SimulatedCrash(RuntimeError):
    """Stand-in for the process dying at a write/rename boundary."""


class CrashAt:
    """Checkpoint hook that raises at one named publish boundary.

    Constructed with None it never fires, which keeps trial loops uniform.
    """

    def __init__(self, point):
        self.point = point

    def __call__(self, point):
        if point == self.point:
            raise SimulatedCrash(point)


# Every write/rename boundary of exchange.publish() for a two-payload
# envelope, plus None for crash-free control trials.
CRASH_POINTS = ("staged", "payload:a.dat", "payload:b.dat", "manifest", "published", None)


def run_exchange_crash_trials(root, trials=240, seed=20260815):
    """Randomized crash injection across every publish boundary.

    Each trial crashes one publish attempt at a chosen boundary, asserts no
    torn or digest-failing envelope ever becomes visible, then recovers the
    way a real publisher would (retry, treating DuplicateEnvelope as done)
    and consumes the envelope exactly once. Returns per-boundary counts.
    """
    rng = random.Random(seed)
    counts = {}
    for trial in range(trials):
        envelope_id = f"env{trial:05d}"
        point = CRASH_POINTS[trial % len(CRASH_POINTS)]
        counts[point] = counts.get(point, 0) + 1
        files = {
            "a.dat": rng.randbytes(rng.randint(0, 4096)),
            "b.dat": rng.randbytes(rng.randint(0, 4096)),
        }

        crashed = False
        try:
            exchange.publish(root, envelope_id, "submission", files, CrashAt(point))
        except SimulatedCrash:
            crashed = True

        result = exchange.poll(root)
        assert result.corrupt == (), f"digest-failing envelope visible after crash at {point}"
        visible = {e.envelope_id for e in result.ready}
        if crashed and point != "published":
            assert envelope_id not in visible, f"torn envelope visible after crash at {point}"
        else:
            # crash-free, or crashed only after the atomic rename
            assert envelope_id in visible

        # Recovery: retry the publish; "already there" counts as success.
        try:
            exchange.publish(root, envelope_id, "submission", files)
        except exchange.DuplicateEnvelope:
            pass

        env = exchange.consume(root, envelope_id)
        assert env.payload_path("a.dat").read_bytes() == files["a.dat"]
        assert env.payload_path("b.dat").read_bytes() == files["b.dat"]

        # Exactly-once: neither a second consume nor a republish may work.
        try:
            exchange.consume(root, envelope_id)
        except exchange.EnvelopeNotFound:
            pass
        else:
            raise AssertionError(f"envelope {envelope_id} consumed twice")
        try:
            exchange.publish(root, envelope_id, "submission", files)
        except exchange.DuplicateEnvelope:
            pass
        else:
            raise AssertionError(f"consumed envelope {envelope_id} republished")
    return counts
