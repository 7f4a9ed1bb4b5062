"""Per-frame score types shared by the plugin protocol, analysis and scheduler."""

from __future__ import annotations

from dataclasses import dataclass

from .model import RunOutcome

HARD_LABELS = ("real", "fake")

# Stage order a plugin applies internally per frame, under its single
# run entry point. The first three are optional (identity if absent);
# the host protocol only ever sees the run-level inputs and outputs.
LIFECYCLE_STAGES = ("crop_face", "preproc", "postproc", "get_softlabel", "get_hardlabel")


@dataclass(frozen=True)
class FrameScore:
    """One frame's verdict. Lower soft_label = more likely forged.

    Convention for frames where the plugin finds no face: soft_label 1.0
    and hard_label "real" (no evidence of forgery).
    """

    frame_index: int
    soft_label: float
    hard_label: str
    face_found: bool = True

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"negative frame_index: {self.frame_index}")
        if not 0.0 <= self.soft_label <= 1.0:
            raise ValueError(f"soft_label out of range: {self.soft_label}")
        if self.hard_label not in HARD_LABELS:
            raise ValueError(f"bad hard_label: {self.hard_label!r}")


@dataclass(frozen=True)
class ScoreSeries:
    """Ordered per-frame scores from one detector over one video."""

    detector_id: str
    frame_scores: tuple[FrameScore, ...]

    def __post_init__(self):
        indices = [s.frame_index for s in self.frame_scores]
        if indices != list(range(len(indices))):
            raise ValueError("frame indices must be exactly 0..n-1, ascending")

    @property
    def frame_count(self) -> int:
        return len(self.frame_scores)

    def soft_labels(self) -> list[float]:
        return [s.soft_label for s in self.frame_scores]


@dataclass(frozen=True)
class DetectorRun:
    """Outcome of one detector over one job's video.

    Exactly one of scores / error_note is present, matching the outcome.
    """

    job_id: str
    detector_id: str
    outcome: RunOutcome
    scores: ScoreSeries | None = None
    error_note: str | None = None
    wall_time: float = 0.0

    def __post_init__(self):
        if self.outcome is RunOutcome.SUCCEEDED:
            if self.scores is None or self.error_note is not None:
                raise ValueError("succeeded run must carry scores and no error note")
        else:
            if self.scores is not None or not self.error_note:
                raise ValueError("failed run must carry an error note and no scores")
