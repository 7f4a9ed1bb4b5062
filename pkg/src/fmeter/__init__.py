"""fmeter: a media-forensics job-orchestration platform.

Submissions flow gateway -> inbox exchange -> scheduler -> detector
plugins -> result bundle -> outbox exchange -> PIN-gated download.
"""

__version__ = "0.1.0"
