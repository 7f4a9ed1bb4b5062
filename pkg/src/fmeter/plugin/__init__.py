"""Detector plugin contract: registry, sandboxed sessions, wire protocol,
and the conformance suite third-party integrations must pass."""

from .registry import (
    DetectorDescriptor,
    Registry,
    RegistryError,
    load_manifest,
    load_registry,
)
from .session import (
    PluginSession,
    SandboxConfig,
    SessionError,
    spawn,
    session_stats,
    reset_session_stats,
)
from .conformance import CHECK_NAMES, CheckResult, ConformanceReport, verify_conformance
from .wire import (
    PROTOCOL_VERSION,
    HandshakeTimeout,
    MalformedResponse,
    OutOfRangeScore,
    PluginCrashed,
    ProtocolMismatch,
    SpawnFailed,
)

__all__ = [
    "DetectorDescriptor",
    "Registry",
    "RegistryError",
    "load_manifest",
    "load_registry",
    "PluginSession",
    "SandboxConfig",
    "SessionError",
    "spawn",
    "session_stats",
    "reset_session_stats",
    "CHECK_NAMES",
    "CheckResult",
    "ConformanceReport",
    "verify_conformance",
    "PROTOCOL_VERSION",
    "HandshakeTimeout",
    "MalformedResponse",
    "OutOfRangeScore",
    "PluginCrashed",
    "ProtocolMismatch",
    "SpawnFailed",
]
