"""Detector registry: descriptor schema, manifest and registry loading."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .wire import PROTOCOL_VERSION

_SLUG_RE = re.compile(r"^[a-z0-9][a-z0-9-]*$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}$")

VALID_MEDIA_KINDS = ("opaque-video", "frame-sequence")


class RegistryError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Capabilities:
    media_kinds: tuple[str, ...] = ("frame-sequence",)
    needs_face_crop: bool = False


@dataclass(frozen=True)
class DetectorDescriptor:
    """Registry entry + manifest for one detector plugin.

    `launch` is the sandbox command line; the literal ``{plugin_dir}``
    in any argument expands to the directory holding the manifest, so
    shipped manifests stay relocatable.
    """

    detector_id: str
    display_name: str
    version: str
    description: str
    source_repo: str
    release_date: str  # YYYY-MM
    launch: tuple[str, ...]
    capabilities: Capabilities = field(default_factory=Capabilities)
    protocol_version: int = PROTOCOL_VERSION
    hard_label_threshold: float = 0.5
    plugin_dir: Path | None = None

    def launch_command(self) -> list[str]:
        base = str(self.plugin_dir) if self.plugin_dir is not None else "."
        return [arg.replace("{plugin_dir}", base) for arg in self.launch]

    def accepts(self, media_kind: str) -> bool:
        return media_kind in self.capabilities.media_kinds


def _descriptor_from_dict(doc: dict, plugin_dir: Path) -> DetectorDescriptor:
    try:
        detector_id = doc["detector_id"]
        display_name = doc["display_name"]
        version = doc["version"]
        source_repo = doc["source_repo"]
        release_date = doc["release_date"]
        launch = doc["launch"]
    except (KeyError, TypeError) as exc:
        raise RegistryError("parse-error", f"descriptor missing field: {exc}") from exc
    description = doc.get("description", "")
    protocol_version = doc.get("protocol_version", PROTOCOL_VERSION)
    if protocol_version != PROTOCOL_VERSION:
        raise RegistryError(
            "bad-protocol-version",
            f"{detector_id}: protocol_version {protocol_version} unsupported",
        )
    if not isinstance(detector_id, str) or not _SLUG_RE.match(detector_id):
        raise RegistryError("parse-error", f"detector_id must be a lowercase slug: {detector_id!r}")
    if not isinstance(release_date, str) or not _DATE_RE.match(release_date):
        raise RegistryError(
            "parse-error", f"{detector_id}: release_date must be YYYY-MM, got {release_date!r}"
        )
    if (
        not isinstance(launch, list)
        or not launch
        or not all(isinstance(a, str) for a in launch)
    ):
        raise RegistryError("parse-error", f"{detector_id}: launch must be a command list")
    caps_doc = doc.get("capabilities", {})
    media_kinds = tuple(caps_doc.get("media_kinds", ["frame-sequence"]))
    for kind in media_kinds:
        if kind not in VALID_MEDIA_KINDS:
            raise RegistryError("parse-error", f"{detector_id}: unknown media kind {kind!r}")
    return DetectorDescriptor(
        detector_id=detector_id,
        display_name=display_name,
        version=str(version),
        description=description,
        source_repo=source_repo,
        release_date=release_date,
        launch=tuple(launch),
        capabilities=Capabilities(
            media_kinds=media_kinds,
            needs_face_crop=bool(caps_doc.get("needs_face_crop", False)),
        ),
        protocol_version=protocol_version,
        hard_label_threshold=float(doc.get("hard_label_threshold", 0.5)),
        plugin_dir=plugin_dir,
    )


def load_registry(path: Path) -> list[DetectorDescriptor]:
    """Load a registry file (JSON array of descriptors). Duplicate ids
    are rejected; launch templates resolve relative to the file's dir."""
    path = Path(path)
    try:
        docs = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise RegistryError("parse-error", f"cannot read registry {path}: {exc}") from exc
    if not isinstance(docs, list):
        raise RegistryError("parse-error", f"registry {path} must be a JSON array")
    descriptors = []
    seen: set[str] = set()
    for doc in docs:
        d = _descriptor_from_dict(doc, path.parent.resolve())
        if d.detector_id in seen:
            raise RegistryError("duplicate-id", f"duplicate detector_id: {d.detector_id}")
        seen.add(d.detector_id)
        descriptors.append(d)
    return descriptors


def load_manifest(path: Path) -> DetectorDescriptor:
    """Load a single-plugin manifest file (one JSON object)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise RegistryError("parse-error", f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise RegistryError("parse-error", f"manifest {path} must be a JSON object")
    return _descriptor_from_dict(doc, path.parent.resolve())


class Registry:
    """Lookup table of descriptors, optionally merged from a registry
    file plus per-plugin manifests discovered in a directory."""

    def __init__(self, descriptors: list[DetectorDescriptor] = ()):  # type: ignore[assignment]
        self._by_id: dict[str, DetectorDescriptor] = {}
        for d in descriptors:
            self.add(d)

    def add(self, descriptor: DetectorDescriptor) -> None:
        if descriptor.detector_id in self._by_id:
            raise RegistryError("duplicate-id", f"duplicate detector_id: {descriptor.detector_id}")
        self._by_id[descriptor.detector_id] = descriptor

    def get(self, detector_id: str) -> DetectorDescriptor | None:
        return self._by_id.get(detector_id)

    def ids(self) -> list[str]:
        return list(self._by_id)

    def __iter__(self) -> Iterator[DetectorDescriptor]:
        return iter(self._by_id.values())

    def __len__(self) -> int:
        return len(self._by_id)

    @classmethod
    def load(cls, registry_file: Path | None = None, plugins_dir: Path | None = None) -> "Registry":
        reg = cls()
        if registry_file is not None:
            for d in load_registry(registry_file):
                reg.add(d)
        if plugins_dir is not None:
            for manifest in sorted(Path(plugins_dir).glob("*.manifest.json")):
                reg.add(load_manifest(manifest))
        return reg
