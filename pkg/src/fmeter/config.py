"""Layered runtime configuration.

Precedence, lowest to highest: built-in defaults, a ``key = value``
config file, ``FMETER_*`` environment variables, explicit overrides
(command-line flags). Unknown keys in the file or overrides, and any
uncoercible value, fail fast with code ``config-error``. Environment
variables other than the known ``FMETER_<SETTING>`` names are ignored:
the environment is a shared namespace we don't own.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

ENV_PREFIX = "FMETER_"

DEFAULT_MAX_VIDEO_BYTES = 52_428_800
DEFAULT_LISTEN_PORT = 8400


class ConfigError(Exception):
    code = "config-error"


@dataclass(frozen=True)
class Config:
    """Resolved settings for every role and command."""

    listen_host: str = "127.0.0.1"
    listen_port: int = DEFAULT_LISTEN_PORT
    gateway_url: str = ""  # client commands; derived from listen_* when empty

    exchange_root: Path | None = None  # shorthand: <root>/inbox + <root>/outbox
    inbox_root: Path | None = None
    outbox_root: Path | None = None

    state_dir: Path = Path("fmeter-state")
    work_dir: Path = Path("fmeter-work")
    registry_file: Path | None = None
    plugins_dir: Path | None = None
    static_dir: Path | None = None
    mail_dir: Path | None = None

    max_video_bytes: int = DEFAULT_MAX_VIDEO_BYTES
    pin_attempt_limit: int = 10
    pin_cooldown_seconds: float = 300.0
    republish_after_seconds: float = 30.0
    poll_interval: float = 0.5
    detector_timeout: float = 300.0
    max_parallel_jobs: int = 2
    max_parallel_detectors_per_job: int = 2

    def resolved_gateway_url(self) -> str:
        if self.gateway_url:
            return self.gateway_url.rstrip("/")
        return f"http://{self.listen_host}:{self.listen_port}"

    def exchange_paths(self) -> tuple[Path, Path]:
        """The (inbox, outbox) pair, honouring the exchange_root shorthand."""
        inbox, outbox = self.inbox_root, self.outbox_root
        if self.exchange_root is not None:
            inbox = inbox or self.exchange_root / "inbox"
            outbox = outbox or self.exchange_root / "outbox"
        if inbox is None or outbox is None:
            raise ConfigError(
                "exchange paths missing: set exchange_root or both "
                "inbox_root and outbox_root"
            )
        return Path(inbox), Path(outbox)


def _to_int(raw: str) -> int:
    return int(raw.strip())


def _to_float(raw: str) -> float:
    return float(raw.strip())


def _to_str(raw: str) -> str:
    return raw.strip()


def _to_path(raw: str) -> Path | None:
    raw = raw.strip()
    return Path(raw) if raw else None


_COERCE: dict[str, Callable[[str], Any]] = {
    "listen_host": _to_str,
    "listen_port": _to_int,
    "gateway_url": _to_str,
    "exchange_root": _to_path,
    "inbox_root": _to_path,
    "outbox_root": _to_path,
    "state_dir": _to_path,
    "work_dir": _to_path,
    "registry_file": _to_path,
    "plugins_dir": _to_path,
    "static_dir": _to_path,
    "mail_dir": _to_path,
    "max_video_bytes": _to_int,
    "pin_attempt_limit": _to_int,
    "pin_cooldown_seconds": _to_float,
    "republish_after_seconds": _to_float,
    "poll_interval": _to_float,
    "detector_timeout": _to_float,
    "max_parallel_jobs": _to_int,
    "max_parallel_detectors_per_job": _to_int,
}


def parse_config_file(path: Path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` comments and blank lines ignored."""
    raw: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        value = value.split("#", 1)[0].strip().strip('"').strip("'")
        raw[key.strip()] = value
    return raw


def _apply(settings: dict[str, Any], key: str, raw: Any, origin: str) -> None:
    if key not in _COERCE:
        raise ConfigError(f"unknown setting {key!r} (from {origin})")
    if isinstance(raw, str):
        try:
            settings[key] = _COERCE[key](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r} (from {origin}): {exc}") from exc
    else:
        settings[key] = raw


def _validate(cfg: Config) -> Config:
    if not (0 <= cfg.listen_port <= 65535):
        raise ConfigError(f"listen_port out of range: {cfg.listen_port}")
    positive_ints = {
        "max_video_bytes": cfg.max_video_bytes,
        "pin_attempt_limit": cfg.pin_attempt_limit,
        "max_parallel_jobs": cfg.max_parallel_jobs,
        "max_parallel_detectors_per_job": cfg.max_parallel_detectors_per_job,
    }
    for name, value in positive_ints.items():
        if value < 1:
            raise ConfigError(f"{name} must be >= 1, got {value}")
    if cfg.pin_cooldown_seconds < 0:
        raise ConfigError("pin_cooldown_seconds must be >= 0")
    if cfg.republish_after_seconds < 0:
        raise ConfigError("republish_after_seconds must be >= 0")
    if cfg.poll_interval <= 0 or cfg.detector_timeout <= 0:
        raise ConfigError("poll_interval and detector_timeout must be > 0")
    return cfg


def load_config(
    config_file: Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> Config:
    """Merge defaults, file, environment and overrides into a Config."""
    env = os.environ if env is None else env
    settings: dict[str, Any] = {
        f.name: f.default for f in dataclasses.fields(Config)
    }
    if config_file is not None:
        for key, raw in parse_config_file(config_file).items():
            _apply(settings, key, raw, f"file {config_file}")
    for key in _COERCE:
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            _apply(settings, key, env[env_key], f"env {env_key}")
    for key, raw in (overrides or {}).items():
        if raw is not None:
            _apply(settings, key, raw, "flag")
    return _validate(Config(**settings))
