"""Command-line entry points.

Commands::

    fmeter serve    --role gateway|backend|both   long-running services
    fmeter submit   send a video (file or URL) to a gateway
    fmeter status   query a job
    fmeter fetch    download and verify a result bundle
    fmeter plugin   validate a detector manifest / list a registry
    fmeter genmedia generate a synthetic frame-sequence zip

Exit codes are a stable contract: 0 success, 2 validation (including
config errors and not-yet-ready results), 3 authorization, 4 not
found, 5 transport (unreachable gateway, port in use, digest
mismatch), 1 unexpected I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import shutil
import signal
import sys
import threading
import zipfile
from pathlib import Path

import requests

from . import media
from .config import Config, ConfigError, load_config
from .exchange import ExchangeDirs
from .gateway import GatewayService
from .notify import FileTransport, Notifier
from .plugin import Registry, verify_conformance
from .plugin.registry import RegistryError, load_manifest
from .scheduler import Scheduler, SchedulerConfig
from .web import Ticker, make_server

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_AUTH = 3
EXIT_NOT_FOUND = 4
EXIT_TRANSPORT = 5

# gateway/service error code -> exit code; unlisted codes count as validation
_EXIT_FOR_CODE = {
    "wrong-pin": EXIT_AUTH,
    "locked-out": EXIT_AUTH,
    "not-found": EXIT_NOT_FOUND,
    "port-in-use": EXIT_TRANSPORT,
    "digest-mismatch": EXIT_TRANSPORT,
    "transport-error": EXIT_TRANSPORT,
    "io-error": EXIT_IO,
}


def _fail(code: str, message: str = "") -> int:
    line = f"error: {code}"
    if message:
        line += f" ({message})"
    print(line, file=sys.stderr, flush=True)
    return _EXIT_FOR_CODE.get(code, EXIT_VALIDATION)


def _load_cfg(args: argparse.Namespace, flag_keys: dict[str, str]) -> Config:
    overrides = {
        cfg_key: getattr(args, arg_name, None)
        for arg_name, cfg_key in flag_keys.items()
    }
    return load_config(getattr(args, "config", None), overrides=overrides)


# -- serve -----------------------------------------------------------------


_SERVE_FLAGS = {
    "listen_host": "listen_host",
    "listen_port": "listen_port",
    "exchange": "exchange_root",
    "inbox": "inbox_root",
    "outbox": "outbox_root",
    "state_dir": "state_dir",
    "work_dir": "work_dir",
    "registry": "registry_file",
    "plugins_dir": "plugins_dir",
    "static_dir": "static_dir",
    "mail_dir": "mail_dir",
    "max_video_bytes": "max_video_bytes",
    "pin_attempt_limit": "pin_attempt_limit",
    "pin_cooldown": "pin_cooldown_seconds",
    "republish_after": "republish_after_seconds",
    "poll_interval": "poll_interval",
    "detector_timeout": "detector_timeout",
    "max_parallel_jobs": "max_parallel_jobs",
    "max_parallel_detectors": "max_parallel_detectors_per_job",
}


def _build_registry(cfg: Config) -> Registry:
    registry_file = cfg.registry_file
    plugins_dir = cfg.plugins_dir
    if registry_file is None and plugins_dir is None:
        # Developer convenience: pick up ./plugins when running from a tree.
        local = Path("plugins")
        if (local / "detectors.json").is_file():
            registry_file = local / "detectors.json"
            plugins_dir = local
    try:
        return Registry.load(registry_file, plugins_dir)
    except (RegistryError, OSError, ValueError) as exc:
        raise ConfigError(f"cannot load detector registry: {exc}") from exc


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        cfg = _load_cfg(args, _SERVE_FLAGS)
        inbox, outbox = cfg.exchange_paths()
        try:
            inbox.mkdir(parents=True, exist_ok=True)
            outbox.mkdir(parents=True, exist_ok=True)
            dirs = ExchangeDirs(inbox, outbox)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"bad exchange paths: {exc}") from exc
        registry = _build_registry(cfg)
    except ConfigError as exc:
        return _fail("config-error", str(exc))

    stop = threading.Event()
    threads: list[threading.Thread] = []
    cleanups = []

    def _shutdown(*_):
        raise KeyboardInterrupt

    # Install before anything starts, so a supervisor's TERM arriving right
    # after the readiness line still lands on the graceful path.
    try:
        signal.signal(signal.SIGTERM, _shutdown)
    except ValueError:
        pass  # not the main thread (embedded in a test); Ctrl-C still works

    try:
        if args.role in ("backend", "both"):
            sched = Scheduler(
                dirs,
                registry,
                SchedulerConfig(
                    max_parallel_jobs=cfg.max_parallel_jobs,
                    max_parallel_detectors_per_job=cfg.max_parallel_detectors_per_job,
                    detector_timeout=cfg.detector_timeout,
                    poll_interval=cfg.poll_interval,
                ),
                cfg.work_dir,
            )
            backend_thread = threading.Thread(
                target=sched.run_forever, args=(stop,), name="backend", daemon=True
            )
            threads.append(backend_thread)
            backend_thread.start()
            print(f"backend polling {inbox}", flush=True)

        if args.role in ("gateway", "both"):
            notifier = None
            if cfg.mail_dir is not None:
                notifier = Notifier(FileTransport(cfg.mail_dir))
                cleanups.append(notifier.close)
            service = GatewayService(
                dirs,
                cfg.state_dir,
                notifier=notifier,
                max_video_bytes=cfg.max_video_bytes,
                pin_attempt_limit=cfg.pin_attempt_limit,
                pin_cooldown_seconds=cfg.pin_cooldown_seconds,
                republish_after_seconds=cfg.republish_after_seconds,
            )
            try:
                server = make_server(
                    cfg.listen_host,
                    cfg.listen_port,
                    service,
                    registry,
                    static_dir=cfg.static_dir,
                )
            except OSError as exc:
                stop.set()
                return _fail("port-in-use", f"{cfg.listen_host}:{cfg.listen_port}: {exc}")
            ticker = Ticker(service, interval=cfg.poll_interval)
            ticker.start()
            cleanups.append(ticker.stop)
            cleanups.append(server.server_close)
            print(
                f"gateway listening on http://{cfg.listen_host}:{server.port}",
                flush=True,
            )
            try:
                server.serve_forever(poll_interval=0.2)
            except KeyboardInterrupt:
                pass
            finally:
                server.shutdown()
        else:
            # Backend only: wait until interrupted.
            try:
                while not stop.wait(0.5):
                    pass
            except KeyboardInterrupt:
                pass
    except KeyboardInterrupt:
        pass  # interrupted while still starting up
    finally:
        stop.set()
        for thread in threads:
            thread.join(timeout=10)
        for cleanup in cleanups:
            try:
                cleanup()
            except Exception:
                pass
    return EXIT_OK


# -- client commands -----------------------------------------------------------


def _gateway_url(args: argparse.Namespace) -> str:
    cfg = _load_cfg(args, {"gateway": "gateway_url"})
    return cfg.resolved_gateway_url()


def cmd_submit(args: argparse.Namespace) -> int:
    if bool(args.video) == bool(args.url):
        return _fail("ambiguous-video" if args.video else "missing-video",
                     "give exactly one of --video / --url")
    try:
        base = _gateway_url(args)
    except ConfigError as exc:
        return _fail("config-error", str(exc))
    data = {"detectors": args.detectors, "email": args.email, "pin": args.pin}
    try:
        if args.video:
            path = Path(args.video)
            if not path.is_file():
                return _fail("missing-video", f"no such file: {path}")
            with open(path, "rb") as fh:
                resp = requests.post(
                    f"{base}/api/v1/jobs",
                    data=data,
                    files={"video": (path.name, fh, "application/octet-stream")},
                    timeout=300,
                )
        else:
            resp = requests.post(
                f"{base}/api/v1/jobs",
                files={k: (None, v) for k, v in {**data, "video_url": args.url}.items()},
                timeout=300,
            )
    except requests.RequestException as exc:
        return _fail("transport-error", str(exc))
    if resp.status_code == 201:
        print(resp.json()["job_id"])
        return EXIT_OK
    return _fail(_error_code(resp))


def _error_code(resp: requests.Response) -> str:
    try:
        return str(resp.json().get("error", f"http-{resp.status_code}"))
    except ValueError:
        return f"http-{resp.status_code}"


def cmd_status(args: argparse.Namespace) -> int:
    try:
        base = _gateway_url(args)
    except ConfigError as exc:
        return _fail("config-error", str(exc))
    try:
        resp = requests.get(f"{base}/api/v1/jobs/{args.job_id}", timeout=30)
    except requests.RequestException as exc:
        return _fail("transport-error", str(exc))
    if resp.status_code != 200:
        return _fail(_error_code(resp))
    doc = resp.json()
    line = doc["state"]
    if doc.get("detail"):
        line += f": {doc['detail']}"
    print(line)
    return EXIT_OK


def cmd_fetch(args: argparse.Namespace) -> int:
    try:
        base = _gateway_url(args)
    except ConfigError as exc:
        return _fail("config-error", str(exc))
    try:
        resp = requests.post(
            f"{base}/api/v1/jobs/{args.job_id}/download",
            json={"pin": args.pin},
            timeout=300,
        )
    except requests.RequestException as exc:
        return _fail("transport-error", str(exc))
    if resp.status_code != 200:
        return _fail(_error_code(resp))

    body = resp.content
    digest = hashlib.sha256(body).hexdigest()
    advertised = resp.headers.get("X-Bundle-Sha256", "")
    if advertised and advertised != digest:
        return _fail("digest-mismatch", f"expected {advertised}, got {digest}")
    try:
        with zipfile.ZipFile(io.BytesIO(body)) as zf:
            summary = json.loads(zf.read("summary.json"))
        if summary.get("job_id") != args.job_id:
            return _fail("digest-mismatch", "bundle names a different job")
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        return _fail("digest-mismatch", f"bundle unreadable: {exc}")
    try:
        Path(args.out).write_bytes(body)
    except OSError as exc:
        return _fail("io-error", str(exc))
    print(f"{args.out}  sha256={digest}")
    return EXIT_OK


# -- plugin tools -----------------------------------------------------------------


def cmd_plugin(args: argparse.Namespace) -> int:
    if args.plugin_cmd == "validate":
        try:
            descriptor = load_manifest(Path(args.manifest))
        except (RegistryError, OSError, ValueError) as exc:
            return _fail("parse-error", str(exc))
        report = verify_conformance(descriptor)
        for check in report.checks:
            mark = "PASS" if check.passed else "FAIL"
            note = f"  {check.note}" if check.note else ""
            print(f"{mark}  {check.name}{note}")
        print(report.summary())
        return EXIT_OK if report.passed else EXIT_VALIDATION

    if args.plugin_cmd == "list":
        try:
            registry = Registry.load(Path(args.registry))
        except (RegistryError, OSError, ValueError) as exc:
            return _fail("parse-error", str(exc))
        for d in registry:
            print(f"{d.detector_id:16s} {d.display_name:14s} {d.release_date}  {d.source_repo}")
        print(f"{len(registry)} detectors")
        return EXIT_OK
    return _fail("config-error", f"unknown plugin subcommand {args.plugin_cmd!r}")


def cmd_genmedia(args: argparse.Namespace) -> int:
    if args.frames < 1:
        return _fail("invalid-frames", "need at least one frame")
    try:
        seq = media.generate_frameseq(
            Path(args.out).with_suffix(".tmpdir"),
            frames=args.frames,
            pattern=args.pattern,
        )
        Path(args.out).write_bytes(media.pack_frameseq(seq.directory))
        shutil.rmtree(seq.directory, ignore_errors=True)
    except (OSError, media.MediaError) as exc:
        return _fail("io-error", str(exc))
    print(args.out)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmeter",
        description="Media-forensics job platform: services and client tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the gateway and/or back-end")
    serve.add_argument("--role", choices=("gateway", "backend", "both"), default="both")
    serve.add_argument("--config", type=Path)
    serve.add_argument("--exchange", help="directory holding inbox/ and outbox/")
    serve.add_argument("--inbox")
    serve.add_argument("--outbox")
    serve.add_argument("--listen-host", dest="listen_host")
    serve.add_argument("--listen-port", dest="listen_port", type=int)
    serve.add_argument("--state-dir", dest="state_dir")
    serve.add_argument("--work-dir", dest="work_dir")
    serve.add_argument("--registry")
    serve.add_argument("--plugins-dir", dest="plugins_dir")
    serve.add_argument("--static-dir", dest="static_dir")
    serve.add_argument("--mail-dir", dest="mail_dir")
    serve.add_argument("--max-video-bytes", dest="max_video_bytes", type=int)
    serve.add_argument("--pin-attempt-limit", dest="pin_attempt_limit", type=int)
    serve.add_argument("--pin-cooldown", dest="pin_cooldown", type=float)
    serve.add_argument("--republish-after", dest="republish_after", type=float)
    serve.add_argument("--poll-interval", dest="poll_interval", type=float)
    serve.add_argument("--detector-timeout", dest="detector_timeout", type=float)
    serve.add_argument("--max-parallel-jobs", dest="max_parallel_jobs", type=int)
    serve.add_argument(
        "--max-parallel-detectors", dest="max_parallel_detectors", type=int
    )
    serve.set_defaults(func=cmd_serve)

    submit = sub.add_parser("submit", help="submit a video to a gateway")
    submit.add_argument("--video", help="local file to upload")
    submit.add_argument("--url", help="remote video URL")
    submit.add_argument("--detectors", required=True, help="comma-separated ids")
    submit.add_argument("--email", required=True)
    submit.add_argument("--pin", required=True)
    submit.add_argument("--gateway", help="gateway base URL")
    submit.add_argument("--config", type=Path)
    submit.set_defaults(func=cmd_submit)

    status = sub.add_parser("status", help="query a job's state")
    status.add_argument("job_id")
    status.add_argument("--gateway")
    status.add_argument("--config", type=Path)
    status.set_defaults(func=cmd_status)

    fetch = sub.add_parser("fetch", help="download a result bundle")
    fetch.add_argument("job_id")
    fetch.add_argument("--pin", required=True)
    fetch.add_argument("--out", required=True)
    fetch.add_argument("--gateway")
    fetch.add_argument("--config", type=Path)
    fetch.set_defaults(func=cmd_fetch)

    plugin = sub.add_parser("plugin", help="detector plugin tools")
    plugin_sub = plugin.add_subparsers(dest="plugin_cmd", required=True)
    validate = plugin_sub.add_parser("validate", help="run conformance checks")
    validate.add_argument("manifest")
    validate.set_defaults(func=cmd_plugin)
    plist = plugin_sub.add_parser("list", help="print a registry table")
    plist.add_argument("registry")
    plist.set_defaults(func=cmd_plugin)

    gen = sub.add_parser("genmedia", help="generate a synthetic frame sequence")
    gen.add_argument("--frames", type=int, required=True)
    gen.add_argument(
        "--pattern", choices=("black", "white", "gradient"), default="gradient"
    )
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_genmedia)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
