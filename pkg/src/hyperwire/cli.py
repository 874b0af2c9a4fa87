"""Command line entry points: broker daemon, simulated devices, demo app.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import asyncio
import os
import sys

from .sim import SimError, run_demo_app, run_device

DEFAULT_PORT = 4715
DEFAULT_HTTP = "127.0.0.1:4716"


def parse_addr(text: str, default_host: str = "127.0.0.1",
               default_port: int = DEFAULT_PORT) -> tuple[str, int]:
    """Accept 'host:port', ':port', a bare port, or a bare host."""
    host, port = default_host, default_port
    if ":" in text:
        left, right = text.rsplit(":", 1)
        if left:
            host = left
        if right:
            port = _port(right)
    elif text.isdigit():
        port = _port(text)
    elif text:
        host = text
    return host, port


def _port(text: str) -> int:
    n = int(text)
    if not 0 <= n <= 65535:
        raise ValueError(f"port {n} out of range")
    return n


def _default_listen() -> str:
    env = os.environ.get("HYPERWIRE_PORT", "")
    return f"127.0.0.1:{env}" if env else f"127.0.0.1:{DEFAULT_PORT}"


def _default_http() -> str:
    return os.environ.get("HYPERWIRE_HTTP", DEFAULT_HTTP)


async def _serve(args) -> int:
    # deferred so device/app subcommands start without the web stack
    import uvicorn

    from .api import build_app
    from .broker import Broker

    host, port = args.listen_addr
    broker = Broker(profiles_dir=args.profiles)
    await broker.start(host, port)
    hhost, hport = args.http_addr
    config = uvicorn.Config(build_app(broker, ui_dir=args.ui), host=hhost,
                            port=hport, log_level="warning", access_log=False)
    server = uvicorn.Server(config)
    bhost, bport = broker.address
    print(f"hyperwire broker on {bhost}:{bport}, http on {hhost}:{hport}",
          flush=True)
    try:
        await server.serve()  # returns cleanly on SIGINT/SIGTERM
    finally:
        await broker.stop()
    return 0


def cmd_serve(args) -> int:
    return asyncio.run(_serve(args))


def cmd_device(args) -> int:
    host, port = args.connect_addr
    return asyncio.run(run_device(args.kind, host, port, script=args.script,
                                  deterministic_clock=args.deterministic_clock,
                                  name=args.name))


def cmd_demo(args) -> int:
    host, port = args.connect_addr
    return asyncio.run(run_demo_app(args.require, host, port))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperwire",
        description="Typed interaction-event broker with searchable wirings")
    sub = parser.add_subparsers(dest="cmd", required=True)

    serve = sub.add_parser("serve", help="run the broker and its HTTP API")
    serve.add_argument("--listen", default=None,
                       help=f"broker address (default 127.0.0.1:{DEFAULT_PORT}, "
                            "env HYPERWIRE_PORT)")
    serve.add_argument("--http", default=None,
                       help=f"HTTP/WebSocket address (default {DEFAULT_HTTP}, "
                            "env HYPERWIRE_HTTP)")
    serve.add_argument("--profiles", default="profiles",
                       help="directory for per-app wiring profiles")
    serve.add_argument("--ui", default=None, metavar="DIR",
                       help="serve a static frontend from DIR under /ui")
    serve.set_defaults(fn=cmd_serve)

    device = sub.add_parser("device", help="run a simulated device")
    device.add_argument("--kind", required=True,
                        choices=["gamepad", "keyboard-arrows", "phone-swipe",
                                 "joystick"])
    device.add_argument("--connect", default=None,
                        help="broker address to join")
    device.add_argument("--script", default=None,
                        help="JSON step file ('-' for stdin)")
    device.add_argument("--name", default=None,
                        help="announced device name (default: the kind)")
    device.add_argument("--deterministic-clock", action="store_true",
                        help="stamp events 1,2,3,... instead of wall time")
    device.set_defaults(fn=cmd_device)

    app = sub.add_parser("app", help="run a client application")
    appsub = app.add_subparsers(dest="app_cmd", required=True)
    demo = appsub.add_parser("demo",
                             help="announce one requirement, print deliveries")
    demo.add_argument("--require", required=True,
                      choices=["rotation3d", "motion3d"])
    demo.add_argument("--connect", default=None,
                      help="broker address to join")
    demo.set_defaults(fn=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "listen"):
            args.listen_addr = parse_addr(args.listen or _default_listen())
            args.http_addr = parse_addr(args.http or _default_http(),
                                        default_port=4716)
        if hasattr(args, "connect"):
            args.connect_addr = parse_addr(args.connect or _default_listen())
    except ValueError as exc:
        parser.error(str(exc))  # exits 2
    if getattr(args, "ui", None) and not os.path.isdir(args.ui):
        parser.error(f"--ui {args.ui}: not a directory")
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 0
    except SimError as exc:
        print(f"hyperwire: {exc}", file=sys.stderr)
        return 1
    except (ConnectionError, OSError) as exc:
        print(f"hyperwire: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
