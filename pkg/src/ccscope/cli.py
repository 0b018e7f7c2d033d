"""Command-line entry point.

    ccscope stat   --events a,b,c [--interval ms] [--discrete] ...
    ccscope record --events a,b,c --output file [...]
    ccscope live   [--listen addr:port] [...]
    ccscope list
    ccscope report <recording> [--outdir dir]

Exit codes: 0 clean, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import difflib
import logging
import signal
import sys
import threading
import time
from pathlib import Path
from typing import Optional, Sequence

from . import control, render, report, web
from .engine import Engine
from .numachip import SimSensor
from .vmstat import DEFAULT_PATH as VMSTAT_DEFAULT_PATH
from .vmstat import VmstatSensor

log = logging.getLogger(__name__)

MODES = ("stat", "record", "live", "list", "report")
DEMO_EVENTS = ["n2DirPrbRecv", "n2CachelinesSent", "n2CacheRolloutRmpe"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ccscope", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("mode", choices=MODES, help="operating mode")
    p.add_argument("target", nargs="?", help="recording file (report mode)")
    p.add_argument("--events", help="comma-separated event mnemonics to capture")
    p.add_argument("--all", action="store_true", help="capture every available event")
    p.add_argument("--interval", type=int, default=100, metavar="MS", help="sampling period in ms (default 100)")
    p.add_argument("--discrete", action="store_true", help="report each source separately instead of summing")
    p.add_argument("--output", metavar="PATH", help="recording file (record mode)")
    p.add_argument("--scenario", default="balanced", metavar="NAME|PATH", help="simulated workload (default: balanced)")
    p.add_argument("--sources", type=int, default=6, metavar="N", help="simulated interconnect count (default 6)")
    p.add_argument("--seed", type=int, default=0, help="simulation noise seed")
    p.add_argument("--listen", default="127.0.0.1:8080", metavar="ADDR:PORT", help="live mode bind address")
    p.add_argument("--recordings-dir", metavar="DIR", help="directory served at /recordings/ (live mode)")
    p.add_argument("--fifo", default=control.DEFAULT_FIFO_PATH, metavar="PATH", help="control pipe path")
    p.add_argument("--no-fifo", action="store_true", help="do not create the control pipe")
    p.add_argument("--vmstat-path", default=VMSTAT_DEFAULT_PATH, metavar="PATH", help="kernel vmstat pseudo-file")
    headings = p.add_mutually_exclusive_group()
    headings.add_argument("--mnemonic", action="store_true", default=True, help="short event names in headings (default)")
    headings.add_argument("--verbose-headings", action="store_true", help="full event descriptions in headings")
    p.add_argument("--timestamps", action="store_true", help="prepend a time column in stat mode")
    p.add_argument("--no-affinity", action="store_true", help="do not pin the sampler thread")
    p.add_argument("--duration", type=float, default=0.0, metavar="S", help="stop after S seconds (0 = run until interrupted)")
    p.add_argument("--outdir", metavar="DIR", help="report output directory (default: <recording>_report)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def _build_engine(args) -> Engine:
    engine = Engine(
        interval_ms=args.interval,
        discrete=args.discrete,
        pin_to_first_node=not args.no_affinity,
    )
    sim = SimSensor(sources=args.sources, scenario=args.scenario, seed=args.seed)
    engine.register(sim)
    engine.register(VmstatSensor(args.vmstat_path))
    return engine


def _select_events(engine: Engine, args, parser: argparse.ArgumentParser) -> None:
    available = engine.all_mnemonics()
    if args.all:
        engine.set_events(available)
        return
    if not args.events:
        if args.mode == "live":
            engine.set_events([m for m in DEMO_EVENTS if m in available])
            return
        parser.error(f"{args.mode} mode needs --events or --all")
    wanted = [e.strip() for e in args.events.split(",") if e.strip()]
    unknown = [e for e in wanted if e not in available]
    if unknown:
        hints = []
        for name in unknown:
            close = difflib.get_close_matches(name, available, n=3)
            hint = f" (did you mean {', '.join(close)}?)" if close else ""
            hints.append(f"{name}{hint}")
        parser.error("unknown events: " + "; ".join(hints))
    engine.set_events(wanted)


def _start_fifo(engine: Engine, args) -> Optional[control.FifoServer]:
    if args.no_fifo:
        return None
    fifo = control.FifoServer(engine, args.fifo)
    try:
        fifo.start()
        return fifo
    except OSError as exc:
        log.warning("control pipe unavailable at %s (%s); continuing without it", args.fifo, exc)
        return None


def _wait(duration: float, stop: threading.Event) -> None:
    if duration > 0:
        stop.wait(duration)
    else:
        while not stop.wait(3600):
            pass


def _run_capture(args, parser, with_renderer: bool) -> int:
    engine = _build_engine(args)
    _select_events(engine, args, parser)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())

    renderer = None
    frames_q = None
    if with_renderer:
        headings = engine.headings(mnemonic=not args.verbose_headings)
        renderer = render.StatRenderer(headings, timestamps=args.timestamps)
        frames_q = engine.subscribe()

    fifo = _start_fifo(engine, args)
    engine.start()
    try:
        if args.mode == "record":
            engine.start_recording(args.output)
        if renderer is not None and frames_q is not None:
            deadline = time.monotonic() + args.duration if args.duration > 0 else None
            while not stop.is_set():
                if deadline is not None and time.monotonic() >= deadline:
                    break
                try:
                    frame = frames_q.get(timeout=0.25)
                except Exception:
                    continue
                renderer.emit(frame)
        else:
            _wait(args.duration, stop)
    finally:
        engine.stop()
        if fifo is not None:
            fifo.stop()
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    try:
        if args.mode == "list":
            engine = _build_engine(args)
            print(render.render_event_list(engine), end="")
            return EXIT_OK

        if args.mode == "report":
            if not args.target:
                parser.error("report mode needs a recording file argument")
            outdir = args.outdir or f"{Path(args.target).with_suffix('')}_report"
            written = report.generate_report(args.target, outdir)
            for path in written:
                print(path)
            return EXIT_OK

        if args.mode == "record" and not args.output:
            parser.error("record mode needs --output")

        if args.mode == "live":
            engine = _build_engine(args)
            _select_events(engine, args, parser)
            host, _, port = args.listen.rpartition(":")
            if not host or not port.isdigit():
                parser.error(f"--listen must be addr:port, got {args.listen!r}")
            recordings = Path(args.recordings_dir) if args.recordings_dir else None
            app = web.create_app(engine, recordings_dir=recordings)
            fifo = _start_fifo(engine, args)
            engine.start()
            try:
                web.serve(app, host, int(port))
            finally:
                engine.stop()
                if fifo is not None:
                    fifo.stop()
            return EXIT_OK

        return _run_capture(args, parser, with_renderer=args.mode == "stat")
    except SystemExit:
        raise
    except ValueError as exc:
        print(f"ccscope: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        log.error("%s", exc, exc_info=args.verbose)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
