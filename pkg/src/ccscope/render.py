"""Columnar terminal output for `stat` mode, in the spirit of vmstat.

Values are right-aligned under fixed-width columns so the stream stays
machine-parseable: every data line splits into exactly one token per
heading (an integer or "-" for a failed read). Labels appear on their
own comment line ahead of the frame they annotate.
"""

from __future__ import annotations

import sys
import time
from typing import IO, Optional, Sequence

from .events import SENTINEL, SampleFrame

COLUMN_MIN_WIDTH = 12
HEADER_EVERY_LINES = 25
TIME_COLUMN_WIDTH = 12


def column_widths(headings: Sequence[str]) -> list[int]:
    return [max(len(h), COLUMN_MIN_WIDTH) for h in headings]


def render_header(headings: Sequence[str], timestamps: bool = False) -> str:
    cells = [h.rjust(w) for h, w in zip(headings, column_widths(headings))]
    if timestamps:
        cells.insert(0, "time".rjust(TIME_COLUMN_WIDTH))
    return " ".join(cells)


def format_value(v: int) -> str:
    return "-" if v == SENTINEL else str(v)


def render_frame(
    frame: SampleFrame, headings: Sequence[str], timestamps: bool = False
) -> list[str]:
    """Lines for one frame: an optional "# label" line, then the data line."""
    if len(frame.values) != len(headings):
        raise ValueError(
            f"frame has {len(frame.values)} values for {len(headings)} headings"
        )
    cells = [
        format_value(v).rjust(w) for v, w in zip(frame.values, column_widths(headings))
    ]
    if timestamps:
        clock = time.strftime("%H:%M:%S", time.localtime(frame.t / 1000.0))
        cells.insert(0, f"{clock}.{frame.t % 1000:03d}".rjust(TIME_COLUMN_WIDTH))
    lines = []
    if frame.label is not None:
        lines.append(f"# {frame.label}")
    lines.append(" ".join(cells))
    return lines


class StatRenderer:
    """Streams frames to a file-like sink, reprinting the header periodically."""

    def __init__(
        self,
        headings: Sequence[str],
        out: Optional[IO[str]] = None,
        timestamps: bool = False,
    ) -> None:
        self.headings = list(headings)
        self.out = out if out is not None else sys.stdout
        self.timestamps = timestamps
        self._lines_since_header = HEADER_EVERY_LINES  # print header first

    def emit(self, frame: SampleFrame) -> None:
        if self._lines_since_header >= HEADER_EVERY_LINES:
            print(render_header(self.headings, self.timestamps), file=self.out, flush=True)
            self._lines_since_header = 0
        for line in render_frame(frame, self.headings, self.timestamps):
            print(line, file=self.out, flush=True)
        self._lines_since_header += 1


def render_event_list(engine) -> str:
    """Per-sensor inventory: name, sources, rate, then every event."""
    blocks = []
    for sensor in engine.sensors():
        desc = sensor.descriptor()
        if not desc.present:
            blocks.append(f"{desc.name}: not present")
            continue
        lines = [
            f"{desc.name}: {desc.sources} source(s), reference rate {desc.rate} events/s"
        ]
        width = max((len(e.mnemonic) for e in sensor.events()), default=0)
        for ev in sensor.events():
            lines.append(f"  {ev.mnemonic.ljust(width)}  {ev.description}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
