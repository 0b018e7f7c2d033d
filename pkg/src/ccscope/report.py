"""Offline report generation from a recording.

Produces a CSV of all frames plus PNG time-series figures: one for the
event-rate traces and, when wait-cycle events were captured, one for
the percentage of available cycles spent waiting.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .events import SENTINEL
from .storage import Recording, read_recording

log = logging.getLogger(__name__)

MAX_LEGEND_ENTRIES = 24
WAIT_PREFIX = "n2Wait"


def write_csv(recording: Recording, path: Path) -> Path:
    headings = recording.header.headings
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ms", "elapsed_s", "label", *headings])
        for frame in recording.frames:
            cells = ["" if v == SENTINEL else v for v in frame.values]
            writer.writerow([frame.t, frame.elapsed, frame.label or "", *cells])
    return path


def _axes_time(recording: Recording) -> np.ndarray:
    if not recording.frames:
        return np.empty(0)
    t0 = recording.frames[0].t
    return np.array([(f.t - t0) / 1000.0 for f in recording.frames])


def _trace_matrix(recording: Recording) -> np.ndarray:
    """(frames, headings) float matrix with sentinels as NaN."""
    vals = np.array([f.values for f in recording.frames], dtype=np.float64)
    if vals.size:
        vals[vals == float(SENTINEL)] = np.nan
    return vals


def _mark_labels(ax, recording: Recording, times: np.ndarray) -> None:
    for i, frame in enumerate(recording.frames):
        if frame.label is not None:
            ax.axvline(times[i], color="gray", linestyle="--", linewidth=0.8)
            ax.annotate(
                frame.label,
                xy=(times[i], 1.0),
                xycoords=("data", "axes fraction"),
                rotation=90,
                fontsize=7,
                va="top",
                ha="right",
            )


def plot_traces(recording: Recording, path: Path) -> Path:
    times = _axes_time(recording)
    matrix = _trace_matrix(recording)
    fig, ax = plt.subplots(figsize=(11, 5))
    for col, heading in enumerate(recording.header.headings):
        ax.plot(times, matrix[:, col] if matrix.size else [], linewidth=0.9, label=heading)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("events per second")
    ax.set_title("captured event rates")
    if len(recording.header.headings) <= MAX_LEGEND_ENTRIES:
        ax.legend(fontsize=7, ncol=2)
    _mark_labels(ax, recording, times)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_wait_percent(recording: Recording, path: Path) -> Union[Path, None]:
    """Wait-cycle headings as percent of the cycle budget; None if there are none."""
    wait_cols = [
        (i, h)
        for i, h in enumerate(recording.header.headings)
        if h.startswith(WAIT_PREFIX)
    ]
    if not wait_cols:
        return None
    clocks = [hz for hz in recording.header.core_clock_hz.values() if hz]
    if not clocks:
        log.warning("no core clock in header; skipping wait-percent figure")
        return None
    clock = float(clocks[0])
    times = _axes_time(recording)
    matrix = _trace_matrix(recording)
    fig, ax = plt.subplots(figsize=(11, 4))
    total = np.zeros(len(recording.frames))
    for col, heading in wait_cols:
        pct = 100.0 * matrix[:, col] / clock
        total += np.nan_to_num(pct)
        ax.plot(times, pct, linewidth=0.9, label=heading)
    if len(wait_cols) > 1:
        ax.plot(times, total, linewidth=1.4, color="black", label="total")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("wait cycles [% of budget]")
    ax.set_title("interconnect wait-cycle pressure")
    ax.legend(fontsize=7)
    _mark_labels(ax, recording, times)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def generate_report(recording_path: Union[str, Path], outdir: Union[str, Path]) -> list[Path]:
    """Render CSV + figures for a recording; returns the files written."""
    recording = read_recording(str(recording_path))
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(recording_path).stem
    written = [
        write_csv(recording, out / f"{stem}.csv"),
        plot_traces(recording, out / f"{stem}_traces.png"),
    ]
    wait = plot_wait_percent(recording, out / f"{stem}_wait_percent.png")
    if wait is not None:
        written.append(wait)
    return written
