"""Piano-roll encoding, windowing and window stitching.

Rolls have 128 pitch rows and 8 columns per beat. Networks see fixed
128x64 windows cut with a stride of 32 columns; window predictions are
averaged back into a full-piece probability roll.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .score_io import Score

__all__ = [
    "N_PITCHES",
    "RESOLUTION",
    "WINDOW",
    "STRIDE",
    "PianoRoll",
    "Window",
    "quantize",
    "note_columns",
    "cut_windows",
    "window_starts",
    "stitch",
    "mask",
    "note_probabilities",
]

N_PITCHES = 128
RESOLUTION = 8
WINDOW = 64
STRIDE = WINDOW // 2


def _round_half_up(x: Fraction) -> int:
    return math.floor(Fraction(x) + Fraction(1, 2))


def note_columns(onset, duration) -> tuple[int, int]:
    """Half-open column span ``[c0, c1)`` of a note; at least one column wide."""
    onset = Fraction(onset)
    c0 = _round_half_up(onset * RESOLUTION)
    c1 = _round_half_up((onset + Fraction(duration)) * RESOLUTION)
    return c0, max(c1, c0 + 1)


@dataclass(frozen=True)
class PianoRoll:
    """Binary pitch x time grid plus the column span owned by every note."""

    grid: np.ndarray
    spans: Mapping[int, tuple[int, int, int]]  # note id -> (row, c0, c1)
    resolution: int = RESOLUTION

    @property
    def n_cols(self) -> int:
        return self.grid.shape[1]

    @cached_property
    def note_index(self) -> dict[tuple[int, int], frozenset[int]]:
        index: dict[tuple[int, int], set[int]] = {}
        for nid, (row, c0, c1) in self.spans.items():
            for c in range(c0, c1):
                index.setdefault((row, c), set()).add(nid)
        return {k: frozenset(v) for k, v in index.items()}

    def note_mask(self, note_id: int) -> np.ndarray:
        row, c0, c1 = self.spans[note_id]
        m = np.zeros(self.grid.shape, dtype=bool)
        m[row, c0:c1] = True
        return m


@dataclass(frozen=True)
class Window:
    data: np.ndarray
    start_col: int


def quantize(score: Score) -> PianoRoll:
    """Rasterize ``score`` into a binary 128 x T roll at 8 pixels per beat."""
    if not score.notes:
        raise ValueError("cannot build a piano roll from an empty score")
    spans = {}
    for n in score.notes:
        c0, c1 = note_columns(n.onset, n.duration)
        spans[n.id] = (n.pitch, c0, c1)
    max_end = max(n.end for n in score.notes)
    # widening a very short final note may push one column past ceil(end * 8)
    n_cols = max(1, math.ceil(max_end * RESOLUTION), max(c1 for _, _, c1 in spans.values()))
    grid = np.zeros((N_PITCHES, n_cols), dtype=np.uint8)
    for row, c0, c1 in spans.values():
        grid[row, c0:c1] = 1
    return PianoRoll(grid, spans)


def window_starts(n_cols: int) -> list[int]:
    return list(range(0, max(n_cols, 1), STRIDE))


def cut_windows(roll: PianoRoll | np.ndarray) -> list[Window]:
    """Cut 64-column windows every 32 columns, zero-padding past the end."""
    grid = roll.grid if isinstance(roll, PianoRoll) else np.asarray(roll)
    n_cols = grid.shape[1]
    windows = []
    for start in window_starts(n_cols):
        data = np.zeros((grid.shape[0], WINDOW), dtype=grid.dtype)
        stop = min(start + WINDOW, n_cols)
        data[:, :stop - start] = grid[:, start:stop]
        windows.append(Window(data, start))
    return windows


def stitch(windows: Iterable[tuple[int, np.ndarray]], n_cols: int) -> np.ndarray:
    """Average overlapping window predictions into a ``128 x n_cols`` roll."""
    total = None
    count = np.zeros(n_cols, dtype=np.int64)
    for start, pred in windows:
        pred = np.asarray(pred, dtype=np.float64)
        if total is None:
            shape = pred.shape
            total = np.zeros((shape[0], n_cols))
        if pred.shape != shape or pred.ndim != 2:
            raise ValueError(f"window prediction shape {pred.shape} differs from {shape}")
        if start < 0:
            raise ValueError("negative window start")
        stop = min(start + pred.shape[1], n_cols)
        if stop <= start:
            continue
        total[:, start:stop] += pred[:, :stop - start]
        count[start:stop] += 1
    if total is None:
        return np.zeros((N_PITCHES, n_cols))
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


def mask(prob: np.ndarray, roll: PianoRoll | np.ndarray) -> np.ndarray:
    grid = roll.grid if isinstance(roll, PianoRoll) else roll
    if prob.shape != grid.shape:
        raise ValueError(f"probability roll {prob.shape} does not match piano roll {grid.shape}")
    return prob * (grid != 0)


def lower_median(values: Sequence[float] | np.ndarray) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("median of no values")
    return float(v[(v.size - 1) // 2])


def note_probabilities(prob: np.ndarray, roll: PianoRoll) -> dict[int, float]:
    """Per-note melody probability: lower median of the note's masked pixels."""
    masked = mask(np.asarray(prob, dtype=np.float64), roll)
    out = {}
    for nid, (row, c0, c1) in roll.spans.items():
        if c1 <= c0:
            raise RuntimeError(f"note {nid} owns no pixels")
        out[nid] = lower_median(masked[row, c0:c1])
    return out
