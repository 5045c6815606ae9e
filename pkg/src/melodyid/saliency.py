"""Occlusion saliency: how zeroing random rectangles of the input changes the
predicted melody probability of one note."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .pianoroll import WINDOW, PianoRoll, mask, window_starts
from .pipeline import Predictor, probability_roll

__all__ = ["Rect", "RectSampler", "SaliencyMap", "occlude", "note_difference", "saliency_map"]

# (row0, col0, row1, col1), half-open
Rect = tuple[int, int, int, int]


@dataclass(frozen=True)
class RectSampler:
    seed: int = 0
    width_range: tuple[int, int] = (4, 32)
    height_range: tuple[int, int] = (4, 32)
    per_iteration: int = 5

    def rng(self, iteration: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, iteration])

    def sample(self, rng: np.random.Generator, shape: tuple[int, int]) -> list[Rect]:
        n_rows, n_cols = shape
        rects = []
        for _ in range(self.per_iteration):
            h = min(int(rng.integers(self.height_range[0], self.height_range[1] + 1)), n_rows)
            w = min(int(rng.integers(self.width_range[0], self.width_range[1] + 1)), n_cols)
            r0 = int(rng.integers(0, n_rows - h + 1))
            c0 = int(rng.integers(0, n_cols - w + 1))
            rects.append((r0, c0, r0 + h, c0 + w))
        return rects


@dataclass
class SaliencyMap:
    accum: np.ndarray
    zero_count: np.ndarray
    target_note: int
    iterations: int = 0
    skipped: int = 0

    @property
    def map(self) -> np.ndarray:
        return np.divide(self.accum, self.zero_count, out=np.zeros_like(self.accum),
                         where=self.zero_count > 0)

    def to_json(self) -> str:
        m = self.map
        rows, cols = np.nonzero(m)
        return json.dumps({
            "target_note": self.target_note,
            "shape": list(m.shape),
            "iterations": self.iterations,
            "skipped": self.skipped,
            "pixels": [[int(r), int(c), float(m[r, c])] for r, c in zip(rows, cols)],
        })


def _check_rects(shape, rects):
    for r0, c0, r1, c1 in rects:
        if not (0 <= r0 < r1 <= shape[0] and 0 <= c0 < c1 <= shape[1]):
            raise ValueError(f"rectangle {(r0, c0, r1, c1)} outside roll of shape {shape}")


def occlude(grid: np.ndarray, rects) -> np.ndarray:
    """Copy of ``grid`` with every pixel inside ``rects`` set to 0."""
    _check_rects(grid.shape, rects)
    out = np.array(grid, copy=True)
    for r0, c0, r1, c1 in rects:
        out[r0:r1, c0:c1] = 0
    return out


def note_difference(p: np.ndarray, p_occluded: np.ndarray, region) -> float:
    """Mean of ``p - p_occluded`` over the note's pixels.

    Positive when occlusion lowered the note's predicted probability.
    ``region`` is a boolean mask or a ``(row, c0, c1)`` span.
    """
    if p.shape != p_occluded.shape:
        raise ValueError("prediction shapes differ")
    if isinstance(region, tuple):
        row, c0, c1 = region
        sel = np.zeros(p.shape, dtype=bool)
        sel[row, c0:c1] = True
    else:
        sel = np.asarray(region, dtype=bool)
    n = int(sel.sum())
    if n == 0:
        raise ValueError("empty note region")
    return float(np.sum(p[sel] - p_occluded[sel]) / n)


def _target_windows(n_cols: int, c0: int, c1: int) -> list[int]:
    return [s for s in window_starts(n_cols) if s < c1 and s + WINDOW > c0]


def saliency_map(predict: Predictor, roll: PianoRoll, target: int, iterations: int,
                 sampler: RectSampler = RectSampler()) -> SaliencyMap:
    """Accumulate occlusion effects on note ``target`` over random rectangle sets.

    Each iteration occludes ``sampler.per_iteration`` rectangles at once and
    is skipped if any of them touches the target. Otherwise the difference on
    the target is added to every pixel of each note with an occluded pixel, and
    the occlusion count of every occluded pixel is incremented.
    """
    if iterations <= 0:
        raise ValueError("iterations must be positive")
    if target not in roll.spans:
        raise KeyError(f"note {target} not in piano roll")
    grid = roll.grid
    row, c0, c1 = roll.spans[target]
    # only windows covering the target influence its stitched prediction
    starts = _target_windows(grid.shape[1], c0, c1)
    base = mask(probability_roll(predict, grid, starts), grid)
    target_mask = roll.note_mask(target)
    accum = np.zeros(grid.shape)
    count = np.zeros(grid.shape, dtype=np.int64)
    skipped = 0
    for it in range(iterations):
        rects = sampler.sample(sampler.rng(it), grid.shape)
        hit = np.zeros(grid.shape, dtype=bool)
        for r0, q0, r1, q1 in rects:
            hit[r0:r1, q0:q1] = True
        if (hit & target_mask).any():
            skipped += 1
            continue
        occluded = occlude(grid, rects)
        touched = [nid for nid, (r, a, b) in roll.spans.items() if hit[r, a:b].any()]
        if touched:
            pred = mask(probability_roll(predict, occluded, starts), occluded)
            d = note_difference(base, pred, target_mask)
            for nid in touched:
                r, a, b = roll.spans[nid]
                accum[r, a:b] += d
        count[hit] += 1
    return SaliencyMap(accum, count, target, iterations, skipped)
