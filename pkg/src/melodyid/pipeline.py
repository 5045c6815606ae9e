"""End-to-end probability estimation: roll -> windows -> network -> stitch -> mask."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .convnet.model import ModelParams, forward
from .pianoroll import PianoRoll, cut_windows, mask, note_probabilities, quantize, stitch
from .score_io import Score

__all__ = [
    "Predictor",
    "convnet_predictor",
    "probability_roll",
    "score_probabilities",
    "melody_roll",
    "training_pairs",
]

Predictor = Callable[[np.ndarray], np.ndarray]


def convnet_predictor(params: ModelParams, batch: int = 32) -> Predictor:
    """Eval-mode window predictor over ``(B, 128, 64)`` stacks."""
    def predict(windows: np.ndarray) -> np.ndarray:
        windows = np.asarray(windows)
        outs = [forward(params, windows[i:i + batch], "eval") for i in range(0, len(windows), batch)]
        return np.concatenate(outs) if outs else np.zeros_like(windows, dtype=float)
    return predict


def probability_roll(predict: Predictor, grid: np.ndarray, starts: Sequence[int] | None = None) -> np.ndarray:
    """Stitched, unmasked prediction for a full roll.

    With ``starts``, only those windows are evaluated; columns they do not
    cover come back as zero.
    """
    windows = cut_windows(grid)
    if starts is not None:
        keep = set(starts)
        windows = [w for w in windows if w.start_col in keep]
    if not windows:
        return np.zeros(grid.shape)
    preds = predict(np.stack([w.data for w in windows]))
    return stitch(((w.start_col, p) for w, p in zip(windows, preds)), grid.shape[1])


def score_probabilities(predict: Predictor, score: Score) -> tuple[PianoRoll, np.ndarray, dict[int, float]]:
    """Piano roll, masked probability roll, and per-note probabilities for ``score``."""
    roll = quantize(score)
    prob = mask(probability_roll(predict, roll.grid), roll)
    return roll, prob, note_probabilities(prob, roll)


def melody_roll(roll: PianoRoll, melody_ids) -> np.ndarray:
    """Binary target roll holding only the pixels of the melody notes."""
    target = np.zeros_like(roll.grid)
    for nid in melody_ids:
        row, c0, c1 = roll.spans[nid]
        target[row, c0:c1] = 1
    return target


def training_pairs(scores: Sequence[Score]) -> list[tuple[np.ndarray, np.ndarray]]:
    pairs = []
    for s in scores:
        if s.melody_ids is None:
            raise ValueError("training scores need melody annotations")
        roll = quantize(s)
        pairs.append((roll.grid, melody_roll(roll, s.melody_ids)))
    return pairs
