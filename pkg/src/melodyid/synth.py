"""Synthetic homophonic pieces: a melody that is always the top voice over a
fixed broken-chord accompaniment. Used for smoke training and tests."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .score_io import Note, Score

__all__ = ["top_voice_piece", "top_voice_corpus"]

# chord roots (semitones above C3 = 48) with major/minor third
_CHORDS = [(0, 4), (5, 4), (7, 4), (9, 3), (2, 3), (4, 3)]
_ALBERTI = (0, 2, 1, 2)  # root, fifth, third, fifth


def top_voice_piece(rng: np.random.Generator, n_beats: int = 16, ticks_per_beat: int = 480,
                    melody_range: tuple[int, int] = (72, 88)) -> Score:
    """One piece: gapless melody in ``melody_range`` above eighth-note Alberti chords.

    Every accompaniment note is below the lowest melody pitch and the melody
    sounds at every instant, so the skyline of the piece is exactly its melody.
    """
    lo, hi = melody_range
    raw = []
    t = Fraction(0)
    pitch = int(rng.integers(lo + 4, hi - 4))
    end = Fraction(n_beats)
    while t < end:
        dur = Fraction(int(rng.choice([1, 2, 2, 4])), 4) * 2  # eighth, quarter or half
        dur = min(dur, end - t)
        raw.append((pitch, t, dur, True))
        t += dur
        step = int(rng.choice([-4, -3, -2, -1, 1, 2, 3, 4]))
        pitch = pitch + step if lo <= pitch + step <= hi else pitch - step
    for bar in range(0, n_beats, 4):
        root, third = _CHORDS[int(rng.integers(len(_CHORDS)))]
        tones = (48 + root, 48 + root + 7, 48 + root + third)
        raw.append((36 + root, Fraction(bar), Fraction(min(4, n_beats - bar)), False))
        for k in range(min(8, 2 * (n_beats - bar))):
            raw.append((tones[_ALBERTI[k % 4]], Fraction(bar) + Fraction(k, 2), Fraction(1, 2), False))
    raw.sort(key=lambda r: (r[1], r[0]))
    notes = tuple(Note(i, p, o, d, track=0 if m else 1) for i, (p, o, d, m) in enumerate(raw))
    melody = frozenset(n.id for n, r in zip(notes, raw) if r[3])
    return Score(notes, ticks_per_beat, melody)


def top_voice_corpus(n: int, seed: int = 0, n_beats: int = 16) -> list[Score]:
    rng = np.random.default_rng(seed)
    return [top_voice_piece(rng, n_beats) for _ in range(n)]
