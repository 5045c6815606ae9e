"""Comparison methods: the skyline heuristic and VoSA-style voice separation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .evaluation import f_measure
from .score_io import Note, Score

__all__ = [
    "Voice",
    "Segment",
    "SlotStep",
    "skyline",
    "segment",
    "voice_count",
    "assign_slots",
    "vosa_voices",
    "vosa_best_voice",
    "FRESH_SLOT_COST",
]

# cost of opening a slot that has never held a note; above any pitch interval
FRESH_SLOT_COST = 128


@dataclass
class Voice:
    index: int
    note_ids: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class Segment:
    start: Fraction
    end: Fraction
    sounding: frozenset[int]


@dataclass(frozen=True)
class SlotStep:
    """One cross-boundary assignment made by :func:`vosa_voices`."""

    segment: Segment
    new_notes: tuple[int, ...]
    free_slots: tuple[int, ...]
    last_pitch: dict[int, int | None]
    assignment: dict[int, int]  # note id -> slot


def skyline(score: Score) -> set[int]:
    """Notes with no strictly higher note sounding at their onset.

    Among notes sharing onset and pitch only the lowest id is kept.
    """
    notes = sorted(score.notes, key=lambda n: (n.onset, n.id))
    chosen = set()
    active: list[Note] = []
    i = 0
    while i < len(notes):
        t = notes[i].onset
        group = []
        while i < len(notes) and notes[i].onset == t:
            group.append(notes[i])
            i += 1
        active = [m for m in active if m.end > t] + group
        for n in group:
            dominated = any(
                m.pitch > n.pitch or (m.pitch == n.pitch and m.onset == t and m.id < n.id)
                for m in active)
            if not dominated:
                chosen.add(n.id)
    return chosen


def segment(score: Score) -> list[Segment]:
    """Split ``[0, piece end)`` at every onset and end time.

    Each segment carries the notes sounding throughout it; gaps give segments
    with no sounding notes.
    """
    if not score.notes:
        return []
    bounds = sorted({Fraction(0)} | {n.onset for n in score.notes} | {n.end for n in score.notes})
    out = []
    for a, b in zip(bounds, bounds[1:]):
        sounding = frozenset(n.id for n in score.notes if n.onset <= a and n.end >= b)
        out.append(Segment(a, b, sounding))
    return out


def voice_count(segments: Sequence[Segment]) -> int:
    return max((len(s.sounding) for s in segments), default=0)


def _slot_cost(pitch: int, last: int | None) -> int:
    return FRESH_SLOT_COST if last is None else abs(pitch - last)


def assign_slots(new_notes: Sequence[Note], free_slots: Sequence[int],
                 last_pitch: dict[int, int | None], max_exhaustive: int = 6) -> dict[int, int]:
    """Map entering notes to free voice slots at minimum total interval cost.

    Continuing a slot costs the absolute interval to its previous note; opening
    an unused slot costs :data:`FRESH_SLOT_COST`. Up to ``max_exhaustive`` free
    slots every injective map is tried and the first minimum in lexicographic
    order wins, so with equal costs higher notes take lower slots. Beyond that a
    greedy cheapest-pair heuristic is used.
    """
    notes = sorted(new_notes, key=lambda n: (-n.pitch, n.id))
    slots = sorted(free_slots)
    if len(notes) > len(slots):
        raise ValueError("more entering notes than free voice slots")
    if not notes:
        return {}
    if len(slots) <= max_exhaustive:
        best, best_cost = None, None
        for perm in itertools.permutations(slots, len(notes)):
            cost = sum(_slot_cost(n.pitch, last_pitch.get(s)) for n, s in zip(notes, perm))
            if best_cost is None or cost < best_cost:
                best, best_cost = perm, cost
        return {n.id: s for n, s in zip(notes, best)}
    pairs = sorted(
        (_slot_cost(n.pitch, last_pitch.get(s)), s, -n.pitch, n.id)
        for n in notes for s in slots
    )
    taken_notes, taken_slots, out = set(), set(), {}
    for _, s, _, nid in pairs:
        if nid not in taken_notes and s not in taken_slots:
            out[nid] = s
            taken_notes.add(nid)
            taken_slots.add(s)
    return out


def vosa_voices(score: Score, max_exhaustive: int = 6,
                trace: list[SlotStep] | None = None) -> list[Voice]:
    """Separate ``score`` into monophonic voices.

    The number of voices is the largest number of simultaneously sounding
    notes. Segments are visited in time order; notes that keep sounding stay
    in their slot and entering notes are placed by :func:`assign_slots`.
    """
    segs = segment(score)
    n_voices = voice_count(segs)
    notes = score.by_id()
    slot_of: dict[int, int] = {}
    last_pitch: dict[int, int | None] = {s: None for s in range(n_voices)}
    voices = [Voice(i) for i in range(n_voices)]
    for seg in segs:
        entering = [notes[i] for i in seg.sounding if i not in slot_of]
        if not entering:
            continue
        busy = {slot_of[i] for i in seg.sounding if i in slot_of}
        free = tuple(s for s in range(n_voices) if s not in busy)
        before = dict(last_pitch)
        assignment = assign_slots(entering, free, last_pitch, max_exhaustive)
        for nid, s in assignment.items():
            slot_of[nid] = s
            last_pitch[s] = notes[nid].pitch
        if trace is not None:
            trace.append(SlotStep(seg, tuple(sorted(n.id for n in entering)), free, before, assignment))
    for n in sorted(score.notes, key=lambda n: (n.onset, n.id)):
        voices[slot_of[n.id]].note_ids.append(n.id)
    return voices


def vosa_best_voice(voices: Sequence[Voice], truth_ids: Iterable[int]) -> set[int]:
    """The voice with the highest F-measure against the annotation (lowest index on ties)."""
    truth = set(truth_ids)
    best, best_f = set(), -1.0
    for v in sorted(voices, key=lambda v: v.index):
        f = f_measure(set(v.note_ids), truth).f_measure
        if f > best_f:
            best, best_f = set(v.note_ids), f
    return best
