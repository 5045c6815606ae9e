"""Standard MIDI File ingestion and melody output serialization.

Scores are kept in beat time (quarter notes): tick positions are divided by
the header's ticks-per-beat and tempo events are dropped.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

__all__ = [
    "Note",
    "Score",
    "MidiParseError",
    "parse_midi",
    "read_midi",
    "write_outputs",
    "note_records",
    "NOTE_JSON_SCHEMA",
]

DEFAULT_TICKS_PER_BEAT = 480


class MidiParseError(ValueError):
    """Malformed Standard MIDI File; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, order=True)
class Note:
    id: int
    pitch: int
    onset: Fraction
    duration: Fraction
    track: int = field(default=0, compare=False)
    channel: int = field(default=0, compare=False)

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0..127")
        if self.duration <= 0:
            raise ValueError(f"note {self.id} has non-positive duration")
        if self.onset < 0:
            raise ValueError(f"note {self.id} has negative onset")

    @property
    def end(self) -> Fraction:
        return self.onset + self.duration


@dataclass(frozen=True)
class Score:
    notes: tuple[Note, ...]
    ticks_per_beat: int = DEFAULT_TICKS_PER_BEAT
    melody_ids: frozenset[int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))
        ids = [n.id for n in self.notes]
        if len(set(ids)) != len(ids):
            raise ValueError("note ids must be unique within a score")
        if self.melody_ids is not None:
            melody = frozenset(self.melody_ids)
            object.__setattr__(self, "melody_ids", melody)
            if not melody <= set(ids):
                raise ValueError("melody_ids reference unknown notes")
        if self.ticks_per_beat <= 0:
            raise ValueError("ticks_per_beat must be positive")

    @property
    def ids(self) -> frozenset[int]:
        return frozenset(n.id for n in self.notes)

    def by_id(self) -> dict[int, Note]:
        return {n.id: n for n in self.notes}

    def with_melody(self, melody_ids: Iterable[int] | None) -> "Score":
        return Score(self.notes, self.ticks_per_beat,
                     None if melody_ids is None else frozenset(melody_ids))

    @classmethod
    def from_tuples(cls, notes: Iterable[tuple], ticks_per_beat: int = DEFAULT_TICKS_PER_BEAT,
                    melody: Iterable[int] | None = None) -> "Score":
        """Build a score from ``(pitch, onset, duration)`` tuples; ids follow input order."""
        built = [Note(i, int(p), Fraction(o), Fraction(d)) for i, (p, o, d) in enumerate(notes)]
        return cls(tuple(built), ticks_per_beat,
                   None if melody is None else frozenset(melody))


# --------------------------------------------------------------------------
# reading


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def need(self, n: int, what: str):
        if self.pos + n > len(self.data):
            raise MidiParseError(f"truncated {what}", self.pos)

    def byte(self, what: str = "event") -> int:
        self.need(1, what)
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int, what: str) -> bytes:
        self.need(n, what)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.byte("variable-length quantity")
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError("variable-length quantity longer than 4 bytes", self.pos - 1)


_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _read_track(data: bytes, start: int, end: int, track: int, out: list):
    """Append ``(on_tick, off_tick, pitch, track, channel)`` for every closed note."""
    rd = _Reader(data[:end], start)
    tick = 0
    status = None
    # (channel, pitch) -> (on_tick, byte offset of the note-on)
    active: dict[tuple[int, int], tuple[int, int]] = {}
    while rd.pos < end:
        tick += rd.varlen()
        event_pos = rd.pos
        b = rd.byte()
        if b == 0xFF:
            kind = rd.byte("meta event")
            length = rd.varlen()
            rd.take(length, "meta event")
            if kind == 0x2F:
                break
            continue
        if b in (0xF0, 0xF7):
            rd.take(rd.varlen(), "sysex event")
            continue
        if b & 0x80:
            if b >= 0xF0:
                raise MidiParseError(f"unexpected system message 0x{b:02X} in track", event_pos)
            status = b
            params = rd.take(_DATA_LEN[b & 0xF0], "channel message")
        else:
            if status is None:
                raise MidiParseError("running status without a preceding status byte", event_pos)
            params = bytes([b]) + rd.take(_DATA_LEN[status & 0xF0] - 1, "channel message")
        kind, channel = status & 0xF0, status & 0x0F
        if kind not in (0x80, 0x90):
            continue
        pitch, velocity = params[0] & 0x7F, params[1]
        key = (channel, pitch)
        if key in active:
            on_tick, _ = active.pop(key)
            if tick > on_tick:
                out.append((on_tick, tick, pitch, track, channel))
        if kind == 0x90 and velocity > 0:
            # last note-on wins: a repeated note-on already closed the earlier note above
            active[key] = (tick, event_pos)
    if active:
        offset = min(pos for _, pos in active.values())
        raise MidiParseError("note-on without matching note-off", offset)


def parse_midi(data: bytes, melody_track: int | None = None) -> Score:
    """Parse SMF type 0/1 bytes into a :class:`Score`.

    All tracks are merged. Notes are sorted by ``(onset, pitch)`` and ids are
    assigned in that order. When ``melody_track`` is given, the notes of that
    track become the score's ``melody_ids``.
    """
    data = bytes(data)
    if data[:4] != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    if len(data) < 14:
        raise MidiParseError("truncated header", len(data))
    hlen, fmt, ntracks, division = struct.unpack(">IHHH", data[4:14])
    if hlen < 6:
        raise MidiParseError("header chunk shorter than 6 bytes", 4)
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000 or division == 0:
        raise MidiParseError("SMPTE or zero time division is not supported", 12)
    if melody_track is not None and not 0 <= melody_track < ntracks:
        raise ValueError(f"melody_track {melody_track} out of range for {ntracks} track(s)")

    pos = 8 + hlen
    raw: list[tuple] = []
    track = 0
    while track < ntracks:
        if pos + 8 > len(data):
            raise MidiParseError(f"missing track chunk {track}", pos)
        tag, length = data[pos:pos + 4], struct.unpack(">I", data[pos + 4:pos + 8])[0]
        body = pos + 8
        if body + length > len(data):
            raise MidiParseError("track chunk runs past end of file", pos + 4)
        if tag == b"MTrk":
            _read_track(data, body, body + length, track, raw)
            track += 1
        elif not tag.isascii():
            raise MidiParseError("invalid chunk tag", pos)
        pos = body + length

    raw.sort(key=lambda r: (r[0], r[2], r[3], r[4], r[1]))
    notes = tuple(
        Note(i, pitch, Fraction(on, division), Fraction(off - on, division), trk, ch)
        for i, (on, off, pitch, trk, ch) in enumerate(raw)
    )
    melody = None
    if melody_track is not None:
        melody = frozenset(n.id for n in notes if n.track == melody_track)
    return Score(notes, division, melody)


def read_midi(path, melody_track: int | None = None) -> Score:
    with open(path, "rb") as fh:
        return parse_midi(fh.read(), melody_track)


# --------------------------------------------------------------------------
# writing


def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _to_ticks(beats: Fraction, tpb: int) -> int:
    return int((Fraction(beats) * tpb * 2 + 1) // 2)


def _track_chunk(notes: Iterable[Note], tpb: int) -> bytes:
    # same-pitch overlaps would collapse under last-on-wins, so spread them over channels
    channel_free: list[dict[int, int]] = []
    events = []
    for n in sorted(notes, key=lambda n: (n.onset, n.pitch, n.id)):
        on, off = _to_ticks(n.onset, tpb), _to_ticks(n.end, tpb)
        off = max(off, on + 1)
        for ch, busy in enumerate(channel_free):
            if busy.get(n.pitch, -1) <= on:
                break
        else:
            ch = len(channel_free)
            if ch >= 15:
                raise ValueError("more than 15 overlapping notes of one pitch")
            channel_free.append({})
        channel_free[ch][n.pitch] = off
        midi_ch = ch if ch < 9 else ch + 1
        events.append((on, 1, bytes([0x90 | midi_ch, n.pitch, 64])))
        events.append((off, 0, bytes([0x80 | midi_ch, n.pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))
    body = bytearray()
    last = 0
    for tick, _, msg in events:
        body += _varlen(tick - last) + msg
        last = tick
    body += b"\x00\xFF\x2F\x00"
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


NOTE_JSON_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["id", "pitch", "onset_beats", "duration_beats", "is_melody"],
        "properties": {
            "id": {"type": "integer", "minimum": 0},
            "pitch": {"type": "integer", "minimum": 0, "maximum": 127},
            "onset_beats": {"type": "number", "minimum": 0},
            "duration_beats": {"type": "number", "exclusiveMinimum": 0},
            "is_melody": {"type": "boolean"},
            "probability": {"type": "number", "minimum": 0, "maximum": 1},
        },
        "additionalProperties": False,
    },
}


def note_records(score: Score, predicted_ids: Iterable[int],
                 probabilities: Mapping[int, float] | None = None) -> list[dict]:
    predicted = set(predicted_ids)
    records = []
    for n in score.notes:
        rec = {
            "id": n.id,
            "pitch": n.pitch,
            "onset_beats": float(n.onset),
            "duration_beats": float(n.duration),
            "is_melody": n.id in predicted,
        }
        if probabilities is not None and n.id in probabilities:
            rec["probability"] = float(probabilities[n.id])
        records.append(rec)
    return records


def write_outputs(score: Score, predicted_ids: Iterable[int], format: str = "midi",
                  probabilities: Mapping[int, float] | None = None) -> bytes:
    """Serialize a melody prediction.

    ``midi`` produces a type-1 file whose track 0 holds the predicted melody and
    track 1 the remaining notes. ``json`` produces an array of note records with
    an ``is_melody`` flag (and ``probability`` when ``probabilities`` is given).
    """
    predicted = set(predicted_ids)
    unknown = predicted - score.ids
    if unknown:
        raise ValueError(f"predicted ids not in score: {sorted(unknown)[:10]}")
    if format == "json":
        return json.dumps(note_records(score, predicted, probabilities), indent=1).encode()
    if format != "midi":
        raise ValueError(f"unknown output format {format!r}")
    tpb = score.ticks_per_beat
    header = b"MThd" + struct.pack(">IHHH", 6, 1, 2, tpb)
    melody = [n for n in score.notes if n.id in predicted]
    rest = [n for n in score.notes if n.id not in predicted]
    return header + _track_chunk(melody, tpb) + _track_chunk(rest, tpb)
