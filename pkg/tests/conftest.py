import struct
import time
from fractions import Fraction

import numpy as np
import pytest

from melodyid.convnet import TrainConfig, save_checkpoint, train
from melodyid.convnet.model import Architecture
from melodyid.pipeline import training_pairs
from melodyid.score_io import Note, Score
from melodyid.synth import top_voice_corpus

TOY_ARCH = Architecture(channels=3, kernel=(8, 4))


def vlq(n):
    out = [n & 0x7F]
    n >>= 7
    while n:
        out.append((n & 0x7F) | 0x80)
        n >>= 7
    return bytes(reversed(out))


def smf(tracks, tpb=480, fmt=None):
    """Minimal independent SMF encoder. ``tracks`` holds lists of (delta, event bytes)."""
    fmt = (0 if len(tracks) == 1 else 1) if fmt is None else fmt
    data = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), tpb)
    for events in tracks:
        body = b"".join(vlq(d) + ev for d, ev in events) + b"\x00\xff\x2f\x00"
        data += b"MTrk" + struct.pack(">I", len(body)) + body
    return data


def on(p, v=64, ch=0):
    return bytes([0x90 | ch, p, v])


def off(p, ch=0):
    return bytes([0x80 | ch, p, 0])


@pytest.fixture
def one_note_midi():
    return smf([[(0, on(60)), (480, off(60))]])


@pytest.fixture
def two_track_midi():
    # track 0: melody 72 [0,1), 74 [1,2); track 1: chord 48+55 [0,2)
    melody = [(0, on(72)), (480, off(72)), (0, on(74)), (480, off(74))]
    accomp = [(0, on(48)), (0, on(55)), (960, off(48)), (0, off(55))]
    return smf([melody, accomp])


def random_score(rng, n_max=20, beats=8, min_notes=1, pitch=(21, 108), grid=8):
    """Random score with onsets/durations on a ``1/grid`` beat lattice."""
    n = int(rng.integers(min_notes, n_max + 1))
    notes = []
    for i in range(n):
        onset = Fraction(int(rng.integers(0, beats * grid)), grid)
        dur = Fraction(int(rng.integers(1, 2 * grid + 1)), grid)
        notes.append(Note(i, int(rng.integers(pitch[0], pitch[1] + 1)), onset, dur))
    return Score(tuple(notes))


@pytest.fixture(scope="session")
def toy_model(tmp_path_factory):
    """Small network trained for a few epochs on synthetic pieces; (params, path)."""
    scores = top_voice_corpus(4, seed=3, n_beats=8)
    cfg = TrainConfig(max_epochs=3, seed=0, arch=TOY_ARCH, patience=5)
    params, _ = train(training_pairs(scores), cfg)
    path = tmp_path_factory.mktemp("ckpt") / "toy.npz"
    save_checkpoint(path, params, cfg.to_dict())
    return params, path


# --- acceptance reporting ----------------------------------------------------

ACCEPTANCE = []


class criterion:
    """Time a criterion body, enforce its runtime budget and record PASS/FAIL."""

    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget = number, title, budget_s
        self.detail = ""

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        ok = exc_type is None and elapsed < self.budget
        note = self.detail
        if exc_type is not None:
            note = f"{note} {exc_type.__name__}: {exc}".strip()
        elif not ok:
            note = f"{note} over budget".strip()
        ACCEPTANCE.append(f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'} "
                          f"({elapsed:.1f}s / {self.budget:g}s) {self.title}"
                          + (f" | {note}" if note else ""))
        if exc_type is None and not ok:
            raise AssertionError(f"criterion {self.number} took {elapsed:.1f}s, budget {self.budget}s")
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
