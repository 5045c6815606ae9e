from dataclasses import dataclass

import numpy as np
import pytest

from melodyid.pianoroll import quantize
from melodyid.saliency import RectSampler, note_difference, occlude, saliency_map
from melodyid.score_io import Score


def identity_model(windows):
    return np.asarray(windows, dtype=np.float64)


def mass_model(windows):
    # every output pixel grows with the window's total input mass
    w = np.asarray(windows, dtype=np.float64)
    mass = w.sum(axis=(1, 2), keepdims=True)
    return np.broadcast_to(mass / 1000.0, w.shape).copy()


@dataclass(frozen=True)
class FixedSampler(RectSampler):
    rects: tuple = ()

    def sample(self, rng, shape):
        return list(self.rects)


def piece():
    # melody 72 over two accompaniment notes; 80 columns -> windows at 0, 32, 64
    return Score.from_tuples([(72, 0, 10), (48, 0, 4), (55, 4, 6)])


def test_occlude_examples():
    grid = quantize(piece()).grid
    assert np.array_equal(occlude(grid, [(0, 0, 10, 10)]), grid)
    out = occlude(grid, [(48, 0, 49, 32)])
    assert not out[48].any() and out[72].all()
    twice = occlude(grid, [(40, 0, 60, 20), (45, 10, 50, 30)])
    assert np.array_equal(twice, occlude(twice, [(45, 10, 50, 30)]))
    assert grid[48].any()  # original untouched
    with pytest.raises(ValueError):
        occlude(grid, [(0, 0, 129, 4)])


def test_note_difference_examples():
    p = np.zeros((4, 4))
    q = np.zeros((4, 4))
    p[1, 1:3] = [0.8, 0.6]
    q[1, 1:3] = [0.4, 0.6]
    assert np.isclose(note_difference(p, q, (1, 1, 3)), 0.2)
    assert note_difference(p, p, (1, 1, 3)) == 0
    assert np.isclose(note_difference(p, p - 0.05, (1, 0, 4)), 0.05)
    with pytest.raises(ValueError):
        note_difference(p, q, np.zeros((4, 4), dtype=bool))


def test_note_difference_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        h, w = rng.integers(1, 20, 2)
        p, q = rng.random((h, w)), rng.random((h, w))
        region = rng.random((h, w)) < 0.3
        if not region.any():
            region[0, 0] = True
        total, count = 0.0, 0
        for i in range(h):
            for j in range(w):
                if region[i, j]:
                    total += p[i, j] - q[i, j]
                    count += 1
        assert abs(note_difference(p, q, region) - total / count) <= 1e-12


def test_rectangles_stay_in_bounds():
    s = RectSampler(seed=3)
    for it in range(200):
        for r0, c0, r1, c1 in s.sample(s.rng(it), (128, 20)):
            assert 0 <= r0 < r1 <= 128 and 0 <= c0 < c1 <= 20
            assert 4 <= r1 - r0 <= 32 and 1 <= c1 - c0 <= 20


def test_empty_region_rectangles_give_zero_map():
    roll = quantize(piece())
    m = saliency_map(mass_model, roll, 0, 5, FixedSampler(rects=((100, 0, 110, 30),)))
    assert not m.map.any()
    assert m.zero_count[100:110, :30].sum() == 5 * 300


def test_single_iteration_hand_trace():
    roll = quantize(piece())
    grid = roll.grid
    rect = (48, 0, 49, 40)  # covers the whole first accompaniment note (cols 0..31)
    m = saliency_map(mass_model, roll, 0, 1, FixedSampler(rects=(rect,)))
    occl = grid.copy()
    occl[48, 0:40] = 0
    diffs = []
    for c in range(0, 80):
        starts = [s for s in (0, 32, 64) if s <= c < s + 64]
        before = np.mean([grid[:, s:s + 64].sum() / 1000 for s in starts])
        after = np.mean([occl[:, s:s + 64].sum() / 1000 for s in starts])
        diffs.append(before - after)
    d = np.mean(diffs)
    assert d > 0
    assert np.allclose(m.map[48, 0:32], d)
    assert not m.map[55].any() and not m.map[72].any()
    assert m.zero_count[48, 0:40].tolist() == [1] * 40
    assert np.all(m.map[48, 32:40] == 0)  # occluded but no note there


def test_target_rectangles_always_skipped():
    roll = quantize(piece())
    m = saliency_map(mass_model, roll, 0, 7, FixedSampler(rects=((70, 0, 75, 5), (48, 0, 49, 4))))
    assert m.skipped == 7
    assert not m.map.any() and not m.zero_count.any()


def test_identity_model_zero_baseline():
    roll = quantize(piece())
    m = saliency_map(identity_model, roll, 0, 50, RectSampler(seed=1))
    assert m.skipped < 50
    assert not m.map.any()


def test_mass_model_positive():
    roll = quantize(piece())
    m = saliency_map(mass_model, roll, 0, 100, RectSampler(seed=2))
    accomp = m.map[[48, 55]]
    assert (accomp > 0).any() and (accomp >= 0).all()


def test_deterministic_and_target_zero():
    roll = quantize(piece())
    a = saliency_map(mass_model, roll, 0, 60, RectSampler(seed=4))
    b = saliency_map(mass_model, roll, 0, 60, RectSampler(seed=4))
    assert np.array_equal(a.map, b.map) and a.to_json() == b.to_json()
    assert not a.map[roll.note_mask(0)].any()
    c = saliency_map(mass_model, roll, 0, 60, RectSampler(seed=5))
    assert not np.array_equal(a.zero_count, c.zero_count)


def test_errors():
    roll = quantize(piece())
    with pytest.raises(ValueError):
        saliency_map(mass_model, roll, 0, 0)
    with pytest.raises(KeyError):
        saliency_map(mass_model, roll, 99, 1)
