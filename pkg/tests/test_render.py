import re

import numpy as np

from melodyid.pianoroll import quantize
from melodyid.render import (ACCOMP_COLOR, MELODY_COLOR, pgm_bytes, render_rgb, render_svg,
                             signed_pgm_bytes)
from melodyid.score_io import Score


def test_one_note_bar_position():
    roll = quantize(Score.from_tuples([(60, 1, 1)]))
    img = render_rgb(roll)
    assert img.shape == (128, 16, 3)
    painted = np.argwhere((img != 255).any(axis=2))
    assert set(painted[:, 0]) == {127 - 60}
    assert sorted(set(painted[:, 1])) == list(range(8, 16))
    svg = render_svg(roll, col_px=2, row_px=3)
    rects = re.findall(r'<rect x="(\d+)" y="(\d+)" width="(\d+)" height="(\d+)"', svg)
    assert rects == [("16", str(3 * (127 - 60)), "16", "3")]


def test_melody_highlight_exact():
    s = Score.from_tuples([(72, 0, 1), (60, 0, 2), (64, 1, 1)])
    roll = quantize(s)
    img = render_rgb(roll, {0})
    red = (img == MELODY_COLOR).all(axis=2)
    grey = (img == ACCOMP_COLOR).all(axis=2)
    expect = roll.note_mask(0)[::-1]
    assert np.array_equal(red, expect)
    assert np.array_equal(grey, (roll.grid[::-1] != 0) & ~expect)


def test_probability_mode_uniform():
    s = Score.from_tuples([(72, 0, 1), (60, 0, 2)])
    roll = quantize(s)
    img = render_rgb(roll, probabilities={0: 0.5, 1: 0.5})
    note_px = img[roll.grid[::-1] != 0]
    assert (note_px == note_px[0]).all()
    assert 0 < note_px[0][2] < 255 and note_px[0][0] < 255
    svg = render_svg(roll, probabilities={0: 0.5, 1: 0.5})
    assert svg.count('fill-opacity="0.5000"') == 2


def test_pgm_layout():
    v = np.zeros((128, 3))
    v[127, 0] = 1.0
    data = pgm_bytes(v)
    header = b"P5\n3 128\n255\n"
    assert data.startswith(header)
    pixels = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(128, 3)
    assert pixels[0, 0] == 255 and pixels.sum() == 255


def test_signed_pgm_zero_is_mid_grey():
    data = signed_pgm_bytes(np.zeros((4, 2)))
    assert set(data[len(b"P5\n2 4\n255\n"):]) == {128}
