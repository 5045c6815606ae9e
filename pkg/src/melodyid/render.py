"""Piano-roll images: PGM dumps, RGB rasters and SVG."""
from __future__ import annotations

from typing import Iterable, Mapping
from xml.sax.saxutils import quoteattr

import numpy as np

from .pianoroll import PianoRoll

__all__ = ["pgm_bytes", "signed_pgm_bytes", "render_rgb", "render_svg", "png_bytes"]

ACCOMP_COLOR = (90, 90, 90)
MELODY_COLOR = (220, 30, 30)
PROB_COLOR = (30, 60, 220)


def pgm_bytes(values: np.ndarray) -> bytes:
    """Binary PGM of a ``[0, 1]`` grid, highest pitch on top, one byte per pixel."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    img = np.round(v[::-1] * 255).astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()


def signed_pgm_bytes(values: np.ndarray) -> bytes:
    """PGM of a signed grid: 128 is zero, brighter is positive, darker negative."""
    v = np.asarray(values, dtype=np.float64)
    peak = np.abs(v).max()
    scaled = 0.5 + (v / (2 * peak) if peak > 0 else 0 * v) * (254 / 255)
    return pgm_bytes(scaled)


def render_rgb(roll: PianoRoll, melody_ids: Iterable[int] = (),
               probabilities: Mapping[int, float] | None = None,
               prob_roll: np.ndarray | None = None) -> np.ndarray:
    """``(128, T, 3)`` uint8 image, row 0 = pitch 127.

    Default mode paints accompaniment grey and melody notes red. With
    ``probabilities`` (per note) or ``prob_roll`` (per pixel) note pixels are
    shaded from white to blue by value.
    """
    melody = set(melody_ids)
    img = np.full(roll.grid.shape + (3,), 255, dtype=np.float64)
    shade = None
    if prob_roll is not None:
        shade = np.asarray(prob_roll, dtype=np.float64)
    elif probabilities is not None:
        shade = np.zeros(roll.grid.shape)
        for nid, (row, c0, c1) in roll.spans.items():
            shade[row, c0:c1] = probabilities.get(nid, 0.0)
    for nid, (row, c0, c1) in roll.spans.items():
        if shade is not None:
            p = np.clip(shade[row, c0:c1], 0, 1)[:, None]
            img[row, c0:c1] = 255 - p * (255 - np.array(PROB_COLOR))
        else:
            img[row, c0:c1] = MELODY_COLOR if nid in melody else ACCOMP_COLOR
    if shade is None:
        # melody wins where notes share pixels
        for nid in melody:
            row, c0, c1 = roll.spans[nid]
            img[row, c0:c1] = MELODY_COLOR
    return np.round(img[::-1]).astype(np.uint8)


def render_svg(roll: PianoRoll, melody_ids: Iterable[int] = (),
               probabilities: Mapping[int, float] | None = None,
               col_px: int = 4, row_px: int = 4, title: str = "") -> str:
    """SVG with one ``<rect>`` per note; ``data-note`` carries the note id."""
    melody = set(melody_ids)
    n_rows, n_cols = roll.grid.shape
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{n_cols * col_px}" '
             f'height="{n_rows * row_px}" viewBox="0 0 {n_cols * col_px} {n_rows * row_px}">']
    if title:
        parts.append(f"<title>{title}</title>")
    parts.append(f'<rect width="100%" height="100%" fill="white"/>')
    order = sorted(roll.spans.items(), key=lambda kv: (kv[0] in melody, kv[0]))
    for nid, (row, c0, c1) in order:
        y = (n_rows - 1 - row) * row_px
        if probabilities is not None:
            p = float(np.clip(probabilities.get(nid, 0.0), 0, 1))
            fill = "rgb({},{},{})".format(*PROB_COLOR)
            style = f'fill="{fill}" fill-opacity="{p:.4f}" class="prob"'
        else:
            cls = "melody" if nid in melody else "accomp"
            color = MELODY_COLOR if nid in melody else ACCOMP_COLOR
            style = f'fill="rgb({color[0]},{color[1]},{color[2]})" class="{cls}"'
        parts.append(f'<rect x="{c0 * col_px}" y="{y}" width="{(c1 - c0) * col_px}" '
                     f'height="{row_px}" {style} data-note={quoteattr(str(nid))}/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def png_bytes(rgb: np.ndarray, scale: int = 1) -> bytes:
    """PNG encoding via Pillow; raises ImportError when Pillow is missing."""
    import io

    from PIL import Image

    img = Image.fromarray(rgb)
    if scale > 1:
        img = img.resize((rgb.shape[1] * scale, rgb.shape[0] * scale), Image.NEAREST)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
