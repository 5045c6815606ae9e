"""Melody identification in symbolic scores with a fully-convolutional network
over piano rolls, clustering-based thresholding and a shortest-path search."""

__version__ = "0.1.0"

from .score_io import Note, Score, parse_midi, read_midi, write_outputs  # noqa: E402

__all__ = ["Note", "Score", "parse_midi", "read_midi", "write_outputs", "__version__"]
