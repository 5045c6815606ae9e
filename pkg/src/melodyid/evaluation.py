"""Note-level precision / recall / F-measure and corpus reports."""
from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

__all__ = [
    "PieceScore",
    "EvalReport",
    "f_measure",
    "evaluate_corpus",
    "match_external",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ["piece", "method", "precision", "recall", "f_measure", "tp", "fp", "fn"]
METRICS = ("precision", "recall", "f_measure")


@dataclass(frozen=True)
class PieceScore:
    precision: float
    recall: float
    f_measure: float
    tp: int
    fp: int
    fn: int
    piece: str = ""
    method: str = ""


def f_measure(predicted: Iterable[int], truth: Iterable[int], score=None) -> PieceScore:
    """Set-based scores over note ids.

    Empty prediction gives precision 0; empty truth gives recall 0. When
    ``score`` is given, ids outside it are rejected.
    """
    predicted, truth = set(predicted), set(truth)
    if score is not None:
        stray = (predicted | truth) - score.ids
        if stray:
            raise ValueError(f"note ids not in score: {sorted(stray)[:10]}")
    tp = len(predicted & truth)
    fp = len(predicted - truth)
    fn = len(truth - predicted)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return PieceScore(p, r, f, tp, fp, fn)


@dataclass
class EvalReport:
    pieces: list[PieceScore]
    skipped: list[str] = field(default_factory=list)

    def methods(self) -> list[str]:
        return sorted({p.method for p in self.pieces})

    def corpus(self) -> dict[str, dict]:
        """Per-method mean and median of each metric, plus piece count."""
        out = {}
        for m in self.methods():
            rows = [p for p in self.pieces if p.method == m]
            summary: dict = {"pieces": len(rows)}
            for k in METRICS:
                vals = [getattr(p, k) for p in rows]
                summary[f"mean_{k}"] = statistics.fmean(vals)
                summary[f"median_{k}"] = statistics.median(vals)
            out[m] = summary
        return out

    def to_json(self) -> str:
        return json.dumps({"pieces": [asdict(p) for p in self.pieces],
                           "corpus": self.corpus(), "skipped": self.skipped}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls([PieceScore(**p) for p in d["pieces"]], list(d.get("skipped", [])))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for p in self.pieces:
            w.writerow({k: getattr(p, k) for k in CSV_COLUMNS})
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        rows = csv.DictReader(io.StringIO(text))
        return cls([PieceScore(float(r["precision"]), float(r["recall"]), float(r["f_measure"]),
                               int(r["tp"]), int(r["fp"]), int(r["fn"]), r["piece"], r["method"])
                    for r in rows])


def evaluate_corpus(pieces: Sequence[tuple], method: str = "") -> EvalReport:
    """Score ``(name, score, predicted, truth)`` tuples; rows are ordered by piece name."""
    if not pieces:
        raise ValueError("empty corpus")
    rows = []
    for name, score, predicted, truth in sorted(pieces, key=lambda t: t[0]):
        s = f_measure(predicted, truth, score)
        rows.append(PieceScore(s.precision, s.recall, s.f_measure, s.tp, s.fp, s.fn, name, method))
    return EvalReport(rows)


def match_external(score, notes: Iterable[tuple[int, Fraction]], resolution: int = 8) -> set[int]:
    """Ids of ``score`` notes equal to ``(pitch, onset_beats)`` pairs after onset quantization."""
    from .pianoroll import note_columns

    wanted = {(int(p), note_columns(o, Fraction(1, resolution))[0]) for p, o in notes}
    return {n.id for n in score.notes if (n.pitch, note_columns(n.onset, n.duration)[0]) in wanted}
