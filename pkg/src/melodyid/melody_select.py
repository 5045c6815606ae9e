"""From note probabilities to a melody.

Two outputs are produced. ``cnn`` keeps every note whose probability lies
above a per-piece threshold found by two-cluster single-linkage clustering.
``cnn_mono`` additionally runs a shortest-path search over a digraph of the
kept notes, which yields a strictly monophonic line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .score_io import Note, Score

__all__ = [
    "Threshold",
    "MeloDigraph",
    "ALPHA",
    "OMEGA",
    "OMEGA_PROBABILITY",
    "cluster_threshold",
    "retain",
    "build_melograph",
    "bellman_ford",
    "shortest_path_melody",
    "extract_melody",
    "path_weight",
]

ALPHA = -1
OMEGA = -2
OMEGA_PROBABILITY = -0.5
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Threshold:
    value: float
    low_cluster: tuple[float, ...]
    high_cluster: tuple[float, ...]

    @property
    def degenerate(self) -> bool:
        return not self.low_cluster

    def keeps(self, p: float) -> bool:
        return p > self.value


def cluster_threshold(probs: Iterable[float]) -> Threshold:
    """Split note probabilities into two single-linkage clusters.

    For scalars, cutting the single-linkage dendrogram at two clusters is the
    same as splitting the sorted values at their widest adjacent gap (the
    earliest one on ties). The threshold is the largest value of the lower
    cluster. With fewer than two distinct values the threshold is placed just
    below the minimum so that every note is kept.
    """
    values = np.sort(np.asarray(list(probs), dtype=np.float64))
    if values.size == 0:
        raise ValueError("cannot threshold an empty set of probabilities")
    gaps = np.diff(values)
    if values.size == 1 or gaps.max() <= 0:
        return Threshold(float(np.nextafter(values[0], -np.inf)), (), tuple(values.tolist()))
    cut = int(np.argmax(gaps))  # argmax returns the first maximal gap
    return Threshold(float(values[cut]), tuple(values[:cut + 1].tolist()),
                     tuple(values[cut + 1:].tolist()))


def retain(note_probs: Mapping[int, float], threshold: Threshold) -> set[int]:
    """Ids of notes above the threshold (all of them for a degenerate split)."""
    return {nid for nid, p in note_probs.items() if threshold.keeps(p)}


@dataclass
class MeloDigraph:
    """Digraph over kept notes plus start/end sentinels.

    ``edges[u]`` lists ``(v, weight)`` with ``weight = -probability(v)``.
    """

    notes: dict[int, Note]
    probs: dict[int, float]
    edges: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    @property
    def nodes(self) -> list[int]:
        return [ALPHA, *self.notes, OMEGA]

    def edge_list(self) -> list[tuple[int, int, float]]:
        return [(u, v, w) for u, out in self.edges.items() for v, w in out]

    def pitch(self, node: int) -> int:
        return self.notes[node].pitch if node in self.notes else -1

    def to_dot(self) -> str:
        lines = ["digraph melograph {", '  rankdir=LR;',
                 f'  {_dot_id(ALPHA)} [label="start" shape=circle];',
                 f'  {_dot_id(OMEGA)} [label="end" shape=circle];']
        for nid, n in self.notes.items():
            lines.append(f'  {_dot_id(nid)} [label="{nid}\\np={self.probs[nid]:.3f}" shape=box];')
        for u, v, w in self.edge_list():
            lines.append(f'  {_dot_id(u)} -> {_dot_id(v)} [label="{w:.3f}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _dot_id(node: int) -> str:
    return {ALPHA: "alpha", OMEGA: "omega"}.get(node, f"n{node}")


def build_melograph(notes: Sequence[Note], probs: Mapping[int, float]) -> MeloDigraph:
    """Connect every node to the kept notes starting earliest at or after its end.

    The start node ends at time 0. A node with no such note connects to the
    end node, whose incoming edges weigh ``+0.5``. Nodes unreachable from the
    start node are kept in the graph.
    """
    ordered = sorted(notes, key=lambda n: (n.onset, -n.pitch, n.id))
    onsets = [n.onset for n in ordered]
    g = MeloDigraph({n.id: n for n in ordered}, {n.id: float(probs[n.id]) for n in ordered})

    def successors(end: Fraction) -> list[tuple[int, float]]:
        # notes are sorted by onset: the first with onset >= end fixes the group
        lo = _bisect_left(onsets, end)
        if lo == len(ordered):
            return [(OMEGA, -OMEGA_PROBABILITY)]
        first = ordered[lo].onset
        out = []
        for n in ordered[lo:]:
            if n.onset != first:
                break
            out.append((n.id, -g.probs[n.id]))
        return out

    g.edges[ALPHA] = successors(Fraction(0))
    for n in ordered:
        g.edges[n.id] = successors(n.end)
    g.edges[OMEGA] = []
    return g


def _bisect_left(seq, x) -> int:
    lo, hi = 0, len(seq)
    while lo < hi:
        mid = (lo + hi) // 2
        if seq[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def bellman_ford(g: MeloDigraph, source: int = ALPHA) -> dict[int, float]:
    """Single-source shortest distances; raises on a negative cycle."""
    dist = {v: math.inf for v in g.nodes}
    dist[source] = 0.0
    edges = g.edge_list()
    for _ in range(len(dist) - 1):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            return dist
    for u, v, w in edges:
        if dist[u] + w < dist[v]:
            raise RuntimeError("negative cycle in melody graph")
    return dist


def shortest_path_melody(g: MeloDigraph) -> list[int]:
    """Note ids on the minimum-weight start-to-end path, in time order.

    Among equal-weight paths, the one whose first differing note is higher
    (then lower id) wins.
    """
    dist = bellman_ford(g)
    if math.isinf(dist[OMEGA]):
        raise RuntimeError("end node unreachable from start node")
    # nodes lying on some optimal path: walk tight edges backwards from the end
    preds: dict[int, list[int]] = {}
    for u, v, w in g.edge_list():
        if not math.isinf(dist[u]) and abs(dist[u] + w - dist[v]) <= TIE_TOL:
            preds.setdefault(v, []).append(u)
    on_path = {OMEGA}
    stack = [OMEGA]
    while stack:
        for u in preds.get(stack.pop(), []):
            if u not in on_path:
                on_path.add(u)
                stack.append(u)
    melody = []
    node = ALPHA
    while node != OMEGA:
        options = [v for v, w in g.edges[node]
                   if v in on_path and abs(dist[node] + w - dist[v]) <= TIE_TOL]
        node = max(options, key=lambda v: (g.pitch(v), -v) if v != OMEGA else (-2, 0))
        if node != OMEGA:
            melody.append(node)
    return melody


def path_weight(g: MeloDigraph, path: Sequence[int]) -> float:
    """Total weight of ``ALPHA -> path... -> OMEGA``."""
    nodes = [ALPHA, *path, OMEGA]
    total = 0.0
    for u, v in zip(nodes, nodes[1:]):
        total += dict(g.edges[u])[v]
    return total


def extract_melody(score: Score, note_probs: Mapping[int, float], mode: str = "cnn_mono"):
    """``cnn``: set of kept note ids; ``cnn_mono``: time-ordered monophonic id list."""
    missing = score.ids - set(note_probs)
    if missing:
        raise ValueError(f"no probability for notes {sorted(missing)[:10]}")
    if mode not in ("cnn", "cnn_mono"):
        raise ValueError(f"unknown mode {mode!r}")
    kept = retain({n.id: note_probs[n.id] for n in score.notes}, cluster_threshold(
        [note_probs[n.id] for n in score.notes])) if score.notes else set()
    if mode == "cnn":
        return kept
    notes = [n for n in score.notes if n.id in kept]
    return shortest_path_melody(build_melograph(notes, note_probs))
