import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melodyid.melody_select import (ALPHA, OMEGA, build_melograph, cluster_threshold,
                                    extract_melody, path_weight, retain, shortest_path_melody)
from melodyid.score_io import Note, Score

from conftest import random_score
from oracles import all_paths, best_path, single_linkage_two_clusters


def notes_of(*rows):
    return [Note(i, p, Fraction(o), Fraction(d)) for i, (p, o, d) in enumerate(rows)]


# --- thresholding -----------------------------------------------------------

def test_threshold_example():
    t = cluster_threshold([0.9, 0.1, 0.8, 0.2])
    assert t.value == 0.2
    assert t.low_cluster == (0.1, 0.2)
    assert t.high_cluster == (0.8, 0.9)


def test_threshold_degenerate():
    t = cluster_threshold([0.5, 0.5, 0.5])
    assert t.degenerate and t.value < 0.5
    assert retain({0: 0.5, 1: 0.5, 2: 0.5}, t) == {0, 1, 2}
    t1 = cluster_threshold([0.7])
    assert t1.value < 0.7 and t1.keeps(0.7)
    with pytest.raises(ValueError):
        cluster_threshold([])


def test_retain_is_strict():
    probs = {0: 0.2, 1: 0.8}
    assert retain(probs, cluster_threshold(probs.values())) == {1}


def test_threshold_ties_take_earliest_gap():
    # gaps 0.3, 0.3: the first gap is cut
    t = cluster_threshold([0.1, 0.4, 0.7])
    assert t.low_cluster == (0.1,)


def random_multiset(rng):
    n = int(rng.integers(2, 201))
    kind = rng.integers(3)
    if kind == 0:
        return rng.random(n)
    if kind == 1:  # coarse lattice: many duplicates and tied gaps
        return rng.integers(0, 8, n) / 8
    return np.concatenate([rng.random(n // 2) * 0.3, 0.6 + rng.random(n - n // 2) * 0.4])


def test_largest_gap_equals_single_linkage_oracle():
    rng = np.random.default_rng(0)
    for _ in range(60):
        vals = random_multiset(rng)
        t = cluster_threshold(vals)
        ref = single_linkage_two_clusters(vals)
        if ref is None:
            assert t.degenerate
        else:
            assert list(t.low_cluster) == ref[0]
            assert list(t.high_cluster) == ref[1]
            assert t.value == max(ref[0])


def test_scipy_single_linkage_cross_check():
    from scipy.cluster.hierarchy import fcluster, linkage

    rng = np.random.default_rng(1)
    for _ in range(50):
        vals = np.sort(rng.random(int(rng.integers(3, 60))))
        labels = fcluster(linkage(vals[:, None], method="single"), 2, criterion="maxclust")
        low = vals[labels == labels[0]]
        assert cluster_threshold(vals).value == low.max()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60))
def test_threshold_partitions_input(values):
    t = cluster_threshold(values)
    assert sorted(t.low_cluster + t.high_cluster) == sorted(values)
    assert all(t.keeps(v) for v in t.high_cluster)
    assert not any(t.keeps(v) for v in t.low_cluster)
    if t.low_cluster:
        assert t.value == max(t.low_cluster)


# --- graph construction ------------------------------------------------------

def test_chain_graph():
    notes = notes_of((60, 0, 1), (62, 1, 1), (64, 2, 1))
    g = build_melograph(notes, {0: 0.9, 1: 0.8, 2: 0.7})
    assert g.edges[ALPHA] == [(0, -0.9)]
    assert g.edges[0] == [(1, -0.8)]
    assert g.edges[1] == [(2, -0.7)]
    assert g.edges[2] == [(OMEGA, 0.5)]
    assert shortest_path_melody(g) == [0, 1, 2]
    assert math.isclose(path_weight(g, [0, 1, 2]), -1.9)


def test_simultaneous_start_notes():
    # a [0,1) and b [0,2); c at 1, d at 2
    notes = notes_of((70, 0, 1), (60, 0, 2), (72, 1, 1), (74, 2, 1))
    g = build_melograph(notes, {i: 0.9 for i in range(4)})
    assert {v for v, _ in g.edges[ALPHA]} == {0, 1}
    assert [v for v, _ in g.edges[0]] == [2]
    assert [v for v, _ in g.edges[1]] == [3]


def test_simultaneous_equal_spans_pick_higher_probability():
    notes = notes_of((60, 0, 1), (64, 0, 1))
    g = build_melograph(notes, {0: 0.9, 1: 0.6})
    assert shortest_path_melody(g) == [0]
    assert best_path(g)[1] == (0,)


def test_empty_graph():
    g = build_melograph([], {})
    assert g.edges[ALPHA] == [(OMEGA, 0.5)]
    assert shortest_path_melody(g) == []


def test_equal_weight_prefers_higher_pitch():
    notes = notes_of((60, 0, 1), (67, 0, 1), (64, 0, 1))
    g = build_melograph(notes, {0: 0.7, 1: 0.7, 2: 0.7})
    assert shortest_path_melody(g) == [1]


def test_dot_output():
    notes = notes_of((60, 0, 1), (62, 1, 1))
    dot = build_melograph(notes, {0: 0.5, 1: 0.25}).to_dot()
    assert dot.startswith("digraph")
    assert "alpha -> n0" in dot and "n1 -> omega" in dot


def random_graph(rng, n_max=12):
    s = random_score(rng, n_max=n_max, beats=6, grid=4)
    probs = {n.id: float(rng.choice([rng.random(), 0.5, 0.75])) for n in s.notes}
    return build_melograph(list(s.notes), probs)


def test_bellman_ford_matches_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(60):
        g = random_graph(rng)
        low, expect = best_path(g)
        got = shortest_path_melody(g)
        assert math.isclose(path_weight(g, got), low, abs_tol=1e-9)
        assert tuple(got) == expect


def test_graph_is_acyclic_and_paths_end_once_at_omega():
    rng = np.random.default_rng(3)
    for _ in range(30):
        g = random_graph(rng)
        onset = {n: g.notes[n].onset for n in g.notes}
        for u, v, _ in g.edge_list():
            if u != ALPHA and v != OMEGA:
                assert onset[v] >= g.notes[u].end > onset[u]
        # every complete path uses exactly one edge into the end node, so the
        # end node's constant shifts all path weights alike
        for p in all_paths(g):
            assert OMEGA not in p


# --- extraction --------------------------------------------------------------

def test_extract_cnn_example():
    s = Score.from_tuples([(60, 0, 1), (72, 0, 1)])
    assert extract_melody(s, {0: 0.2, 1: 0.8}, "cnn") == {1}


def test_extract_cnn_keeps_simultaneous():
    s = Score.from_tuples([(60, 0, 1), (72, 0, 1), (48, 0, 1), (50, 1, 1)])
    kept = extract_melody(s, {0: 0.9, 1: 0.95, 2: 0.1, 3: 0.15}, "cnn")
    assert kept == {0, 1}
    assert extract_melody(s, {0: 0.9, 1: 0.95, 2: 0.1, 3: 0.15}, "cnn_mono") == [1]


def test_extract_errors():
    s = Score.from_tuples([(60, 0, 1)])
    with pytest.raises(ValueError):
        extract_melody(s, {}, "cnn")
    with pytest.raises(ValueError):
        extract_melody(s, {0: 0.5}, "best")


def overlapping_pairs(notes):
    notes = sorted(notes, key=lambda n: n.onset)
    return sum(1 for a, b in zip(notes, notes[1:]) if b.onset < a.end)


def test_cnn_mono_monophonic_on_random_scores():
    rng = np.random.default_rng(4)
    for _ in range(100):
        s = random_score(rng, n_max=30)
        probs = {n.id: float(rng.random()) for n in s.notes}
        mel = extract_melody(s, probs, "cnn_mono")
        by_id = s.by_id()
        assert overlapping_pairs([by_id[i] for i in mel]) == 0
        assert set(mel) <= extract_melody(s, probs, "cnn")
