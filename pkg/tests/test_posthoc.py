import itertools

import pytest

from meltcause.dataset import VariableMeta
from meltcause.errors import DataError
from meltcause.fixtures import PUBLISHED_PAIR_CLUSTERS, published_pair_graphs
from meltcause.graph import CausalGraph, Link
from meltcause.posthoc import (
    common_and_specific,
    comparison_report,
    detect_feedback_pairs,
    lag_summary,
    pair_frequency,
)

VARS = tuple(VariableMeta(i, f"V{i}") for i in range(1, 13))

# published rows: frequency -> pairs
PUBLISHED = {
    6: [(5, 11)],
    5: [(3, 9), (8, 9)],
    4: [(1, 3), (8, 3)],
    3: [(3, 8), (8, 1)],
    2: [(1, 9), (3, 11), (4, 11), (5, 12), (9, 11), (10, 6), (10, 11), (12, 11)],
    1: [(1, 7), (1, 8), (3, 10), (4, 6), (4, 8), (5, 3), (5, 10), (6, 1), (6, 11), (8, 11), (9, 1), (10, 5)],
}


def _g(*links, unit=10.0):
    return CausalGraph(VARS, [Link(a, b, lag, 0.5, 0.01, *mark) for a, b, lag, *mark in links], unit)


def test_published_frequencies_reproduced():
    table = pair_frequency(published_pair_graphs())
    expected = {p: f for f, ps in PUBLISHED.items() for p in ps}
    assert table.counts() == expected
    lines = table.report().splitlines()[1:]
    assert lines == [f"{f} | " + ", ".join(f"({a}, {b})" for a, b in PUBLISHED[f]) for f in sorted(PUBLISHED, reverse=True)]
    assert sum(len(v) for v in PUBLISHED_PAIR_CLUSTERS.values()) == sum(r.count for r in table.rows)


def test_published_csv_row():
    csv = pair_frequency(published_pair_graphs()).to_csv().splitlines()
    assert csv[0] == "source,target,frequency,clusters,min_lag,max_lag"
    assert csv[1] == "5,11,6,0;1;2;3;5;6,3,4"


def test_common_pairs_from_published():
    common, specific = common_and_specific(published_pair_graphs(), min_common=4)
    assert common == [(5, 11), (3, 9), (8, 9), (1, 3), (8, 3)]
    assert specific[6] == [(5, 10), (9, 1)]
    assert not set(common) & {p for ps in specific.values() for p in ps}


def test_common_specific_edge_cases():
    same = {c: _g((1, 2, 1), (3, 4, 2)) for c in range(3)}
    assert common_and_specific(same)[1] == {}
    disjoint = {0: _g((1, 2, 1)), 1: _g((3, 4, 1))}
    common, specific = common_and_specific(disjoint)
    assert common == [] and specific == {0: [(1, 2)], 1: [(3, 4)]}
    with pytest.raises(ValueError):
        common_and_specific(same, min_common=1)


def test_empty_and_multi_lag():
    assert len(pair_frequency({0: _g(), 1: _g()})) == 0
    (row,) = pair_frequency({0: _g((1, 2, 1), (1, 2, 3))}).rows
    assert (row.count, row.min_lag, row.max_lag) == (1, 1, 3)


def test_order_invariance():
    graphs = published_pair_graphs()
    for perm in itertools.islice(itertools.permutations(graphs), 0, 50, 7):
        assert pair_frequency({c: graphs[c] for c in perm}) == pair_frequency(graphs)


def test_universe_mismatch():
    other = CausalGraph((VariableMeta(1, "other"),), [])
    with pytest.raises(DataError):
        pair_frequency({0: _g(), 1: other})


def test_lag_summary():
    s = lag_summary(published_pair_graphs(), (5, 11))
    assert s.min_lag == 3 and s.min_seconds == 30 and "at least 30 seconds" in s.describe()
    s = lag_summary({0: _g((1, 2, 1)), 1: _g((1, 2, 4))}, (1, 2))
    assert (s.min_lag, s.max_lag, s.per_cluster) == (1, 4, {0: [1], 1: [4]})
    s = lag_summary({0: _g((1, 2, 0))}, (1, 2))
    assert s.min_lag == s.max_lag == 0
    with pytest.raises(DataError):
        lag_summary({0: _g((1, 2, 1))}, (2, 1))


def test_feedback_pairs():
    fb = detect_feedback_pairs({0: _g((8, 3, 1), (3, 8, 2)), 1: _g((1, 2, 1)), 2: _g((4, 4, 1))})
    assert fb == {0: [(3, 8)], 1: [], 2: []}
    # in the table fixture, clusters 0 and 6 are not both-way for 3/8; cluster 1's 3->8 has no reverse
    fb = detect_feedback_pairs(published_pair_graphs())
    assert (3, 8) not in fb[0] and all(p[0] < p[1] for ps in fb.values() for p in ps)


def test_unoriented_and_conflict_links():
    g = {0: _g((1, 2, 0, "unoriented"), (3, 4, 0, "conflict"))}
    assert pair_frequency(g).counts() == {(3, 4): 1, (4, 3): 1}
    assert pair_frequency(g, include_unoriented=True).counts() == {(1, 2): 1, (2, 1): 1, (3, 4): 1, (4, 3): 1}


def test_report_text():
    text = comparison_report(published_pair_graphs(), min_common=4)
    assert text.startswith("Occurrence frequency | Causal pairs\n6 | (5, 11)\n")
    assert "5 -> 11: lag 3..4 steps, at least 30 seconds" in text
