import itertools

import numpy as np
import pytest

from adjgen import random_quadruple, strip, two_node, two_node_cases, variables
from meltcause.errors import DataError
from meltcause.graph import LaggedAdjacency, LinkInfo
from meltcause.hybrid import hybrid, integrate, resolve_bidirectional


def _adj(links, n=4, tau_max=2):
    adj = LaggedAdjacency(variables(n), tau_max)
    for i, j, tau, *s in links:
        adj.add(i, j, tau, LinkInfo(s[0] if s else 0.5, 0.01))
    return adj


def test_identical_inputs():
    w = random_quadruple(np.random.default_rng(0))[0]
    h = integrate(w, w, w, w)
    assert strip(h.matrix) == strip(w)
    assert set(h.link_provenance.values()) <= {"both"} and len(h.link_provenance) == len(w)


def test_consensus_plus_w4():
    w1 = _adj([(0, 1, 1), (2, 3, 2)])
    w2 = _adj([(0, 1, 1), (2, 3, 2)])
    w3 = _adj([(0, 1, 1)])
    w4 = _adj([(2, 3, 0)])
    h = integrate(w1, w2, w3, w4)
    assert h.matrix.keys() == {(0, 1, 1), (2, 3, 0)}
    assert h.link_provenance == {(0, 1, 1): "consensus", (2, 3, 0): "w4"}
    assert (2, 3, 2) not in h.matrix


def test_strength_rules():
    w1, w2, w3 = (_adj([(0, 1, 1, s)]) for s in (0.2, 0.4, 0.9))
    h = integrate(w1, w2, w3, _adj([]))
    assert h.matrix[(0, 1, 1)].strength == pytest.approx(0.5)
    h = integrate(w1, w2, w3, _adj([(0, 1, 1, 0.7)]))
    assert h.matrix[(0, 1, 1)].strength == 0.7 and h.link_provenance[(0, 1, 1)] == "both"


def test_universe_mismatch():
    with pytest.raises(DataError):
        integrate(_adj([]), _adj([]), _adj([]), _adj([], tau_max=3))
    with pytest.raises(DataError):
        integrate(_adj([]), _adj([]), _adj([], n=3), _adj([]))


def test_consensus_union_w4_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        w = random_quadruple(rng)
        h = integrate(*w)
        consensus = w[0].keys() & w[1].keys() & w[2].keys()
        assert h.matrix.keys() == consensus | w[3].keys()
        for perm in itertools.permutations(w[:3]):
            assert integrate(*perm, w[3]).matrix == h.matrix
        assert strip(integrate(h.matrix, h.matrix, h.matrix, h.matrix).matrix) == strip(h.matrix)


def test_w4_direction_kept():
    h = hybrid(
        *(_adj([(0, 1, 0, 0.9), (1, 0, 0, 0.3)]) for _ in range(3)),
        _adj([(1, 0, 0, 0.3)]),
    )
    assert h.matrix.keys() == {(1, 0, 0)}
    assert h.resolved_conflicts == [((0, 1), 0, (1, 0))] and h.tie_breaks == []


def test_no_bidirectional_unchanged():
    w = [_adj([(0, 1, 1), (2, 3, 0)]) for _ in range(4)]
    h = integrate(*w)
    r = resolve_bidirectional(h, w[3])
    assert r.matrix == h.matrix and r.resolved_conflicts == []


def test_tie_break_by_strength():
    c = _adj([(0, 1, 1, 0.9), (1, 0, 1, 0.3)])
    h = hybrid(c, c, c, _adj([]))
    assert h.matrix.keys() == {(0, 1, 1)} and h.tie_breaks == [((0, 1), 1)]


def test_w4_both_directions_conflict():
    w4 = _adj([(0, 1, 0), (1, 0, 0)])
    h = hybrid(_adj([]), _adj([]), _adj([]), w4)
    assert h.matrix.keys() == {(0, 1, 0), (1, 0, 0)}
    assert h.matrix[(0, 1, 0)].mark == "conflict"


def test_exhaustive_two_node():
    n = 0
    for w in two_node_cases():
        h = integrate(*w)
        assert w[3].keys() <= h.matrix.keys()
        r = resolve_bidirectional(h, w[3])
        assert w[3].keys() <= r.matrix.keys()
        for (i, j, tau) in r.matrix.keys():
            if (j, i, tau) in r.matrix.keys() and i != j:
                both4 = (i, j, tau) in w[3] and (j, i, tau) in w[3]
                undirected = tau == 0 and r.matrix[(i, j, tau)].mark != "directed"
                assert both4 or undirected
        again = resolve_bidirectional(r, w[3])
        assert again.matrix == r.matrix and again.link_provenance == r.link_provenance
        assert again.resolved_conflicts == r.resolved_conflicts
        n += 1
    assert n == 20 * 20 * 2 + 5**4


def test_strength_fallback_exhaustive():
    for strengths in ((0.9, 0.3), (0.3, 0.9)):
        c = two_node("none", ((0, 1, 1), (1, 0, 1)), strengths)
        r = hybrid(c, c, c, two_node("none", ()))
        winner = (0, 1, 1) if strengths[0] > strengths[1] else (1, 0, 1)
        assert r.matrix.keys() == {winner}
