"""Hybrid integration of four per-test adjacencies.

A link is kept when all of the first three tests found it, or when the
fourth (nearest-neighbour CMI) test found it. Pairs that end up linked in
both directions at one lag keep the fourth test's direction.
"""
from __future__ import annotations

import math

from dataclasses import dataclass, field, replace

from .errors import DataError
from .graph import LaggedAdjacency, LinkInfo

CONSENSUS, W4, BOTH = "consensus", "w4", "both"


@dataclass
class HybridResult:
    matrix: LaggedAdjacency
    link_provenance: dict[tuple[int, int, int], str]
    resolved_conflicts: list[tuple[tuple[int, int], int, object]] = field(default_factory=list)
    tie_breaks: list[tuple[tuple[int, int], int]] = field(default_factory=list)


def integrate(w1: LaggedAdjacency, w2: LaggedAdjacency, w3: LaggedAdjacency, w4: LaggedAdjacency) -> HybridResult:
    """``(w1 & w2 & w3) | w4`` over ``(source, target, lag)`` triples.

    Strength and p-value come from ``w4`` when it holds the link, otherwise
    they are the means over ``w1..w3``.
    """
    for w in (w2, w3, w4):
        if not w1.same_universe(w):
            raise DataError("hybrid inputs must share the variable set and tau_max")
    consensus = w1.keys() & w2.keys() & w3.keys()
    out = LaggedAdjacency(w4.variables, w4.tau_max)
    prov = {}
    for key in sorted(consensus | w4.keys()):
        in_c, in_4 = key in consensus, key in w4
        if in_4:
            info = w4[key]
        else:
            infos = [w[key] for w in (w1, w2, w3)]
            marks = {i.mark for i in infos}
            info = LinkInfo(
                # fsum is exactly rounded, so the mean does not depend on input order
                math.fsum(i.strength for i in infos) / 3.0,
                math.fsum(i.p_value for i in infos) / 3.0,
                marks.pop() if len(marks) == 1 else "conflict",
            )
        label = BOTH if in_c and in_4 else (W4 if in_4 else CONSENSUS)
        # keys come from validated inputs with the same universe
        out.entries[key] = LinkInfo(info.strength, info.p_value, info.mark, info.statistic, label)
        prov[key] = label
    return HybridResult(out, prov)


def resolve_bidirectional(h: HybridResult, w4: LaggedAdjacency) -> HybridResult:
    """Keep one direction for every pair linked both ways at the same lag.

    The direction present in ``w4`` wins. If ``w4`` has neither direction
    the stronger one is kept and recorded in ``tie_breaks``; if ``w4`` has
    both, both stay and are marked ``conflict`` (``unoriented`` if ``w4``
    itself left the edge unoriented). An undirected lag-0 edge that only the
    consensus found is left as it is.
    """
    m = h.matrix.copy()
    prov = dict(h.link_provenance)
    resolved = list(h.resolved_conflicts)
    ties = list(h.tie_breaks)
    for (i, j, tau) in sorted(m.keys()):
        if i >= j or (j, i, tau) not in m or (i, j, tau) not in m:
            continue
        fwd, bwd = (i, j, tau), (j, i, tau)
        in4 = (fwd in w4, bwd in w4)
        if in4 == (True, True):
            both_unoriented = tau == 0 and w4[fwd].mark == "unoriented" and w4[bwd].mark == "unoriented"
            mark = "unoriented" if both_unoriented else "conflict"
            if tau == 0:
                m.add(*fwd, replace(m[fwd], mark=mark))
                m.add(*bwd, replace(m[bwd], mark=mark))
            if ((i, j), tau, mark) not in resolved:
                resolved.append(((i, j), tau, mark))
            continue
        if in4 == (True, False):
            keep, drop = fwd, bwd
        elif in4 == (False, True):
            keep, drop = bwd, fwd
        elif tau == 0 and m[fwd].mark != "directed" and m[bwd].mark != "directed":
            # one undirected consensus edge, not a pair of opposing arrows
            continue
        else:
            keep, drop = (fwd, bwd) if abs(m[fwd].strength) >= abs(m[bwd].strength) else (bwd, fwd)
            ties.append(((keep[0], keep[1]), tau))
        m.remove(*drop)
        prov.pop(drop, None)
        m.add(*keep, replace(m[keep], mark="directed"))
        resolved.append(((i, j), tau, (keep[0], keep[1])))
    return HybridResult(m, prov, resolved, ties)


def hybrid(w1, w2, w3, w4) -> HybridResult:
    return resolve_bidirectional(integrate(w1, w2, w3, w4), w4)
