"""Routability, transition blocks, and the class degree of a measure.

An X-word ``u`` with image ``w`` is routable through ``a`` at time ``n`` when
some X-word with image ``w`` has the same first and last symbols as ``u``
and the symbol ``a`` at position ``n``.  Routability therefore only depends
on the endpoints of ``u``, and everything below works on the layered graph
of preimage symbols of ``w``: forward reachability from the first layer and
backward reachability from the last.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    IllegalWord,
    IndexOutOfRange,
    NotFoundWithinBound,
    NotRoutable,
    NotUnique,
    PeriodTooLarge,
    ResourceLimit,
    SymbolMismatch,
    ValidationError,
)
from .measures import MarkovMeasure, PushforwardMeasure, word_probability
from .shift_core import FactorTriple, max_blocks

DEFAULT_LMAX = 6
MAX_ORACLE_PERIOD = 64


@dataclass(frozen=True, eq=False)
class Reach:
    """Layered reachability for one Y-word.

    ``forward[i][s, a]``: a path over the first i+1 layers starts at s and is
    at a at time i.  ``backward[i][a, e]``: a path from a at time i reaches e
    in the last layer.
    """

    w: tuple
    masks: np.ndarray
    forward: tuple
    backward: tuple

    @property
    def ends(self) -> np.ndarray:
        """Endpoint pairs (s, e) realised by some preimage of w."""
        return self.forward[-1]

    def routes(self, n: int) -> np.ndarray:
        """Boolean array ``[s, e, a]``: endpoints (s, e) can route through a at time n."""
        return self.forward[n][:, None, :] & self.backward[n].T[None, :, :] & self.ends[:, :, None]


@lru_cache(maxsize=4096)
def _reach_cached(triple: FactorTriple, w: tuple) -> Reach:
    masks = triple.layer_masks(np.array(w, dtype=np.int64))
    L = len(w)
    adj = triple.x.adjacency.astype(np.int64)
    steps = [adj * masks[i][:, None] * masks[i + 1][None, :] for i in range(L - 1)]
    fwd = [np.diag(masks[0]).astype(np.int64)]
    for S in steps:
        fwd.append(((fwd[-1] @ S) > 0).astype(np.int64))
    bwd = [np.diag(masks[-1]).astype(np.int64)]
    for S in reversed(steps):
        bwd.append(((S @ bwd[-1]) > 0).astype(np.int64))
    bwd.reverse()
    return Reach(
        w=w,
        masks=masks,
        forward=tuple(f.astype(bool) for f in fwd),
        backward=tuple(b.astype(bool) for b in bwd),
    )


def reach(triple: FactorTriple, w) -> Reach:
    """Reachability tables for the Y-word ``w`` (symbols or an index array)."""
    if isinstance(w, np.ndarray):
        key = tuple(int(i) for i in w)
    else:
        key = tuple(int(i) for i in triple.encode_y(w))
    if not key:
        raise ValidationError("empty Y-word")
    return _reach_cached(triple, key)


@dataclass(frozen=True)
class RoutingTable:
    """Certificate: for each preimage of w, the members of M it routes through at time n."""

    entries: dict

    def __len__(self):
        return len(self.entries)

    def to_dict(self) -> dict:
        return {" ".join(map(str, u)): list(m) for u, m in self.entries.items()}


@dataclass(frozen=True)
class TransitionBlock:
    w: tuple
    n: int
    M: tuple
    certificate: RoutingTable | None = field(default=None, compare=False)

    @property
    def depth(self) -> int:
        return len(self.M)

    def to_dict(self) -> dict:
        out = {"depth": self.depth, "w": list(self.w), "n": self.n, "M": list(self.M)}
        if self.certificate is not None:
            out["certificate_size"] = len(self.certificate)
        return out


def routable(triple: FactorTriple, u, a, n: int) -> bool:
    """Whether the X-word ``u`` is routable through symbol ``a`` at time ``n``."""
    u_idx = triple.x.check_legal(u)
    if not 0 <= n < len(u_idx):
        raise IndexOutOfRange(f"time {n} outside [0, {len(u_idx)})")
    a_idx = triple.x.index(a)
    if triple.code_index[a_idx] != triple.code_index[u_idx[n]]:
        raise SymbolMismatch(f"{a!r} does not project to the image of u at time {n}")
    r = reach(triple, triple.code_index[u_idx])
    return bool(r.forward[n][u_idx[0], a_idx] and r.backward[n][a_idx, u_idx[-1]])


def _check_block_args(triple, w, n, M):
    w_idx = triple.encode_y(w)
    if not 0 <= n < len(w_idx):
        raise IndexOutOfRange(f"time {n} outside [0, {len(w_idx)})")
    if not M:
        raise ValidationError("M must be nonempty")
    m_idx = [triple.x.index(a) for a in M]
    for a, i in zip(M, m_idx):
        if triple.code_index[i] != w_idx[n]:
            raise SymbolMismatch(f"{a!r} does not project to w[{n}]")
    if not triple.y_is_legal(w):
        raise IllegalWord(f"{tuple(w)!r} is not in the language of Y")
    return w_idx, m_idx


def is_transition_block(triple: FactorTriple, w, n: int, M) -> bool:
    """Every preimage of ``w`` is routable through some member of ``M`` at time ``n``."""
    w_idx, m_idx = _check_block_args(triple, w, n, M)
    routes = reach(triple, w_idx).routes(n)
    ends = reach(triple, w_idx).ends
    covered = routes[:, :, m_idx].any(axis=2)
    return bool(np.all(covered | ~ends))


def _hitting_sets(r: Reach, n: int):
    """Sets S_(s,e) of routing symbols, one per realised endpoint pair."""
    routes = r.routes(n)
    ss, es = np.nonzero(r.ends)
    return [frozenset(np.flatnonzero(routes[s, e]).tolist()) for s, e in zip(ss, es)]


def _min_hitting_set(sets, candidates) -> tuple:
    """Smallest subset of ``candidates`` meeting every set; first in combination order.

    A greedy cover gives an upper bound; every smaller size is then checked
    exhaustively.
    """
    remaining = list(sets)
    greedy = []
    while remaining:
        best = max(candidates, key=lambda a: (sum(a in s for s in remaining), -candidates.index(a)))
        greedy.append(best)
        remaining = [s for s in remaining if best not in s]
    best_set = tuple(sorted(greedy))
    for size in range(1, len(best_set)):
        for combo in itertools.combinations(candidates, size):
            cs = set(combo)
            if all(s & cs for s in sets):
                return combo
    for combo in itertools.combinations(candidates, len(best_set)):
        cs = set(combo)
        if all(s & cs for s in sets):
            return combo
    return best_set


def min_depth_at(triple: FactorTriple, w_idx, n: int) -> tuple:
    """Index tuple of a minimum-size M making (w, n, M) a transition block."""
    r = reach(triple, np.asarray(w_idx))
    sets = _hitting_sets(r, n)
    candidates = sorted(set().union(*sets)) if sets else []
    if not candidates:
        raise IllegalWord("w has no preimage")
    return _min_hitting_set(sets, candidates)


def preimages(triple: FactorTriple, w_idx, cap: int | None = None) -> list:
    """All X-words (index tuples) projecting to ``w_idx``, lexicographic."""
    cap = max_blocks() if cap is None else cap
    r = reach(triple, np.asarray(w_idx))
    L = len(r.w)
    alive = [r.masks[i] & r.backward[i].any(axis=1) for i in range(L)]
    out = []

    def extend(prefix):
        if len(out) > cap:
            raise ResourceLimit(f"more than {cap} preimages")
        i = len(prefix)
        if i == L:
            out.append(tuple(prefix))
            return
        cand = np.flatnonzero(alive[i] & (triple.x.adjacency[prefix[-1]] if prefix else True))
        for c in cand.tolist():
            prefix.append(c)
            extend(prefix)
            prefix.pop()

    extend([])
    return out


def routing_table(triple: FactorTriple, tb: TransitionBlock, cap: int | None = None) -> RoutingTable:
    w_idx = triple.encode_y(tb.w)
    r = reach(triple, w_idx)
    m_idx = [triple.x.index(a) for a in tb.M]
    entries = {}
    for u in preimages(triple, w_idx, cap):
        through = tuple(
            triple.x.alphabet[a] for a in m_idx if r.forward[tb.n][u[0], a] and r.backward[tb.n][a, u[-1]]
        )
        entries[triple.x.decode(u)] = through
    return RoutingTable(entries)


def minimal_transition_block(triple: FactorTriple, nu: PushforwardMeasure, lmax: int = DEFAULT_LMAX,
                             certificate: bool = True) -> TransitionBlock:
    """A transition block of least depth among those with ν(w) > 0 and |w| <= lmax.

    Search order: increasing |w|, lexicographic w, increasing n; the first
    block reaching the overall minimum depth is returned.
    """
    if lmax < 1:
        raise ValidationError("lmax must be at least 1")
    ny = len(triple.y_alphabet)
    best = None
    for L in range(1, lmax + 1):
        if ny**L > max_blocks():
            raise ResourceLimit(f"{ny ** L} Y-words of length {L} exceed the enumeration cap")
        for w in itertools.product(range(ny), repeat=L):
            w_arr = np.array(w, dtype=np.int64)
            if not nu.is_positive(w_arr):
                continue
            for n in range(L):
                M = min_depth_at(triple, w_arr, n)
                if best is None or len(M) < len(best[2]):
                    best = (w, n, M)
                    if len(M) == 1:
                        break
            if best is not None and len(best[2]) == 1:
                break
        if best is not None and len(best[2]) == 1:
            break
    if best is None:
        raise NotFoundWithinBound(f"no Y-word of length <= {lmax} has positive measure")
    w, n, M = best
    tb = TransitionBlock(w=triple.decode_y(w), n=n, M=tuple(triple.x.alphabet[a] for a in M))
    if certificate:
        tb = TransitionBlock(tb.w, tb.n, tb.M, routing_table(triple, tb))
    return tb


def class_degree_of_measure(triple: FactorTriple, nu: PushforwardMeasure, lmax: int = DEFAULT_LMAX) -> int:
    return minimal_transition_block(triple, nu, lmax, certificate=False).depth


def unique_routing_symbol(triple: FactorTriple, mu: MarkovMeasure, tb: TransitionBlock, u):
    """The single member of M through which ``u`` routes at time ``tb.n``."""
    u = tuple(u)
    if tuple(triple.code[a] for a in u) != tuple(tb.w):
        raise SymbolMismatch("u does not project to the block's word")
    if word_probability(mu, u) <= 0:
        raise ValidationError("u has zero measure")
    hits = [a for a in tb.M if routable(triple, u, a, tb.n)]
    if not hits:
        raise NotRoutable(f"{u!r} routes through no member of {tb.M!r}")
    if len(hits) > 1:
        raise NotUnique(f"{u!r} routes through {hits!r}")
    return hits[0]


# ---------------------------------------------------------------------------
# periodic-point oracle


def period_graph(triple: FactorTriple, y) -> np.ndarray:
    """Transfer relation over one period of y: s -> t when a fiber path runs from s to t."""
    y_idx = triple.encode_y(y) if not isinstance(y, np.ndarray) else y
    looped = np.concatenate([y_idx, y_idx[:1]])
    r = reach(triple, looped)
    return r.forward[-1].copy()


def _nontrivial_sccs(G: np.ndarray) -> list:
    ncomp, labels = connected_components(csr_matrix(G.astype(np.int8)), directed=True, connection="strong")
    out = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        if len(members) > 1 or G[members[0], members[0]]:
            out.append(members)
    return out


def _scc_period(G: np.ndarray, members: np.ndarray) -> int:
    sub = G[np.ix_(members, members)]
    level = {0: 0}
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.flatnonzero(sub[i]).tolist():
                if j in level:
                    g = math.gcd(g, abs(level[i] + 1 - level[j]))
                else:
                    level[j] = level[i] + 1
                    nxt.append(j)
        frontier = nxt
    return g


def _bool_power(G: np.ndarray, k: int) -> np.ndarray:
    result = np.eye(G.shape[0], dtype=bool)
    base = G.copy()
    while k:
        if k & 1:
            result = (result.astype(np.int64) @ base.astype(np.int64)) > 0
        base = (base.astype(np.int64) @ base.astype(np.int64)) > 0
        k >>= 1
    return result


def count_transition_classes_periodic(triple: FactorTriple, y) -> int:
    """Number of transition classes over the periodic point y^∞ (brute-force oracle).

    Fiber points over y^∞ are bi-infinite walks in the one-period transfer
    graph G.  Mutual splicing in both directions forces two points to share
    their eventual strongly connected component and their cyclic phase in
    it, and any two such points do splice.  Raising G to the lcm of the
    component periods separates the phases; the class count is the number
    of nontrivial components of that power, which is checked to be stable
    under one more doubling.
    """
    y = tuple(y)
    if not y:
        raise ValidationError("empty period")
    if len(y) > MAX_ORACLE_PERIOD:
        raise PeriodTooLarge(f"period {len(y)} exceeds {MAX_ORACLE_PERIOD}")
    G = period_graph(triple, np.asarray(triple.encode_y(y)))
    sccs = _nontrivial_sccs(G)
    if not sccs:
        raise IllegalWord(f"{y!r} repeated forever is not a point of Y")
    periods = [_scc_period(G, m) for m in sccs]
    K = math.lcm(*periods)
    if K > MAX_ORACLE_PERIOD:
        raise PeriodTooLarge(f"fiber phases need a power {K} > {MAX_ORACLE_PERIOD}")
    count = len(_nontrivial_sccs(_bool_power(G, K)))
    if count != len(_nontrivial_sccs(_bool_power(G, 2 * K))) or count != sum(periods):
        raise PeriodTooLarge("class count did not stabilise")
    return count
