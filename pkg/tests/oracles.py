"""Brute-force reference implementations used to derive expected values.

Everything here enumerates words with itertools and shares no code with the
package beyond reading alphabets, codes and transition tables.
"""

from __future__ import annotations

import itertools
import math


def words(alphabet, allowed, length):
    """All words of the given length whose consecutive pairs are allowed (no pruning)."""
    allowed = set(allowed)
    out = []
    for w in itertools.product(alphabet, repeat=length):
        if all((w[i], w[i + 1]) in allowed for i in range(length - 1)):
            out.append(w)
    return out


def triple_words(triple, length):
    x = triple.x
    return words(x.alphabet, x.transitions(), length)


def image(triple, word):
    return tuple(triple.code[a] for a in word)


def preimage_words(triple, w):
    return [u for u in triple_words(triple, len(w)) if image(triple, u) == tuple(w)]


def routable(triple, u, a, n):
    u = tuple(u)
    for v in preimage_words(triple, image(triple, u)):
        if v[0] == u[0] and v[-1] == u[-1] and v[n] == a:
            return True
    return False


def is_transition_block(triple, w, n, M):
    return all(any(routable(triple, u, a, n) for a in M) for u in preimage_words(triple, w))


def min_depth(triple, w, n):
    """Smallest |M| making (w, n, M) a transition block, by trying subsets in size order."""
    cands = sorted({u[n] for u in preimage_words(triple, w)})
    for size in range(1, len(cands) + 1):
        for M in itertools.combinations(cands, size):
            if is_transition_block(triple, w, n, M):
                return size
    return None


def markov_word_prob(alphabet, P, pi, word):
    idx = [alphabet.index(a) for a in word]
    p = pi[idx[0]]
    for a, b in zip(idx, idx[1:]):
        p *= P[a][b]
    return p


def nu_prob(triple, mu, w):
    alphabet = list(triple.x.alphabet)
    P = mu.transition.tolist()
    pi = mu.stationary.tolist()
    return sum(markov_word_prob(alphabet, P, pi, u) for u in preimage_words(triple, w))


def posterior(triple, mu, y):
    """Exact conditional law of the X-window given its image y."""
    alphabet = list(triple.x.alphabet)
    P = mu.transition.tolist()
    pi = mu.stationary.tolist()
    weights = {u: markov_word_prob(alphabet, P, pi, u) for u in preimage_words(triple, y)}
    total = sum(weights.values())
    return {u: v / total for u, v in weights.items() if v > 0}


def least_bridge(triple, w, start, end, n, a):
    """Lexicographically least (in alphabet order) preimage of w with fixed endpoints and a at n."""
    order = {s: i for i, s in enumerate(triple.x.alphabet)}
    cands = [u for u in preimage_words(triple, w) if u[0] == start and u[-1] == end and u[n] == a]
    return min(cands, key=lambda u: [order[s] for s in u]) if cands else None


def binary_entropy(p):
    return -sum(q * math.log(q) for q in (p, 1 - p) if q > 0)


def bridgeable(triple, u, v):
    w = image(triple, u)
    pre = preimage_words(triple, w)
    one = any(c[0] == u[0] and c[-1] == v[-1] for c in pre)
    two = any(c[0] == v[0] and c[-1] == u[-1] for c in pre)
    return one and two
