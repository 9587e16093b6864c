"""Small factor triples used throughout the tests and the examples in the README.

``t1``        full 2-shift on {A, B} collapsed onto the single letter b.
``identity``  golden mean shift with the identity code.
``t3``        two disjoint full 2-shifts {a1, b1} and {a2, b2} read as a, b.
``two_cycle`` the period-2 orbit (ab)^∞ collapsed onto a fixed point: degree 2.
``full3``     full 3-shift with 1 and 2 merged.
"""

from __future__ import annotations

import itertools

from .measures import MarkovMeasure, PushforwardMeasure, bernoulli
from .shift_core import FactorTriple, build_sft, full_shift, make_triple


def golden_mean():
    return build_sft("01", [("0", "0"), ("0", "1"), ("1", "0")])


def t1() -> FactorTriple:
    return make_triple(full_shift("AB"), {"A": "b", "B": "b"}, name="T1")


def identity() -> FactorTriple:
    return make_triple(golden_mean(), {"0": "0", "1": "1"}, name="identity")


def t3() -> FactorTriple:
    comp1 = list(itertools.product(["a1", "b1"], repeat=2))
    comp2 = list(itertools.product(["a2", "b2"], repeat=2))
    x = build_sft(["a1", "b1", "a2", "b2"], comp1 + comp2)
    return make_triple(x, {"a1": "a", "b1": "b", "a2": "a", "b2": "b"}, name="T3")


def two_cycle() -> FactorTriple:
    x = build_sft("ab", [("a", "b"), ("b", "a")])
    return make_triple(x, {"a": "c", "b": "c"}, name="two_cycle")


def full3() -> FactorTriple:
    return make_triple(full_shift("012"), {"0": "p", "1": "q", "2": "q"}, name="full3")


def t3_symmetric_measure(triple: FactorTriple | None = None, p_a: float = 0.5) -> MarkovMeasure:
    """Half weight on each component, i.i.d. inside it; the image is Bernoulli on {a, b}."""
    triple = t3() if triple is None else triple
    x = triple.x
    n = x.size
    P = [[0.0] * n for _ in range(n)]
    for i, s in enumerate(x.alphabet):
        comp = s[1]
        for j, t in enumerate(x.alphabet):
            if t[1] == comp:
                P[i][j] = p_a if t[0] == "a" else 1 - p_a
    stationary = [0.5 * (p_a if s[0] == "a" else 1 - p_a) for s in x.alphabet]
    return MarkovMeasure(x, P, stationary)


def two_cycle_measure(triple: FactorTriple | None = None) -> MarkovMeasure:
    triple = two_cycle() if triple is None else triple
    return MarkovMeasure(triple.x, [[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])


def corpus() -> dict:
    """Name -> (triple, a measure on X whose pushforward is used as ν)."""
    from .measures import parry_measure

    out = {}
    tr = t1()
    out["T1"] = (tr, bernoulli(tr.x, [0.3, 0.7]))
    tr = identity()
    out["identity"] = (tr, parry_measure(tr.x))
    tr = t3()
    out["T3"] = (tr, t3_symmetric_measure(tr))
    tr = two_cycle()
    out["two_cycle"] = (tr, two_cycle_measure(tr))
    tr = full3()
    out["full3"] = (tr, bernoulli(tr.x, [0.2, 0.5, 0.3]))
    return out


def pushforward(triple: FactorTriple, mu: MarkovMeasure) -> PushforwardMeasure:
    return PushforwardMeasure(mu, triple)
