import itertools

import pytest

from classdeg import corpus
from classdeg.class_degree import (
    TransitionBlock,
    class_degree_of_measure,
    count_transition_classes_periodic,
    is_transition_block,
    minimal_transition_block,
    preimages,
    routable,
    routing_table,
    unique_routing_symbol,
)
from classdeg.errors import (
    IllegalWord,
    IndexOutOfRange,
    NotRoutable,
    NotUnique,
    PeriodTooLarge,
    SymbolMismatch,
    ValidationError,
)
from classdeg.measures import PushforwardMeasure, bernoulli, parry_measure

from . import oracles

T3_ABA = ("a1", "b1", "a1")


def test_routable_examples():
    assert routable(corpus.t1(), "ABA", "A", 1)
    assert routable(corpus.identity(), "010", "1", 1)
    assert not routable(corpus.t3(), list(T3_ABA), "b2", 1)


def test_routable_errors():
    with pytest.raises(IndexOutOfRange):
        routable(corpus.t1(), "ABA", "A", 3)
    with pytest.raises(SymbolMismatch):
        routable(corpus.t3(), list(T3_ABA), "a2", 1)
    with pytest.raises(IllegalWord):
        routable(corpus.identity(), "011", "1", 1)


def test_transition_block_examples():
    t1, t3 = corpus.t1(), corpus.t3()
    assert is_transition_block(t1, "bbb", 1, ["A"])
    assert not is_transition_block(t1, "b", 0, ["A"])
    assert not is_transition_block(t3, "aba", 1, ["b1"])
    assert is_transition_block(t3, "aba", 1, ["b1", "b2"])


def test_transition_block_errors():
    with pytest.raises(ValidationError):
        is_transition_block(corpus.t1(), "bbb", 1, [])
    with pytest.raises(SymbolMismatch):
        is_transition_block(corpus.t3(), "aba", 1, ["a1"])
    with pytest.raises(IndexOutOfRange):
        is_transition_block(corpus.t1(), "bb", 2, ["A"])


@pytest.mark.parametrize("name", ["T1", "identity", "T3", "two_cycle", "full3"])
def test_routable_matches_brute_force(name):
    tr, _ = corpus.corpus()[name]
    for L in range(1, 5):
        for u in oracles.triple_words(tr, L):
            for n in range(L):
                for a in tr.x.alphabet:
                    if tr.code[a] != tr.code[u[n]]:
                        continue
                    assert routable(tr, list(u), a, n) == oracles.routable(tr, u, a, n)


@pytest.mark.parametrize("name", ["T1", "T3", "two_cycle", "full3"])
def test_transition_blocks_match_brute_force(name):
    tr, _ = corpus.corpus()[name]
    for L in range(1, 4):
        y_words = sorted({oracles.image(tr, u) for u in oracles.triple_words(tr, L)})
        for w in y_words:
            for n in range(L):
                cands = sorted({u[n] for u in oracles.preimage_words(tr, w)})
                for size in (1, 2):
                    for M in itertools.combinations(cands, size):
                        assert is_transition_block(tr, w, n, M) == oracles.is_transition_block(tr, w, n, M)


@pytest.mark.parametrize(
    "name, lmax, depth",
    [("T1", 3, 1), ("identity", 1, 1), ("T3", 4, 2), ("two_cycle", 4, 2), ("full3", 3, 1)],
)
def test_minimal_transition_block(name, lmax, depth):
    tr, mu = corpus.corpus()[name]
    nu = PushforwardMeasure(mu, tr)
    tb = minimal_transition_block(tr, nu, lmax)
    assert tb.depth == depth
    assert is_transition_block(tr, tb.w, tb.n, tb.M)
    assert nu.word_probability(tb.w) > 0
    # brute force: no block of smaller depth among positive words up to lmax
    best = min(
        oracles.min_depth(tr, w, n)
        for L in range(1, lmax + 1)
        for w in {oracles.image(tr, u) for u in oracles.triple_words(tr, L)}
        if nu.word_probability(w) > 0
        for n in range(L)
    )
    assert best == depth


def test_t1_block_is_bbb_style():
    tr, mu = corpus.corpus()["T1"]
    tb = minimal_transition_block(tr, PushforwardMeasure(mu, tr), 3)
    assert tb.depth == 1
    assert len(tb.w) == 3 and tb.n == 1
    assert len(tb.certificate) == 8


def test_identity_block_is_a_single_symbol():
    tr = corpus.identity()
    tb = minimal_transition_block(tr, PushforwardMeasure(parry_measure(tr.x), tr), 1)
    assert tb.depth == 1
    assert tb.M == (tb.w[0],)


def test_class_degree_values():
    for name, expected in [("T1", 1), ("identity", 1), ("T3", 2)]:
        tr, mu = corpus.corpus()[name]
        assert class_degree_of_measure(tr, PushforwardMeasure(mu, tr), 4) == expected


def test_periodic_oracle_examples():
    assert count_transition_classes_periodic(corpus.t1(), "b") == 1
    assert count_transition_classes_periodic(corpus.t3(), "ab") == 2
    assert count_transition_classes_periodic(corpus.identity(), "01") == 1
    assert count_transition_classes_periodic(corpus.two_cycle(), "c") == 2


@pytest.mark.parametrize("name", ["T1", "identity", "T3", "full3"])
def test_periodic_oracle_agrees_with_degree(name):
    tr, mu = corpus.corpus()[name]
    degree = class_degree_of_measure(tr, PushforwardMeasure(mu, tr), 4)
    ny = len(tr.y_alphabet)
    seen = 0
    for L in range(1, 5):
        for y in itertools.product(tr.y_alphabet, repeat=L):
            try:
                count = count_transition_classes_periodic(tr, y)
            except IllegalWord:
                continue
            assert count == degree
            seen += 1
    assert seen >= min(2, ny)


def test_periodic_oracle_limits():
    with pytest.raises(PeriodTooLarge):
        count_transition_classes_periodic(corpus.t1(), "b" * 65)
    with pytest.raises(IllegalWord):
        count_transition_classes_periodic(corpus.identity(), "1")


def test_unique_routing_symbol_examples():
    t1 = corpus.t1()
    mu = bernoulli(t1.x, [0.3, 0.7])
    tb = TransitionBlock(("b", "b", "b"), 1, ("A",))
    assert unique_routing_symbol(t1, mu, tb, "BBB") == "A"
    t3 = corpus.t3()
    mu3 = corpus.t3_symmetric_measure(t3)
    tb3 = TransitionBlock(("a", "b", "a"), 1, ("b1", "b2"))
    assert unique_routing_symbol(t3, mu3, tb3, T3_ABA) == "b1"
    assert unique_routing_symbol(t3, mu3, tb3, ("a2", "b2", "a2")) == "b2"


def test_unique_routing_symbol_errors():
    t1 = corpus.t1()
    mu = bernoulli(t1.x, [0.3, 0.7])
    with pytest.raises(NotUnique):
        unique_routing_symbol(t1, mu, TransitionBlock(("b", "b", "b"), 1, ("A", "B")), "ABA")
    with pytest.raises(NotRoutable):
        unique_routing_symbol(t1, mu, TransitionBlock(("b",), 0, ("A",)), "B")
    with pytest.raises(SymbolMismatch):
        unique_routing_symbol(corpus.t3(), corpus.t3_symmetric_measure(), TransitionBlock(("a", "b", "a"), 1, ("b1",)), ("b1", "b1", "b1"))


def test_routing_table_covers_all_preimages():
    t3 = corpus.t3()
    tb = TransitionBlock(("a", "b", "a"), 1, ("b1", "b2"))
    table = routing_table(t3, tb)
    assert len(table) == len(oracles.preimage_words(t3, "aba")) == 2
    assert all(len(v) == 1 for v in table.entries.values())


@pytest.mark.parametrize("name", ["T1", "T3", "full3"])
def test_preimages_match_brute_force(name):
    tr, _ = corpus.corpus()[name]
    for L in range(1, 5):
        for w in {oracles.image(tr, u) for u in oracles.triple_words(tr, L)}:
            got = [tr.x.decode(u) for u in preimages(tr, tr.encode_y(w))]
            assert sorted(got) == sorted(oracles.preimage_words(tr, w))


def test_uniqueness_exhaustive_for_minimal_blocks():
    for name in ("T1", "identity", "T3", "full3"):
        tr, mu = corpus.corpus()[name]
        tb = minimal_transition_block(tr, PushforwardMeasure(mu, tr), 4)
        for u in oracles.preimage_words(tr, tb.w):
            if oracles.markov_word_prob(list(tr.x.alphabet), mu.transition.tolist(), mu.stationary.tolist(), u) <= 0:
                continue
            hits = [a for a in tb.M if oracles.routable(tr, u, a, tb.n)]
            assert len(hits) == 1
            assert unique_routing_symbol(tr, mu, tb, u) == hits[0]

