import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from classdeg import corpus
from classdeg.errors import EmptyShift, IllegalWord, ResourceLimit, UnknownSymbol
from classdeg.shift_core import (
    GeneralTriple,
    apply_code,
    build_sft,
    count_blocks,
    enumerate_blocks,
    fiber_product,
    full_shift,
    higher_block,
    is_irreducible,
    make_triple,
    period,
    recode_to_one_step_one_block,
)

from . import oracles


def test_golden_mean_keeps_both_symbols():
    gm = corpus.golden_mean()
    assert gm.alphabet == ("0", "1")
    assert gm.removed == ()


def test_full_two_shift():
    x = build_sft("AB", itertools.product("AB", repeat=2))
    assert x.adjacency.all()


def test_no_cycle_is_empty():
    with pytest.raises(EmptyShift):
        build_sft("01", [("0", "1")])


def test_pruning_records_removed_symbols():
    x = build_sft("abc", [("a", "a"), ("a", "b"), ("c", "a")])
    assert x.alphabet == ("a",)
    assert set(x.removed) == {"b", "c"}


def test_unknown_symbol_in_transitions():
    with pytest.raises(UnknownSymbol):
        build_sft("ab", [("a", "z")])


def test_enumerate_blocks_examples():
    assert enumerate_blocks(full_shift("AB"), 2) == [("A", "A"), ("A", "B"), ("B", "A"), ("B", "B")]
    assert enumerate_blocks(corpus.golden_mean(), 2) == [("0", "0"), ("0", "1"), ("1", "0")]
    assert len(enumerate_blocks(corpus.golden_mean(), 5)) == 13


@pytest.mark.parametrize("L", range(1, 8))
def test_block_counts_match_brute_force(L):
    gm = corpus.golden_mean()
    brute = oracles.words(gm.alphabet, gm.transitions(), L)
    assert enumerate_blocks(gm, L) == brute
    assert count_blocks(gm, L) == len(brute)


def test_enumeration_cap(monkeypatch):
    monkeypatch.setenv("CLASSDEG_MAX_BLOCKS", "10")
    with pytest.raises(ResourceLimit):
        enumerate_blocks(full_shift("AB"), 5)


def test_apply_code_examples():
    assert apply_code(corpus.t1(), "ABA") == ("b", "b", "b")
    assert apply_code(corpus.identity(), "010") == ("0", "1", "0")
    assert apply_code(corpus.t3(), ["a1", "b1", "a1"]) == ("a", "b", "a")
    with pytest.raises(UnknownSymbol):
        apply_code(corpus.t1(), "AC")


def test_fiber_product_sizes():
    assert fiber_product(corpus.t1()).size == 4
    ident = fiber_product(corpus.identity())
    assert set(ident.alphabet) == {("0", "0"), ("1", "1")}
    # T3: pairs with equal image among {a1, a2} and {b1, b2}
    tr = corpus.t3()
    brute = sum(1 for a in tr.x.alphabet for b in tr.x.alphabet if tr.code[a] == tr.code[b])
    assert brute == 8
    assert fiber_product(tr).size == 8


def test_irreducibility_and_period():
    assert is_irreducible(full_shift("AB"))
    assert is_irreducible(corpus.golden_mean())
    assert not is_irreducible(corpus.t3().x)
    assert period(corpus.two_cycle().x) == 2
    assert period(corpus.golden_mean()) == 1


def test_check_legal():
    gm = corpus.golden_mean()
    assert gm.is_legal("0100")
    with pytest.raises(IllegalWord):
        gm.check_legal("011")


def test_higher_block_counts():
    hb, blocks = higher_block(corpus.golden_mean(), 3)
    assert hb.size == 5
    assert len(blocks) == 5


def test_identity_recoding_is_a_renaming():
    gm = corpus.golden_mean()
    general = GeneralTriple(("0", "1"), (("1", "1"),), {("0",): "0", ("1",): "1"}, (0, 0))
    rec = recode_to_one_step_one_block(general)
    assert rec.block_length == 1
    assert rec.triple.x.size == gm.size
    assert np.array_equal(rec.triple.x.adjacency, gm.adjacency)


def test_window_two_code_on_golden_mean():
    code = {b: ("p" if b == ("0", "0") else "q") for b in itertools.product("01", repeat=2)}
    general = GeneralTriple(("0", "1"), (("1", "1"),), code, (0, 1))
    rec = recode_to_one_step_one_block(general)
    assert set(rec.triple.x.alphabet) == {"00", "01", "10"}


def test_recode_round_trip_random_words():
    code = {b: ("p" if b == ("0", "0") else "q") for b in itertools.product("01", repeat=2)}
    rec = recode_to_one_step_one_block(GeneralTriple(("0", "1"), (("1", "1"),), code, (0, 1)))
    rng = np.random.default_rng(0)
    gm = corpus.golden_mean()
    for _ in range(1000):
        L = int(rng.integers(2, 12))
        w = ["0"]
        while len(w) < L:
            w.append("0" if w[-1] == "1" else str(rng.integers(0, 2)))
        w = tuple(w)
        assert gm.is_legal(w)
        assert rec.decode(rec.encode(w)) == w


# ---------------------------------------------------------------------------
# properties


@st.composite
def small_graphs(draw):
    n = draw(st.integers(1, 4))
    alphabet = [f"s{i}" for i in range(n)]
    pairs = [(a, b) for a in alphabet for b in alphabet if draw(st.booleans())]
    return alphabet, pairs


@settings(max_examples=60, deadline=None)
@given(small_graphs())
def test_pruning_idempotent(graph):
    alphabet, pairs = graph
    try:
        x = build_sft(alphabet, pairs)
    except EmptyShift:
        return
    again = build_sft(x.alphabet, x.transitions())
    assert again.alphabet == x.alphabet
    assert again.removed == ()
    assert np.array_equal(again.adjacency, x.adjacency)


@pytest.mark.parametrize("name", ["T1", "identity", "T3", "two_cycle", "full3"])
def test_apply_code_lands_in_image_language(name):
    tr, _ = corpus.corpus()[name]
    for L in range(1, 7):
        y_words = {oracles.image(tr, u) for u in oracles.triple_words(tr, L)}
        for u in enumerate_blocks(tr.x, L):
            img = apply_code(tr, u)
            assert img in y_words
            assert tr.y_is_legal(img)


@pytest.mark.parametrize("name", ["T1", "identity", "T3", "two_cycle", "full3"])
def test_fiber_product_contains_diagonal(name):
    tr, _ = corpus.corpus()[name]
    fp = fiber_product(tr)
    for L in range(1, 5):
        for u in enumerate_blocks(tr.x, L):
            assert fp.is_legal([(a, a) for a in u])


@st.composite
def general_triples(draw):
    alphabet = ("0", "1", "2")[: draw(st.integers(2, 3))]
    forbidden = tuple(
        tuple(draw(st.lists(st.sampled_from(alphabet), min_size=2, max_size=3)))
        for _ in range(draw(st.integers(0, 2)))
    )
    left = draw(st.integers(0, 1))
    right = draw(st.integers(0, 1))
    span = left + right + 1
    code = {b: draw(st.sampled_from("pq")) for b in itertools.product(alphabet, repeat=span)}
    return GeneralTriple(alphabet, forbidden, code, (left, right))


def _legal_general(general, L):
    for w in itertools.product(general.alphabet, repeat=L):
        if not any(w[i : i + len(f)] == f for f in general.forbidden for i in range(L - len(f) + 1)):
            yield w


@settings(max_examples=40, deadline=None)
@given(general_triples())
def test_recode_round_trip_and_code(general):
    try:
        rec = recode_to_one_step_one_block(general)
    except EmptyShift:
        return
    L0 = rec.block_length
    span = general.code_span
    x = rec.triple.x
    for L in range(L0, 7):
        for w in _legal_general(general, L):
            try:
                enc = rec.encode(w)
            except IllegalWord:
                continue  # uses a block removed by pruning
            if not x.is_legal(enc):
                continue
            assert rec.decode(enc) == w
            image = apply_code(rec.triple, enc)
            assert image == tuple(general.code[w[i : i + span]] for i in range(len(enc)))


def test_make_triple_requires_total_code():
    from classdeg.errors import ValidationError

    with pytest.raises(ValidationError):
        make_triple(full_shift("AB"), {"A": "a"})
