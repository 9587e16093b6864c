"""Vertex presentations of 1-step shifts of finite type and 1-block factor codes.

Symbols are opaque hashable identifiers.  Their order is fixed when the
shift is built and every deterministic tie-break downstream uses it.  Words
are tuples of symbols at the public surface; long paths are carried as
numpy arrays of symbol indices.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyShift, IllegalWord, ResourceLimit, UnknownSymbol, ValidationError

DEFAULT_MAX_BLOCKS = 1_000_000


def max_blocks() -> int:
    """Enumeration cap, overridable through ``CLASSDEG_MAX_BLOCKS``."""
    raw = os.environ.get("CLASSDEG_MAX_BLOCKS")
    if raw is None:
        return DEFAULT_MAX_BLOCKS
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"CLASSDEG_MAX_BLOCKS must be an integer, got {raw!r}") from exc


@dataclass(frozen=True, eq=False)
class Sft:
    """A 1-step SFT on a finite alphabet, already pruned to its essential part."""

    alphabet: tuple
    adjacency: np.ndarray
    removed: tuple = ()
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.alphabet)})
        self.adjacency.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.alphabet)

    def index(self, symbol) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownSymbol(f"symbol {symbol!r} is not in the alphabet") from None

    def encode(self, word) -> np.ndarray:
        return np.fromiter((self.index(s) for s in word), dtype=np.int64, count=len(word))

    def decode(self, indices) -> tuple:
        return tuple(self.alphabet[i] for i in np.asarray(indices).tolist())

    def is_legal(self, word) -> bool:
        idx = self.encode(word)
        if len(idx) == 0:
            return True
        return bool(np.all(self.adjacency[idx[:-1], idx[1:]]))

    def check_legal(self, word) -> np.ndarray:
        idx = self.encode(word)
        if len(idx) > 1 and not np.all(self.adjacency[idx[:-1], idx[1:]]):
            raise IllegalWord(f"word {tuple(word)!r} is not in the language")
        return idx

    def transitions(self) -> list:
        rows, cols = np.nonzero(self.adjacency)
        return [(self.alphabet[i], self.alphabet[j]) for i, j in zip(rows, cols)]


def _prune(adjacency: np.ndarray) -> np.ndarray:
    """Boolean mask of symbols lying on a bi-infinite path."""
    alive = np.ones(adjacency.shape[0], dtype=bool)
    while True:
        sub = adjacency & alive[:, None] & alive[None, :]
        keep = alive & sub.any(axis=1) & sub.any(axis=0)
        if np.array_equal(keep, alive):
            return alive
        alive = keep


def build_sft(alphabet, allowed_pairs) -> Sft:
    """Build the essential 1-step SFT with the given allowed transitions.

    Symbols with no bi-infinite continuation are removed and listed in
    ``Sft.removed``.

    >>> build_sft("01", [("0", "0"), ("0", "1"), ("1", "0")]).size
    2
    """
    alphabet = tuple(alphabet)
    if not alphabet:
        raise EmptyShift("empty alphabet")
    if len(set(alphabet)) != len(alphabet):
        raise ValidationError("alphabet symbols must be unique")
    index = {s: i for i, s in enumerate(alphabet)}
    adj = np.zeros((len(alphabet), len(alphabet)), dtype=bool)
    for a, b in allowed_pairs:
        if a not in index or b not in index:
            raise UnknownSymbol(f"transition ({a!r}, {b!r}) uses a symbol outside the alphabet")
        adj[index[a], index[b]] = True
    alive = _prune(adj)
    if not alive.any():
        raise EmptyShift("pruning removed every symbol: the shift has no bi-infinite point")
    kept = np.flatnonzero(alive)
    return Sft(
        alphabet=tuple(alphabet[i] for i in kept),
        adjacency=adj[np.ix_(kept, kept)].copy(),
        removed=tuple(alphabet[i] for i in np.flatnonzero(~alive)),
    )


def full_shift(alphabet) -> Sft:
    alphabet = tuple(alphabet)
    return build_sft(alphabet, itertools.product(alphabet, repeat=2))


def count_blocks(sft: Sft, length: int) -> int:
    if length < 1:
        raise ValidationError("block length must be at least 1")
    vec = np.ones(sft.size, dtype=object)
    adj = sft.adjacency.astype(object)
    for _ in range(length - 1):
        vec = adj.dot(vec)
    return int(vec.sum())


def enumerate_blocks(sft: Sft, length: int, cap: int | None = None) -> list:
    """All legal words of the given length, lexicographic in alphabet order."""
    cap = max_blocks() if cap is None else cap
    total = count_blocks(sft, length)
    if total > cap:
        raise ResourceLimit(f"{total} blocks of length {length} exceed the cap {cap}")
    succ = [np.flatnonzero(sft.adjacency[i]).tolist() for i in range(sft.size)]
    out = []

    def extend(prefix):
        if len(prefix) == length:
            out.append(tuple(sft.alphabet[i] for i in prefix))
            return
        for j in succ[prefix[-1]]:
            prefix.append(j)
            extend(prefix)
            prefix.pop()

    for i in range(sft.size):
        extend([i])
    return out


def enumerate_block_indices(sft: Sft, length: int, cap: int | None = None) -> np.ndarray:
    """Same as :func:`enumerate_blocks`, as an ``(count, length)`` index array."""
    cap = max_blocks() if cap is None else cap
    total = count_blocks(sft, length)
    if total > cap:
        raise ResourceLimit(f"{total} blocks of length {length} exceed the cap {cap}")
    blocks = np.arange(sft.size, dtype=np.int64)[:, None]
    for _ in range(length - 1):
        rows, nxt = np.nonzero(sft.adjacency[blocks[:, -1]])
        blocks = np.concatenate([blocks[rows], nxt[:, None]], axis=1)
    return blocks


def is_irreducible(sft: Sft) -> bool:
    n, _ = connected_components(csr_matrix(sft.adjacency), directed=True, connection="strong")
    return n == 1


def period(sft: Sft) -> int:
    """Gcd of cycle lengths of an irreducible SFT (1 means aperiodic)."""
    level = {0: 0}
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.flatnonzero(sft.adjacency[i]).tolist():
                if j in level:
                    g = np.gcd(g, level[i] + 1 - level[j])
                else:
                    level[j] = level[i] + 1
                    nxt.append(j)
        frontier = nxt
    return int(abs(g)) or 1


def higher_block(sft: Sft, m: int) -> tuple[Sft, list]:
    """The m-block presentation; symbols are the m-block tuples themselves."""
    if m == 1:
        return sft, [(s,) for s in sft.alphabet]
    blocks = enumerate_blocks(sft, m)
    pairs = [(u, v) for u in blocks for v in blocks if u[1:] == v[:-1] and sft.adjacency[sft.index(u[-1]), sft.index(v[-1])]]
    return build_sft(blocks, pairs), blocks


@dataclass(frozen=True, eq=False)
class FactorTriple:
    """An SFT ``x``, a 1-block code, and the sofic image presented by the labeled graph of ``x``."""

    x: Sft
    code: dict
    y_alphabet: tuple
    code_index: np.ndarray = field(repr=False)
    preimages: tuple = field(repr=False)
    irreducible: bool = True
    name: str = ""

    @property
    def y_presentation(self) -> dict:
        """Labeled graph: vertices are X-symbols, each vertex labeled by its image."""
        return {
            "vertices": list(self.x.alphabet),
            "labels": {a: self.code[a] for a in self.x.alphabet},
            "edges": self.x.transitions(),
        }

    def y_index(self, symbol) -> int:
        try:
            return self.y_alphabet.index(symbol)
        except ValueError:
            raise UnknownSymbol(f"symbol {symbol!r} is not in the image alphabet") from None

    def encode_y(self, word) -> np.ndarray:
        return np.fromiter((self.y_index(s) for s in word), dtype=np.int64, count=len(word))

    def decode_y(self, indices) -> tuple:
        return tuple(self.y_alphabet[i] for i in np.asarray(indices).tolist())

    def layer_masks(self, w_idx) -> np.ndarray:
        """Row i marks the X-symbols mapping to the i-th letter of the Y-word."""
        w_idx = np.asarray(w_idx, dtype=np.int64)
        return self.code_index[None, :] == w_idx[:, None]

    def y_is_legal(self, word) -> bool:
        masks = self.layer_masks(self.encode_y(word))
        if len(masks) == 0:
            return True
        reach = masks[0]
        for row in masks[1:]:
            reach = self.x.adjacency[reach].any(axis=0) & row
            if not reach.any():
                return False
        return bool(reach.any())


def make_triple(x: Sft, code: dict, y_alphabet=None, name: str = "") -> FactorTriple:
    """Attach a 1-block code to ``x``.

    Keys for symbols removed by pruning are ignored; keys outside the original
    alphabet raise :class:`UnknownSymbol`.
    """
    known = set(x.alphabet) | set(x.removed)
    for key in code:
        if key not in known:
            raise UnknownSymbol(f"code maps unknown symbol {key!r}")
    missing = [a for a in x.alphabet if a not in code]
    if missing:
        raise ValidationError(f"code is not total: missing {missing!r}")
    if y_alphabet is None:
        y_alphabet = tuple(dict.fromkeys(code[a] for a in x.alphabet))
    else:
        y_alphabet = tuple(y_alphabet)
    y_pos = {b: i for i, b in enumerate(y_alphabet)}
    code_index = np.array([y_pos[code[a]] for a in x.alphabet], dtype=np.int64)
    code_index.setflags(write=False)
    preimages = tuple(np.flatnonzero(code_index == j) for j in range(len(y_alphabet)))
    return FactorTriple(
        x=x,
        code={a: code[a] for a in x.alphabet},
        y_alphabet=y_alphabet,
        code_index=code_index,
        preimages=preimages,
        irreducible=is_irreducible(x),
        name=name,
    )


def apply_code(triple: FactorTriple, word) -> tuple:
    """Symbol-wise image of an X-word."""
    return tuple(triple.code[a] if a in triple.code else _unknown(a) for a in word)


def _unknown(a):
    raise UnknownSymbol(f"symbol {a!r} is not in the alphabet of X")


def fiber_product(triple: FactorTriple) -> Sft:
    """Pairs of X-symbols with equal image, moving coordinatewise."""
    alphabet = [
        (a, b) for a in triple.x.alphabet for b in triple.x.alphabet if triple.code[a] == triple.code[b]
    ]
    adj = triple.x.adjacency
    idx = triple.x.index
    pairs = [
        (s, t)
        for s in alphabet
        for t in alphabet
        if adj[idx(s[0]), idx(t[0])] and adj[idx(s[1]), idx(t[1])]
    ]
    return build_sft(alphabet, pairs)


# ---------------------------------------------------------------------------
# General (m-step, sliding block) triples


@dataclass(frozen=True)
class GeneralTriple:
    """SFT given by forbidden words, with a sliding block code on window [-left, right]."""

    alphabet: tuple
    forbidden: tuple
    code: dict
    window: tuple = (0, 0)
    transitions: tuple | None = None

    @property
    def memory(self) -> int:
        return max((len(f) for f in self.forbidden), default=1)

    @property
    def code_span(self) -> int:
        return self.window[0] + self.window[1] + 1


@dataclass(frozen=True, eq=False)
class Recoding:
    """A 1-step 1-block triple conjugate to a general one, plus the dictionaries."""

    triple: FactorTriple
    block_length: int
    to_symbol: dict
    to_block: dict

    def encode(self, word) -> tuple:
        L = self.block_length
        word = tuple(word)
        if len(word) < L:
            raise IllegalWord(f"word shorter than the block length {L}")
        try:
            return tuple(self.to_symbol[word[i : i + L]] for i in range(len(word) - L + 1))
        except KeyError as exc:
            raise IllegalWord(f"block {exc.args[0]!r} is not legal") from None

    def decode(self, word) -> tuple:
        word = tuple(word)
        if not word:
            return ()
        blocks = [self.to_block[s] for s in word]
        return tuple(blocks[0]) + tuple(b[-1] for b in blocks[1:])


def _block_name(block) -> str:
    if all(isinstance(s, str) and len(s) == 1 for s in block):
        return "".join(block)
    return ".".join(str(s) for s in block)


def recode_to_one_step_one_block(general: GeneralTriple) -> Recoding:
    """Higher-block presentation on X-words of length ``max(memory - 1, code span)``.

    With that block length consecutive blocks overlapping in all but one
    symbol form a 1-step SFT, and the sliding code reads its whole window
    inside one block, so it becomes a 1-block code.
    """
    alphabet = tuple(general.alphabet)
    forbidden = {tuple(f) for f in general.forbidden}
    left, right = general.window
    if left < 0 or right < 0:
        raise ValidationError("code window bounds must be nonnegative")
    L = max(general.memory - 1, general.code_span, 1)

    if general.transitions is not None:
        allowed = {tuple(p) for p in general.transitions}
    else:
        allowed = set(itertools.product(alphabet, repeat=2))

    def clean(word):
        if any(word[i : i + 2] not in allowed for i in range(len(word) - 1)):
            return False
        for f in forbidden:
            k = len(f)
            if any(word[i : i + k] == f for i in range(len(word) - k + 1)):
                return False
        return True

    blocks = [b for b in itertools.product(alphabet, repeat=L) if clean(b)]
    if len(blocks) > max_blocks():
        raise ResourceLimit("higher-block alphabet exceeds the enumeration cap")
    names = {b: _block_name(b) for b in blocks}
    pairs = [(names[u], names[v]) for u in blocks for v in blocks if u[1:] == v[:-1] and clean(u + v[-1:])]
    x = build_sft([names[b] for b in blocks], pairs)
    span = general.code_span
    code = {}
    for b in blocks:
        key = b[:span]
        if key not in general.code:
            raise ValidationError(f"sliding code undefined on {key!r}")
        code[names[b]] = general.code[key]
    triple = make_triple(x, code)
    to_symbol = {b: names[b] for b in blocks if names[b] in x._index}
    to_block = {v: k for k, v in to_symbol.items()}
    return Recoding(triple=triple, block_length=L, to_symbol=to_symbol, to_block=to_block)
