"""Jump extensions, routing functions, splicing of joined pairs, and the entropy-gain report.

The pipeline for one ``(N, p)`` cell:

1. draw windows ``(x, x', y)`` of the relatively independent joining;
2. label the occurrences of the transition word w in y with an η(N, p)
   sequence indexed by occurrence number (labels 1/2 on every N-th
   occurrence, 3 elsewhere, 0 off the occurrences);
3. splice: segments after a 1-label are copied from x, after a 2-label from
   x', and the w-block at a switch is replaced by a routing block;
4. estimate ``h(λ') - h(λ)`` and the potential terms, and evaluate every
   upper bound entering the lower bound on the gain.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .class_degree import TransitionBlock, reach
from .errors import (
    DegenerateSeparator,
    DomainError,
    InsufficientData,
    NoCommonSymbol,
    NoFeasibleCell,
    RoutingGap,
    TooFewMarks,
    ValidationError,
)
from .estimators import ConditionalCounts, marked_entropy_rate
from .joinings import PairPath, RijSampler, mark_occurrences, rij_sample
from .measures import (
    MarkovMeasure,
    Potential,
    PushforwardMeasure,
    entropy,
    hidden_markov_entropy_bounds,
    hp,
    integral,
    make_rng,
    sample_path,
    word_probability,
)
from .shift_core import FactorTriple, enumerate_block_indices

LABEL_COIN = (1, 2)
DEFAULT_DELTA_K = 6
Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# η(N, p)


@dataclass(frozen=True)
class EtaParams:
    N: int
    p: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N!r}")
        if not 0.0 < self.p <= 0.5:
            raise DomainError(f"p must lie in (0, 1/2], got {self.p!r}")


@dataclass(frozen=True)
class EtaStats:
    h_eta: float
    prob_1: float
    prob_2: float
    prob_1_block: float
    prob_2_block: float


def eta_stats(params: EtaParams) -> EtaStats:
    N, p = params.N, params.p
    block = p * (1 - p) / N
    return EtaStats(hp(p) / N, (1 - p) / N, p / N, block, block)


def _eta_labels(count: int, params: EtaParams, rng: np.random.Generator) -> np.ndarray:
    N = params.N
    phase = int(rng.integers(0, N))
    out = np.full(count, 3, dtype=np.int8)
    coin_pos = np.arange((N - phase) % N, count, N)
    coins = rng.random(len(coin_pos)) < params.p
    out[coin_pos] = np.where(coins, 2, 1)
    return out


def eta_sample(params: EtaParams, length: int, seed=0) -> np.ndarray:
    """Stationary η(N, p) sequence: random phase, then one biased coin per N-block."""
    if length < 1:
        raise ValidationError("length must be positive")
    return _eta_labels(length, params, make_rng(seed, 0xE7A))


# ---------------------------------------------------------------------------
# jump extension


@dataclass(frozen=True, eq=False)
class JumpSample:
    pair: PairPath
    t: np.ndarray
    marks: np.ndarray
    w_len: int
    params: EtaParams
    thinned: int = 0

    @property
    def coin_marks(self) -> np.ndarray:
        return self.marks[np.isin(self.t[self.marks], LABEL_COIN)]

    def pattern_ok(self) -> bool:
        """Between consecutive 1/2 labels, the nonzero labels read 3^(N-1)."""
        nz = self.t[self.t != 0]
        coins = np.flatnonzero(np.isin(nz, LABEL_COIN))
        if len(coins) < 2:
            return bool(np.all(np.isin(nz, (1, 2, 3))))
        gaps = np.diff(coins)
        if not np.all(gaps == self.params.N):
            return False
        return bool(np.all(np.isin(nz, (1, 2, 3))))


def jump_labels(marks: np.ndarray, length: int, params: EtaParams, rng: np.random.Generator,
                min_gap: int | None = None) -> tuple[np.ndarray, int]:
    """Label sequence of the jump extension over a window with the given marks.

    An η sequence indexed by occurrence number is written onto the marks.
    A 1/2 label closer than ``min_gap`` (default N) to the previous kept
    1/2 label is demoted to 3; returns the labels and the number demoted.
    """
    t = np.zeros(length, dtype=np.int8)
    labels = _eta_labels(len(marks), params, rng)
    gap = params.N if min_gap is None else min_gap
    coin_idx = np.flatnonzero(labels != 3)
    thinned = 0
    if len(coin_idx) > 1 and np.any(np.diff(marks[coin_idx]) < gap):
        last = None
        for i in coin_idx:
            if last is not None and marks[i] - last < gap:
                labels[i] = 3
                thinned += 1
            else:
                last = marks[i]
    t[marks] = labels
    return t, thinned


def attach_jump_labels(pair: PairPath, w_idx, params: EtaParams, seed=0, rng=None) -> JumpSample:
    """Jump-extension labels on the occurrences of the Y-word ``w_idx`` in ``pair.y``."""
    rng = make_rng(seed, 0x7AB) if rng is None else rng
    w_idx = np.asarray(w_idx)
    if params.N <= len(w_idx):
        raise DomainError(f"N = {params.N} must exceed |w| = {len(w_idx)}")
    marks = mark_occurrences(pair.y, w_idx)
    if len(marks) < 2:
        raise TooFewMarks(f"only {len(marks)} occurrences of w in the window")
    t, thinned = jump_labels(marks, len(pair), params, rng)
    return JumpSample(pair, t, marks, len(w_idx), params, thinned)


@dataclass(frozen=True)
class JumpEntropyReport:
    empirical: float
    stderr: float
    closed_form: float
    h_mu: float
    mu_A: float
    h_eta: float
    gap: float
    k: int
    path_len: int

    def to_dict(self) -> dict:
        return asdict(self)


def jump_entropy_check(mu: MarkovMeasure, a_word, params: EtaParams, path_len: int, seed=0,
                       k: int = 8, label_context: int | None = None, resamples: int = 50) -> JumpEntropyReport:
    """Compare the empirical entropy of (x, t) with ``h(mu) + mu(A) h(eta)``.

    A is the cylinder of ``a_word`` at coordinate 0 (the whole space for the
    empty word).  The estimate conditions on the last k symbols of (x, t)
    and the last ``label_context`` nonzero labels (default N).
    """
    a_idx = mu.sft.check_legal(a_word) if len(a_word) else np.zeros(0, dtype=np.int64)
    mu_A = word_probability(mu, a_idx)
    if mu_A <= 0:
        raise TooFewMarks("A has zero measure")
    rng = make_rng(seed, 0x1E)
    x = sample_path(mu, path_len, rng=rng)
    marks = mark_occurrences(x, a_idx) if len(a_idx) else np.arange(path_len)
    if len(marks) < 2:
        raise TooFewMarks("A was not visited")
    t, _ = jump_labels(marks, path_len, params, rng, min_gap=1)
    marks_ctx = params.N if label_context is None else label_context
    est, se = marked_entropy_rate(x, t, k, marks_ctx, resamples=resamples, seed=seed)
    closed = entropy(mu) + mu_A * hp(params.p) / params.N
    return JumpEntropyReport(est, se, closed, entropy(mu), mu_A, hp(params.p) / params.N, est - closed, k, path_len)


# ---------------------------------------------------------------------------
# routing functions and the splice


class RoutingFunctions:
    """Routing blocks r^12 / r^21 for one transition block, memoized by endpoints.

    ``bridge(u, v)`` is the lexicographically least X-block with image w that
    starts with u's first symbol, ends with v's last symbol, and passes
    through the routing symbol common to u and v at time n.  Then
    r^12(u, v) = bridge(u, v), r^21(u, v) = bridge(v, u), r^11(u, v) = u and
    r^22(u, v) = v.
    """

    def __init__(self, triple: FactorTriple, tb: TransitionBlock, lazy: bool = True):
        self.triple = triple
        self.tb = tb
        self.lazy = lazy
        self.w_idx = triple.encode_y(tb.w)
        self._reach = reach(triple, self.w_idx)
        self._m_idx = [triple.x.index(a) for a in tb.M]
        self._memo: dict = {}

    def common_symbol(self, u0, ue, v0, ve) -> int:
        r, n = self._reach, self.tb.n
        for a in self._m_idx:
            if r.forward[n][u0, a] and r.backward[n][a, ue] and r.forward[n][v0, a] and r.backward[n][a, ve]:
                return a
        raise NoCommonSymbol("the two blocks route through no common symbol of M")

    def _least_path(self, start, end, through) -> np.ndarray:
        r, n, L = self._reach, self.tb.n, len(self.w_idx)
        adj = self.triple.x.adjacency
        layers = [r.masks[i].copy() for i in range(L)]
        for i, sym in ((0, start), (n, through), (L - 1, end)):
            keep = np.zeros_like(layers[i])
            keep[sym] = layers[i][sym]
            layers[i] &= keep
        feasible = [None] * L
        feasible[-1] = layers[-1]
        for i in range(L - 2, -1, -1):
            feasible[i] = layers[i] & adj[:, feasible[i + 1]].any(axis=1)
        if not feasible[0][start]:
            raise NoCommonSymbol("no routing block with the required endpoints")
        path = [start]
        for i in range(1, L):
            nxt = np.flatnonzero(adj[path[-1]] & feasible[i])
            path.append(int(nxt[0]))
        return np.array(path, dtype=np.int64)

    def bridge(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        key = (int(u[0]), int(u[-1]), int(v[0]), int(v[-1]))
        block = self._memo.get(key)
        if block is None:
            if not self.lazy:
                raise RoutingGap(f"no routing block prepared for endpoints {key}")
            a = self.common_symbol(*key)
            block = self._least_path(key[0], key[3], a)
            self._memo[key] = block
        return block

    def r(self, first: int, second: int, u, v) -> np.ndarray:
        if first == 1 and second == 1:
            return np.asarray(u)
        if first == 2 and second == 2:
            return np.asarray(v)
        if first == 1:
            return self.bridge(np.asarray(u), np.asarray(v))
        return self.bridge(np.asarray(v), np.asarray(u))

    def __len__(self):
        return len(self._memo)


def build_routing_functions(triple: FactorTriple, tb: TransitionBlock, support_pairs=()) -> RoutingFunctions:
    """Routing functions pre-filled for the given (u, v) pairs; raises NoCommonSymbol on a bad pair."""
    rf = RoutingFunctions(triple, tb)
    for u, v in support_pairs:
        u = u if isinstance(u, np.ndarray) else triple.x.encode(u)
        v = v if isinstance(v, np.ndarray) else triple.x.encode(v)
        rf.bridge(u, v)
        rf.bridge(v, u)
    return rf


@dataclass(frozen=True, eq=False)
class SpliceResult:
    z: PairPath
    coin_marks: np.ndarray
    switch_mask: np.ndarray

    @property
    def interior(self) -> slice:
        """Window part between the first and last 1/2 labels (boundary pieces excluded)."""
        if len(self.coin_marks) < 2:
            return slice(0, 0)
        return slice(int(self.coin_marks[0]), int(self.coin_marks[-1]))


def _splice_one(first, second, labels, coins, w_len, bridge):
    src = np.zeros(len(first), dtype=bool)
    bounds = np.append(coins, len(first))
    for j in range(len(coins)):
        if labels[j] == 2:
            src[bounds[j] : bounds[j + 1]] = True
    z = np.where(src, second, first)
    prev = np.concatenate([[1], labels[:-1]])
    for j in np.flatnonzero(prev != labels):
        c = coins[j]
        u = first[c : c + w_len]
        v = second[c : c + w_len]
        z[c : c + w_len] = bridge(u, v) if labels[j] == 2 else bridge(v, u)
    return z


def splice(sample: JumpSample, routing: RoutingFunctions) -> SpliceResult:
    """The spliced pair (z, z').

    Before the first 1/2 label the window is treated as following a 1
    label.  z' is built the same way with the roles of x and x' exchanged.
    """
    pair = sample.pair
    coins = sample.coin_marks
    labels = sample.t[coins].astype(np.int64)
    if len(coins) > 1 and np.any(np.diff(coins) < sample.w_len):
        raise RoutingGap("1/2 labels closer than the routing block length")
    w_len = sample.w_len
    if len(coins) and coins[-1] + w_len > len(pair):
        raise RoutingGap("last routing block runs past the window")
    z = _splice_one(pair.x, pair.x_prime, labels, coins, w_len, routing.bridge)
    zp = _splice_one(pair.x_prime, pair.x, labels, coins, w_len, routing.bridge)
    switch = np.zeros(len(pair), dtype=bool)
    prev = np.concatenate([[1], labels[:-1]]) if len(labels) else labels
    for c in coins[(prev != labels)] if len(labels) else []:
        switch[c : c + w_len] = True
    return SpliceResult(PairPath(z, zp, pair.y), coins, switch)


def splice_is_legal(triple: FactorTriple, result: SpliceResult) -> bool:
    adj = triple.x.adjacency
    z = result.z
    for path in (z.x, z.x_prime):
        if not np.all(adj[path[:-1], path[1:]]):
            return False
        if not np.array_equal(triple.code_index[path], z.y):
            return False
    return True


# ---------------------------------------------------------------------------
# distinguishability


def block_frequency(blocks: np.ndarray, a_idx: np.ndarray) -> np.ndarray:
    """Frequency of the word ``a_idx`` in each row of ``blocks``."""
    m = len(a_idx)
    width = blocks.shape[1] - m + 1
    if width <= 0:
        return np.zeros(blocks.shape[0])
    hit = np.ones((blocks.shape[0], width), dtype=bool)
    for j in range(m):
        hit &= blocks[:, j : j + width] == a_idx[j]
    return hit.mean(axis=1)


def choose_separator(mu1: MarkovMeasure, mu2: MarkovMeasure, max_len: int = 3) -> tuple:
    """Shortest X-block on which the two measures differ most (first in lexicographic order on ties)."""
    for L in range(1, max_len + 1):
        blocks = enumerate_block_indices(mu1.sft, L)
        diffs = np.array([abs(word_probability(mu1, b) - word_probability(mu2, b)) for b in blocks])
        if diffs.max() > 1e-12:
            return mu1.sft.decode(blocks[int(np.argmax(diffs))])
    raise DegenerateSeparator(f"mu1 and mu2 agree on every block of length <= {max_len}")


@dataclass(frozen=True)
class Distinguishability:
    N: int
    Pstar: float
    Hstar: float
    stderr: float
    Pstar_upper: float
    Hstar_upper: float
    trials: int
    method: str
    a_word: tuple

    def to_dict(self) -> dict:
        out = asdict(self)
        out["a_word"] = list(self.a_word)
        return out


def hstar_from_pstar(pstar: float) -> float:
    return pstar * math.log(2) + hp(min(pstar, 0.5))


def _separator_sets(mu1, mu2, a_word):
    a_idx = mu1.sft.check_legal(a_word)
    m1 = word_probability(mu1, a_idx)
    m2 = word_probability(mu2, a_idx)
    d = abs(m1 - m2)
    if d == 0:
        raise DegenerateSeparator(f"mu1 and mu2 give {tuple(a_word)!r} the same mass")
    return a_idx, m1, m2, d


def _stationary_windows(mu: MarkovMeasure, count: int, length: int, rng) -> np.ndarray:
    out = np.empty((count, length), dtype=np.int64)
    cum0 = np.cumsum(mu.stationary)
    out[:, 0] = np.minimum(np.searchsorted(cum0, rng.random(count), side="right"), mu.sft.size - 1)
    for i in range(1, length):
        cum = mu._cum[out[:, i - 1]]
        out[:, i] = (cum <= rng.random(count)[:, None]).sum(axis=1)
    return out


def _conditioned_windows(sampler: RijSampler, w_idx, length: int, count: int, rng):
    """Windows of λ conditioned on w at time 0: x from mu1 given the w-prefix, x' given π(x)."""
    tr = sampler.triple
    n = tr.x.size
    base = np.ones((length, n), dtype=bool)
    base[: len(w_idx)] = tr.layer_masks(w_idx)
    xs = _batch_constrained(sampler.mu1, np.broadcast_to(base, (count, length, n)), rng)
    masks = tr.code_index[None, None, :] == tr.code_index[xs][:, :, None]
    xps = _batch_constrained(sampler.mu2, masks, rng)
    return xs, xps


def _batch_constrained(mu: MarkovMeasure, masks: np.ndarray, rng, chunk: int = 4096) -> np.ndarray:
    """Vectorized exact conditional sampling for a batch of constraint masks ``(B, L, n)``."""
    B, L, n = masks.shape
    out = np.empty((B, L), dtype=np.int64)
    P = mu.transition
    for lo in range(0, B, chunk):
        m = masks[lo : lo + chunk].astype(float)
        b = m.shape[0]
        beta = np.empty((b, L, n))
        beta[:, -1] = m[:, -1]
        for i in range(L - 2, -1, -1):
            v = m[:, i] * (beta[:, i + 1] @ P.T)
            beta[:, i] = v / np.maximum(v.sum(axis=1, keepdims=True), 1e-300)
        w = mu.stationary[None, :] * beta[:, 0]
        out[lo : lo + b, 0] = _draw(w, rng)
        for i in range(1, L):
            w = P[out[lo : lo + b, i - 1]] * beta[:, i]
            out[lo : lo + b, i] = _draw(w, rng)
    return out


def _draw(weights: np.ndarray, rng) -> np.ndarray:
    total = weights.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        raise ValidationError("constraint with zero mass in batch sampling")
    cum = np.cumsum(weights / total, axis=1)
    idx = (cum <= rng.random(weights.shape[0])[:, None]).sum(axis=1)
    last = weights.shape[1] - 1 - np.argmax((weights > 0)[:, ::-1], axis=1)
    return np.minimum(idx, last)


def distinguishability(mu1: MarkovMeasure, mu2: MarkovMeasure, a_word, N: int, w_len: int, trials: int,
                       seed=0, sampler: RijSampler | None = None, w=None) -> Distinguishability:
    """Monte Carlo estimate of P* and the resulting bound H*.

    P* is the probability, given w at time 0, that the J-blocks
    (J = [|w|, N-1]) of x and x' fail to fall in G1 x G2, where G_i holds the
    blocks whose frequency of ``a_word`` is within d/2 of mu_i(a_word).
    Without a sampler the two windows are drawn independently from the
    stationary chains (exact when the image measure is a point mass).
    """
    if N <= w_len:
        raise DomainError(f"N = {N} must exceed |w| = {w_len}")
    a_idx, m1, m2, d = _separator_sets(mu1, mu2, a_word)
    J = N - w_len
    rng = make_rng(seed, 0xD15, N)
    bad = 0
    done = 0
    chunk = 20_000
    while done < trials:
        b = min(chunk, trials - done)
        if sampler is None:
            xj = _stationary_windows(mu1, b, J, rng)
            xpj = _stationary_windows(mu2, b, J, rng)
        else:
            w_idx = sampler.triple.encode_y(w) if not isinstance(w, np.ndarray) else w
            xs, xps = _conditioned_windows(sampler, w_idx, N, b, rng)
            xj, xpj = xs[:, w_len:], xps[:, w_len:]
        in1 = np.abs(block_frequency(xj, a_idx) - m1) < d / 2
        in2 = np.abs(block_frequency(xpj, a_idx) - m2) < d / 2
        bad += int(np.count_nonzero(~(in1 & in2)))
        done += b
    pstar = bad / trials
    se = math.sqrt(max(pstar * (1 - pstar), 0.0) / trials)
    upper = _one_sided_upper(bad, trials)
    return Distinguishability(N, pstar, hstar_from_pstar(pstar), se, upper, hstar_from_pstar(upper), trials,
                              "monte-carlo", mu1.sft.decode(a_idx))


def _one_sided_upper(hits: int, trials: int, alpha: float = 0.05) -> float:
    """Clopper-Pearson one-sided upper bound."""
    if hits >= trials:
        return 1.0
    from scipy.stats import beta

    return float(beta.ppf(1 - alpha, hits + 1, trials - hits))


def _prob_block_outside_band(mu: MarkovMeasure, a_idx, length: int, centre: float, half: float) -> float:
    """P(frequency of a in a stationary block of the given length is not within centre ± half)."""
    m = len(a_idx)
    width = length - m + 1
    if width <= 0:
        return 0.0 if abs(centre) < half else 1.0
    n = mu.sft.size
    s = min(max(m - 1, 1), length)
    # state: code of the last s symbols; column: occurrences so far
    dist = np.zeros((n**s, width + 1))
    for b in enumerate_block_indices(mu.sft, s):
        occ = len(mark_occurrences(b, a_idx))
        dist[_code(b, n), occ] += word_probability(mu, b)
    P = mu.transition
    a_list = [int(a) for a in a_idx]
    for _ in range(length - s):
        new = np.zeros_like(dist)
        for code in np.flatnonzero(dist.any(axis=1)):
            hist = _decode_code(int(code), n, s)
            for sym in np.flatnonzero(P[hist[-1]] > 0):
                window = hist + [int(sym)]
                ncode = _code(window[1:], n)
                if window[len(window) - m :] == a_list:
                    new[ncode, 1:] += P[hist[-1], sym] * dist[code, :-1]
                else:
                    new[ncode] += P[hist[-1], sym] * dist[code]
        dist = new
    counts = dist.sum(axis=0)
    freq = np.arange(width + 1) / width
    # mass outside the band, summed directly to keep tiny values accurate
    return float(counts[np.abs(freq - centre) >= half].sum())


def _code(block, n) -> int:
    code = 0
    for sym in block:
        code = code * n + int(sym)
    return code


def _decode_code(code, n, length):
    out = []
    for _ in range(length):
        out.append(int(code % n))
        code //= n
    return out[::-1]


def exact_pstar_product(mu1: MarkovMeasure, mu2: MarkovMeasure, a_word, N: int, w_len: int) -> Distinguishability:
    """P* by dynamic programming when x and x' are independent stationary chains on J.

    This is the situation of a code with a one-point image, where the
    relatively independent joining is the product measure.
    """
    a_idx, m1, m2, d = _separator_sets(mu1, mu2, a_word)
    J = N - w_len
    q1 = _prob_block_outside_band(mu1, a_idx, J, m1, d / 2)
    q2 = _prob_block_outside_band(mu2, a_idx, J, m2, d / 2)
    pstar = min(max(q1 + q2 - q1 * q2, 0.0), 1.0)
    h = hstar_from_pstar(pstar)
    return Distinguishability(N, pstar, h, 0.0, pstar, h, 0, "exact-product", mu1.sft.decode(a_idx))


def hstar_at(sampler: RijSampler, w_idx, a_word, N: int, trials: int = 20_000, seed=0) -> Distinguishability:
    """H*(N), exactly when the image is a single point (independent coordinates), else by Monte Carlo."""
    w_len = len(w_idx)
    if len(sampler.triple.y_alphabet) == 1:
        return exact_pstar_product(sampler.mu1, sampler.mu2, a_word, N, w_len)
    return distinguishability(sampler.mu1, sampler.mu2, a_word, N, w_len, trials, seed, sampler=sampler, w=w_idx)


def hstar_grid(sampler: RijSampler, tb: TransitionBlock, Ns, a_word=None, trials: int = 20_000, seed=0) -> dict:
    a_word = choose_separator(sampler.mu1, sampler.mu2) if a_word is None else a_word
    w_idx = sampler.triple.encode_y(tb.w)
    return {int(N): hstar_at(sampler, w_idx, a_word, int(N), trials, seed) for N in Ns}


# ---------------------------------------------------------------------------
# the entropy-gain report


@dataclass(frozen=True)
class ChainConstants:
    C0: int
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    nu_w: float
    w_len: int

    def to_dict(self) -> dict:
        return asdict(self)


def chain_constants(triple: FactorTriple, tb: TransitionBlock, nu: PushforwardMeasure, V: Potential,
                    thinned_fraction: float = 0.0) -> ChainConstants:
    """Constants of the lower bound ``(C3 H_p - C4 H*(N) - C5 p) / N``."""
    nu_w = nu.word_probability(tb.w)
    w_len = len(tb.w)
    C0 = triple.x.size
    C1 = 2 * w_len * nu_w
    C2 = 2 * (w_len * V.max_abs + V.variation_tail)
    C5 = C1 * (2 * math.log(C0) + C2)
    return ChainConstants(C0, C1, C2, nu_w * (1 - thinned_fraction), nu_w, C5, nu_w, w_len)


def exact_h_lambda(sampler: RijSampler, max_n: int = 12) -> tuple[float, float, str]:
    """``h(mu1) + h(mu2) - h(nu)`` for the relatively independent joining, with an error half-width."""
    tr = sampler.triple
    h1, h2 = entropy(sampler.mu1), entropy(sampler.mu2)
    if len(tr.y_alphabet) == 1:
        return h1 + h2, 0.0, "exact"
    if len(set(tr.code_index.tolist())) == tr.x.size:
        return h2, 0.0, "exact"
    ny = len(tr.y_alphabet)
    n = 2
    while n < max_n and ny ** (n + 1) * tr.x.size <= 200_000:
        n += 1
    lo, hi = hidden_markov_entropy_bounds(sampler.nu, n)
    return h1 + h2 - (lo + hi) / 2, (hi - lo) / 2, f"hidden-markov-bounds-{n}"


@dataclass(frozen=True)
class DeltaReport:
    N: int
    p: float
    trials: int
    path_len: int
    k: int
    delta: float
    delta_stderr: float
    ci95: tuple
    positive95: bool
    entropy_gain: float
    entropy_gain_stderr: float
    entropy_gain_cap: float
    h_lambda_empirical: float
    h_lambda_prime_empirical: float
    h_lambda_exact: float
    h_lambda_exact_halfwidth: float
    h_lambda_method: str
    mu1_V: float
    mu2_V: float
    mu1_prime_V: float
    mu2_prime_V: float
    potential_gain: float
    pr_t0_positive: float
    pr_t0_positive_empirical: float
    pr_t0p_4: float
    pr_t0p_4_empirical: float
    pr_S: float
    pr_S_bound: float
    Pstar: float
    Hstar: float
    Hstar_upper: float
    hstar_method: str
    pstar_jump: float
    pstar_jump_stderr: float
    a_word: tuple
    h_eta: float
    gain_term: float
    h1_bound: float
    h2_bound: float
    h3_bound: float
    chain_lower: float
    bound_value: float
    constants: dict
    thinned: int
    boundary_fraction: float
    routing_blocks: int
    workers: int = 1

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        out["a_word"] = list(self.a_word)
        return out


def sample_joining_paths(sampler: RijSampler, path_len: int, trials: int, seed=0) -> list:
    """Independent windows of the relatively independent joining, one RNG stream per trial."""
    return [rij_sample(sampler, path_len, rng=make_rng(seed, 0x5A, i)) for i in range(trials)]


@dataclass(frozen=True, eq=False)
class _TrialCell:
    xx: np.ndarray
    zz: np.ndarray
    x: np.ndarray
    xp: np.ndarray
    z: np.ndarray
    zp: np.ndarray
    marks: int
    coins: int
    switch: int
    positions: int
    thinned: int
    pstar_bad: int
    pstar_total: int


def _label_rng(seed, params: EtaParams, trial: int) -> np.random.Generator:
    return make_rng(seed, 0x7AB, params.N, int(round(params.p * 2**32)), trial)


def _jump_pstar_counts(pair, coins, params, w_len, a_idx, m1, m2, d) -> tuple[int, int]:
    """Among 1/2 labels with a full J-window, how many J-blocks fall outside G1 x G2."""
    span = params.N - w_len
    usable = coins[coins + params.N <= len(pair)]
    if not len(usable) or span <= 0:
        return 0, 0
    wx = sliding_window_view(pair.x, span)[usable + w_len]
    wxp = sliding_window_view(pair.x_prime, span)[usable + w_len]
    in1 = np.abs(block_frequency(wx, a_idx) - m1) < d / 2
    in2 = np.abs(block_frequency(wxp, a_idx) - m2) < d / 2
    return int(np.count_nonzero(~(in1 & in2))), len(usable)


def jump_pstar(sampler: RijSampler, tb: TransitionBlock, params: EtaParams, paths, a_word=None,
               seed=0) -> tuple[float, float, int]:
    """P* measured at the 1/2 labels of actual jump extensions; returns (estimate, stderr, count)."""
    a_word = choose_separator(sampler.mu1, sampler.mu2) if a_word is None else a_word
    a_idx, m1, m2, d = _separator_sets(sampler.mu1, sampler.mu2, a_word)
    w_idx = sampler.triple.encode_y(tb.w)
    bad = total = 0
    for i, pair in enumerate(paths):
        js = attach_jump_labels(pair, w_idx, params, rng=_label_rng(seed, params, i))
        b, t = _jump_pstar_counts(pair, js.coin_marks, params, len(w_idx), a_idx, m1, m2, d)
        bad += b
        total += t
    if total == 0:
        raise TooFewMarks("no 1/2 label with a complete J-window")
    est = bad / total
    return est, math.sqrt(est * (1 - est) / total), total


def _trial_cell(triple, tb, pair, params, rng, a_idx, m1, m2, d, routing=None) -> _TrialCell:
    routing = RoutingFunctions(triple, tb) if routing is None else routing
    w_idx = routing.w_idx
    js = attach_jump_labels(pair, w_idx, params, rng=rng)
    res = splice(js, routing)
    inner = res.interior
    coins = res.coin_marks
    n_sym = triple.x.size
    lo, hi = inner.start, inner.stop
    xx = pair.x[lo:hi] * n_sym + pair.x_prime[lo:hi]
    zz = res.z.x[lo:hi] * n_sym + res.z.x_prime[lo:hi]
    bad, total = _jump_pstar_counts(pair, coins, params, len(w_idx), a_idx, m1, m2, d)
    marks_in = js.marks[(js.marks >= lo) & (js.marks < hi)]
    coins_in = coins[(coins >= lo) & (coins < hi)]
    return _TrialCell(
        xx, zz, pair.x[lo:hi], pair.x_prime[lo:hi], res.z.x[lo:hi], res.z.x_prime[lo:hi],
        len(marks_in), len(coins_in), int(res.switch_mask[lo:hi].sum()), hi - lo, js.thinned, bad, total,
    )


def _potential_sums(V: Potential, cells, block: int, n_blocks: int):
    """Per-bootstrap-block sums of V(z) + V(z') - V(x) - V(x'), with per-path means."""
    pieces, means = [], {"x": [], "xp": [], "z": [], "zp": []}
    for c in cells:
        vals = {key: V.evaluate(getattr(c, key)) for key in means}
        m = min(len(v) for v in vals.values())
        pieces.append(vals["z"][:m] + vals["zp"][:m] - vals["x"][:m] - vals["xp"][:m])
        for key in means:
            means[key].append((vals[key][:m].sum(), m))
    diff = np.concatenate(pieces) if pieces else np.zeros(0)
    blocks = np.minimum(np.arange(len(diff)) // block, n_blocks - 1)
    sums = np.bincount(blocks, weights=diff, minlength=n_blocks)
    counts = np.bincount(blocks, minlength=n_blocks).astype(float)
    avg = {key: sum(s for s, _ in v) / max(sum(m for _, m in v), 1) for key, v in means.items()}
    return sums, counts, avg


def _run_cells(sampler, tb, paths, params, seed, a_idx, m1, m2, d, workers):
    tr = sampler.triple
    rngs = [_label_rng(seed, params, i) for i in range(len(paths))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_trial_cell, tr, tb, pair, params, rng, a_idx, m1, m2, d)
                    for pair, rng in zip(paths, rngs)]
            return [f.result() for f in futs]
    routing = RoutingFunctions(tr, tb)
    return [_trial_cell(tr, tb, pair, params, rng, a_idx, m1, m2, d, routing) for pair, rng in zip(paths, rngs)]


def delta_grid(sampler: RijSampler, tb: TransitionBlock, potentials: dict, grid, path_len: int, trials: int,
               seed=0, k: int = DEFAULT_DELTA_K, a_word=None, hstar_trials: int = 20_000,
               block: int = 1000, resamples: int = 50, workers: int = 1, paths=None) -> dict:
    """Δ reports for every ``(N, p)`` in ``grid`` and every named potential, on shared joining samples.

    Returns ``{(name, N, p): DeltaReport}``.
    """
    tr = sampler.triple
    w_idx = tr.encode_y(tb.w)
    a_word = choose_separator(sampler.mu1, sampler.mu2) if a_word is None else tuple(a_word)
    a_idx, m1, m2, d = _separator_sets(sampler.mu1, sampler.mu2, a_word)
    paths = sample_joining_paths(sampler, path_len, trials, seed) if paths is None else paths
    h_exact, h_half, h_method = exact_h_lambda(sampler)
    nu_w = sampler.nu.word_probability(tb.w)
    hstars = {}
    out = {}
    for N, p in grid:
        params = EtaParams(int(N), float(p))
        if params.N not in hstars:
            hstars[params.N] = hstar_at(sampler, w_idx, a_word, params.N, hstar_trials, seed)
        hs = hstars[params.N]
        cells = _run_cells(sampler, tb, paths, params, seed, a_idx, m1, m2, d, workers)
        xx = np.concatenate([c.xx for c in cells])
        zz = np.concatenate([c.zz for c in cells])
        if len(xx) <= k + 1:
            raise InsufficientData("interior of the spliced windows too short")
        cx = ConditionalCounts(xx, tr.x.size**2, k, block)
        cz = ConditionalCounts(zz, tr.x.size**2, k, block)
        cx.check_visits(f"for (x, x') at k={k}")
        cz.check_visits(f"for (z, z') at k={k}")
        hx, hz = cx.estimate(), cz.estimate()
        positions = sum(c.positions for c in cells)
        thinned = sum(c.thinned for c in cells)
        marks = sum(c.marks for c in cells)
        coins = sum(c.coins for c in cells)
        switch = sum(c.switch for c in cells)
        pbad = sum(c.pstar_bad for c in cells)
        ptot = sum(c.pstar_total for c in cells)
        pj = pbad / ptot if ptot else float("nan")
        pj_se = math.sqrt(pj * (1 - pj) / ptot) if ptot else float("nan")
        rng = make_rng(seed, 0xB00, params.N, int(round(params.p * 1e6)))
        weights = [np.bincount(rng.integers(0, cx.n_blocks, cx.n_blocks), minlength=cx.n_blocks).astype(float)
                   for _ in range(resamples)]
        gain_reps = np.array([cz.estimate(wt) - cx.estimate(wt) for wt in weights])
        for name, V in potentials.items():
            sums, counts, avg = _potential_sums(V, cells, block, cx.n_blocks)
            pot = float(sums.sum() / max(counts.sum(), 1.0))
            reps = np.array([
                g + (wt @ sums) / max(wt @ counts, 1.0) for g, wt in zip(gain_reps, weights)
            ]) if resamples > 1 else np.zeros(0)
            delta = hz - hx + pot
            se = float(np.std(reps, ddof=1)) if len(reps) > 1 else 0.0
            gain_se = float(np.std(gain_reps, ddof=1)) if len(gain_reps) > 1 else 0.0
            const = chain_constants(tr, tb, sampler.nu, V, thinned / max(marks, 1))
            Hp = hp(params.p)
            s_bound = const.C1 * params.p * (1 - params.p) / params.N
            gain_term = nu_w * Hp / params.N
            h1 = nu_w / params.N * hs.Hstar
            h2 = s_bound * math.log(const.C0**2)
            h3 = s_bound * const.C2
            out[(name, params.N, params.p)] = DeltaReport(
                N=params.N, p=params.p, trials=len(paths), path_len=path_len, k=k,
                delta=delta, delta_stderr=se, ci95=(delta - Z95 * se, delta + Z95 * se),
                positive95=bool(delta - Z95 * se > 0),
                entropy_gain=hz - hx, entropy_gain_stderr=gain_se, entropy_gain_cap=gain_term,
                h_lambda_empirical=hx, h_lambda_prime_empirical=hz,
                h_lambda_exact=h_exact, h_lambda_exact_halfwidth=h_half, h_lambda_method=h_method,
                mu1_V=integral(sampler.mu1, V), mu2_V=integral(sampler.mu2, V),
                mu1_prime_V=avg["z"], mu2_prime_V=avg["zp"], potential_gain=pot,
                pr_t0_positive=nu_w, pr_t0_positive_empirical=marks / max(positions, 1),
                pr_t0p_4=nu_w / params.N, pr_t0p_4_empirical=coins / max(positions, 1),
                pr_S=switch / max(positions, 1), pr_S_bound=s_bound,
                Pstar=hs.Pstar, Hstar=hs.Hstar, Hstar_upper=hs.Hstar_upper, hstar_method=hs.method,
                pstar_jump=pj, pstar_jump_stderr=pj_se, a_word=tuple(a_word),
                h_eta=Hp / params.N, gain_term=gain_term, h1_bound=h1, h2_bound=h2, h3_bound=h3,
                chain_lower=gain_term - h1 - h2 - h3,
                bound_value=(const.C3 * Hp - const.C4 * hs.Hstar - const.C5 * params.p) / params.N,
                constants=const.to_dict(), thinned=thinned, boundary_fraction=1 - positions / (len(paths) * path_len),
                routing_blocks=switch // max(const.w_len, 1), workers=workers,
            )
    return out


def estimate_delta(mu1: MarkovMeasure, mu2: MarkovMeasure, nu: PushforwardMeasure, V: Potential,
                   tb: TransitionBlock, params: EtaParams, path_len: int, trials: int, seed=0,
                   k: int = DEFAULT_DELTA_K, a_word=None, hstar_trials: int = 20_000, workers: int = 1) -> DeltaReport:
    """Δ report for a single cell.  Δ̂ is the paired estimate of ``h(λ') - h(λ)`` plus the potential terms."""
    sampler = RijSampler(nu.triple, mu1, mu2, nu)
    grid = delta_grid(sampler, tb, {"V": V}, [(params.N, params.p)], path_len, trials, seed, k, a_word,
                      hstar_trials, workers=workers)
    return grid[("V", params.N, params.p)]


# ---------------------------------------------------------------------------
# choosing p and N


@dataclass(frozen=True)
class BoundSelection:
    N: int
    p: float
    margin: float
    Hstar: float
    lower_bound: float
    candidates_tried: int
    constants: dict

    def to_dict(self) -> dict:
        return asdict(self)


def p_candidates(grid_ps, halvings: int = 40) -> list:
    """The grid values followed by successive halvings of the smallest one."""
    ps = sorted({float(p) for p in grid_ps}, reverse=True)
    low = ps[-1]
    return ps + [low / 2**j for j in range(1, halvings + 1)]


def bound_report(constants: ChainConstants | dict, hstar_by_N: dict, grid_ps=(0.05, 0.1, 0.25),
                 halvings: int = 40, conservative: bool = True) -> BoundSelection:
    """First choose p, then N, so that ``C3 H_p - C4 H*(N) - C5 p > 0``.

    p maximises the margin ``C3 H_p - C5 p`` over :func:`p_candidates`; N is
    the smallest value whose H*(N) (its upper confidence bound when
    ``conservative``) stays below ``margin / C4``.  Raises NoFeasibleCell
    when no pair works.
    """
    c = constants.to_dict() if isinstance(constants, ChainConstants) else dict(constants)
    cands = p_candidates(grid_ps, halvings)
    margins = [(c["C3"] * hp(p) - c["C5"] * p, p) for p in cands]
    best_margin, best_p = max(margins)
    if best_margin <= 0:
        raise NoFeasibleCell("C3 H_p <= C5 p for every candidate p")
    for N in sorted(hstar_by_N):
        hs = hstar_by_N[N]
        h = hs.Hstar_upper if (conservative and isinstance(hs, Distinguishability)) else (
            hs.Hstar if isinstance(hs, Distinguishability) else float(hs))
        if N > c["w_len"] and c["C4"] * h < best_margin:
            return BoundSelection(int(N), best_p, best_margin, h, (best_margin - c["C4"] * h) / N, len(cands), c)
    raise NoFeasibleCell(f"H*(N) never fell below {best_margin / max(c['C4'], 1e-300):.3g} on the N grid")


# ---------------------------------------------------------------------------
# the distribution of t_0


def eta_mass(params: EtaParams, labels) -> float:
    """η-probability that the label at 0 lies in ``labels`` (a subset of {1, 2, 3})."""
    N, p = params.N, params.p
    probs = {1: (1 - p) / N, 2: p / N, 3: (N - 1) / N}
    bad = set(labels) - set(probs)
    if bad:
        raise DomainError(f"labels {sorted(bad)} outside {{1, 2, 3}}")
    return sum(probs[c] for c in set(labels))


def _merge_cylinders(b, a):
    """The word whose cylinder is [b] ∩ [a] (both at coordinate 0), or None when disjoint."""
    long, short = (b, a) if len(b) >= len(a) else (a, b)
    return tuple(long) if tuple(long[: len(short)]) == tuple(short) else None


def lemma_t0_check(mu: MarkovMeasure, a_word, params: EtaParams, cells, samples: int, seed=0,
                   batch: int = 10_000) -> list:
    """Empirical ``P(x in [B], t_0 in C')`` against ``mu([B] ∩ A) η([C'])`` for each (B, C') cell.

    Samples are the coordinates of one long jump-extension path; σ comes
    from batch means.
    """
    a_idx = mu.sft.check_legal(a_word)
    rng = make_rng(seed, 0x70)
    x = sample_path(mu, samples + 16, rng=rng)
    marks = mark_occurrences(x, a_idx)
    t, _ = jump_labels(marks, len(x), params, rng, min_gap=1)
    x, t = x[:samples], t[:samples]
    out = []
    for B, C in cells:
        b_idx = mu.sft.check_legal(B)
        at_b = np.zeros(samples, dtype=bool)
        occ = mark_occurrences(np.concatenate([x, np.full(len(b_idx), -1)]), b_idx)
        at_b[occ[occ < samples]] = True
        hit = at_b & np.isin(t, list(C))
        merged = _merge_cylinders(tuple(B), tuple(a_word))
        expected = (word_probability(mu, merged) if merged is not None else 0.0) * eta_mass(params, C)
        nb = samples // batch
        means = hit[: nb * batch].reshape(nb, batch).mean(axis=1)
        sigma = float(np.std(means, ddof=1) / math.sqrt(nb)) if nb > 1 else float("nan")
        emp = float(hit.mean())
        out.append({"B": list(B), "C": sorted(C), "empirical": emp, "expected": expected, "sigma": sigma,
                    "z": (emp - expected) / sigma if sigma > 0 else 0.0})
    return out
