"""Empirical entropy-rate estimators for symbol sequences.

Sequences are integer arrays.  Joint processes are formed with
:func:`combine`, which packs several aligned sequences into one alphabet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .errors import InsufficientData, ValidationError
from .measures import make_rng

DEFAULT_SCHEDULE = (4, 6, 8, 10)
BOOTSTRAP_BLOCK = 1000
BOOTSTRAP_RESAMPLES = 50
MIN_VISITS = 10


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    stderr: float
    method: str
    k: int | None = None
    n: int = 0
    by_k: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "method": self.method,
            "k": self.k,
            "n": self.n,
            "by_k": {str(k): v for k, v in self.by_k.items()},
        }


def combine(*words) -> np.ndarray:
    """Pack aligned integer sequences into a single sequence over the product alphabet."""
    if not words:
        raise ValidationError("nothing to combine")
    n = len(words[0])
    if any(len(w) != n for w in words):
        raise ValidationError("sequences must have equal lengths")
    out = np.zeros(n, dtype=np.int64)
    for w in words:
        w = np.asarray(w, dtype=np.int64)
        out = out * (int(w.max()) + 1 if n else 1) + w
    return out


def _compress(word) -> tuple[np.ndarray, int]:
    word = np.asarray(word)
    symbols, inverse = np.unique(word, return_inverse=True)
    return inverse.astype(np.int64), len(symbols)


def _pattern_codes(word: np.ndarray, A: int, length: int) -> np.ndarray:
    m = len(word) - length + 1
    if A ** length >= 2**62:
        raise InsufficientData(f"alphabet {A} too large for blocks of length {length}")
    code = np.zeros(m, dtype=np.int64)
    for j in range(length):
        code = code * A + word[j : j + m]
    return code


def _plugin(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    total = counts.sum()
    return float(math.log(total) - (counts @ np.log(counts)) / total)


class ConditionalCounts:
    """Counts of (context, next symbol) patterns, split into bootstrap blocks."""

    def __init__(self, word: np.ndarray, A: int, k: int, block: int):
        codes = _pattern_codes(word, A, k + 1)
        self._build(codes // A, codes, block)

    @classmethod
    def from_codes(cls, ctx: np.ndarray, sym: np.ndarray, block: int) -> "ConditionalCounts":
        """Counts from explicit context codes and next-symbol codes."""
        ctx_ids, ctx_c = np.unique(ctx, return_inverse=True)
        sym_ids, sym_c = np.unique(sym, return_inverse=True)
        out = cls.__new__(cls)
        out._build(ctx_c, ctx_c.astype(np.int64) * len(sym_ids) + sym_c, block)
        return out

    def _build(self, ctx: np.ndarray, codes: np.ndarray, block: int) -> None:
        self.n = len(codes)
        joint_ids, joint_inv = np.unique(codes, return_inverse=True)
        ctx_ids, ctx_inv = np.unique(ctx, return_inverse=True)
        self.distinct = len(joint_ids)
        self.block_of = np.arange(self.n) // block
        self.n_blocks = int(self.block_of[-1]) + 1
        ones = np.ones(self.n)
        self.joint = scipy.sparse.csr_matrix(
            (ones, (self.block_of, joint_inv)), shape=(self.n_blocks, len(joint_ids))
        )
        self.ctx = scipy.sparse.csr_matrix((ones, (self.block_of, ctx_inv)), shape=(self.n_blocks, len(ctx_ids)))

    def estimate(self, weights: np.ndarray | None = None) -> float:
        if weights is None:
            j = np.asarray(self.joint.sum(axis=0)).ravel()
            c = np.asarray(self.ctx.sum(axis=0)).ravel()
        else:
            j = self.joint.T @ weights
            c = self.ctx.T @ weights
        return _plugin(j) - _plugin(c)

    def bootstrap(self, resamples: int, seed=0, key: int = 0xB007) -> float:
        if resamples <= 1 or self.n_blocks < 2:
            return 0.0
        rng = make_rng(seed, key)
        reps = []
        for _ in range(resamples):
            w = np.bincount(rng.integers(0, self.n_blocks, self.n_blocks), minlength=self.n_blocks).astype(float)
            reps.append(self.estimate(w))
        return float(np.std(reps, ddof=1))

    def check_visits(self, what: str) -> None:
        if self.n < MIN_VISITS * self.distinct:
            raise InsufficientData(
                f"{self.n} positions for {self.distinct} distinct patterns {what}: fewer than {MIN_VISITS} visits each"
            )


def conditional_entropy_rate(word, k: int, block: int = BOOTSTRAP_BLOCK, resamples: int = BOOTSTRAP_RESAMPLES, seed=0):
    """Plug-in ``H(x_0 | x_{-k..-1})`` with a block-bootstrap standard error."""
    word, A = _compress(word)
    if k < 0:
        raise ValidationError("k must be nonnegative")
    if len(word) <= k + 1:
        raise InsufficientData(f"word of length {len(word)} too short for k={k}")
    cc = ConditionalCounts(word, A, k, block)
    cc.check_visits(f"at k={k}")
    value = max(cc.estimate(), 0.0)
    return value, cc.bootstrap(resamples, seed)


def _last_nonzero(t: np.ndarray, K: int) -> np.ndarray:
    """Code of the K most recent nonzero labels strictly before each position (0-padded)."""
    pos = np.flatnonzero(t)
    labels = t[pos].astype(np.int64)
    base = int(labels.max()) + 1 if len(labels) else 1
    before = np.searchsorted(pos, np.arange(len(t)), side="left")
    code = np.zeros(len(t), dtype=np.int64)
    for j in range(1, K + 1):
        idx = before - j
        lab = np.where(idx >= 0, labels[np.maximum(idx, 0)] if len(labels) else 0, 0)
        code = code * base + lab
    return code


def marked_entropy_rate(x, t, k: int, marks: int, block: int = BOOTSTRAP_BLOCK,
                        resamples: int = BOOTSTRAP_RESAMPLES, seed=0) -> tuple[float, float]:
    """Entropy rate of the pair process (x, t) for a sparse label sequence t.

    Conditions (x_0, t_0) on the last k symbols of (x, t) and on the last
    ``marks`` nonzero labels of t.  The context is a function of the past,
    so the plug-in value estimates the entropy rate from above as ``k`` and
    ``marks`` grow, while reaching far back along sparse labels cheaply.
    """
    x, Ax = _compress(x)
    t = np.asarray(t, dtype=np.int64)
    if len(x) != len(t):
        raise ValidationError("x and t must have equal lengths")
    if len(x) <= k + 1:
        raise InsufficientData("sequence too short")
    At = int(t.max()) + 1
    joint = x * At + t
    A = Ax * At
    codes = _pattern_codes(joint, A, k + 1)
    recent = _last_nonzero(t, marks)[k:]
    n_recent = int(recent.max()) + 1
    if (A**k) * n_recent >= 2**62:
        raise InsufficientData("context too large to encode")
    ctx = (codes // A) * n_recent + recent
    cc = ConditionalCounts.from_codes(ctx, codes % A, block)
    cc.check_visits(f"at k={k}, marks={marks}")
    return max(cc.estimate(), 0.0), cc.bootstrap(resamples, seed)


def empirical_entropy(word, k_schedule=DEFAULT_SCHEDULE, block: int = BOOTSTRAP_BLOCK,
                      resamples: int = BOOTSTRAP_RESAMPLES, seed=0, lz: bool = False) -> EntropyEstimate:
    """Entropy rate estimate at the largest k of the schedule.

    The plug-in conditional entropy is reported for every k in the schedule
    (it decreases in k up to sampling noise); the value and block-bootstrap
    standard error are those of the largest k.  With ``lz=True`` an LZ76
    estimate on a prefix is attached under ``by_k["lz76"]``.
    """
    schedule = sorted(set(int(k) for k in k_schedule))
    if not schedule:
        raise ValidationError("empty k schedule")
    by_k = {}
    value = stderr = 0.0
    for k in schedule:
        boot = resamples if k == schedule[-1] else 0
        value, stderr = conditional_entropy_rate(word, k, block=block, resamples=boot, seed=seed)
        by_k[k] = value
    if lz:
        by_k["lz76"] = lz76_entropy(word)
    return EntropyEstimate(value=value, stderr=stderr, method=f"plug-in-{schedule[-1]}", k=schedule[-1],
                           n=len(word), by_k=by_k)


def relative_entropy_estimate(joint_word, factor_word, k: int = 8, block: int = BOOTSTRAP_BLOCK,
                              resamples: int = BOOTSTRAP_RESAMPLES, seed=0) -> EntropyEstimate:
    """``H(joint) - H(factor)`` at matched k, clamped at 0.

    ``joint_word`` must already include the factor coordinate (use
    :func:`combine`).  The standard error comes from a paired block
    bootstrap, so shared fluctuations cancel.
    """
    joint_word = np.asarray(joint_word)
    factor_word = np.asarray(factor_word)
    if len(joint_word) != len(factor_word):
        raise ValidationError("joint and factor sequences must have equal length")
    jw, Aj = _compress(joint_word)
    fw, Af = _compress(factor_word)
    if len(jw) <= k + 1:
        raise InsufficientData("sequence too short")
    cj = ConditionalCounts(jw, Aj, k, block)
    cf = ConditionalCounts(fw, Af, k, block)
    cj.check_visits(f"in the joint process at k={k}")
    value = max(cj.estimate() - cf.estimate(), 0.0)
    rng = make_rng(seed, 0xB008)
    reps = []
    for _ in range(resamples):
        w = np.bincount(rng.integers(0, cj.n_blocks, cj.n_blocks), minlength=cj.n_blocks).astype(float)
        reps.append(cj.estimate(w) - cf.estimate(w))
    stderr = float(np.std(reps, ddof=1)) if len(reps) > 1 else 0.0
    return EntropyEstimate(value=value, stderr=stderr, method=f"plug-in-{k}", k=k, n=len(jw))


def conditional_entropy(x, y) -> float:
    """Plug-in ``H(x | y)`` for i.i.d. samples of a pair of discrete variables."""
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) != len(y) or len(x) == 0:
        raise ValidationError("need equally many nonzero samples of x and y")
    _, joint = np.unique(np.stack([x, y], axis=1), axis=0, return_counts=True)
    _, marg = np.unique(y, return_counts=True)
    return max(_plugin(joint.astype(float)) - _plugin(marg.astype(float)), 0.0)


def lz76_complexity(word) -> int:
    """Number of phrases in the Lempel-Ziv (1976) parsing."""
    s = list(np.asarray(word).tolist())
    n = len(s)
    if n == 0:
        return 0
    c, l, i, k, k_max = 1, 1, 0, 1, 1
    while True:
        if s[i + k - 1] == s[l + k - 1]:
            k += 1
            if l + k > n:
                c += 1
                break
        else:
            k_max = max(k, k_max)
            i += 1
            if i == l:
                c += 1
                l += k_max
                if l + 1 > n:
                    break
                i, k, k_max = 0, 1, 1
            else:
                k = 1
    return c


def lz76_entropy(word, max_len: int = 20_000) -> float:
    """LZ76 entropy-rate estimate (nats) on a prefix: ``c(n) ln n / n``."""
    word = np.asarray(word)[:max_len]
    n = len(word)
    if n < 2:
        raise InsufficientData("LZ76 needs at least two symbols")
    return lz76_complexity(word) * math.log(n) / n
