"""Markov measures, potentials, pressure, and pushforward word probabilities.

All logarithms are natural; entropies and pressures are in nats per symbol.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import DomainError, NotIrreducible, ValidationError, ZeroMassWord
from .shift_core import FactorTriple, Sft, enumerate_block_indices, higher_block, is_irreducible, max_blocks

STOCHASTIC_ATOL = 1e-9


def make_rng(seed, *keys) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(seed, *keys)``.

    Identical keys give identical streams on every platform; distinct keys
    give independent streams, which is how trials and workers are split.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Unique stationary vector of a stochastic matrix.

    Raises ValidationError when it is not unique (reducible chains need an
    explicit choice).
    """
    n = transition.shape[0]
    basis = scipy.linalg.null_space(transition.T - np.eye(n), rcond=1e-10)
    if basis.shape[1] != 1:
        raise ValidationError(
            f"stationary distribution is not unique ({basis.shape[1]} invariant directions); pass it explicitly"
        )
    v = basis[:, 0]
    v = np.abs(v) / np.abs(v).sum()
    # a few multiplications polish the null-space solve to round-off level
    for _ in range(50):
        nxt = v @ transition
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - v)) < 1e-15:
            v = nxt
            break
        v = nxt
    return v


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """Stationary Markov chain supported on the allowed transitions of ``sft``."""

    sft: Sft
    transition: np.ndarray
    stationary: np.ndarray
    _cum: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        pi = np.array(self.stationary, dtype=float)
        n = self.sft.size
        if P.shape != (n, n) or pi.shape != (n,):
            raise ValidationError(f"measure shape does not match the alphabet size {n}")
        if np.any(P < 0) or np.any(pi < 0):
            raise ValidationError("negative probabilities")
        if np.any((P > 0) & ~self.sft.adjacency):
            raise ValidationError("transition matrix charges a forbidden pair")
        rows = P.sum(axis=1)
        if np.max(np.abs(rows - 1)) > STOCHASTIC_ATOL:
            raise ValidationError("transition rows must sum to 1")
        P = P / rows[:, None]
        if abs(pi.sum() - 1) > STOCHASTIC_ATOL:
            raise ValidationError("stationary vector must sum to 1")
        pi = pi / pi.sum()
        if np.max(np.abs(pi @ P - pi)) > STOCHASTIC_ATOL:
            raise ValidationError("stationary vector is not invariant under the transition matrix")
        P.setflags(write=False)
        pi.setflags(write=False)
        cum = np.cumsum(P, axis=1)
        for i in range(n):
            last = np.flatnonzero(P[i] > 0)
            if len(last):
                cum[i, last[-1] :] = 2.0
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "stationary", pi)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_transition(cls, sft: Sft, transition, stationary=None) -> "MarkovMeasure":
        P = np.array(transition, dtype=float)
        if stationary is None:
            stationary = stationary_distribution(P / P.sum(axis=1, keepdims=True))
        return cls(sft, P, np.asarray(stationary, dtype=float))

    def to_dict(self) -> dict:
        return {"type": "markov", "transition": self.transition.tolist(), "stationary": self.stationary.tolist()}


def bernoulli(sft: Sft, probs) -> MarkovMeasure:
    """I.i.d. measure on a full shift, ``probs`` in alphabet order (or a symbol -> p mapping)."""
    if isinstance(probs, dict):
        probs = [probs.get(a, 0.0) for a in sft.alphabet]
    probs = np.asarray(probs, dtype=float)
    return MarkovMeasure(sft, np.tile(probs, (sft.size, 1)), probs)


def random_markov(sft: Sft, rng: np.random.Generator, concentration: float = 1.0) -> MarkovMeasure:
    """Random Markov measure charging every allowed transition (irreducible ``sft`` required)."""
    w = rng.gamma(concentration, size=sft.adjacency.shape) * sft.adjacency
    return MarkovMeasure.from_transition(sft, w / w.sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True, eq=False)
class Potential:
    """A real function of the first ``k`` coordinates, tabulated on legal k-blocks.

    ``variation[j]`` is the largest oscillation of V over cylinders of length
    j, for j = 0..k; it vanishes from j = k on.
    """

    sft: Sft
    k: int
    table: dict
    variation: tuple = ()
    _dense: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("potential range must be at least 1")
        n = self.sft.size
        dense = np.full(n**self.k, np.nan)
        for block, value in self.table.items():
            block = tuple(block)
            if len(block) != self.k:
                raise ValidationError(f"potential block {block!r} has length != {self.k}")
            dense[_block_code(self.sft.encode(block), n)] = float(value)
        legal = enumerate_block_indices(self.sft, self.k)
        codes = _block_code_rows(legal, n)
        missing = np.isnan(dense[codes])
        if missing.any():
            raise ValidationError(f"potential undefined on {missing.sum()} legal blocks")
        object.__setattr__(self, "_dense", dense)
        if not self.variation:
            object.__setattr__(self, "variation", self._compute_variation(legal, dense[codes]))

    def _compute_variation(self, legal, values) -> tuple:
        var = []
        for j in range(self.k + 1):
            if j == 0:
                var.append(float(values.max() - values.min()))
                continue
            if j >= self.k:
                var.append(0.0)
                continue
            prefix = _block_code_rows(legal[:, :j], self.sft.size)
            worst = 0.0
            for p in np.unique(prefix):
                sel = values[prefix == p]
                worst = max(worst, float(sel.max() - sel.min()))
            var.append(worst)
        return tuple(var)

    @property
    def max_abs(self) -> float:
        vals = self._dense[~np.isnan(self._dense)]
        return float(np.max(np.abs(vals))) if len(vals) else 0.0

    @property
    def variation_tail(self) -> float:
        """Sum of var_j over j >= 1."""
        return float(sum(self.variation[1:]))

    def __call__(self, block) -> float:
        return float(self._dense[_block_code(self.sft.encode(tuple(block)), self.sft.size)])

    def evaluate(self, path: np.ndarray) -> np.ndarray:
        """V at every position of an index path that has k symbols available."""
        path = np.asarray(path, dtype=np.int64)
        m = len(path) - self.k + 1
        if m <= 0:
            return np.zeros(0)
        code = np.zeros(m, dtype=np.int64)
        for j in range(self.k):
            code = code * self.sft.size + path[j : j + m]
        return self._dense[code]

    def items(self):
        return self.table.items()

    @classmethod
    def zero(cls, sft: Sft) -> "Potential":
        return cls.constant(sft, 0.0)

    @classmethod
    def constant(cls, sft: Sft, c: float) -> "Potential":
        return cls(sft, 1, {(a,): float(c) for a in sft.alphabet})

    @classmethod
    def indicator(cls, sft: Sft, symbol, scale: float = 1.0) -> "Potential":
        return cls(sft, 1, {(a,): (scale if a == symbol else 0.0) for a in sft.alphabet})

    @classmethod
    def from_function(cls, sft: Sft, k: int, func) -> "Potential":
        legal = enumerate_block_indices(sft, k)
        return cls(sft, k, {sft.decode(b): float(func(sft.decode(b))) for b in legal})


def _block_code(idx, n) -> int:
    code = 0
    for i in idx:
        code = code * n + int(i)
    return code


def _block_code_rows(blocks: np.ndarray, n: int) -> np.ndarray:
    code = np.zeros(blocks.shape[0], dtype=np.int64)
    for j in range(blocks.shape[1]):
        code = code * n + blocks[:, j]
    return code


# ---------------------------------------------------------------------------
# Perron data, Parry measure, equilibrium states


def perron(matrix: np.ndarray, tol: float = 1e-13, max_iter: int = 200_000):
    """Perron eigenvalue with right and left eigenvectors of an irreducible nonnegative matrix.

    Power iteration on ``M + c I`` (c > 0), which is primitive even when M is
    periodic, so every irreducible matrix converges.
    """
    M = np.asarray(matrix, dtype=float)
    shift = float(M.max())

    def iterate(A):
        vals, vecs = np.linalg.eig(A)
        guess = np.abs(np.real(vecs[:, np.argmax(np.real(vals))]))
        v = guess + 1e-3 * guess.max() + 1e-300
        v /= v.max()
        Ms = A + shift * np.eye(A.shape[0])
        lam = 0.0
        for _ in range(max_iter):
            w = Ms @ v
            lam = w.max()
            w /= lam
            if np.max(np.abs(w - v)) < tol:
                v = w
                break
            v = w
        rho = lam - shift
        residual = np.max(np.abs(A @ v - rho * v)) / max(rho, 1e-300)
        return rho, v, residual

    rho, right, res_r = iterate(M)
    rho_l, left, res_l = iterate(M.T)
    if max(res_r, res_l) > 1e-10:
        raise NotIrreducible(f"power iteration did not converge (residual {max(res_r, res_l):.2e})")
    return 0.5 * (rho + rho_l), right, left


def _perron_measure(sft: Sft, kernel: np.ndarray) -> tuple[MarkovMeasure, float]:
    rho, r, l = perron(kernel)
    P = kernel * r[None, :] / (rho * r[:, None])
    P /= P.sum(axis=1, keepdims=True)
    pi = l * r
    pi /= pi.sum()
    return MarkovMeasure(sft, P, pi), math.log(rho)


def parry_measure(sft: Sft) -> MarkovMeasure:
    """Measure of maximal entropy of an irreducible SFT."""
    if not is_irreducible(sft):
        raise NotIrreducible("the Parry measure needs an irreducible shift")
    mu, _ = _perron_measure(sft, sft.adjacency.astype(float))
    return mu


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    measure: MarkovMeasure
    pressure: float
    block_length: int
    blocks: list
    potential: Potential


def equilibrium_state(sft: Sft, V: Potential) -> EquilibriumState:
    """Markov equilibrium state of a finite-range potential.

    The transfer matrix lives on m-blocks, m = max(k - 1, 1); the entry for
    an overlapping pair of m-blocks is ``exp`` of V on the k-block they spell
    (for k = 1, V of the first symbol).  The measure is returned on the
    m-block presentation together with V lifted there, and the pressure is
    ``log`` of the Perron eigenvalue.
    """
    if not is_irreducible(sft):
        raise NotIrreducible("equilibrium states are computed for irreducible shifts only")
    m = max(V.k - 1, 1)
    hb, blocks = higher_block(sft, m)
    kernel = np.zeros((hb.size, hb.size))
    lifted = {}
    for i, u in enumerate(hb.alphabet):
        for j in np.flatnonzero(hb.adjacency[i]):
            v = hb.alphabet[j]
            spelled = u + v[-1:] if m > 1 else (u[0], v[0])
            val = V(spelled[: V.k])
            kernel[i, j] = math.exp(val)
            lifted[(u, v)] = val
    mu, pressure = _perron_measure(hb, kernel)
    if m == 1:
        base = MarkovMeasure(sft, mu.transition, mu.stationary)
        return EquilibriumState(base, pressure, 1, blocks, V)
    return EquilibriumState(mu, pressure, m, blocks, Potential(hb, 2, lifted))


def lift_potential(V: Potential, hb: Sft) -> Potential:
    """Express a range-k potential on the (k-1)-block presentation as a range-2 potential."""
    table = {}
    for i, u in enumerate(hb.alphabet):
        for j in np.flatnonzero(hb.adjacency[i]):
            v = hb.alphabet[j]
            table[(u, v)] = V((u + v[-1:])[: V.k])
    return Potential(hb, 2, table)


def entropy(mu: MarkovMeasure) -> float:
    P = mu.transition
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return float(-(mu.stationary @ terms.sum(axis=1)))


def integral(mu: MarkovMeasure, V: Potential) -> float:
    """Exact expectation of V under a Markov measure on the same shift."""
    if V.sft is not mu.sft and V.sft.alphabet != mu.sft.alphabet:
        raise ValidationError("potential and measure live on different shifts")
    blocks = enumerate_block_indices(mu.sft, V.k)
    probs = mu.stationary[blocks[:, 0]].copy()
    for j in range(1, V.k):
        probs *= mu.transition[blocks[:, j - 1], blocks[:, j]]
    values = V._dense[_block_code_rows(blocks, mu.sft.size)]
    return float(probs @ values)


def pressure_value(mu: MarkovMeasure, V: Potential) -> float:
    """``h(mu) + integral of V``."""
    return entropy(mu) + integral(mu, V)


def word_probability(mu: MarkovMeasure, word) -> float:
    idx = mu.sft.check_legal(word) if not isinstance(word, np.ndarray) else np.asarray(word)
    if len(idx) == 0:
        return 1.0
    p = mu.stationary[idx[0]]
    for a, b in zip(idx[:-1], idx[1:]):
        p *= mu.transition[a, b]
    return float(p)


@dataclass(frozen=True, eq=False)
class PushforwardMeasure:
    """Image of a Markov measure under a 1-block code (a hidden Markov measure on Y)."""

    source: MarkovMeasure
    triple: FactorTriple

    def __post_init__(self):
        if self.source.sft.alphabet != self.triple.x.alphabet:
            raise ValidationError("source measure and triple use different X alphabets")

    def _w_idx(self, word) -> np.ndarray:
        if isinstance(word, np.ndarray):
            return word.astype(np.int64)
        return self.triple.encode_y(word)

    def word_probability(self, word) -> float:
        masks = self.triple.layer_masks(self._w_idx(word))
        if len(masks) == 0:
            return 1.0
        alpha = self.source.stationary * masks[0]
        for row in masks[1:]:
            alpha = (alpha @ self.source.transition) * row
        return float(alpha.sum())

    def is_positive(self, word) -> bool:
        """Exact support test: some preimage path has positive start mass and positive steps."""
        masks = self.triple.layer_masks(self._w_idx(word))
        if len(masks) == 0:
            return True
        support = self.source.transition > 0
        reach = (self.source.stationary > 0) & masks[0]
        for row in masks[1:]:
            reach = support[reach].any(axis=0) & row
            if not reach.any():
                return False
        return bool(reach.any())

    def positive_words(self, length: int) -> list:
        ys = range(len(self.triple.y_alphabet))
        count = len(self.triple.y_alphabet) ** length
        if count > max_blocks():
            raise ValidationError(f"{count} Y-words of length {length} exceed the enumeration cap")
        return [w for w in itertools.product(ys, repeat=length) if self.is_positive(np.array(w))]


def nu_word_probability(nu: PushforwardMeasure, word) -> float:
    return nu.word_probability(word)


def pushforward_consistent(a: PushforwardMeasure, b: PushforwardMeasure, max_len: int = 6, atol: float = 1e-9) -> bool:
    """Whether two pushforwards agree on every Y-word up to ``max_len``."""
    n = len(a.triple.y_alphabet)
    for L in range(1, max_len + 1):
        for w in itertools.product(range(n), repeat=L):
            w = np.array(w)
            if abs(a.word_probability(w) - b.word_probability(w)) > atol:
                return False
    return True


# ---------------------------------------------------------------------------
# sampling


def sample_path(mu: MarkovMeasure, length: int, seed=0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Stationary Markov path as an index array, reproducible from ``seed``."""
    if length < 1:
        raise ValidationError("path length must be at least 1")
    rng = make_rng(seed) if rng is None else rng
    u0 = rng.random()
    start = int(np.searchsorted(np.cumsum(mu.stationary), u0, side="right"))
    start = min(start, mu.sft.size - 1)
    while mu.stationary[start] == 0:
        start -= 1
    uniforms = rng.random(length - 1)
    return _kernels.markov_walk(start, mu._cum, uniforms)


def sample_constrained(mu: MarkovMeasure, masks: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact draw from mu restricted to paths with ``masks[i, x_i]`` true for every i."""
    masks = np.ascontiguousarray(masks, dtype=np.bool_)
    out = _kernels.constrained_sample(mu.stationary, mu.transition, masks, rng.random(masks.shape[0]))
    if len(out) and out[0] < 0:
        raise ZeroMassWord("the constraint has zero mass under the measure")
    return out


def conditional_sample(mu: MarkovMeasure, triple: FactorTriple, y, seed=0, rng=None) -> np.ndarray:
    """Draw an X-path from mu conditioned on its image being the Y-word ``y``."""
    rng = make_rng(seed) if rng is None else rng
    y_idx = y if isinstance(y, np.ndarray) else triple.encode_y(y)
    return sample_constrained(mu, triple.layer_masks(y_idx), rng)


def conditional_sample_many(mu: MarkovMeasure, triple: FactorTriple, y, count: int, seed=0) -> np.ndarray:
    """``count`` independent conditional draws for a short Y-word, shape ``(count, |y|)``."""
    rng = make_rng(seed)
    y_idx = y if isinstance(y, np.ndarray) else triple.encode_y(y)
    masks = triple.layer_masks(y_idx).astype(float)
    L, n = masks.shape
    P = mu.transition
    beta = np.zeros((L, n))
    beta[-1] = masks[-1]
    for i in range(L - 2, -1, -1):
        beta[i] = masks[i] * (P @ beta[i + 1])
    first = mu.stationary * beta[0]
    if first.sum() <= 0:
        raise ZeroMassWord("the Y-word has zero mass")
    out = np.empty((count, L), dtype=np.int64)
    out[:, 0] = _draw_rows(np.tile(first / first.sum(), (count, 1)), rng)
    for i in range(1, L):
        w = P[out[:, i - 1]] * beta[i][None, :]
        out[:, i] = _draw_rows(w / w.sum(axis=1, keepdims=True), rng)
    return out


def _draw_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None]
    idx = (cum <= u).sum(axis=1)
    last = probs.shape[1] - 1 - np.argmax((probs > 0)[:, ::-1], axis=1)
    return np.minimum(idx, last)


# ---------------------------------------------------------------------------
# elementary entropy bounds


def hp(p: float) -> float:
    """Binary entropy in nats, with 0 log 0 = 0."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise DomainError(f"probability {p!r} outside [0, 1]")
    return -sum(q * math.log(q) for q in (p, 1.0 - p) if q > 0)


def bound_good(K: int, prE: float) -> float:
    """Conditional-entropy bound when the bad event is visible from the conditioning variable."""
    if K < 1:
        raise DomainError("K must be at least 1")
    if not 0.0 <= prE <= 1.0:
        raise DomainError(f"probability {prE!r} outside [0, 1]")
    return prE * math.log(K)


def bound_bad(K: int, prE: float) -> float:
    """Same bound when the event is not measurable; pays an extra binary entropy term."""
    return bound_good(K, prE) + hp(prE)


def hidden_markov_entropy_bounds(nu: PushforwardMeasure, n: int) -> tuple[float, float]:
    """Lower and upper bounds on the entropy rate of a pushforward measure.

    Upper: H(Y_n | Y_1..Y_{n-1}).  Lower: the same quantity further
    conditioned on the hidden state X_1.  Both converge monotonically.
    """
    if n < 2:
        raise ValidationError("need n >= 2")
    src, tr = nu.source, nu.triple
    ny = len(tr.y_alphabet)
    if ny**n * src.sft.size > max_blocks():
        raise ValidationError("enumeration too large for the requested n")
    onehot = tr.code_index[None, :] == np.arange(ny)[:, None]

    def block_entropy(length):
        # states: forward vectors alpha over X for every Y-word
        alphas = src.stationary[None, :] * onehot.astype(float)
        for _ in range(length - 1):
            nxt = alphas @ src.transition
            alphas = (nxt[:, None, :] * onehot[None, :, :]).reshape(-1, src.sft.size)
        probs = alphas.sum(axis=1)
        probs = probs[probs > 0]
        return -float(probs @ np.log(probs)), alphas

    def block_entropy_given_x1(length):
        total = 0.0
        for s in range(src.sft.size):
            if src.stationary[s] == 0:
                continue
            alphas = np.zeros((1, src.sft.size))
            alphas[0, s] = 1.0
            for _ in range(length - 1):
                nxt = alphas @ src.transition
                alphas = (nxt[:, None, :] * onehot[None, :, :]).reshape(-1, src.sft.size)
            probs = alphas.sum(axis=1)
            probs = probs[probs > 0]
            total += src.stationary[s] * -float(probs @ np.log(probs))
        return total

    upper = block_entropy(n)[0] - block_entropy(n - 1)[0]
    lower = block_entropy_given_x1(n) - block_entropy_given_x1(n - 1)
    return lower, upper
