"""Relatively independent joinings and the finite-window diagonal sets.

The class diagonal itself is not visible in a finite window.  Its
operational stand-in is membership in the "common routing" set: somewhere
in the window the two coordinates route through a common symbol at a common
time, which agrees with the class diagonal almost surely under any relative
joining.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .class_degree import TransitionBlock, reach
from .errors import NoOccurrences, SymbolMismatch, ValidationError
from .measures import (
    MarkovMeasure,
    PushforwardMeasure,
    make_rng,
    pushforward_consistent,
    sample_constrained,
    sample_path,
)
from .shift_core import FactorTriple

DEFAULT_WINDOW = 10_000
MAX_WINDOW = 1_000_000


@dataclass(frozen=True, eq=False)
class PairPath:
    """Two X-paths with a common image, all as index arrays."""

    x: np.ndarray
    x_prime: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if not (len(self.x) == len(self.x_prime) == len(self.y)):
            raise ValidationError("pair path components must have equal lengths")

    def __len__(self):
        return len(self.y)

    def check(self, triple: FactorTriple) -> None:
        if not (np.array_equal(triple.code_index[self.x], self.y) and np.array_equal(triple.code_index[self.x_prime], self.y)):
            raise SymbolMismatch("pair path does not project to its y")


@dataclass(frozen=True, eq=False)
class RijSampler:
    """Sampler for the relatively independent joining of mu1 and mu2 over their common image."""

    triple: FactorTriple
    mu1: MarkovMeasure
    mu2: MarkovMeasure
    nu: PushforwardMeasure = field(default=None)

    def __post_init__(self):
        nu1 = PushforwardMeasure(self.mu1, self.triple)
        nu2 = PushforwardMeasure(self.mu2, self.triple)
        if not pushforward_consistent(nu1, nu2):
            raise ValidationError("mu1 and mu2 do not project to the same measure")
        if self.nu is None:
            object.__setattr__(self, "nu", nu1)
        elif not pushforward_consistent(nu1, self.nu):
            raise ValidationError("mu1 does not project to the given nu")


def rij_sample(sampler: RijSampler, length: int, seed=0, rng=None) -> PairPath:
    """One window of the relatively independent joining.

    y is the image of a mu1-path; x and x' are then drawn independently from
    mu1 and mu2 conditioned on that image over the window.
    """
    rng = make_rng(seed) if rng is None else rng
    tr = sampler.triple
    y = tr.code_index[sample_path(sampler.mu1, length, rng=rng)]
    masks = tr.layer_masks(y)
    x = sample_constrained(sampler.mu1, masks, rng)
    xp = sample_constrained(sampler.mu2, masks, rng)
    return PairPath(x, xp, y)


def mark_occurrences(y, w) -> np.ndarray:
    """Start positions of every (possibly overlapping) occurrence of w in y."""
    y = np.asarray(y)
    w = np.asarray(w)
    L = len(w)
    if L == 0 or L > len(y):
        return np.zeros(0, dtype=np.int64)
    hit = np.ones(len(y) - L + 1, dtype=bool)
    for j in range(L):
        hit &= y[j : len(y) - L + 1 + j] == w[j]
    return np.flatnonzero(hit)


def _as_idx(triple: FactorTriple, word) -> np.ndarray:
    if isinstance(word, np.ndarray):
        return word.astype(np.int64)
    return triple.x.encode(word)


def _common_route_at(triple, x, xp, start, stop, pos) -> bool:
    """Do x[start:stop] and x'[start:stop] route through one symbol at absolute time pos?"""
    r = reach(triple, triple.code_index[x[start:stop]])
    n = pos - start
    a_ok = r.forward[n][x[start]] & r.backward[n][:, x[stop - 1]]
    b_ok = r.forward[n][xp[start]] & r.backward[n][:, xp[stop - 1]]
    return bool(np.any(a_ok & b_ok))


def d2_membership(triple: FactorTriple, pair: PairPath, width: int = 6) -> bool:
    """Some time and symbol through which both coordinates route, using windows up to ``width``."""
    x, xp = pair.x, pair.x_prime
    if np.any(x == xp):
        return True
    T = len(x)
    for length in range(1, min(width, T) + 1):
        for start in range(T - length + 1):
            stop = start + length
            for pos in range(start, stop):
                if _common_route_at(triple, x, xp, start, stop, pos):
                    return True
    return False


def bridgeable_pair(triple: FactorTriple, u, v) -> bool:
    """Both splices exist: a preimage of π(u) from u's first symbol to v's last, and vice versa."""
    u = _as_idx(triple, u)
    v = _as_idx(triple, v)
    if len(u) != len(v) or not np.array_equal(triple.code_index[u], triple.code_index[v]):
        raise SymbolMismatch("u and v must have the same image")
    ends = reach(triple, triple.code_index[u]).ends
    return bool(ends[u[0], v[-1]] and ends[v[0], u[-1]])


def _route_sets(triple: FactorTriple, tb: TransitionBlock) -> np.ndarray:
    """``[s, e, j]``: endpoints (s, e) route through the j-th member of M."""
    r = reach(triple, tb.w)
    m_idx = [triple.x.index(a) for a in tb.M]
    return r.routes(tb.n)[:, :, m_idx]


def common_routing_check(triple: FactorTriple, tb: TransitionBlock, pair: PairPath) -> list:
    """Occurrences of tb.w whose aligned blocks share no routing symbol in M (empty when all pass)."""
    w_idx = triple.encode_y(tb.w)
    occ = mark_occurrences(pair.y, w_idx)
    if len(occ) == 0:
        return []
    routes = _route_sets(triple, tb)
    last = occ + len(w_idx) - 1
    a = routes[pair.x[occ], pair.x[last]]
    b = routes[pair.x_prime[occ], pair.x_prime[last]]
    bad = ~np.any(a & b, axis=1)
    return occ[bad].tolist()


def wilson_interval(hits: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    p = hits / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class DiagonalReport:
    trials: int
    window: int
    d2_hits: int
    estimate: float
    interval: tuple
    occurrences: int
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "window": self.window,
            "d2_hits": self.d2_hits,
            "estimate": self.estimate,
            "wilson95": list(self.interval),
            "occurrences": self.occurrences,
            "workers": self.workers,
        }


def estimate_class_diagonal_mass(sampler: RijSampler, tb: TransitionBlock, trials: int,
                                 window: int = DEFAULT_WINDOW, seed=0) -> DiagonalReport:
    """Fraction of sampled pairs that share a routing symbol at some occurrence of tb.w.

    Windows in which w never occurs are redrawn with the window doubled, up
    to ``MAX_WINDOW``.
    """
    tr = sampler.triple
    w_idx = tr.encode_y(tb.w)
    routes = _route_sets(tr, tb)
    hits = 0
    occurrences = 0
    for trial in range(trials):
        win = window
        attempt = 0
        while True:
            pair = rij_sample(sampler, win, rng=make_rng(seed, trial, attempt))
            occ = mark_occurrences(pair.y, w_idx)
            if len(occ):
                break
            attempt += 1
            win *= 2
            if win > MAX_WINDOW:
                raise NoOccurrences(f"{tb.w!r} did not occur in a window of {MAX_WINDOW}")
        last = occ + len(w_idx) - 1
        common = np.any(routes[pair.x[occ], pair.x[last]] & routes[pair.x_prime[occ], pair.x_prime[last]], axis=1)
        occurrences += len(occ)
        hits += bool(common.any())
    est = hits / trials if trials else 0.0
    return DiagonalReport(trials, window, hits, est, wilson_interval(hits, trials), occurrences)
