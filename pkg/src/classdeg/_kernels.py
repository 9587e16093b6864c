"""Compiled inner loops for Markov path sampling.

All randomness is drawn by numpy (Philox) outside these kernels and passed
in as uniforms, so the streams do not depend on numba.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def markov_walk(start, cum, uniforms):
    n = uniforms.shape[0] + 1
    out = np.empty(n, dtype=np.int64)
    s = start
    out[0] = s
    k = cum.shape[1]
    for t in range(n - 1):
        u = uniforms[t]
        j = 0
        while j < k - 1 and cum[s, j] <= u:
            j += 1
        s = j
        out[t + 1] = s
    return out


@njit(cache=True)
def constrained_sample(stationary, transition, masks, uniforms):
    """Exact draw of a path conditioned on lying in ``masks[i]`` at time i.

    Backward pass accumulates normalized continuation mass, forward pass
    samples.  Returns -1 in position 0 when the constraint has zero mass.
    """
    L, n = masks.shape
    beta = np.zeros((L, n))
    for s in range(n):
        if masks[L - 1, s]:
            beta[L - 1, s] = 1.0
    for i in range(L - 2, -1, -1):
        total = 0.0
        for s in range(n):
            if masks[i, s]:
                acc = 0.0
                for t in range(n):
                    if masks[i + 1, t]:
                        acc += transition[s, t] * beta[i + 1, t]
                beta[i, s] = acc
                total += acc
        if total <= 0.0:
            out = np.full(L, -1, dtype=np.int64)
            return out
        for s in range(n):
            beta[i, s] /= total
    out = np.empty(L, dtype=np.int64)
    weights = np.zeros(n)
    total = 0.0
    for s in range(n):
        weights[s] = stationary[s] * beta[0, s]
        total += weights[s]
    if total <= 0.0:
        out[:] = -1
        return out
    u = uniforms[0] * total
    acc = 0.0
    cur = n - 1
    for s in range(n):
        if weights[s] > 0.0:
            cur = s
            acc += weights[s]
            if u < acc:
                break
    out[0] = cur
    for i in range(1, L):
        total = 0.0
        for t in range(n):
            weights[t] = transition[cur, t] * beta[i, t]
            total += weights[t]
        u = uniforms[i] * total
        acc = 0.0
        nxt = -1
        for t in range(n):
            if weights[t] > 0.0:
                nxt = t
                acc += weights[t]
                if u < acc:
                    break
        cur = nxt
        out[i] = cur
    return out


@njit(cache=True)
def pattern_counts(codes, n_codes):
    out = np.zeros(n_codes, dtype=np.int64)
    for c in codes:
        out[c] += 1
    return out
