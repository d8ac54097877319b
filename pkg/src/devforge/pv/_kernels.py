"""Compiled SGD kernels for paragraph-vector training and inference.

Randomness comes from a counter-based splitmix64 stream seeded per
(epoch, document), so results do not depend on document scheduling.
"""

import numpy as np
from numba import njit, prange

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def splitmix_next(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True)
def uniform(state):
    state, z = splitmix_next(state)
    return state, float(z >> np.uint64(11)) * _INV53


@njit(cache=True)
def stream_seed(seed, epoch, doc):
    s = np.uint64(seed)
    s, a = splitmix_next(s ^ (np.uint64(epoch) * np.uint64(0xD1B54A32D192ED03)))
    s, b = splitmix_next(a ^ (np.uint64(doc) * np.uint64(0xAEF17502108EF2D9)))
    return b


@njit(cache=True)
def draw_negative(state, noise_table, target):
    """Draw one index from the noise CDF, rejecting ``target``."""
    while True:
        state, u = uniform(state)
        j = np.searchsorted(noise_table, u, side="right")
        if j >= noise_table.shape[0]:
            j = noise_table.shape[0] - 1
        if j != target:
            return state, j


@njit(cache=True)
def sigmoid(x):
    if x > 30.0:
        return 1.0
    if x < -30.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True)
def _ns_update(h, target, W_out, noise_table, negative, alpha, neu1e, state, learn_out):
    """One positive pair plus ``negative`` noise pairs. Accumulates the
    hidden-layer step into ``neu1e`` and updates W_out rows in place."""
    dim = h.shape[0]
    for n in range(negative + 1):
        if n == 0:
            j = target
            label = 1.0
        else:
            state, j = draw_negative(state, noise_table, target)
            label = 0.0
        f = 0.0
        for k in range(dim):
            f += W_out[j, k] * h[k]
        g = (label - sigmoid(f)) * alpha
        for k in range(dim):
            neu1e[k] += g * W_out[j, k]
        if learn_out:
            for k in range(dim):
                W_out[j, k] += g * h[k]
    return state


def _epoch_impl(flat, offsets, doc_rows, D, W_in, W_out, noise_table, dm, window, negative,
                alpha0, alpha1, pos0, total, seed, epoch, learn_doc, learn_words, learn_out):
    n_docs = offsets.shape[0] - 1
    dim = D.shape[1]
    for di in prange(n_docs):
        start = offsets[di]
        stop = offsets[di + 1]
        row = doc_rows[di]
        state = stream_seed(seed, epoch, di)
        h = np.empty(dim, dtype=np.float64)
        neu1e = np.empty(dim, dtype=np.float64)
        for t in range(start, stop):
            frac = (pos0 + t) / total
            alpha = alpha0 + frac * (alpha1 - alpha0)
            target = flat[t]
            lo = max(start, t - window)
            hi = min(stop, t + window + 1)
            if dm:
                count = 1
                for k in range(dim):
                    h[k] = D[row, k]
                for c in range(lo, hi):
                    if c == t:
                        continue
                    w = flat[c]
                    for k in range(dim):
                        h[k] += W_in[w, k]
                    count += 1
                inv = 1.0 / count
                for k in range(dim):
                    h[k] *= inv
                    neu1e[k] = 0.0
                state = _ns_update(h, target, W_out, noise_table, negative, alpha, neu1e, state, learn_out)
                # mean combiner: every input receives 1/count of the hidden step
                for k in range(dim):
                    neu1e[k] *= inv
                if learn_doc:
                    for k in range(dim):
                        D[row, k] += neu1e[k]
                if learn_words:
                    for c in range(lo, hi):
                        if c == t:
                            continue
                        w = flat[c]
                        for k in range(dim):
                            W_in[w, k] += neu1e[k]
            else:
                for k in range(dim):
                    h[k] = D[row, k]
                    neu1e[k] = 0.0
                state = _ns_update(h, target, W_out, noise_table, negative, alpha, neu1e, state, learn_out)
                if learn_doc:
                    for k in range(dim):
                        D[row, k] += neu1e[k]
                if learn_words:
                    # interleaved skip-gram: each context word predicts the word at t
                    for c in range(lo, hi):
                        if c == t:
                            continue
                        w = flat[c]
                        for k in range(dim):
                            h[k] = W_in[w, k]
                            neu1e[k] = 0.0
                        state = _ns_update(h, target, W_out, noise_table, negative, alpha, neu1e, state, learn_out)
                        for k in range(dim):
                            W_in[w, k] += neu1e[k]


run_epoch_serial = njit(cache=True)(_epoch_impl)
run_epoch_parallel = njit(cache=True, parallel=True)(_epoch_impl)
