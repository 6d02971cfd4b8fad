"""Numba-compiled training kernels.

All three architectures (SG, CBOW, CSG) share the same flat data layout:
embedding matrices as row-major 1-D float32 arrays, the corpus as one int32
token array plus int64 sentence offsets, and a word2vec-style 64-bit LCG for
negative sampling. Kernels release the GIL so worker threads can run the
hogwild update loop concurrently on the shared matrices.

Reproducibility contract: a single worker with a fixed seed is bit-exact
across runs; with several workers the races make results run-dependent.
"""

import os
import sys

# LLVM defaults to 256-bit vectors on AVX-512 hosts; the update loops here
# are 2x faster with full-width zmm. Must be decided before numba is imported.
if "NUMBA_CPU_FEATURES" not in os.environ and "numba" not in sys.modules:
    try:
        import llvmlite.binding as _llvm

        _feats = _llvm.get_host_cpu_features().flatten()
        if "+avx512f" in _feats:
            os.environ["NUMBA_CPU_FEATURES"] = _feats + ",-prefer-256-bit"
    except Exception:
        pass

import math

import numpy as np
from numba import njit

LCG_MULT = np.uint64(25214903917)
LCG_ADD = np.uint64(11)
_U16 = np.uint64(16)
_U40 = np.uint64(40)
_INV_2_24 = np.float32(1.0 / (1 << 24))

# lr is refreshed from the shared progress counter every this many words
PROGRESS_STRIDE = 10_000
LR_FLOOR_FRACTION = 1e-4

# fusion methods
EARLY_FUSION = 0
LATE_FUSION = 1

# gamma modes
GAMMA_CONSTANT = 0
GAMMA_PER_WINDOW = 1


@njit(inline="always")
def _lcg(state):
    return state * LCG_MULT + LCG_ADD


@njit(inline="always")
def _uniform24(state):
    """Uniform float32 in [0, 1) from the top-ish 24 bits of the LCG state."""
    return np.float32(state >> _U40) * _INV_2_24


@njit(inline="always")
def _sig(table, scale, x):
    """Interpolated sigmoid lookup; saturates to the table ends beyond the clamp."""
    n = table.shape[0] - 1
    pos = x * scale + np.float32(0.5) * np.float32(n)
    if pos <= np.float32(0.0):
        return table[0]
    if pos >= np.float32(n):
        return table[n]
    i = int(pos)
    frac = pos - np.float32(i)
    return table[i] + (table[i + 1] - table[i]) * frac


@njit(inline="always")
def _sig_exact(x):
    return 1.0 / (1.0 + math.exp(-float(x)))


@njit(inline="always")
def _dot(a, ao, b, bo, d):
    s = np.float32(0.0)
    for j in range(d):
        s += a[ao + j] * b[bo + j]
    return s


@njit(inline="always")
def _draw_negative(state, noise, table_size, exclude):
    """One noise-table draw; redraw up to 16 times if it hits ``exclude``."""
    state = _lcg(state)
    neg = noise[(state >> _U16) % table_size]
    retries = 0
    while neg == exclude and retries < 16:
        state = _lcg(state)
        neg = noise[(state >> _U16) % table_size]
        retries += 1
    return state, neg


@njit(inline="always")
def _refresh_alpha(alpha0, progress, total_words):
    frac = 1.0 - progress / total_words
    if frac < LR_FLOOR_FRACTION:
        frac = LR_FLOOR_FRACTION
    return np.float32(alpha0 * frac)


@njit(inline="always")
def _subsample_sentence(tokens, beg, end, keep_probs, scratch, state):
    m = 0
    for t in range(beg, end):
        w = tokens[t]
        state = _lcg(state)
        if _uniform24(state) < keep_probs[w]:
            scratch[m] = w
            m += 1
    return state, m


@njit(inline="always")
def _window_bounds(i, n, window, dynamic, state):
    win = window
    if dynamic:
        state = _lcg(state)
        win = window - int((state >> _U16) % np.uint64(window))
    lo = i - win
    if lo < 0:
        lo = 0
    hi = i + win
    if hi > n - 1:
        hi = n - 1
    return state, lo, hi


@njit(nogil=True, fastmath=True, cache=True)
def train_slice_sg(
    syn0,
    syn1,
    dim,
    tokens,
    offsets,
    sent_lo,
    sent_hi,
    noise,
    window,
    negative,
    alpha0,
    total_words,
    word_progress,
    keep_probs,
    dynamic_window,
    sig_table,
    sig_scale,
    probe_center,
    probe_ids,
    probe_sums,
    probe_counts,
    state,
    scratch,
):
    """Skip-gram negative sampling over sentences [sent_lo, sent_hi)."""
    table_size = np.uint64(noise.shape[0])
    subsampling = keep_probs.shape[0] > 0
    neu = np.zeros(dim, dtype=np.float32)
    alpha = _refresh_alpha(alpha0, word_progress[0], total_words)
    pending = 0
    processed = 0

    for s in range(sent_lo, sent_hi):
        beg = offsets[s]
        end = offsets[s + 1]
        if subsampling:
            state, m = _subsample_sentence(tokens, beg, end, keep_probs, scratch, state)
            sent = scratch[:m]
        else:
            sent = tokens[beg:end]
        n = sent.shape[0]
        pending += end - beg
        processed += end - beg
        if pending >= PROGRESS_STRIDE:
            word_progress[0] += pending
            pending = 0
            alpha = _refresh_alpha(alpha0, word_progress[0], total_words)

        for i in range(n):
            c = sent[i]
            co = c * dim
            state, lo, hi = _window_bounds(i, n, window, dynamic_window, state)
            for p in range(lo, hi + 1):
                if p == i:
                    continue
                pos_tgt = sent[p]
                for j in range(dim):
                    neu[j] = np.float32(0.0)
                for k in range(negative + 1):
                    if k == 0:
                        tgt = pos_tgt
                        label = np.float32(1.0)
                    else:
                        state, tgt = _draw_negative(state, noise, table_size, pos_tgt)
                        label = np.float32(0.0)
                    to = tgt * dim
                    f = _dot(syn0, co, syn1, to, dim)
                    g = (label - _sig(sig_table, sig_scale, f)) * alpha
                    if k == 0 and c == probe_center:
                        for q in range(probe_ids.shape[0]):
                            if probe_ids[q] == tgt:
                                probe_sums[q] += _sig_exact(f)
                                probe_counts[q] += 1
                                break
                    for j in range(dim):
                        neu[j] += g * syn1[to + j]
                    for j in range(dim):
                        syn1[to + j] += g * syn0[co + j]
                for j in range(dim):
                    syn0[co + j] += neu[j]

    word_progress[0] += pending
    return processed


@njit(nogil=True, fastmath=True, cache=True)
def train_slice_cbow(
    syn0,
    syn1,
    dim,
    tokens,
    offsets,
    sent_lo,
    sent_hi,
    noise,
    window,
    negative,
    alpha0,
    total_words,
    word_progress,
    keep_probs,
    dynamic_window,
    sig_table,
    sig_scale,
    state,
    scratch,
):
    """CBOW negative sampling: mean context vector predicts the center word."""
    table_size = np.uint64(noise.shape[0])
    subsampling = keep_probs.shape[0] > 0
    h = np.zeros(dim, dtype=np.float32)
    neu = np.zeros(dim, dtype=np.float32)
    alpha = _refresh_alpha(alpha0, word_progress[0], total_words)
    pending = 0
    processed = 0

    for s in range(sent_lo, sent_hi):
        beg = offsets[s]
        end = offsets[s + 1]
        if subsampling:
            state, m = _subsample_sentence(tokens, beg, end, keep_probs, scratch, state)
            sent = scratch[:m]
        else:
            sent = tokens[beg:end]
        n = sent.shape[0]
        pending += end - beg
        processed += end - beg
        if pending >= PROGRESS_STRIDE:
            word_progress[0] += pending
            pending = 0
            alpha = _refresh_alpha(alpha0, word_progress[0], total_words)

        for i in range(n):
            c = sent[i]
            state, lo, hi = _window_bounds(i, n, window, dynamic_window, state)
            cw = hi - lo
            if cw <= 0:
                continue
            inv_cw = np.float32(1.0) / np.float32(cw)
            for j in range(dim):
                h[j] = np.float32(0.0)
                neu[j] = np.float32(0.0)
            for p in range(lo, hi + 1):
                if p == i:
                    continue
                wo = sent[p] * dim
                for j in range(dim):
                    h[j] += syn0[wo + j]
            for j in range(dim):
                h[j] *= inv_cw
            for k in range(negative + 1):
                if k == 0:
                    tgt = c
                    label = np.float32(1.0)
                else:
                    state, tgt = _draw_negative(state, noise, table_size, c)
                    label = np.float32(0.0)
                to = tgt * dim
                f = _dot(h, 0, syn1, to, dim)
                g = (label - _sig(sig_table, sig_scale, f)) * alpha
                for j in range(dim):
                    neu[j] += g * syn1[to + j]
                for j in range(dim):
                    syn1[to + j] += g * h[j]
            for p in range(lo, hi + 1):
                if p == i:
                    continue
                wo = sent[p] * dim
                for j in range(dim):
                    syn0[wo + j] += neu[j]

    word_progress[0] += pending
    return processed


@njit(nogil=True, fastmath=True, cache=True)
def train_slice_csg(
    syn0,
    syn1,
    dim,
    tokens,
    offsets,
    sent_lo,
    sent_hi,
    noise,
    window,
    negative,
    alpha0,
    total_words,
    word_progress,
    keep_probs,
    dynamic_window,
    sig_table,
    sig_scale,
    probe_center,
    probe_ids,
    probe_sums,
    probe_counts,
    state,
    scratch,
    fusion_method,
    gamma_mode,
    gamma_value,
    exclude_target,
):
    """Contextual skip-gram: the summed window vector is fused into the score.

    The context vector is built once per center position and reused for every
    target in that window, per the approximate update rule: only the center
    row and the sampled output rows move, context rows are left alone, and the
    output update is driven by the center vector rather than the fused one.
    """
    table_size = np.uint64(noise.shape[0])
    subsampling = keep_probs.shape[0] > 0
    vcon = np.zeros(dim, dtype=np.float32)
    h = np.zeros(dim, dtype=np.float32)
    neu = np.zeros(dim, dtype=np.float32)
    alpha = _refresh_alpha(alpha0, word_progress[0], total_words)
    pending = 0
    processed = 0
    gamma = np.float32(gamma_value)

    for s in range(sent_lo, sent_hi):
        beg = offsets[s]
        end = offsets[s + 1]
        if subsampling:
            state, m = _subsample_sentence(tokens, beg, end, keep_probs, scratch, state)
            sent = scratch[:m]
        else:
            sent = tokens[beg:end]
        n = sent.shape[0]
        pending += end - beg
        processed += end - beg
        if pending >= PROGRESS_STRIDE:
            word_progress[0] += pending
            pending = 0
            alpha = _refresh_alpha(alpha0, word_progress[0], total_words)

        for i in range(n):
            c = sent[i]
            co = c * dim
            state, lo, hi = _window_bounds(i, n, window, dynamic_window, state)
            if gamma_mode == GAMMA_PER_WINDOW:
                state = _lcg(state)
                gamma = _uniform24(state)
            one_minus_gamma = np.float32(1.0) - gamma
            for j in range(dim):
                vcon[j] = np.float32(0.0)
            for p in range(lo, hi + 1):
                if p == i:
                    continue
                wo = sent[p] * dim
                for j in range(dim):
                    vcon[j] += syn0[wo + j]
            for p in range(lo, hi + 1):
                if p == i:
                    continue
                pos_tgt = sent[p]
                if fusion_method == EARLY_FUSION:
                    if exclude_target:
                        po = pos_tgt * dim
                        for j in range(dim):
                            h[j] = gamma * (vcon[j] - syn0[po + j]) + one_minus_gamma * syn0[co + j]
                    else:
                        for j in range(dim):
                            h[j] = gamma * vcon[j] + one_minus_gamma * syn0[co + j]
                for j in range(dim):
                    neu[j] = np.float32(0.0)
                for k in range(negative + 1):
                    if k == 0:
                        tgt = pos_tgt
                        label = np.float32(1.0)
                    else:
                        state, tgt = _draw_negative(state, noise, table_size, pos_tgt)
                        label = np.float32(0.0)
                    to = tgt * dim
                    if fusion_method == EARLY_FUSION:
                        f = _dot(h, 0, syn1, to, dim)
                        p_hat = _sig(sig_table, sig_scale, f)
                        if k == 0 and c == probe_center:
                            for q in range(probe_ids.shape[0]):
                                if probe_ids[q] == tgt:
                                    probe_sums[q] += _sig_exact(f)
                                    probe_counts[q] += 1
                                    break
                    else:
                        if exclude_target:
                            po = pos_tgt * dim
                            f_con = _dot(vcon, 0, syn1, to, dim) - _dot(syn0, po, syn1, to, dim)
                        else:
                            f_con = _dot(vcon, 0, syn1, to, dim)
                        f_c = _dot(syn0, co, syn1, to, dim)
                        p_hat = gamma * _sig(sig_table, sig_scale, f_con) + one_minus_gamma * _sig(
                            sig_table, sig_scale, f_c
                        )
                        if k == 0 and c == probe_center:
                            for q in range(probe_ids.shape[0]):
                                if probe_ids[q] == tgt:
                                    probe_sums[q] += float(gamma) * _sig_exact(f_con) + float(
                                        one_minus_gamma
                                    ) * _sig_exact(f_c)
                                    probe_counts[q] += 1
                                    break
                    g = (label - p_hat) * alpha
                    for j in range(dim):
                        neu[j] += g * syn1[to + j]
                    for j in range(dim):
                        syn1[to + j] += g * syn0[co + j]
                for j in range(dim):
                    syn0[co + j] += neu[j]

    word_progress[0] += pending
    return processed
