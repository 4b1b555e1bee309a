"""Jitted inner loops shared by the sampler, the baselines and the evaluator.

Everything in here is deliberately branch-poor and allocation-light; the
public modules own validation and layout. All kernels draw randomness through
the keyed counter-based generator below, so results do not depend on the
order in which tokens are visited or on how work is split across threads.
"""

import math

import numpy as np
from numba import njit

# splitmix64 constants (public domain)
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_U01 = 1.0 / 9007199254740992.0  # 2 ** -53

# phase tags
PHASE_INIT = 0
PHASE_WORD = 1
PHASE_DOC = 2
PHASE_CGS = 3
PHASE_FROZEN = 4
PHASE_TEST = 7

# purpose tags
PUR_ASSIGN = 0
PUR_PROPOSAL = 1
PUR_ACCEPT = 2
PUR_COIN = 3
PUR_VALUE1 = 4
PUR_VALUE2 = 5


# ---------------------------------------------------------------------------
# keyed generator


@njit("uint64(uint64)", cache=True, nogil=True, inline="always")
def mix64(z):
    z = z + GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def mix64_vec(z):
    """Vectorized twin of mix64 for uint64 arrays; bit-identical results."""
    z = z + GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def phase_prefix(seed, iteration, phase):
    return mix64(mix64(mix64(np.uint64(seed)) ^ np.uint64(iteration)) ^ np.uint64(phase))


@njit(cache=True, nogil=True, inline="always")
def draw_u64(prefix, token, purpose, counter):
    packed = (np.uint64(purpose) << np.uint64(48)) | np.uint64(counter)
    return mix64(mix64(prefix ^ np.uint64(token)) ^ packed)


@njit(cache=True, nogil=True, inline="always")
def draw_u01(prefix, token, purpose, counter):
    return np.float64(draw_u64(prefix, token, purpose, counter) >> np.uint64(11)) * _U01


@njit(cache=True, nogil=True, inline="always")
def scaled_index(u, n):
    # map a [0, 1) uniform onto {0, ..., n-1}
    i = np.int64(u * n)
    if i >= n:
        i = n - 1
    return i


# ---------------------------------------------------------------------------
# open-addressing topic count tables
#
# keys: int32, -1 marks an empty slot; vals: int32. Capacity is a power of
# two. Slots come from a multiply-shift of the topic id; linear probing.


@njit(cache=True, nogil=True, inline="always")
def _slot(key, mask):
    return np.int64((np.uint64(key) * GOLDEN) >> np.uint64(32)) & mask


@njit(cache=True, nogil=True)
def capacity_for(topic_limit, size):
    # smallest power of two strictly above min(topic_limit, 2 * size)
    bound = topic_limit
    if 2 * size < bound:
        bound = 2 * size
    cap = 1
    while cap <= bound:
        cap *= 2
    return cap


@njit(cache=True, nogil=True, inline="always")
def table_get(keys, vals, key):
    mask = np.int64(keys.shape[0] - 1)
    s = _slot(key, mask)
    while True:
        k = keys[s]
        if k == key:
            return np.int64(vals[s])
        if k == -1:
            return np.int64(0)
        s = (s + 1) & mask


@njit(cache=True, nogil=True)
def _table_grow(keys, vals):
    # double capacity; slots whose count fell back to zero are dropped
    cap = keys.shape[0] * 2
    nk = np.full(cap, -1, np.int32)
    nv = np.zeros(cap, np.int32)
    mask = np.int64(cap - 1)
    occupied = 0
    for s in range(keys.shape[0]):
        if keys[s] != -1 and vals[s] > 0:
            t = _slot(keys[s], mask)
            while nk[t] != -1:
                t = (t + 1) & mask
            nk[t] = keys[s]
            nv[t] = vals[s]
            occupied += 1
    return nk, nv, occupied


@njit(cache=True, nogil=True)
def table_add(keys, vals, occupied, key, delta):
    mask = np.int64(keys.shape[0] - 1)
    s = _slot(key, mask)
    while keys[s] != key and keys[s] != -1:
        s = (s + 1) & mask
    if keys[s] == key:
        vals[s] += delta
        return keys, vals, occupied
    if delta == 0:
        return keys, vals, occupied
    # grow before the load factor passes 3/4 so probes keep terminating
    if 4 * (occupied + 1) > 3 * keys.shape[0]:
        keys, vals, occupied = _table_grow(keys, vals)
        mask = np.int64(keys.shape[0] - 1)
        s = _slot(key, mask)
        while keys[s] != -1:
            s = (s + 1) & mask
    keys[s] = key
    vals[s] = delta
    return keys, vals, occupied + 1


@njit(cache=True, nogil=True, inline="always")
def table_dec(keys, vals, key):
    # caller guarantees the key is present with a positive count
    mask = np.int64(keys.shape[0] - 1)
    s = _slot(key, mask)
    while keys[s] != key:
        s = (s + 1) & mask
    vals[s] -= 1


@njit(cache=True, nogil=True)
def table_from_values(values, start, stop, topic_limit):
    size = stop - start
    cap = capacity_for(topic_limit, size)
    keys = np.full(cap, -1, np.int32)
    vals = np.zeros(cap, np.int32)
    occupied = 0
    for j in range(start, stop):
        keys, vals, occupied = table_add(keys, vals, occupied, values[j], 1)
    return keys, vals, occupied


@njit(cache=True, nogil=True)
def table_from_refs(values, refs, start, stop, topic_limit):
    size = stop - start
    cap = capacity_for(topic_limit, size)
    keys = np.full(cap, -1, np.int32)
    vals = np.zeros(cap, np.int32)
    occupied = 0
    for jj in range(start, stop):
        keys, vals, occupied = table_add(keys, vals, occupied, values[refs[jj]], 1)
    return keys, vals, occupied


@njit(cache=True, nogil=True)
def table_items(keys, vals):
    # nonzero (topic, count) pairs in ascending topic order
    n = 0
    for s in range(keys.shape[0]):
        if keys[s] != -1 and vals[s] > 0:
            n += 1
    ids = np.empty(n, np.int32)
    cnts = np.empty(n, np.int64)
    m = 0
    for s in range(keys.shape[0]):
        if keys[s] != -1 and vals[s] > 0:
            ids[m] = keys[s]
            cnts[m] = vals[s]
            m += 1
    order = np.argsort(ids)
    return ids[order], cnts[order]


# ---------------------------------------------------------------------------
# alias tables (integer construction, exactly rational bucket probabilities)


@njit(cache=True, nogil=True)
def build_alias_core(ids, weights):
    """Vose construction over integer weights.

    Bucket b selects ids[b] when the second uniform lands below thresh[b]
    (out of the total weight), otherwise the donor outcome stored alongside.
    With integer weights every comparison is exact, so each outcome's total
    bucket mass equals weight * bins exactly.
    """
    bins = ids.shape[0]
    total = np.int64(0)
    for i in range(bins):
        total += weights[i]
    thresh = np.empty(bins, np.int64)
    first = np.empty(bins, np.int32)
    second = np.empty(bins, np.int32)
    scaled = np.empty(bins, np.int64)
    for i in range(bins):
        scaled[i] = weights[i] * bins
    small = np.empty(bins, np.int64)
    large = np.empty(bins, np.int64)
    ns = 0
    nl = 0
    for i in range(bins):
        if scaled[i] < total:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        lo = small[ns - 1]
        ns -= 1
        hi = large[nl - 1]
        thresh[lo] = scaled[lo]
        first[lo] = ids[lo]
        second[lo] = ids[hi]
        scaled[hi] -= total - scaled[lo]
        if scaled[hi] < total:
            nl -= 1
            small[ns] = hi
            ns += 1
    while nl > 0:
        hi = large[nl - 1]
        nl -= 1
        thresh[hi] = total
        first[hi] = ids[hi]
        second[hi] = ids[hi]
    while ns > 0:  # unreachable with exact arithmetic; kept as a guard
        lo = small[ns - 1]
        ns -= 1
        thresh[lo] = total
        first[lo] = ids[lo]
        second[lo] = ids[lo]
    return thresh, first, second, total


@njit(cache=True, nogil=True, inline="always")
def alias_pick(thresh, first, second, total, u1, u2):
    bins = thresh.shape[0]
    b = np.int64(u1 * bins)
    if b >= bins:
        b = bins - 1
    x = np.int64(u2 * total)
    if x >= total:
        x = total - 1
    if x < thresh[b]:
        return first[b]
    return second[b]


# ---------------------------------------------------------------------------
# shared sampling steps


@njit(cache=True, nogil=True, inline="always")
def accept_move(count_cur, count_new, smooth, total_cur, total_new, total_smooth, u):
    # acceptance for a proposal drawn from the counts-proportional mixture:
    # the proposal mass cancels against one posterior factor, leaving the
    # other factor's ratio times the inverted topic-total ratio
    ratio = ((count_new + smooth) / (count_cur + smooth)) * (
        (total_cur + total_smooth) / (total_new + total_smooth)
    )
    return u < ratio


# ---------------------------------------------------------------------------
# sampler phases
#
# word phase for one column: accept the stored document-side proposals
# against this word's topic counts, then refresh the counts and draw the
# word-side proposals for the next phase from count-alias / uniform mixture.


@njit(cache=True, nogil=True)
def word_phase_column(col_z, col_props, col_entry, start, stop, topic_limit,
                      proposals, beta, vbeta, kbeta, totals_snap, totals_next,
                      prefix):
    size = stop - start
    if size == 0:
        return
    keys, vals, occupied = table_from_values(col_z, start, stop, topic_limit)
    for j in range(start, stop):
        s = col_z[j]
        token = np.uint64(col_entry[j])
        for i in range(proposals):
            t = col_props[j, i]
            cs = table_get(keys, vals, s)
            ct = table_get(keys, vals, t)
            u = draw_u01(prefix, token, PUR_ACCEPT, i)
            if accept_move(cs, ct, beta, totals_snap[s], totals_snap[t], vbeta, u):
                if t != s:
                    table_dec(keys, vals, s)
                    keys, vals, occupied = table_add(keys, vals, occupied, t, 1)
                    s = t
        col_z[j] = s
    # refresh, publish this column's totals, and draw next-phase proposals
    keys, vals, occupied = table_from_values(col_z, start, stop, topic_limit)
    ids, cnts = table_items(keys, vals)
    thresh, first, second, total = build_alias_core(ids, cnts)
    for b in range(ids.shape[0]):
        totals_next[ids[b]] += cnts[b]
    for j in range(start, stop):
        token = np.uint64(col_entry[j])
        for i in range(proposals):
            u = draw_u01(prefix, token, PUR_COIN, i)
            if u * (size + kbeta) < size:
                u1 = draw_u01(prefix, token, PUR_VALUE1, i)
                u2 = draw_u01(prefix, token, PUR_VALUE2, i)
                col_props[j, i] = alias_pick(thresh, first, second, total, u1, u2)
            else:
                u1 = draw_u01(prefix, token, PUR_VALUE1, i)
                col_props[j, i] = scaled_index(u1, topic_limit)


# document phase for one row: accept the stored word-side proposals against
# this document's topic counts, then draw document-side proposals by reading
# the assignment at a uniformly random position of the row (the counts part
# of the mixture) or a uniform topic (the smoothing part).


@njit(cache=True, nogil=True)
def doc_phase_row(col_z, col_props, col_entry, row_ref, start, stop,
                  topic_limit, proposals, alpha, vbeta, kalpha, totals_snap,
                  totals_next, prefix):
    size = stop - start
    if size == 0:
        return
    keys, vals, occupied = table_from_refs(col_z, row_ref, start, stop, topic_limit)
    for jj in range(start, stop):
        j = row_ref[jj]
        s = col_z[j]
        token = np.uint64(col_entry[j])
        for i in range(proposals):
            t = col_props[j, i]
            cs = table_get(keys, vals, s)
            ct = table_get(keys, vals, t)
            u = draw_u01(prefix, token, PUR_ACCEPT, i)
            if accept_move(cs, ct, alpha, totals_snap[s], totals_snap[t], vbeta, u):
                if t != s:
                    table_dec(keys, vals, s)
                    keys, vals, occupied = table_add(keys, vals, occupied, t, 1)
                    s = t
        col_z[j] = s
    for jj in range(start, stop):
        j = row_ref[jj]
        token = np.uint64(col_entry[j])
        for i in range(proposals):
            u = draw_u01(prefix, token, PUR_COIN, i)
            if u * (size + kalpha) < size:
                u1 = draw_u01(prefix, token, PUR_VALUE1, i)
                col_props[j, i] = col_z[row_ref[start + scaled_index(u1, size)]]
            else:
                u1 = draw_u01(prefix, token, PUR_VALUE1, i)
                col_props[j, i] = scaled_index(u1, topic_limit)
    # the incrementally maintained table already holds the final row counts
    for s in range(keys.shape[0]):
        if keys[s] != -1 and vals[s] > 0:
            totals_next[keys[s]] += vals[s]


# ---------------------------------------------------------------------------
# unreordered reference passes (dense count mirrors, token-at-a-time)


@njit(cache=True, nogil=True)
def naive_word_chain(tok_w, tok_z, tok_props, word_topic, totals_snap,
                     proposals, beta, vbeta, prefix):
    for tau in range(tok_z.shape[0]):
        w = tok_w[tau]
        s = tok_z[tau]
        token = np.uint64(tau)
        for i in range(proposals):
            t = tok_props[tau, i]
            cs = word_topic[w, s]
            ct = word_topic[w, t]
            u = draw_u01(prefix, token, PUR_ACCEPT, i)
            if accept_move(cs, ct, beta, totals_snap[s], totals_snap[t], vbeta, u):
                if t != s:
                    word_topic[w, s] -= 1
                    word_topic[w, t] += 1
                    s = t
        tok_z[tau] = s


@njit(cache=True, nogil=True)
def naive_word_proposals(tok_props, word_ptr, word_tok, word_topic,
                         topic_limit, proposals, kbeta, prefix):
    for w in range(word_ptr.shape[0] - 1):
        a = word_ptr[w]
        b = word_ptr[w + 1]
        size = b - a
        if size == 0:
            continue
        n = 0
        for k in range(topic_limit):
            if word_topic[w, k] > 0:
                n += 1
        ids = np.empty(n, np.int32)
        cnts = np.empty(n, np.int64)
        m = 0
        for k in range(topic_limit):
            if word_topic[w, k] > 0:
                ids[m] = k
                cnts[m] = word_topic[w, k]
                m += 1
        thresh, first, second, total = build_alias_core(ids, cnts)
        for p in range(a, b):
            token = np.uint64(word_tok[p])
            for i in range(proposals):
                u = draw_u01(prefix, token, PUR_COIN, i)
                if u * (size + kbeta) < size:
                    u1 = draw_u01(prefix, token, PUR_VALUE1, i)
                    u2 = draw_u01(prefix, token, PUR_VALUE2, i)
                    tok_props[word_tok[p], i] = alias_pick(thresh, first, second, total, u1, u2)
                else:
                    u1 = draw_u01(prefix, token, PUR_VALUE1, i)
                    tok_props[word_tok[p], i] = scaled_index(u1, topic_limit)


@njit(cache=True, nogil=True)
def naive_doc_chain(word_order, tok_d, tok_z, tok_props, doc_topic,
                    totals_snap, proposals, alpha, vbeta, prefix):
    for p in range(word_order.shape[0]):
        tau = word_order[p]
        d = tok_d[tau]
        s = tok_z[tau]
        token = np.uint64(tau)
        for i in range(proposals):
            t = tok_props[tau, i]
            cs = doc_topic[d, s]
            ct = doc_topic[d, t]
            u = draw_u01(prefix, token, PUR_ACCEPT, i)
            if accept_move(cs, ct, alpha, totals_snap[s], totals_snap[t], vbeta, u):
                if t != s:
                    doc_topic[d, s] -= 1
                    doc_topic[d, t] += 1
                    s = t
        tok_z[tau] = s


@njit(cache=True, nogil=True)
def naive_doc_proposals(tok_props, doc_ptr, doc_tok, tok_z, topic_limit,
                        proposals, kalpha, prefix):
    for d in range(doc_ptr.shape[0] - 1):
        a = doc_ptr[d]
        b = doc_ptr[d + 1]
        size = b - a
        if size == 0:
            continue
        for p in range(a, b):
            token = np.uint64(doc_tok[p])
            for i in range(proposals):
                u = draw_u01(prefix, token, PUR_COIN, i)
                if u * (size + kalpha) < size:
                    u1 = draw_u01(prefix, token, PUR_VALUE1, i)
                    tok_props[doc_tok[p], i] = tok_z[doc_tok[a + scaled_index(u1, size)]]
                else:
                    u1 = draw_u01(prefix, token, PUR_VALUE1, i)
                    tok_props[doc_tok[p], i] = scaled_index(u1, topic_limit)


# ---------------------------------------------------------------------------
# collapsed Gibbs baseline (exact K-way conditional per token)


@njit(cache=True, nogil=True)
def cgs_sweep(tok_d, tok_w, tok_z, doc_topic, word_topic, totals, topic_limit,
              alpha, beta, vbeta, prefix, cum):
    for tau in range(tok_z.shape[0]):
        d = tok_d[tau]
        w = tok_w[tau]
        s = tok_z[tau]
        doc_topic[d, s] -= 1
        word_topic[w, s] -= 1
        totals[s] -= 1
        running = 0.0
        for k in range(topic_limit):
            running += (doc_topic[d, k] + alpha) * (word_topic[w, k] + beta) / (totals[k] + vbeta)
            cum[k] = running
        u = draw_u01(prefix, np.uint64(tau), PUR_ASSIGN, 0) * running
        t = np.searchsorted(cum, u, side="right")
        if t >= topic_limit:
            t = topic_limit - 1
        doc_topic[d, t] += 1
        word_topic[w, t] += 1
        totals[t] += 1
        tok_z[tau] = t


@njit(cache=True, nogil=True)
def cgs_run(tok_d, tok_w, tok_z, doc_topic, word_topic, totals, topic_limit,
            alpha, beta, vbeta, seed, first_iteration, sweeps, record):
    cum = np.empty(topic_limit, np.float64)
    for s_i in range(sweeps):
        prefix = phase_prefix(np.uint64(seed), np.uint64(first_iteration + s_i), PHASE_CGS)
        cgs_sweep(tok_d, tok_w, tok_z, doc_topic, word_topic, totals,
                  topic_limit, alpha, beta, vbeta, prefix, cum)
        if record.shape[0] > 0:
            for tau in range(tok_z.shape[0]):
                record[s_i, tau] = tok_z[tau]


# ---------------------------------------------------------------------------
# frozen-count single-token chain: alternate document-side and word-side
# proposal/accept steps against fixed count tables; used to check that the
# kernel-level chain leaves the intended token posterior invariant


@njit(cache=True, nogil=True)
def frozen_chain(doc_assign, dkeys, dvals, wkeys, wvals, thresh, first,
                 second, word_mass, totals, topic_limit, alpha, beta, vbeta,
                 kalpha, kbeta, start_state, steps, replicates, seed):
    out = np.zeros(topic_limit, np.int64)
    doc_len = doc_assign.shape[0]
    for rep in range(replicates):
        prefix = phase_prefix(np.uint64(seed), np.uint64(rep), PHASE_FROZEN)
        s = np.int64(start_state)
        for step in range(steps):
            token = np.uint64(step)
            if step % 2 == 0:
                # document-side proposal, scored against word counts
                u = draw_u01(prefix, token, PUR_COIN, 0)
                if u * (doc_len + kalpha) < doc_len:
                    u1 = draw_u01(prefix, token, PUR_VALUE1, 0)
                    t = np.int64(doc_assign[scaled_index(u1, doc_len)])
                else:
                    u1 = draw_u01(prefix, token, PUR_VALUE1, 0)
                    t = scaled_index(u1, topic_limit)
                cs = table_get(wkeys, wvals, s)
                ct = table_get(wkeys, wvals, t)
                ua = draw_u01(prefix, token, PUR_ACCEPT, 0)
                if accept_move(cs, ct, beta, totals[s], totals[t], vbeta, ua):
                    s = t
            else:
                # word-side proposal, scored against document counts
                u = draw_u01(prefix, token, PUR_COIN, 0)
                if u * (word_mass + kbeta) < word_mass:
                    u1 = draw_u01(prefix, token, PUR_VALUE1, 0)
                    u2 = draw_u01(prefix, token, PUR_VALUE2, 0)
                    t = np.int64(alias_pick(thresh, first, second, word_mass, u1, u2))
                else:
                    u1 = draw_u01(prefix, token, PUR_VALUE1, 0)
                    t = scaled_index(u1, topic_limit)
                cs = table_get(dkeys, dvals, s)
                ct = table_get(dkeys, dvals, t)
                ua = draw_u01(prefix, token, PUR_ACCEPT, 0)
                if accept_move(cs, ct, alpha, totals[s], totals[t], vbeta, ua):
                    s = t
        out[s] += 1
    return out


# ---------------------------------------------------------------------------
# log joint likelihood accumulators (zero-count terms contribute exactly 0
# and are skipped)


@njit(cache=True, nogil=True)
def loglik_doc_side(col_z, row_ref, row_ptr, topic_limit, alpha, kalpha):
    acc = 0.0
    lga = math.lgamma(alpha)
    lgka = math.lgamma(kalpha)
    for d in range(row_ptr.shape[0] - 1):
        a = row_ptr[d]
        b = row_ptr[d + 1]
        if b == a:
            continue
        acc += lgka - math.lgamma(kalpha + (b - a))
        keys, vals, occupied = table_from_refs(col_z, row_ref, a, b, topic_limit)
        for s in range(keys.shape[0]):
            if keys[s] != -1 and vals[s] > 0:
                acc += math.lgamma(alpha + vals[s]) - lga
    return acc


@njit(cache=True, nogil=True)
def loglik_word_side(col_z, col_ptr, totals, topic_limit, beta, vbeta):
    acc = 0.0
    lgb = math.lgamma(beta)
    lgvb = math.lgamma(vbeta)
    for w in range(col_ptr.shape[0] - 1):
        a = col_ptr[w]
        b = col_ptr[w + 1]
        if b == a:
            continue
        keys, vals, occupied = table_from_values(col_z, a, b, topic_limit)
        for s in range(keys.shape[0]):
            if keys[s] != -1 and vals[s] > 0:
                acc += math.lgamma(beta + vals[s]) - lgb
    for k in range(topic_limit):
        if totals[k] > 0:
            acc += lgvb - math.lgamma(vbeta + totals[k])
    return acc


@njit(cache=True, nogil=True)
def loglik_dense(doc_topic, word_topic, totals, alpha, beta, kalpha, vbeta):
    acc = 0.0
    lga = math.lgamma(alpha)
    lgb = math.lgamma(beta)
    lgka = math.lgamma(kalpha)
    lgvb = math.lgamma(vbeta)
    topic_limit = totals.shape[0]
    for d in range(doc_topic.shape[0]):
        size = 0
        for k in range(topic_limit):
            c = doc_topic[d, k]
            size += c
            if c > 0:
                acc += math.lgamma(alpha + c) - lga
        if size > 0:
            acc += lgka - math.lgamma(kalpha + size)
    for w in range(word_topic.shape[0]):
        for k in range(topic_limit):
            c = word_topic[w, k]
            if c > 0:
                acc += math.lgamma(beta + c) - lgb
    for k in range(topic_limit):
        if totals[k] > 0:
            acc += lgvb - math.lgamma(vbeta + totals[k])
    return acc
