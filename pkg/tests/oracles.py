"""Naive reference implementations used as oracles.

Everything here favors obviousness over speed: full recounts per training
step, one merge occurrence at a time when encoding, fsum accumulation for
the numeric references. Production code must match these, not vice versa.
"""

from __future__ import annotations

import math
from collections import Counter


def naive_train_bpe(corpus, vocab_size, specials=(), byte_fallback=True):
    """Recount-from-scratch greedy BPE trainer.

    Each step recounts all adjacent pairs, drops candidates whose
    concatenation already names a token, and picks max count with ties
    broken by lexicographically smallest (left, right) bytes. Returns
    (token list in id order, merge pair list in rank order).
    """
    sentences = [s.encode("utf-8") for s in corpus]
    vocab = [s.encode("utf-8") for s in specials]
    if byte_fallback:
        vocab += [bytes([b]) for b in range(256)]
    else:
        vocab += [bytes([b]) for b in sorted({b for s in sentences for b in s})]
    vocab_set = set(vocab)
    seqs = [[bytes([b]) for b in s] for s in sentences]
    merges = []
    while len(vocab) < vocab_size:
        counts = Counter()
        for seq in seqs:
            for pair in zip(seq, seq[1:]):
                counts[pair] += 1
        candidates = [(p, c) for p, c in counts.items() if p[0] + p[1] not in vocab_set]
        if not candidates:
            break
        (left, right), _ = min(candidates, key=lambda item: (-item[1], item[0][0], item[0][1]))
        result = left + right
        vocab.append(result)
        vocab_set.add(result)
        merges.append((left, right))
        for si, seq in enumerate(seqs):
            out = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == left and seq[i + 1] == right:
                    out.append(result)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[si] = out
    return vocab, merges


def naive_encode(merges, data):
    """Encode bytes by repeatedly applying, among all applicable rules, the
    lowest-rank one at its leftmost occurrence. Returns token bytes."""
    rank = {pair: r for r, pair in enumerate(merges)}
    seq = [bytes([b]) for b in data]
    while True:
        best = None
        for i in range(len(seq) - 1):
            r = rank.get((seq[i], seq[i + 1]))
            if r is not None and (best is None or r < best[0]):
                best = (r, i)
        if best is None:
            return seq
        i = best[1]
        seq[i : i + 2] = [seq[i] + seq[i + 1]]


def naive_matrix_stats(matrix):
    """Per-dimension mean and population standard deviation, two passes
    with fsum. Returns (means, stds) as plain float lists."""
    rows = [[float(x) for x in row] for row in matrix]
    n = len(rows)
    means, stds = [], []
    for j in range(len(rows[0])):
        col = [row[j] for row in rows]
        mu = math.fsum(col) / n
        var = math.fsum((x - mu) ** 2 for x in col) / n
        means.append(mu)
        stds.append(math.sqrt(var))
    return means, stds


def naive_mean_rows(matrix, ids):
    """Plain average of the selected rows, fsum per dimension."""
    rows = [matrix[i] for i in ids]
    return [math.fsum(float(r[j]) for r in rows) / len(rows) for j in range(len(matrix[0]))]


def naive_alignment_counts(source_tok, target_tok, corpus, new_tokens):
    """Brute-force alignment: for every occurrence of a new token in the
    target tokenization of a sentence, collect the ids of all source tokens
    whose byte span overlaps it. Returns {token: Counter({id_tuple: n})}."""
    new_set = set(new_tokens)
    table = {t: Counter() for t in new_tokens}
    for sentence in corpus:
        enc_t = target_tok.encode(sentence)
        enc_s = source_tok.encode(sentence)
        for pos, tid in enumerate(enc_t.ids):
            token = target_tok.vocab_.token(tid)
            if token not in new_set:
                continue
            ts, te = enc_t.spans[pos]
            mapped = tuple(
                sid
                for sid, (ss, se) in zip(enc_s.ids, enc_s.spans)
                if max(ss, ts) < min(se, te)
            )
            table[token][mapped] += 1
    return table


def naive_align_vector(counts, source_matrix, normalize=True):
    """Frequency-weighted average of subtoken-mean vectors for one token's
    alignment counts; None when there are no observations."""
    total = sum(counts.values())
    if total == 0:
        return None
    dim = len(source_matrix[0])
    out = [0.0] * dim
    for ids, c in counts.items():
        weight = c / total if normalize else float(c)
        sub = naive_mean_rows(source_matrix, ids)
        for j in range(dim):
            out[j] += weight * sub[j]
    return out
