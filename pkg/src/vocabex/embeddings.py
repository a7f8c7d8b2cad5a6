"""Embedding rows for newly added tokens: Random, Mean, Merge, Align.

All arithmetic accumulates in float64 and stores float32. Source rows are
never touched — expansion only appends. The Align table normalizes mapping
counts to sum to 1 by default, making each row a convex combination of
subtoken means and invariant to scaling all counts; pass
``normalize=False`` for the raw frequency-weighted sum (row magnitude then
grows with corpus size).
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .bpe import BpeTokenizer, escape_token, unescape_token
from .errors import FormatError
from .expansion import ExpansionResult
from .validation import as_sentences, check_fitted, check_matrix

__all__ = [
    "AlignInit",
    "AlignmentTable",
    "EmbedStats",
    "EmbeddingInitializer",
    "EmbeddingMatrix",
    "HookInit",
    "MeanInit",
    "MergeInit",
    "RandomInit",
    "build_alignment_table",
    "embed_stats",
    "expand_matrices",
    "init_align",
    "init_mean",
    "init_merge",
    "init_random",
]

ROLES = ("input_embedding", "lm_head")
SPAN_RULES = ("overlap", "contain")


@dataclass(eq=False)
class EmbeddingMatrix:
    """A |V| x H float32 matrix tagged with its role in the model."""

    rows: np.ndarray
    role: str = "input_embedding"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        self.rows = check_matrix(self.rows, "embedding matrix")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def copy(self) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.rows.copy(), self.role)


@dataclass
class EmbedStats:
    """Per-dimension mean and population standard deviation."""

    mu: np.ndarray
    sigma: np.ndarray


def embed_stats(E: EmbeddingMatrix) -> EmbedStats:
    rows = E.rows.astype(np.float64)
    return EmbedStats(mu=rows.mean(axis=0), sigma=rows.std(axis=0))


def init_random(stats: EmbedStats, n_new: int, seed: int) -> np.ndarray:
    """Rows sampled N(mu_j, sigma_j^2) per dimension; deterministic in seed."""
    if n_new < 0:
        raise ValueError(f"n_new must be >= 0, got {n_new}")
    rng = np.random.default_rng(seed)
    draws = rng.normal(loc=stats.mu, scale=stats.sigma, size=(n_new, stats.mu.shape[0]))
    return draws.astype(np.float32)


def init_mean(E_s: EmbeddingMatrix, source_tok: BpeTokenizer, new_tokens: Sequence[bytes]) -> np.ndarray:
    """Row(t) = arithmetic mean of the source rows of t's source-tokenizer
    segmentation. A token encoding to a single source token gets that exact
    row back."""
    rows64 = E_s.rows.astype(np.float64)
    out = np.empty((len(new_tokens), E_s.dim), dtype=np.float64)
    for i, token in enumerate(new_tokens):
        ids = source_tok.encode_bytes(token).ids
        out[i] = rows64[ids].mean(axis=0)
    return out.astype(np.float32)


def init_merge(
    E_s: EmbeddingMatrix,
    source_tok: BpeTokenizer,
    target_tok: BpeTokenizer,
    new_tokens: Sequence[bytes],
) -> np.ndarray:
    """Hierarchical mean along the target merge rules.

    Row(t) = (row(left) + row(right)) / 2, recursing until source-vocabulary
    tokens are reached; tokens without a producing merge fall back to the
    plain source-segmentation mean. Children values are cached at full
    precision, so tokens built on other new tokens see unrounded inputs.
    Iterative walk — derivation chains can be thousands deep.
    """
    rows64 = E_s.rows.astype(np.float64)
    source_vocab = source_tok.vocab_
    cache: dict[bytes, np.ndarray] = {}

    def resolve(root: bytes) -> np.ndarray:
        stack = [root]
        while stack:
            token = stack[-1]
            if token in cache:
                stack.pop()
                continue
            if token in source_vocab:
                cache[token] = rows64[source_vocab.id_of(token)]
                stack.pop()
                continue
            children = target_tok.merge_children(token)
            if children is None:
                cache[token] = rows64[source_tok.encode_bytes(token).ids].mean(axis=0)
                stack.pop()
                continue
            pending = [c for c in children if c not in cache]
            if pending:
                stack.extend(pending)
            else:
                cache[token] = (cache[children[0]] + cache[children[1]]) / 2.0
                stack.pop()
        return cache[root]

    out = np.empty((len(new_tokens), E_s.dim), dtype=np.float64)
    for i, token in enumerate(new_tokens):
        out[i] = resolve(token)
    return out.astype(np.float32)


@dataclass
class AlignmentTable:
    """Per new token: the distinct source-id tuples observed for its corpus
    occurrences, with occurrence counts."""

    counts: dict[bytes, dict[tuple[int, ...], int]] = field(default_factory=dict)
    span_rule: str = "overlap"

    def total(self, token: bytes) -> int:
        return sum(self.counts.get(token, {}).values())

    def save(self, path) -> None:
        """One JSON object per line: a header, then one record per token."""
        lines = [json.dumps({"format_version": 1, "kind": "alignment_table", "span_rule": self.span_rule})]
        for token in sorted(self.counts):
            mappings = [
                {"ids": list(ids), "count": count}
                for ids, count in sorted(self.counts[token].items())
            ]
            lines.append(json.dumps({"token": escape_token(token), "mappings": mappings}, ensure_ascii=False))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AlignmentTable":
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise FormatError(f"cannot read alignment table {path}: {exc}") from exc
        except UnicodeDecodeError as exc:
            raise FormatError(f"alignment table {path} is not UTF-8: {exc}") from exc
        records = []
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                records.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise FormatError(f"alignment table line {lineno} is not valid JSON: {exc}") from exc
        if not records:
            raise FormatError("alignment table is empty (missing header line)")
        header = records[0][1]
        if not isinstance(header, dict) or header.get("format_version") != 1 or header.get("kind") != "alignment_table":
            raise FormatError("alignment table header is missing or unsupported")
        span_rule = header.get("span_rule", "overlap")
        if span_rule not in SPAN_RULES:
            raise FormatError(f"unknown span_rule {span_rule!r} in alignment table header")
        counts: dict[bytes, dict[tuple[int, ...], int]] = {}
        for lineno, rec in records[1:]:
            if not isinstance(rec, dict) or not isinstance(rec.get("token"), str) or not isinstance(rec.get("mappings"), list):
                raise FormatError(f"alignment table line {lineno}: expected {{token, mappings}}")
            token = unescape_token(rec["token"])
            if token in counts:
                raise FormatError(f"alignment table line {lineno}: duplicate token record")
            if not rec["mappings"]:
                raise FormatError(f"alignment table line {lineno}: empty mapping list")
            entry: dict[tuple[int, ...], int] = {}
            for m in rec["mappings"]:
                if (
                    not isinstance(m, dict)
                    or not isinstance(m.get("ids"), list)
                    or not m["ids"]
                    or not all(isinstance(i, int) and not isinstance(i, bool) and i >= 0 for i in m["ids"])
                    or not isinstance(m.get("count"), int)
                    or isinstance(m.get("count"), bool)
                    or m["count"] < 1
                ):
                    raise FormatError(f"alignment table line {lineno}: bad mapping entry {m!r}")
                ids = tuple(m["ids"])
                if ids in entry:
                    raise FormatError(f"alignment table line {lineno}: duplicate mapping {ids}")
                entry[ids] = m["count"]
            counts[token] = entry
        return cls(counts=counts, span_rule=span_rule)


def build_alignment_table(
    corpus: Iterable[str],
    source_tok: BpeTokenizer,
    target_tok: BpeTokenizer,
    new_token_ids: Iterable[int],
    span_rule: str = "overlap",
) -> AlignmentTable:
    """Tokenize each sentence with both tokenizers and record, for every
    occurrence of a new token, the tuple of source-token ids claiming the
    same bytes.

    ``overlap`` (default) takes every source token whose span intersects
    the new token's span; ``contain`` takes only spans lying fully inside
    it and skips occurrences where none does. Counts accumulate per
    occurrence across the whole corpus; identical tuples are pooled.
    """
    if span_rule not in SPAN_RULES:
        raise ValueError(f"span_rule must be one of {SPAN_RULES}, got {span_rule!r}")
    check_fitted(source_tok, "vocab_")
    check_fitted(target_tok, "vocab_")
    new_ids = set(new_token_ids)
    n_vocab = len(target_tok.vocab_)
    bad = [i for i in new_ids if not 0 <= i < n_vocab]
    if bad:
        raise ValueError(f"new token ids not in target vocabulary: {sorted(bad)[:5]}")

    counts: dict[bytes, dict[tuple[int, ...], int]] = {}
    for sentence in as_sentences(corpus):
        enc_t = target_tok.encode(sentence)
        if not any(i in new_ids for i in enc_t.ids):
            continue
        enc_s = source_tok.encode(sentence)
        starts = [s for s, _ in enc_s.spans]
        ends = [e for _, e in enc_s.spans]
        for tid, (ts, te) in zip(enc_t.ids, enc_t.spans):
            if tid not in new_ids:
                continue
            if span_rule == "overlap":
                lo = bisect_right(ends, ts)  # first source span ending past ts
                hi = bisect_left(starts, te)  # first source span starting at/after te
            else:
                lo = bisect_left(starts, ts)
                hi = bisect_right(ends, te)
            mapped = tuple(enc_s.ids[lo:hi])
            if not mapped:
                continue
            token = target_tok.vocab_.token(tid)
            entry = counts.setdefault(token, {})
            entry[mapped] = entry.get(mapped, 0) + 1
    return AlignmentTable(counts=counts, span_rule=span_rule)


def init_align(
    E_s: EmbeddingMatrix,
    table: AlignmentTable,
    source_tok: BpeTokenizer,
    new_tokens: Sequence[bytes],
    normalize: bool = True,
) -> np.ndarray:
    """Frequency-weighted average over a token's observed source mappings:
    row(t) = sum_m weight_m * mean(source rows of m). Weights are counts
    normalized to sum to 1 (or raw counts when ``normalize=False``). Tokens
    absent from the table fall back to the source-segmentation mean."""
    rows64 = E_s.rows.astype(np.float64)
    out = np.empty((len(new_tokens), E_s.dim), dtype=np.float64)
    for i, token in enumerate(new_tokens):
        entries = table.counts.get(token)
        if not entries:
            out[i] = rows64[source_tok.encode_bytes(token).ids].mean(axis=0)
            continue
        total = sum(entries.values())
        acc = np.zeros(E_s.dim, dtype=np.float64)
        for ids, count in entries.items():
            weight = count / total if normalize else float(count)
            acc += weight * rows64[list(ids)].mean(axis=0)
        out[i] = acc
    return out.astype(np.float32)


# -- method descriptors ------------------------------------------------------


@dataclass(frozen=True)
class RandomInit:
    seed: int = 0


@dataclass(frozen=True)
class MeanInit:
    pass


@dataclass(frozen=True)
class MergeInit:
    pass


@dataclass(frozen=True)
class AlignInit:
    table: AlignmentTable
    normalize: bool = True


@dataclass(frozen=True)
class HookInit:
    """Escape hatch for external initializers (auxiliary-embedding methods
    and the like). ``fn(E, source_tok, target_tok, tokens) -> (n, H) array``."""

    fn: Callable


def _init_rows(
    E: EmbeddingMatrix,
    method,
    source_tok: BpeTokenizer,
    target_tok: BpeTokenizer,
    tokens: Sequence[bytes],
    seed_shift: int = 0,
) -> np.ndarray:
    if isinstance(method, RandomInit):
        return init_random(embed_stats(E), len(tokens), method.seed + seed_shift)
    if isinstance(method, MeanInit):
        return init_mean(E, source_tok, tokens)
    if isinstance(method, MergeInit):
        return init_merge(E, source_tok, target_tok, tokens)
    if isinstance(method, AlignInit):
        return init_align(E, method.table, source_tok, tokens, normalize=method.normalize)
    if isinstance(method, HookInit):
        rows = np.asarray(method.fn(E, source_tok, target_tok, list(tokens)), dtype=np.float64)
        if rows.shape != (len(tokens), E.dim):
            raise ValueError(f"hook returned shape {rows.shape}, expected {(len(tokens), E.dim)}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("hook returned non-finite values")
        return rows.astype(np.float32)
    raise ValueError(f"unknown initialization method {method!r}")


def expand_matrices(
    E_in: EmbeddingMatrix,
    E_out: EmbeddingMatrix | None,
    tied: bool,
    method,
    expansion: ExpansionResult,
    source_tok: BpeTokenizer,
) -> tuple[EmbeddingMatrix, EmbeddingMatrix | None]:
    """Append initialized rows for new tokens and intermediates, in target
    id order, leaving source rows bit-identical.

    Tied models carry one matrix (``E_out`` must be None); untied models
    initialize the head independently by the same method — for Random that
    means a different stream (seed+1), for the data-driven methods the same
    formula over the head's own rows.
    """
    if tied and E_out is not None:
        raise ValueError("tied model: pass E_out=None, the single matrix serves both roles")
    if not tied and E_out is None:
        raise ValueError("untied model: an output head matrix is required")
    target_tok = expansion.target_tokenizer
    added = list(expansion.new_tokens) + list(expansion.intermediates)
    n_source = len(target_tok.vocab_) - len(added)
    if E_in.n_rows != n_source:
        raise ValueError(f"input matrix has {E_in.n_rows} rows, source vocabulary has {n_source}")
    if E_out is not None:
        if E_out.n_rows != n_source:
            raise ValueError(f"head matrix has {E_out.n_rows} rows, source vocabulary has {n_source}")
        if E_out.dim != E_in.dim:
            raise ValueError(f"dimension mismatch: input {E_in.dim}, head {E_out.dim}")

    new_in = _init_rows(E_in, method, source_tok, target_tok, added, seed_shift=0)
    expanded_in = EmbeddingMatrix(np.vstack([E_in.rows, new_in]), role=E_in.role)
    if tied:
        return expanded_in, None
    new_out = _init_rows(E_out, method, source_tok, target_tok, added, seed_shift=1)
    expanded_out = EmbeddingMatrix(np.vstack([E_out.rows, new_out]), role=E_out.role)
    return expanded_in, expanded_out


class EmbeddingInitializer(BaseEstimator):
    """Estimator wrapper: fit learns what the method needs from a corpus
    (only Align does), transform expands one matrix.

    Parameters
    ----------
    source_tokenizer : fitted BpeTokenizer
    expansion : ExpansionResult
    method : {"random", "mean", "merge", "align"} or callable, default "mean"
        A callable is treated as a hook with the HookInit signature.
    seed : int, default 0
        Random-method seed; head matrices (role ``lm_head``) use seed+1 so
        tied and untied setups stay reproducible but independent.
    align_normalize : bool, default True
    span_rule : {"overlap", "contain"}, default "overlap"
    """

    def __init__(
        self,
        source_tokenizer=None,
        expansion=None,
        method="mean",
        seed: int = 0,
        align_normalize: bool = True,
        span_rule: str = "overlap",
    ):
        self.source_tokenizer = source_tokenizer
        self.expansion = expansion
        self.method = method
        self.seed = seed
        self.align_normalize = align_normalize
        self.span_rule = span_rule

    def fit(self, X: Iterable[str] = (), y=None) -> "EmbeddingInitializer":
        if self.source_tokenizer is None or self.expansion is None:
            raise ValueError("source_tokenizer and expansion are required")
        if not (callable(self.method) or self.method in ("random", "mean", "merge", "align")):
            raise ValueError(f"unknown method {self.method!r}")
        self.table_ = None
        if self.method == "align":
            target = self.expansion.target_tokenizer
            added = list(self.expansion.new_tokens) + list(self.expansion.intermediates)
            ids = [target.vocab_.id_of(t) for t in added]
            self.table_ = build_alignment_table(
                as_sentences(X), self.source_tokenizer, target, ids, span_rule=self.span_rule
            )
        self.n_methods_fitted_ = 1
        return self

    def _method_for(self, role: str):
        if callable(self.method):
            return HookInit(self.method)
        if self.method == "random":
            return RandomInit(self.seed + (1 if role == "lm_head" else 0))
        if self.method == "mean":
            return MeanInit()
        if self.method == "merge":
            return MergeInit()
        return AlignInit(self.table_, normalize=self.align_normalize)

    def transform(self, X) -> EmbeddingMatrix:
        check_fitted(self, "n_methods_fitted_")
        E = X if isinstance(X, EmbeddingMatrix) else EmbeddingMatrix(X)
        target = self.expansion.target_tokenizer
        added = list(self.expansion.new_tokens) + list(self.expansion.intermediates)
        n_source = len(target.vocab_) - len(added)
        if E.n_rows != n_source:
            raise ValueError(f"matrix has {E.n_rows} rows, source vocabulary has {n_source}")
        rows = _init_rows(E, self._method_for(E.role), self.source_tokenizer, target, added)
        return EmbeddingMatrix(np.vstack([E.rows, rows]), role=E.role)
