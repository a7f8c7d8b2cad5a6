"""Vocabulary expansion: pick frequent auxiliary-tokenizer tokens absent
from a source vocabulary and derive a target tokenizer that can produce
them.

The target keeps every source id and merge untouched and appends the
auxiliary merges needed for the new tokens *after* all source merges, so
source encodings only ever get merged further — token counts under the
target are never higher than under the source.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator

from .bpe import BpeTokenizer, Vocabulary, escape_token
from .validation import as_sentences, check_fitted

__all__ = [
    "ExpansionResult",
    "VocabularyExpander",
    "build_target_tokenizer",
    "expansion_report",
    "select_new_tokens",
]

DEFAULT_K = 100
K_SWEEP_GRID = (50, 100, 500, 1000, 5000)


@dataclass
class ExpansionResult:
    """Outcome of deriving a target tokenizer from source + auxiliary."""

    new_tokens: list[bytes]
    intermediates: list[bytes]
    unreachable: list[bytes]
    target_tokenizer: BpeTokenizer
    overlap_count: int
    selection_frequencies: dict[bytes, int] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "new_tokens": [escape_token(t) for t in self.new_tokens],
            "intermediates": [escape_token(t) for t in self.intermediates],
            "unreachable": [escape_token(t) for t in self.unreachable],
            "overlap_count": self.overlap_count,
            "selection_frequencies": {escape_token(t): n for t, n in self.selection_frequencies.items()},
        }


def select_new_tokens(
    aux: BpeTokenizer,
    source_vocab: Vocabulary,
    corpus: Iterable[str],
    k: int,
    frequencies: Counter | None = None,
) -> list[bytes]:
    """Top-k most frequent auxiliary tokens not already in the source
    vocabulary, ties broken by lower auxiliary id.

    Frequency is the occurrence count when re-encoding ``corpus`` with
    ``aux`` (pass ``frequencies`` to reuse a precomputed count). Auxiliary
    specials are never candidates: they are control tokens, not surface
    forms. May return fewer than k when the difference set is small.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    check_fitted(aux, "vocab_")
    if frequencies is None:
        frequencies = aux.token_frequency(corpus)
    specials = set(aux.vocab_.specials)
    candidates = [t for t in aux.vocab_ if t not in source_vocab and t not in specials]
    candidates.sort(key=lambda t: (-frequencies[t], aux.vocab_.id_of(t)))
    return candidates[:k]


def build_target_tokenizer(
    source: BpeTokenizer,
    aux: BpeTokenizer,
    new_tokens: Sequence[bytes],
    mode: str = "closure",
    selection_frequencies: dict[bytes, int] | None = None,
) -> ExpansionResult:
    """Derive the expanded target tokenizer for ``new_tokens``.

    Target ids are source ids, then new tokens in the given order, then
    intermediates in auxiliary-id order; target merges are all source
    merges (ranks preserved) followed by the kept auxiliary merges in
    auxiliary rank order.

    ``closure`` mode walks each new token's auxiliary derivation tree down
    to source-vocabulary tokens, keeping every merge on the way and adding
    missing in-between tokens to the vocabulary (reported as
    ``intermediates``). ``strict`` mode keeps only auxiliary merges whose
    result is a new token and whose sides already lie in source ∪ new.

    ``unreachable`` lists new tokens whose own surface form does not encode
    to the single token under the finished target tokenizer. Strict mode
    produces these whenever a derivation is broken; closure mode can too,
    in the rare case that a source merge cuts across a new token's
    derivation path, so the check runs in both modes.
    """
    check_fitted(source, "vocab_")
    check_fitted(aux, "vocab_")
    if mode not in ("closure", "strict"):
        raise ValueError(f"mode must be 'closure' or 'strict', got {mode!r}")
    new_tokens = list(new_tokens)
    new_set = set(new_tokens)
    if len(new_set) != len(new_tokens):
        raise ValueError("new_tokens contains duplicates")
    clashes = [t for t in new_tokens if t in source.vocab_]
    if clashes:
        raise ValueError(f"new tokens already in source vocabulary: {[escape_token(t) for t in clashes]}")

    rule_for = {r.result: r for r in aux.merges_}
    source_tokens = set(source.vocab_.tokens)

    if mode == "closure":
        kept_ranks: set[int] = set()
        visited: set[bytes] = set()
        for token in new_tokens:
            stack = [token]
            while stack:
                tok = stack.pop()
                if tok in source_tokens or tok in visited:
                    continue
                visited.add(tok)
                rule = rule_for.get(tok)
                if rule is None:
                    continue  # byte-level leaf (or foreign token): vocab entry only
                kept_ranks.add(rule.rank)
                stack.append(rule.left)
                stack.append(rule.right)
        intermediates = sorted(visited - new_set, key=aux.vocab_.id_of)
        appended = [aux.merges_[r] for r in sorted(kept_ranks)]
    else:
        intermediates = []
        allowed = source_tokens | new_set
        appended = [
            r for r in aux.merges_ if r.result in new_set and r.left in allowed and r.right in allowed
        ]

    tokens = list(source.vocab_.tokens) + new_tokens + intermediates
    merges = [(r.left, r.right) for r in source.merges_] + [(r.left, r.right) for r in appended]
    target = BpeTokenizer.from_vocab_and_merges(
        tokens, merges, specials=source.vocab_.specials, byte_fallback=source.byte_fallback_
    )

    unreachable = [
        t for t in new_tokens if target.encode_bytes(t).ids != [target.vocab_.id_of(t)]
    ]
    overlap = len(source_tokens & set(aux.vocab_.tokens))
    return ExpansionResult(
        new_tokens=new_tokens,
        intermediates=intermediates,
        unreachable=unreachable,
        target_tokenizer=target,
        overlap_count=overlap,
        selection_frequencies=dict(selection_frequencies or {}),
    )


def expansion_report(result: ExpansionResult) -> dict:
    """Summary counts plus the selection frequencies, JSON-ready."""
    target = result.target_tokenizer.vocab_
    n_new = len(result.new_tokens)
    n_inter = len(result.intermediates)
    return {
        "source_vocab_size": len(target) - n_new - n_inter,
        "target_vocab_size": len(target),
        "new_token_count": n_new,
        "intermediate_count": n_inter,
        "unreachable_count": len(result.unreachable),
        "overlap_count": result.overlap_count,
        "selection_frequencies": {escape_token(t): n for t, n in result.selection_frequencies.items()},
    }


class VocabularyExpander(BaseEstimator):
    """Estimator bundling token selection and target-tokenizer derivation.

    Parameters
    ----------
    source_tokenizer, aux_tokenizer : fitted BpeTokenizer
        The vocabulary being expanded and the donor trained on the target
        language.
    k : int, default 100
        Number of new tokens to select.
    mode : {"closure", "strict"}, default "closure"

    ``fit(corpus)`` selects tokens by frequency on the corpus and exposes
    ``result_``, ``new_tokens_`` and ``target_tokenizer_``; ``transform``
    encodes with the target tokenizer.
    """

    def __init__(self, source_tokenizer=None, aux_tokenizer=None, k: int = DEFAULT_K, mode: str = "closure"):
        self.source_tokenizer = source_tokenizer
        self.aux_tokenizer = aux_tokenizer
        self.k = k
        self.mode = mode

    def fit(self, X: Iterable[str], y=None) -> "VocabularyExpander":
        if self.source_tokenizer is None or self.aux_tokenizer is None:
            raise ValueError("source_tokenizer and aux_tokenizer are required")
        corpus = as_sentences(X)
        frequencies = self.aux_tokenizer.token_frequency(corpus)
        new_tokens = select_new_tokens(
            self.aux_tokenizer, self.source_tokenizer.vocab_, corpus, self.k, frequencies=frequencies
        )
        self.result_ = build_target_tokenizer(
            self.source_tokenizer,
            self.aux_tokenizer,
            new_tokens,
            mode=self.mode,
            selection_frequencies={t: frequencies[t] for t in new_tokens},
        )
        self.new_tokens_ = self.result_.new_tokens
        self.target_tokenizer_ = self.result_.target_tokenizer
        return self

    def transform(self, X: Iterable[str]) -> list[list[int]]:
        check_fitted(self, "target_tokenizer_")
        return self.target_tokenizer_.transform(X)

    def fit_transform(self, X: Iterable[str], y=None) -> list[list[int]]:
        return self.fit(X).transform(X)
