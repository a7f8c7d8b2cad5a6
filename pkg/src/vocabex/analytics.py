"""Tokenization analytics: fragmentation, target-token ratio, and the
source/target token-count ratio standing in for generation speedup.

The speedup figure is a count ratio, not wall-clock tokens per second —
generation speed depends on the model; token count is the part tokenization
controls. All outputs are labeled accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .bpe import BpeTokenizer
from .expansion import K_SWEEP_GRID, build_target_tokenizer, select_new_tokens
from .validation import as_sentences

__all__ = [
    "FragmentationReport",
    "SpeedupReport",
    "TokenizerStats",
    "fragmentation",
    "render_table",
    "run_k_sweep",
    "speedup_proxy",
    "sweep_to_text",
    "target_token_ratio",
]


@dataclass(frozen=True)
class TokenizerStats:
    avg_tokens_per_sentence: float
    total_tokens: int
    relative_to_baseline: float


@dataclass(frozen=True)
class FragmentationReport:
    baseline: str
    per_tokenizer: dict[str, TokenizerStats]
    n_sentences: int

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "baseline": self.baseline,
            "n_sentences": self.n_sentences,
            "per_tokenizer": {
                name: {
                    "avg_tokens_per_sentence": s.avg_tokens_per_sentence,
                    "total_tokens": s.total_tokens,
                    "relative_to_baseline": s.relative_to_baseline,
                }
                for name, s in self.per_tokenizer.items()
            },
        }

    def to_text(self) -> str:
        rows = [
            (name, f"{s.avg_tokens_per_sentence:.3f}", str(s.total_tokens), f"{s.relative_to_baseline:.3f}x")
            for name, s in self.per_tokenizer.items()
        ]
        return render_table(
            ("tokenizer", "avg tokens/sentence", "total tokens", f"vs {self.baseline}"), rows
        )


@dataclass(frozen=True)
class SpeedupReport:
    token_ratio: float
    target_token_ratio_input: float | None
    target_token_ratio_output: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "token_ratio": self.token_ratio,
            "target_token_ratio_input": self.target_token_ratio_input,
            "target_token_ratio_output": self.target_token_ratio_output,
            "note": "token-count ratio; a proxy for generation speedup, not a wall-clock measurement",
        }


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Aligned-column plain-text table."""
    table = [list(map(str, headers))] + [list(map(str, r)) for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _total_tokens(tok: BpeTokenizer, sentences: list[str]) -> int:
    return sum(len(tok.encode(s).ids) for s in sentences)


def fragmentation(
    corpus: Iterable[str], tokenizers: Mapping[str, BpeTokenizer], baseline_name: str
) -> FragmentationReport:
    """Average tokens per sentence for each tokenizer, relative to the
    named baseline."""
    sentences = as_sentences(corpus)
    if not sentences:
        raise ValueError("fragmentation needs a non-empty corpus")
    if baseline_name not in tokenizers:
        raise ValueError(f"baseline {baseline_name!r} not among tokenizers {sorted(tokenizers)}")
    totals = {name: _total_tokens(tok, sentences) for name, tok in tokenizers.items()}
    base_avg = totals[baseline_name] / len(sentences)
    per = {
        name: TokenizerStats(
            avg_tokens_per_sentence=total / len(sentences),
            total_tokens=total,
            relative_to_baseline=(total / len(sentences)) / base_avg if base_avg else float("nan"),
        )
        for name, total in totals.items()
    }
    return FragmentationReport(baseline=baseline_name, per_tokenizer=per, n_sentences=len(sentences))


def target_token_ratio(corpus: Iterable[str], target_tok: BpeTokenizer, new_ids: Iterable[int]) -> float:
    """Fraction of emitted tokens that are new-vocabulary tokens."""
    sentences = as_sentences(corpus)
    if not sentences:
        raise ValueError("target_token_ratio needs a non-empty corpus")
    new = set(new_ids)
    n_vocab = len(target_tok.vocab_)
    bad = [i for i in new if not 0 <= i < n_vocab]
    if bad:
        raise ValueError(f"ids not in target vocabulary: {sorted(bad)[:5]}")
    total = 0
    hits = 0
    for s in sentences:
        for i in target_tok.encode(s).ids:
            total += 1
            hits += i in new
    return hits / total if total else 0.0


def _inferred_new_ids(source_tok: BpeTokenizer, target_tok: BpeTokenizer) -> list[int] | None:
    """Added ids when the target vocabulary extends the source's id space."""
    n_s, n_t = len(source_tok.vocab_), len(target_tok.vocab_)
    if n_t >= n_s and target_tok.vocab_.tokens[:n_s] == source_tok.vocab_.tokens:
        return list(range(n_s, n_t))
    return None


def speedup_proxy(
    corpus: Iterable[str],
    source_tok: BpeTokenizer,
    target_tok: BpeTokenizer,
    new_token_ids: Iterable[int] | None = None,
    output_corpus: Iterable[str] | None = None,
) -> SpeedupReport:
    """Source-to-target token-count ratio on the corpus. ≥ 1.0 whenever the
    target was derived by appending merges. ``output_corpus`` (generated
    text, if any) feeds the optional output-side target-token ratio."""
    sentences = as_sentences(corpus)
    if not sentences:
        raise ValueError("speedup_proxy needs a non-empty corpus")
    total_s = _total_tokens(source_tok, sentences)
    total_t = _total_tokens(target_tok, sentences)
    ratio = total_s / total_t if total_t else 1.0

    new_ids = list(new_token_ids) if new_token_ids is not None else _inferred_new_ids(source_tok, target_tok)
    ratio_in = target_token_ratio(sentences, target_tok, new_ids) if new_ids is not None else None
    ratio_out = (
        target_token_ratio(output_corpus, target_tok, new_ids)
        if output_corpus is not None and new_ids is not None
        else None
    )
    return SpeedupReport(
        token_ratio=ratio, target_token_ratio_input=ratio_in, target_token_ratio_output=ratio_out
    )


def run_k_sweep(
    source_tok: BpeTokenizer,
    aux_tok: BpeTokenizer,
    corpus: Iterable[str],
    k_values: Sequence[int] = K_SWEEP_GRID,
    mode: str = "closure",
    eval_corpus: Iterable[str] | None = None,
) -> list[dict]:
    """Expand at each k and measure compression on ``eval_corpus`` (the
    selection corpus by default). Selection is done once at max(k): smaller
    selections are prefixes of larger ones, so one ranking serves all."""
    sentences = as_sentences(corpus)
    eval_sentences = sentences if eval_corpus is None else as_sentences(eval_corpus)
    if not eval_sentences:
        raise ValueError("k sweep needs a non-empty evaluation corpus")
    k_values = list(k_values)
    if any(k < 0 for k in k_values):
        raise ValueError("k values must be >= 0")
    frequencies = aux_tok.token_frequency(sentences)
    ranked = select_new_tokens(aux_tok, source_tok.vocab_, sentences, max(k_values), frequencies=frequencies)
    total_s = _total_tokens(source_tok, eval_sentences)

    records = []
    for k in k_values:
        result = build_target_tokenizer(
            source_tok, aux_tok, ranked[:k], mode=mode,
            selection_frequencies={t: frequencies[t] for t in ranked[:k]},
        )
        target = result.target_tokenizer
        total_t = _total_tokens(target, eval_sentences)
        new_ids = [target.vocab_.id_of(t) for t in result.new_tokens]
        records.append(
            {
                "k": k,
                "new_token_count": len(result.new_tokens),
                "intermediate_count": len(result.intermediates),
                "unreachable_count": len(result.unreachable),
                "source_tokens": total_s,
                "target_tokens": total_t,
                "token_ratio": total_s / total_t if total_t else 1.0,
                "target_token_ratio_input": target_token_ratio(eval_sentences, target, new_ids),
            }
        )
    return records


def sweep_to_text(records: Sequence[dict]) -> str:
    rows = [
        (
            r["k"],
            r["new_token_count"],
            r["intermediate_count"],
            r["unreachable_count"],
            r["target_tokens"],
            f"{r['token_ratio']:.4f}",
            f"{r['target_token_ratio_input']:.4f}",
        )
        for r in records
    ]
    return render_table(
        ("k", "new", "inter", "unreach", "target tokens", "token ratio", "new-token share"), rows
    )
