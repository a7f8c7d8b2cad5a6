"""Corpus ingestion and the synthetic agglutinative-language generator."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError

__all__ = ["Corpus", "DEFAULT_SAMPLE_SIZE", "load_corpus", "synthetic_agglutinative_corpus"]

DEFAULT_SAMPLE_SIZE = 30_000

# Two-byte UTF-8 letters, deliberately disjoint from ASCII so merges learned
# on an English-like source corpus can never touch generated words.
_ALPHABET = "αβγδεζηθικλμνξοπρστυφχψω"


@dataclass
class Corpus:
    """Sentences plus where they came from."""

    sentences: list[str]
    path: str | None = None
    seed: int | None = None
    sample_size: int | None = None

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def describe(self) -> dict:
        return {
            "n_sentences": len(self.sentences),
            "path": self.path,
            "seed": self.seed,
            "sample_size": self.sample_size,
        }


def load_corpus(path, sample_size: int | None = None, seed: int = 0) -> Corpus:
    """Read a one-sentence-per-line UTF-8 file, optionally downsampling.

    Sampling is deterministic in ``seed`` and keeps the sentences in their
    original file order. A non-UTF-8 line fails loudly with its line
    number rather than being silently repaired.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read corpus file {path}: {exc}") from exc
    sentences = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        try:
            sentences.append(line.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"corpus file {path} line {lineno} is not valid UTF-8: {exc}") from exc
    if sample_size is not None and sample_size < 0:
        raise ValueError(f"sample_size must be >= 0, got {sample_size}")
    if sample_size is not None and sample_size < len(sentences):
        rng = random.Random(seed)
        keep = sorted(rng.sample(range(len(sentences)), sample_size))
        sentences = [sentences[i] for i in keep]
    return Corpus(sentences=sentences, path=str(path), seed=seed, sample_size=sample_size)


def synthetic_agglutinative_corpus(
    n_sentences: int = DEFAULT_SAMPLE_SIZE,
    seed: int = 0,
    n_stems: int = 40,
    n_suffixes: int = 12,
    words_per_sentence: tuple[int, int] = (3, 8),
) -> Corpus:
    """Generate sentences in an invented agglutinative language: each word
    is a stem plus one to three suffixes from small reusable pools, so the
    same morphemes recur constantly and reward vocabulary expansion."""
    if n_sentences < 0:
        raise ValueError(f"n_sentences must be >= 0, got {n_sentences}")
    rng = random.Random(seed)

    def morpheme(lo: int, hi: int) -> str:
        return "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(lo, hi)))

    stems = [morpheme(3, 5) for _ in range(n_stems)]
    suffixes = [morpheme(1, 3) for _ in range(n_suffixes)]

    def word() -> str:
        return rng.choice(stems) + "".join(
            rng.choice(suffixes) for _ in range(rng.randint(1, 3))
        )

    lo, hi = words_per_sentence
    sentences = [
        " ".join(word() for _ in range(rng.randint(lo, hi))) for _ in range(n_sentences)
    ]
    return Corpus(sentences=sentences, path=None, seed=seed, sample_size=n_sentences)
