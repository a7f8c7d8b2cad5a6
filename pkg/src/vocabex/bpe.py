"""Byte-fallback BPE tokenizer: training, lossless encode/decode with byte
spans, and merge-rule introspection.

Tokens are plain ``bytes`` throughout; they may be UTF-8 fragments. Ids are
laid out as ``[specials][byte base][merged tokens]``. Whitespace handling is
a display/serialization convention only (see ``escape_token``): no text
normalization or pre-tokenization is performed, so byte offsets into the
original text stay exact.
"""

from __future__ import annotations

import heapq
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .errors import FormatError
from .validation import as_sentences, check_fitted

__all__ = [
    "BpeTokenizer",
    "DecodedText",
    "Encoding",
    "MergeRule",
    "Vocabulary",
    "escape_token",
    "unescape_token",
]

# Visible stand-in for the space byte in serialized token strings.
SPACE_MARKER = "▁"


def escape_token(token: bytes) -> str:
    """Render token bytes as a printable string.

    Space (0x20) becomes the visible marker, printable ASCII passes through,
    backslash doubles, and every other byte (controls, 0x7F, all >= 0x80,
    hence any multi-byte UTF-8 content) becomes ``\\xNN``. A literal marker
    character in the token is therefore escaped byte-wise and stays
    unambiguous.
    """
    parts = []
    for b in token:
        if b == 0x20:
            parts.append(SPACE_MARKER)
        elif b == 0x5C:
            parts.append("\\\\")
        elif 0x21 <= b <= 0x7E:
            parts.append(chr(b))
        else:
            parts.append(f"\\x{b:02x}")
    return "".join(parts)


def unescape_token(text: str) -> bytes:
    """Invert :func:`escape_token`. Raises :class:`FormatError` on malformed
    escapes or characters outside the printable convention."""
    out = bytearray()
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == SPACE_MARKER:
            out.append(0x20)
            i += 1
        elif ch == "\\":
            if i + 1 < n and text[i + 1] == "\\":
                out.append(0x5C)
                i += 2
            elif i + 3 < n and text[i + 1] == "x":
                try:
                    out.append(int(text[i + 2 : i + 4], 16))
                except ValueError:
                    raise FormatError(f"bad \\x escape at position {i}: {text[i:i+4]!r}") from None
                i += 4
            else:
                raise FormatError(f"dangling escape at position {i} in {text!r}")
        elif 0x21 <= ord(ch) <= 0x7E:
            out.append(ord(ch))
            i += 1
        else:
            raise FormatError(f"unescapable character {ch!r} at position {i} in {text!r}")
    return bytes(out)


@dataclass(frozen=True)
class MergeRule:
    """One BPE merge: ``left ++ right -> result`` with priority ``rank``."""

    left: bytes
    right: bytes
    rank: int

    @property
    def result(self) -> bytes:
        return self.left + self.right


@dataclass
class Encoding:
    """Token ids plus per-token (byte_start, byte_end) offsets into the
    original text. Spans are contiguous and tile the input exactly."""

    ids: list[int]
    spans: list[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.ids)


class DecodedText(str):
    """A ``str`` that remembers whether UTF-8 replacement occurred."""

    lossy: bool

    def __new__(cls, value: str, lossy: bool = False) -> "DecodedText":
        obj = super().__new__(cls, value)
        obj.lossy = lossy
        return obj


class Vocabulary:
    """Bijective token <-> id map with reserved specials at the front."""

    def __init__(self, tokens: Sequence[bytes], n_specials: int = 0):
        tokens = tuple(tokens)
        if n_specials < 0 or n_specials > len(tokens):
            raise ValueError(f"n_specials {n_specials} out of range for {len(tokens)} tokens")
        ids: dict[bytes, int] = {}
        for i, tok in enumerate(tokens):
            if not isinstance(tok, bytes) or not tok:
                raise ValueError(f"token at id {i} must be non-empty bytes, got {tok!r}")
            if tok in ids:
                raise ValueError(f"duplicate token {escape_token(tok)!r} at ids {ids[tok]} and {i}")
            ids[tok] = i
        self._tokens = tokens
        self._ids = ids
        self.n_specials = n_specials

    def __len__(self) -> int:
        return len(self._tokens)

    def __iter__(self):
        return iter(self._tokens)

    def __contains__(self, token: bytes) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self._tokens == other._tokens
            and self.n_specials == other.n_specials
        )

    @property
    def tokens(self) -> tuple[bytes, ...]:
        return self._tokens

    @property
    def specials(self) -> tuple[bytes, ...]:
        return self._tokens[: self.n_specials]

    def id_of(self, token: bytes) -> int:
        return self._ids[token]

    def token(self, token_id: int) -> bytes:
        if not 0 <= token_id < len(self._tokens):
            raise ValueError(f"token id {token_id} out of range [0, {len(self._tokens)})")
        return self._tokens[token_id]

    def has_full_byte_base(self) -> bool:
        return all(bytes([b]) in self._ids for b in range(256))


def _train_greedy(
    sentences: list[bytes],
    id_to_bytes: list[bytes],
    token_to_id: dict[bytes, int],
    byte_to_id: dict[int, int],
    max_merges: int,
) -> tuple[list[tuple[int, int, int]], Counter]:
    """Greedy most-frequent-pair training over per-sentence byte streams.

    Pair counts are maintained incrementally over a linked-list arena; the
    best pair is tracked with a lazily invalidated heap keyed by
    (-count, left bytes, right bytes), i.e. highest count first with
    lexicographic tie-breaking. Pairs whose concatenation already names an
    existing token are skipped so the token<->id map stays bijective and
    every token keeps at most one producing rule. Mutates ``id_to_bytes`` /
    ``token_to_id`` as new tokens are minted. Returns the merge list as
    (left_id, right_id, result_id) triples and the per-token occurrence
    counts of the fully merged corpus.
    """
    tok: list[int] = []
    nxt: list[int] = []
    prv: list[int] = []
    counts: dict[tuple[int, int], int] = {}
    positions: dict[tuple[int, int], set[int]] = {}

    for sent in sentences:
        start = len(tok)
        last = len(sent) - 1
        for k, b in enumerate(sent):
            tok.append(byte_to_id[b])
            prv.append(start + k - 1 if k > 0 else -1)
            nxt.append(start + k + 1 if k < last else -1)
        for k in range(last):
            pair = (tok[start + k], tok[start + k + 1])
            counts[pair] = counts.get(pair, 0) + 1
            positions.setdefault(pair, set()).add(start + k)

    heap: list[tuple[int, bytes, bytes, int, int]] = [
        (-c, id_to_bytes[p[0]], id_to_bytes[p[1]], p[0], p[1]) for p, c in counts.items()
    ]
    heapq.heapify(heap)

    def dec(pair: tuple[int, int], node: int, touched: set) -> None:
        counts[pair] -= 1
        positions[pair].discard(node)
        touched.add(pair)

    def inc(pair: tuple[int, int], node: int, touched: set) -> None:
        counts[pair] = counts.get(pair, 0) + 1
        positions.setdefault(pair, set()).add(node)
        touched.add(pair)

    merges: list[tuple[int, int, int]] = []
    while len(merges) < max_merges and heap:
        negc, _, _, left_id, right_id = heapq.heappop(heap)
        pair = (left_id, right_id)
        if counts.get(pair, 0) != -negc:
            continue  # stale entry
        result = id_to_bytes[left_id] + id_to_bytes[right_id]
        if result in token_to_id:
            continue  # would shadow an existing token; permanently unmergeable
        new_id = len(id_to_bytes)
        id_to_bytes.append(result)
        token_to_id[result] = new_id
        merges.append((left_id, right_id, new_id))

        touched: set[tuple[int, int]] = set()
        for i in sorted(positions[pair]):
            if tok[i] != left_id:
                continue  # consumed by an overlapping occurrence earlier in this pass
            j = nxt[i]
            if j == -1 or tok[j] != right_id:
                continue
            h, k = prv[i], nxt[j]
            dec(pair, i, touched)
            if h != -1:
                dec((tok[h], left_id), h, touched)
            if k != -1:
                dec((right_id, tok[k]), j, touched)
            tok[i] = new_id
            tok[j] = -1
            nxt[i] = k
            if k != -1:
                prv[k] = i
            if h != -1:
                inc((tok[h], new_id), h, touched)
            if k != -1:
                inc((new_id, tok[k]), i, touched)

        for p in touched:
            c = counts.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, id_to_bytes[p[0]], id_to_bytes[p[1]], p[0], p[1]))

    final_counts: Counter = Counter()
    for t in tok:
        if t != -1:
            final_counts[id_to_bytes[t]] += 1
    return merges, final_counts


class BpeTokenizer(TransformerMixin, BaseEstimator):
    """Byte-fallback BPE tokenizer with a fit/transform estimator surface.

    Parameters
    ----------
    vocab_size : int, default 50000
        Target vocabulary size counting specials and the byte base.
    byte_fallback : bool, default True
        Include all 256 single-byte tokens so every string is encodable.
        When off, the base is restricted to bytes seen during training and
        encoding unseen bytes raises.
    specials : tuple of str, default ()
        Reserved tokens pinned to ids ``0..len(specials)-1``. Never produced
        by ``encode`` and never taking part in merges.

    After ``fit`` (or loading), the learned state is immutable and
    ``encode`` / ``decode`` are pure, so a tokenizer can be shared freely
    across threads.
    """

    def __init__(self, vocab_size: int = 50_000, byte_fallback: bool = True, specials: tuple[str, ...] = ()):
        self.vocab_size = vocab_size
        self.byte_fallback = byte_fallback
        self.specials = specials

    # -- construction ------------------------------------------------------

    def fit(self, X: Iterable[str], y=None) -> "BpeTokenizer":
        """Train vocabulary and merges on a corpus of sentences."""
        sentences = [s.encode("utf-8") for s in as_sentences(X)]
        if not sentences:
            raise ValueError("training corpus is empty")
        special_bytes = [s.encode("utf-8") for s in self.specials]

        if self.byte_fallback:
            base = [bytes([b]) for b in range(256)]
        else:
            base = [bytes([b]) for b in sorted({b for sent in sentences for b in sent})]
        if self.vocab_size < len(special_bytes) + len(base):
            raise ValueError(
                f"vocab_size {self.vocab_size} is below the reserved size "
                f"{len(special_bytes) + len(base)} (specials + byte base)"
            )

        id_to_bytes = list(special_bytes) + base
        token_to_id = {t: i for i, t in enumerate(id_to_bytes)}
        if len(token_to_id) != len(id_to_bytes):
            raise ValueError("specials collide with each other or with the byte base")
        byte_to_id = {t[0]: token_to_id[t] for t in base}

        max_merges = self.vocab_size - len(id_to_bytes)
        merge_ids, final_counts = _train_greedy(sentences, id_to_bytes, token_to_id, byte_to_id, max_merges)

        merges = tuple(
            MergeRule(id_to_bytes[l], id_to_bytes[r], rank) for rank, (l, r, _) in enumerate(merge_ids)
        )
        self._install(Vocabulary(id_to_bytes, n_specials=len(special_bytes)), merges, self.byte_fallback)
        self.train_counts_ = final_counts
        return self

    @classmethod
    def from_vocab_and_merges(
        cls,
        tokens: Sequence[bytes],
        merges: Sequence[tuple[bytes, bytes]],
        specials: Sequence[bytes] = (),
        byte_fallback: bool = True,
    ) -> "BpeTokenizer":
        """Assemble a tokenizer from explicit parts (id order = ``tokens``
        order, rank order = ``merges`` order) and validate its invariants."""
        vocab = Vocabulary(tokens, n_specials=len(specials))
        if tuple(specials) != vocab.specials:
            raise ValueError("specials must be a prefix of the token list")
        if byte_fallback and not vocab.has_full_byte_base():
            raise ValueError("byte_fallback requires all 256 single-byte tokens in the vocabulary")
        special_set = set(vocab.specials)
        seen_results: set[bytes] = set()
        rules = []
        for rank, (left, right) in enumerate(merges):
            result = left + right
            for part, name in ((left, "left"), (right, "right"), (result, "result")):
                if part not in vocab:
                    raise ValueError(f"merge {rank}: {name} token {escape_token(part)!r} not in vocabulary")
            if left in special_set or right in special_set or result in special_set:
                raise ValueError(f"merge {rank} involves a special token")
            if result in seen_results:
                raise ValueError(f"merge {rank}: token {escape_token(result)!r} has more than one producing rule")
            seen_results.add(result)
            rules.append(MergeRule(left, right, rank))

        tok = cls(vocab_size=len(vocab), byte_fallback=byte_fallback, specials=tuple(s.decode("utf-8", "replace") for s in specials))
        tok._install(vocab, tuple(rules), byte_fallback)
        tok.train_counts_ = None
        return tok

    def _install(self, vocab: Vocabulary, merges: tuple[MergeRule, ...], byte_fallback: bool) -> None:
        self.vocab_ = vocab
        self.merges_ = merges
        self.byte_fallback_ = byte_fallback
        self._byte_ids = {b: vocab.id_of(bytes([b])) for b in range(256) if bytes([b]) in vocab}
        self._pair_lookup = {
            (vocab.id_of(r.left), vocab.id_of(r.right)): (r.rank, vocab.id_of(r.result)) for r in merges
        }
        self._children = {r.result: (r.left, r.right) for r in merges}

    # -- encode / decode ---------------------------------------------------

    def encode(self, text: str) -> Encoding:
        """Tokenize a string; spans index into its UTF-8 byte form."""
        return self.encode_bytes(text.encode("utf-8"))

    def encode_bytes(self, data: bytes) -> Encoding:
        """Tokenize raw bytes (tokens themselves need not be valid UTF-8).

        Merges are applied one occurrence at a time: always the
        lowest-rank applicable rule, leftmost occurrence first. Runs in
        O(n log n) via a lazily-invalidated heap over a linked list; each
        rank names exactly one pair, so a popped entry whose rank still
        matches the pair at its node is current.
        """
        check_fitted(self, "vocab_")
        if not data:
            return Encoding([], [])
        byte_ids = self._byte_ids
        try:
            tok = [byte_ids[b] for b in data]
        except KeyError:
            bad = next(b for b in data if b not in byte_ids)
            raise ValueError(f"byte 0x{bad:02x} is not encodable (byte_fallback is off)") from None
        n = len(tok)
        nxt = list(range(1, n)) + [-1]
        prv = [-1] + list(range(n - 1))
        end = list(range(1, n + 1))  # node i starts at byte i and covers [i, end[i])
        alive = [True] * n
        lookup = self._pair_lookup
        heap = []
        for i in range(n - 1):
            hit = lookup.get((tok[i], tok[i + 1]))
            if hit is not None:
                heap.append((hit[0], i))
        heapq.heapify(heap)
        while heap:
            rank, i = heapq.heappop(heap)
            if not alive[i]:
                continue
            j = nxt[i]
            if j == -1:
                continue
            hit = lookup.get((tok[i], tok[j]))
            if hit is None or hit[0] != rank:
                continue  # stale entry
            tok[i] = hit[1]
            end[i] = end[j]
            alive[j] = False
            k = nxt[j]
            nxt[i] = k
            if k != -1:
                prv[k] = i
                right = lookup.get((tok[i], tok[k]))
                if right is not None:
                    heapq.heappush(heap, (right[0], i))
            h = prv[i]
            if h != -1:
                left = lookup.get((tok[h], tok[i]))
                if left is not None:
                    heapq.heappush(heap, (left[0], h))
        ids: list[int] = []
        spans: list[tuple[int, int]] = []
        i = 0
        while i != -1:
            ids.append(tok[i])
            spans.append((i, end[i]))
            i = nxt[i]
        return Encoding(ids, spans)

    def decode_bytes(self, ids: Iterable[int]) -> bytes:
        check_fitted(self, "vocab_")
        return b"".join(self.vocab_.token(i) for i in ids)

    def decode(self, ids: Iterable[int]) -> DecodedText:
        """Concatenate token bytes and decode as UTF-8. Malformed id
        sequences fall back to replacement characters with ``lossy=True``."""
        raw = self.decode_bytes(ids)
        try:
            return DecodedText(raw.decode("utf-8"), lossy=False)
        except UnicodeDecodeError:
            return DecodedText(raw.decode("utf-8", errors="replace"), lossy=True)

    def transform(self, X: Iterable[str]) -> list[list[int]]:
        """Encode a corpus; returns one id list per sentence."""
        return [self.encode(s).ids for s in as_sentences(X)]

    # -- introspection -----------------------------------------------------

    def merge_children(self, token: bytes) -> tuple[bytes, bytes] | None:
        """The (left, right) pair producing ``token``, or None for base and
        special tokens. Raises KeyError for unknown tokens."""
        check_fitted(self, "vocab_")
        if token not in self.vocab_:
            raise KeyError(f"token {escape_token(token)!r} not in vocabulary")
        return self._children.get(token)

    def token_frequency(self, X: Iterable[str]) -> Counter:
        """Occurrence count of each vocabulary token when encoding the
        corpus. Missing tokens count 0 (Counter semantics)."""
        check_fitted(self, "vocab_")
        freq: Counter = Counter()
        vocab = self.vocab_
        for sent in as_sentences(X):
            for i in self.encode(sent).ids:
                freq[vocab.token(i)] += 1
        return freq

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        check_fitted(self, "vocab_")
        return {
            "format_version": 1,
            "vocab": [escape_token(t) for t in self.vocab_],
            "merges": [f"{escape_token(r.left)} {escape_token(r.right)}" for r in self.merges_],
            "specials": [escape_token(t) for t in self.vocab_.specials],
            "byte_fallback": self.byte_fallback_,
        }

    @classmethod
    def from_json_dict(cls, obj) -> "BpeTokenizer":
        if not isinstance(obj, dict):
            raise FormatError("tokenizer JSON must be an object")
        if obj.get("format_version") != 1:
            raise FormatError(f"unsupported tokenizer format_version {obj.get('format_version')!r}")
        for key, typ in (("vocab", list), ("merges", list), ("specials", list), ("byte_fallback", bool)):
            if not isinstance(obj.get(key), typ):
                raise FormatError(f"tokenizer JSON field {key!r} missing or not a {typ.__name__}")
        if any(not isinstance(s, str) for s in obj["vocab"] + obj["merges"] + obj["specials"]):
            raise FormatError("tokenizer JSON token entries must be strings")
        tokens = [unescape_token(s) for s in obj["vocab"]]
        specials = [unescape_token(s) for s in obj["specials"]]
        merges = []
        for rank, entry in enumerate(obj["merges"]):
            parts = entry.split(" ")
            if len(parts) != 2:
                raise FormatError(f"merge {rank} is not a 'left right' pair: {entry!r}")
            merges.append((unescape_token(parts[0]), unescape_token(parts[1])))
        try:
            return cls.from_vocab_and_merges(tokens, merges, specials, obj["byte_fallback"])
        except ValueError as exc:
            raise FormatError(f"invalid tokenizer: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BpeTokenizer":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise FormatError(f"cannot read tokenizer file {path}: {exc}") from exc
        except UnicodeDecodeError as exc:
            raise FormatError(f"tokenizer file {path} is not UTF-8: {exc}") from exc
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"tokenizer file {path} is not valid JSON: {exc}") from exc
        return cls.from_json_dict(obj)
