"""Training-strategy artifacts: trainable-parameter plans per strategy,
extra-head initialization for multi-token prediction, and packing math.

Nothing here executes training. Plans are JSON records a training harness
can consume; the hyperparameters block is advisory metadata, not behavior.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .embeddings import EmbeddingMatrix
from .errors import FormatError

__all__ = [
    "AdapterSpec",
    "DEFAULT_HYPERPARAMETERS",
    "ModelManifest",
    "PackingStats",
    "Phase",
    "SEQ_LEN_PRESETS",
    "STRATEGIES",
    "TrainPlan",
    "init_mtp_heads",
    "make_plan",
    "pack_corpus",
]

STRATEGIES = ("lora", "2-stage", "2x2-ls")
OBJECTIVES = ("clm", "mtp")
SEQ_LEN_PRESETS = (2048, 512)

# Advisory defaults emitted alongside every plan.
DEFAULT_HYPERPARAMETERS = {
    "batch_size": 8,
    "learning_rate": 1e-4,
    "lr_schedule": "cosine",
    "warmup_steps": 100,
    "weight_decay": 0.01,
    "epochs": 2,
}

LORA_RANK = 8
LORA_ALPHA = 32.0
LORA_DROPOUT = 0.05


@dataclass(frozen=True)
class ModelManifest:
    """Names and shapes of the pieces of a decoder-only model that plans
    refer to. Layer order is depth order: index 0 is the bottom block."""

    layer_names: tuple[str, ...]
    linear_names_per_layer: tuple[str, ...]
    embedding_name: str
    head_name: str
    tied: bool
    hidden_dim: int
    vocab_size: int

    def __post_init__(self):
        names = list(self.layer_names) + [self.embedding_name, self.head_name]
        if len(set(names)) != len(names):
            raise ValueError("manifest names must be unique")
        if len(set(self.linear_names_per_layer)) != len(self.linear_names_per_layer):
            raise ValueError("linear sublayer names must be unique")
        if self.hidden_dim < 1 or self.vocab_size < 1:
            raise ValueError("hidden_dim and vocab_size must be positive")

    @property
    def n_layers(self) -> int:
        return len(self.layer_names)

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "layer_names": list(self.layer_names),
            "linear_names_per_layer": list(self.linear_names_per_layer),
            "embedding_name": self.embedding_name,
            "head_name": self.head_name,
            "tied": self.tied,
            "hidden_dim": self.hidden_dim,
            "vocab_size": self.vocab_size,
        }

    @classmethod
    def from_json_dict(cls, obj) -> "ModelManifest":
        if not isinstance(obj, dict):
            raise FormatError("manifest must be a JSON object")
        if obj.get("format_version") != 1:
            raise FormatError(f"unsupported manifest format_version {obj.get('format_version')!r}")
        try:
            spec = {
                "layer_names": tuple(obj["layer_names"]),
                "linear_names_per_layer": tuple(obj["linear_names_per_layer"]),
                "embedding_name": obj["embedding_name"],
                "head_name": obj["head_name"],
                "tied": obj["tied"],
                "hidden_dim": obj["hidden_dim"],
                "vocab_size": obj["vocab_size"],
            }
        except KeyError as exc:
            raise FormatError(f"manifest missing field {exc.args[0]!r}") from None
        if not all(isinstance(n, str) for n in spec["layer_names"] + spec["linear_names_per_layer"]):
            raise FormatError("manifest names must be strings")
        if not isinstance(spec["tied"], bool):
            raise FormatError("manifest 'tied' must be a boolean")
        if not isinstance(spec["hidden_dim"], int) or not isinstance(spec["vocab_size"], int):
            raise FormatError("manifest dimensions must be integers")
        try:
            return cls(**spec)
        except ValueError as exc:
            raise FormatError(f"invalid manifest: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ModelManifest":
        return cls.from_json_dict(_read_json(path, "manifest"))


def decoder_manifest(
    n_layers: int = 32,
    hidden_dim: int = 4096,
    vocab_size: int = 32000,
    tied: bool = False,
) -> ModelManifest:
    """A llama-like manifest, handy as a starting point and in tests."""
    return ModelManifest(
        layer_names=tuple(f"layers.{i}" for i in range(n_layers)),
        linear_names_per_layer=(
            "self_attn.q_proj",
            "self_attn.k_proj",
            "self_attn.v_proj",
            "self_attn.o_proj",
            "mlp.gate_proj",
            "mlp.up_proj",
            "mlp.down_proj",
        ),
        embedding_name="embed_tokens",
        head_name="lm_head",
        tied=tied,
        hidden_dim=hidden_dim,
        vocab_size=vocab_size,
    )


@dataclass(frozen=True)
class AdapterSpec:
    rank: int = LORA_RANK
    alpha: float = LORA_ALPHA
    dropout: float = LORA_DROPOUT
    target_modules: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "rank": self.rank,
            "alpha": self.alpha,
            "dropout": self.dropout,
            "target_modules": list(self.target_modules),
        }


@dataclass(frozen=True)
class Phase:
    trainable: tuple[str, ...]
    adapters: AdapterSpec | None = None

    def __post_init__(self):
        if len(set(self.trainable)) != len(self.trainable):
            raise ValueError("a phase must not list a parameter twice")

    def to_json_dict(self) -> dict:
        return {
            "trainable": list(self.trainable),
            "adapters": self.adapters.to_json_dict() if self.adapters else None,
        }


@dataclass(frozen=True)
class TrainPlan:
    phases: tuple[Phase, ...]
    objective: str
    n_heads: int
    seq_len: int
    embedding_scope: str = "full"  # or "new_only": restrict row updates to added rows
    hyperparameters: dict = field(default_factory=lambda: dict(DEFAULT_HYPERPARAMETERS))

    def __post_init__(self):
        if not self.phases:
            raise ValueError("a plan needs at least one phase")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.seq_len not in SEQ_LEN_PRESETS:
            raise ValueError(f"seq_len must be one of the presets {SEQ_LEN_PRESETS}")

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "phases": [p.to_json_dict() for p in self.phases],
            "objective": self.objective,
            "n_heads": self.n_heads,
            "seq_len": self.seq_len,
            "embedding_scope": self.embedding_scope,
            "hyperparameters": dict(self.hyperparameters),
        }

    @classmethod
    def from_json_dict(cls, obj) -> "TrainPlan":
        if not isinstance(obj, dict):
            raise FormatError("plan must be a JSON object")
        if obj.get("format_version") != 1:
            raise FormatError(f"unsupported plan format_version {obj.get('format_version')!r}")
        if not isinstance(obj.get("phases"), list) or not obj["phases"]:
            raise FormatError("plan 'phases' must be a non-empty list")
        phases = []
        for i, p in enumerate(obj["phases"]):
            if not isinstance(p, dict) or not isinstance(p.get("trainable"), list):
                raise FormatError(f"plan phase {i} must carry a 'trainable' list")
            adapters = p.get("adapters")
            spec = None
            if adapters is not None:
                try:
                    spec = AdapterSpec(
                        rank=adapters["rank"],
                        alpha=adapters["alpha"],
                        dropout=adapters["dropout"],
                        target_modules=tuple(adapters["target_modules"]),
                    )
                except (KeyError, TypeError) as exc:
                    raise FormatError(f"plan phase {i} has a malformed adapter spec: {exc}") from None
            try:
                phases.append(Phase(trainable=tuple(p["trainable"]), adapters=spec))
            except ValueError as exc:
                raise FormatError(f"plan phase {i}: {exc}") from exc
        try:
            return cls(
                phases=tuple(phases),
                objective=obj.get("objective"),
                n_heads=obj.get("n_heads", 1),
                seq_len=obj.get("seq_len"),
                embedding_scope=obj.get("embedding_scope", "full"),
                hyperparameters=obj.get("hyperparameters", dict(DEFAULT_HYPERPARAMETERS)),
            )
        except ValueError as exc:
            raise FormatError(f"invalid plan: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainPlan":
        return cls.from_json_dict(_read_json(path, "plan"))


def _read_json(path, kind: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {kind} file {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{kind} file {path} is not valid JSON: {exc}") from exc


def _lora_phase(manifest: ModelManifest) -> Phase:
    modules = tuple(
        f"{layer}.{linear}"
        for layer in manifest.layer_names
        for linear in manifest.linear_names_per_layer
    )
    return Phase(
        trainable=(manifest.embedding_name, manifest.head_name),
        adapters=AdapterSpec(target_modules=modules),
    )


def make_plan(
    manifest: ModelManifest,
    strategy: str,
    objective: str = "clm",
    seq_len: int = 2048,
    mtp_extra_heads: int = 1,
    embedding_scope: str = "full",
) -> TrainPlan:
    """Build the trainable-parameter plan for one strategy.

    ``lora``: one phase; adapters (rank 8, alpha 32, dropout 0.05) on every
    linear sublayer of every block, plus the embedding and head trained in
    full. ``2-stage``: phase 1 trains embedding+head only, phase 2 is the
    LoRA phase. ``2x2-ls``: one phase training the bottom two and top two
    blocks in full plus embedding and head, no adapters.

    ``n_heads`` on the returned plan counts total language-modeling heads:
    1 for CLM, 1 + ``mtp_extra_heads`` for MTP.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if manifest.n_layers == 0:
        raise ValueError("manifest has no layers")
    if objective == "mtp" and mtp_extra_heads < 1:
        raise ValueError("mtp needs at least one extra head")
    if embedding_scope not in ("full", "new_only"):
        raise ValueError(f"embedding_scope must be 'full' or 'new_only', got {embedding_scope!r}")

    if strategy == "lora":
        phases = (_lora_phase(manifest),)
    elif strategy == "2-stage":
        phases = (
            Phase(trainable=(manifest.embedding_name, manifest.head_name)),
            _lora_phase(manifest),
        )
    else:
        n = manifest.n_layers
        if n < 4:
            warnings.warn(f"model has only {n} layers; 2x2-ls degenerates to training all of them")
        picked = sorted({0, 1, n - 2, n - 1} & set(range(n)))
        layers = tuple(manifest.layer_names[i] for i in picked)
        phases = (
            Phase(trainable=layers + (manifest.embedding_name, manifest.head_name)),
        )

    n_heads = 1 + mtp_extra_heads if objective == "mtp" else 1
    return TrainPlan(
        phases=phases,
        objective=objective,
        n_heads=n_heads,
        seq_len=seq_len,
        embedding_scope=embedding_scope,
    )


def validate_plan(plan: TrainPlan, manifest: ModelManifest) -> None:
    """Check that every trainable identifier resolves in the manifest."""
    known = set(manifest.layer_names) | {manifest.embedding_name, manifest.head_name}
    modules = {
        f"{layer}.{linear}"
        for layer in manifest.layer_names
        for linear in manifest.linear_names_per_layer
    }
    for i, phase in enumerate(plan.phases):
        unknown = [t for t in phase.trainable if t not in known]
        if unknown:
            raise ValueError(f"phase {i} references unknown parameters: {unknown}")
        if phase.adapters:
            missing = [m for m in phase.adapters.target_modules if m not in modules]
            if missing:
                raise ValueError(f"phase {i} adapter targets unknown modules: {missing[:3]}")


def init_mtp_heads(head: EmbeddingMatrix, n_extra: int) -> list[EmbeddingMatrix]:
    """Extra prediction heads, each an independent bitwise copy of the
    (already expanded) head matrix."""
    if head.role != "lm_head":
        raise ValueError(f"expected an lm_head matrix, got role {head.role!r}")
    if n_extra < 1:
        raise ValueError(f"n_extra must be >= 1, got {n_extra}")
    return [head.copy() for _ in range(n_extra)]


@dataclass(frozen=True)
class PackingStats:
    """Concatenate-and-chunk accounting. The last short chunk is kept and
    padded; padding is reported but not counted as tokens."""

    total_tokens: int
    seq_len: int
    batch_size: int
    num_sequences: int
    num_optimizer_steps: int
    padding_tokens: int

    def to_json_dict(self) -> dict:
        return {
            "total_tokens": self.total_tokens,
            "seq_len": self.seq_len,
            "batch_size": self.batch_size,
            "num_sequences": self.num_sequences,
            "num_optimizer_steps": self.num_optimizer_steps,
            "padding_tokens": self.padding_tokens,
        }


def pack_corpus(token_stream_length: int, seq_len: int, batch_size: int) -> PackingStats:
    if token_stream_length < 0:
        raise ValueError(f"token_stream_length must be >= 0, got {token_stream_length}")
    if seq_len < 1 or batch_size < 1:
        raise ValueError("seq_len and batch_size must be >= 1")
    num_sequences = math.ceil(token_stream_length / seq_len)
    return PackingStats(
        total_tokens=token_stream_length,
        seq_len=seq_len,
        batch_size=batch_size,
        num_sequences=num_sequences,
        num_optimizer_steps=math.ceil(num_sequences / batch_size),
        padding_tokens=num_sequences * seq_len - token_stream_length,
    )
