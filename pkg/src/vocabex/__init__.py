"""Tokenizer vocabulary expansion toolkit.

Train byte-fallback BPE tokenizers, graft the most useful tokens of an
auxiliary tokenizer onto a source vocabulary without disturbing existing
ids, initialize embedding rows for the added tokens, and emit training
plans plus compression analytics for the adapted model.
"""

from .analytics import (
    FragmentationReport,
    SpeedupReport,
    TokenizerStats,
    fragmentation,
    run_k_sweep,
    speedup_proxy,
    sweep_to_text,
    target_token_ratio,
)
from .bpe import (
    SPACE_MARKER,
    BpeTokenizer,
    DecodedText,
    Encoding,
    MergeRule,
    Vocabulary,
    escape_token,
    unescape_token,
)
from .corpus import Corpus, load_corpus, synthetic_agglutinative_corpus
from .embeddings import (
    AlignInit,
    AlignmentTable,
    EmbeddingInitializer,
    EmbeddingMatrix,
    EmbedStats,
    HookInit,
    MeanInit,
    MergeInit,
    RandomInit,
    build_alignment_table,
    embed_stats,
    expand_matrices,
    init_align,
    init_mean,
    init_merge,
    init_random,
)
from .errors import FormatError, VocabexError
from .expansion import (
    DEFAULT_K,
    K_SWEEP_GRID,
    ExpansionResult,
    VocabularyExpander,
    build_target_tokenizer,
    expansion_report,
    select_new_tokens,
)
from .matrixio import load_matrix, save_matrix
from .plans import (
    DEFAULT_HYPERPARAMETERS,
    AdapterSpec,
    ModelManifest,
    PackingStats,
    Phase,
    TrainPlan,
    decoder_manifest,
    init_mtp_heads,
    make_plan,
    pack_corpus,
    validate_plan,
)

__all__ = [
    "AdapterSpec",
    "AlignInit",
    "AlignmentTable",
    "BpeTokenizer",
    "Corpus",
    "DecodedText",
    "DEFAULT_HYPERPARAMETERS",
    "DEFAULT_K",
    "EmbedStats",
    "EmbeddingInitializer",
    "EmbeddingMatrix",
    "Encoding",
    "ExpansionResult",
    "FormatError",
    "FragmentationReport",
    "HookInit",
    "K_SWEEP_GRID",
    "MeanInit",
    "MergeInit",
    "MergeRule",
    "ModelManifest",
    "PackingStats",
    "Phase",
    "RandomInit",
    "SPACE_MARKER",
    "SpeedupReport",
    "TokenizerStats",
    "TrainPlan",
    "Vocabulary",
    "VocabexError",
    "VocabularyExpander",
    "build_alignment_table",
    "build_target_tokenizer",
    "decoder_manifest",
    "embed_stats",
    "escape_token",
    "expand_matrices",
    "expansion_report",
    "fragmentation",
    "init_align",
    "init_mean",
    "init_merge",
    "init_mtp_heads",
    "init_random",
    "load_corpus",
    "load_matrix",
    "make_plan",
    "pack_corpus",
    "run_k_sweep",
    "save_matrix",
    "select_new_tokens",
    "speedup_proxy",
    "sweep_to_text",
    "synthetic_agglutinative_corpus",
    "target_token_ratio",
    "unescape_token",
    "validate_plan",
]
__version__ = "0.1.0"
