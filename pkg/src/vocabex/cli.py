"""Command-line pipeline: train-aux -> expand -> align-table / init ->
plan / analyze / sweep.

Every value has three sources with fixed precedence: explicit CLI flag,
then the --config JSON file (keys mirror flag names with underscores),
then the built-in default. Failures print a machine-readable error record
to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from sklearn.exceptions import NotFittedError

from .analytics import fragmentation, run_k_sweep, speedup_proxy, sweep_to_text
from .bpe import BpeTokenizer, unescape_token
from .corpus import load_corpus
from .embeddings import (
    AlignInit,
    AlignmentTable,
    MeanInit,
    MergeInit,
    RandomInit,
    build_alignment_table,
    expand_matrices,
)
from .errors import FormatError, VocabexError
from .expansion import (
    DEFAULT_K,
    K_SWEEP_GRID,
    ExpansionResult,
    VocabularyExpander,
    expansion_report,
)
from .matrixio import load_matrix, save_matrix
from .plans import ModelManifest, decoder_manifest, make_plan, validate_plan

__all__ = ["main"]

DEFAULT_AUX_VOCAB_SIZE = 50_000

GLOBAL_DEFAULTS = {"seed": 0, "output_dir": ".", "config": None}

COMMAND_DEFAULTS = {
    "train-aux": {"corpus": None, "vocab_size": DEFAULT_AUX_VOCAB_SIZE, "sample_size": None, "specials": ""},
    "expand": {"source": None, "aux": None, "corpus": None, "k": DEFAULT_K, "mode": "closure", "sample_size": None},
    "align-table": {"source": None, "target": None, "corpus": None, "span_rule": "overlap", "sample_size": None},
    "init": {
        "source": None,
        "target": None,
        "embed": None,
        "head": None,
        "tied": False,
        "method": "mean",
        "corpus": None,
        "table": None,
        "span_rule": "overlap",
        "raw_align_frequencies": False,
        "sample_size": None,
    },
    "plan": {
        "manifest": None,
        "strategy": "lora",
        "objective": "clm",
        "seq_len": 2048,
        "mtp_extra_heads": 1,
        "embedding_scope": "full",
        "layers": 32,
        "hidden_dim": 4096,
        "vocab_size": 32000,
        "tied": False,
    },
    "analyze": {"source": None, "target": None, "corpus": None, "expansion": None, "sample_size": None},
    "sweep": {
        "source": None,
        "aux": None,
        "corpus": None,
        "k": ",".join(str(k) for k in K_SWEEP_GRID),
        "mode": "closure",
        "sample_size": None,
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vocabex",
        description="Tokenizer vocabulary expansion: train, expand, initialize, plan, analyze.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, help="global random seed (default 0)")
        p.add_argument("--config", help="JSON file whose keys mirror any flag of this command")
        p.add_argument("--output-dir", help="directory for written artifacts (default .)")
        return p

    p = add("train-aux", "train an auxiliary BPE tokenizer on a target-language corpus")
    p.add_argument("--corpus", help="one sentence per line, UTF-8")
    p.add_argument("--vocab-size", type=int, help=f"target vocabulary size (default {DEFAULT_AUX_VOCAB_SIZE})")
    p.add_argument("--sample-size", type=int, help="sample this many sentences before training")
    p.add_argument("--specials", help="comma-separated reserved tokens")

    p = add("expand", "select new tokens and derive the expanded target tokenizer")
    p.add_argument("--source", help="source tokenizer JSON")
    p.add_argument("--aux", help="auxiliary tokenizer JSON")
    p.add_argument("--corpus", help="frequency corpus")
    p.add_argument("--k", type=int, help=f"number of new tokens (default {DEFAULT_K})")
    p.add_argument("--mode", choices=["closure", "strict"], help="merge derivation mode")
    p.add_argument("--sample-size", type=int)

    p = add("align-table", "build the source-mapping table for Align initialization")
    p.add_argument("--source", help="source tokenizer JSON")
    p.add_argument("--target", help="target tokenizer JSON (must extend the source)")
    p.add_argument("--corpus")
    p.add_argument("--span-rule", choices=["overlap", "contain"])
    p.add_argument("--sample-size", type=int)

    p = add("init", "initialize embedding rows for the added tokens")
    p.add_argument("--source", help="source tokenizer JSON")
    p.add_argument("--target", help="target tokenizer JSON")
    p.add_argument("--embed", help="input embedding matrix (CVEEMB01)")
    p.add_argument("--head", help="lm head matrix; omit for tied models")
    p.add_argument("--tied", action="store_true", help="model ties embedding and head")
    p.add_argument("--method", choices=["random", "mean", "merge", "align"])
    p.add_argument("--corpus", help="corpus for align (ignored by other methods)")
    p.add_argument("--table", help="pre-built alignment table (skips corpus pass)")
    p.add_argument("--span-rule", choices=["overlap", "contain"])
    p.add_argument("--raw-align-frequencies", action="store_true",
                   help="weight by raw counts instead of normalized frequencies")
    p.add_argument("--sample-size", type=int)

    p = add("plan", "emit a training plan for a strategy")
    p.add_argument("--manifest", help="model manifest JSON; omit to describe one via --layers etc.")
    p.add_argument("--strategy", choices=["lora", "2-stage", "2x2-ls"])
    p.add_argument("--objective", choices=["clm", "mtp"])
    p.add_argument("--seq-len", type=int, choices=[512, 2048])
    p.add_argument("--mtp-extra-heads", type=int)
    p.add_argument("--embedding-scope", choices=["full", "new_only"])
    p.add_argument("--layers", type=int, help="generated-manifest layer count")
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--tied", action="store_true")

    p = add("analyze", "fragmentation and speedup-proxy reports")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--corpus")
    p.add_argument("--expansion", help="expansion.json from `expand`; distinguishes selected "
                                       "tokens from intermediates in the new-token share")
    p.add_argument("--sample-size", type=int)

    p = add("sweep", "run expansion and analysis across a list of k values")
    p.add_argument("--source")
    p.add_argument("--aux")
    p.add_argument("--corpus")
    p.add_argument("--k", help="comma-separated k values (default 50,100,500,1000,5000)")
    p.add_argument("--mode", choices=["closure", "strict"])
    p.add_argument("--sample-size", type=int)

    return parser


def _options(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags.

    A config file may mix top-level keys (applied to the current command)
    with per-command sections keyed by command name, so one file can drive
    the whole train-aux -> expand -> init -> analyze pipeline.
    """
    defaults = {**GLOBAL_DEFAULTS, **COMMAND_DEFAULTS[args.command]}
    opts = dict(defaults)
    given = {k: v for k, v in vars(args).items() if k != "command"}
    config_path = given.pop("config", None)
    if config_path:
        cfg = _read_config(config_path)
        section = cfg.pop(args.command, None)
        for other in COMMAND_DEFAULTS:
            cfg.pop(other, None)
        if section is not None and not isinstance(section, dict):
            raise FormatError(f"config section {args.command!r} must be a JSON object")
        for part in (cfg, section or {}):
            unknown = set(part) - set(defaults)
            if unknown:
                raise FormatError(f"unknown config keys for {args.command}: {sorted(unknown)}")
            opts.update(part)
    opts.update(given)
    return opts


def _read_config(path, kind: str = "config") -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {kind} file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{kind} file {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"{kind} file must hold a JSON object")
    return obj


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) in (None, "")]
    if missing:
        raise ValueError(f"missing required options: {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _out_dir(opts: dict) -> Path:
    out = Path(opts["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_sentences(opts: dict) -> list[str]:
    corpus = load_corpus(opts["corpus"], sample_size=opts.get("sample_size"), seed=opts["seed"])
    return corpus.sentences


def _csv_strs(value) -> tuple[str, ...]:
    """Comma-separated flag value or a plain list from a config file."""
    if not value:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    return tuple(s for s in value.split(",") if s)


def _csv_ints(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    try:
        return [int(k) for k in str(value).split(",") if k != ""]
    except ValueError:
        raise ValueError(f"expected a comma-separated integer list, got {value!r}") from None


def _added_tokens(source: BpeTokenizer, target: BpeTokenizer) -> list[bytes]:
    n_s = len(source.vocab_)
    if len(target.vocab_) < n_s or target.vocab_.tokens[:n_s] != source.vocab_.tokens:
        raise ValueError("target tokenizer does not extend the source tokenizer's id space")
    return list(target.vocab_.tokens[n_s:])


def cmd_train_aux(opts: dict) -> int:
    _require(opts, "corpus")
    sentences = _load_sentences(opts)
    specials = _csv_strs(opts["specials"])
    tok = BpeTokenizer(vocab_size=opts["vocab_size"], specials=specials).fit(sentences)
    out = _out_dir(opts) / "aux_tokenizer.json"
    tok.save(out)
    print(f"trained auxiliary tokenizer on {len(sentences)} sentences: "
          f"{len(tok.vocab_)} tokens, {len(tok.merges_)} merges -> {out}")
    return 0


def cmd_expand(opts: dict) -> int:
    _require(opts, "source", "aux", "corpus")
    source = BpeTokenizer.load(opts["source"])
    aux = BpeTokenizer.load(opts["aux"])
    sentences = _load_sentences(opts)
    expander = VocabularyExpander(source, aux, k=opts["k"], mode=opts["mode"]).fit(sentences)
    result = expander.result_
    out = _out_dir(opts)
    tok_path = out / "target_tokenizer.json"
    result.target_tokenizer.save(tok_path)
    report = expansion_report(result)
    exp_path = out / "expansion.json"
    exp_path.write_text(
        json.dumps({**result.to_json_dict(), "report": report}, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"selected {report['new_token_count']} new tokens "
          f"(+{report['intermediate_count']} intermediates, {report['unreachable_count']} unreachable); "
          f"target vocabulary {report['target_vocab_size']} -> {tok_path}")
    return 0


def cmd_align_table(opts: dict) -> int:
    _require(opts, "source", "target", "corpus")
    source = BpeTokenizer.load(opts["source"])
    target = BpeTokenizer.load(opts["target"])
    sentences = _load_sentences(opts)
    added = _added_tokens(source, target)
    ids = [target.vocab_.id_of(t) for t in added]
    table = build_alignment_table(sentences, source, target, ids, span_rule=opts["span_rule"])
    out = _out_dir(opts) / "alignment_table.jsonl"
    table.save(out)
    print(f"alignment table: {len(table.counts)}/{len(added)} added tokens observed "
          f"in {len(sentences)} sentences -> {out}")
    return 0


def cmd_init(opts: dict) -> int:
    _require(opts, "source", "target", "embed")
    source = BpeTokenizer.load(opts["source"])
    target = BpeTokenizer.load(opts["target"])
    E_in = load_matrix(opts["embed"])
    E_out = load_matrix(opts["head"]) if opts["head"] else None
    added = _added_tokens(source, target)
    expansion = ExpansionResult(
        new_tokens=added, intermediates=[], unreachable=[],
        target_tokenizer=target, overlap_count=0,
    )

    name = opts["method"]
    if name == "random":
        method = RandomInit(opts["seed"])
    elif name == "mean":
        method = MeanInit()
    elif name == "merge":
        method = MergeInit()
    else:
        if opts["table"]:
            table = AlignmentTable.load(opts["table"])
        else:
            _require(opts, "corpus")
            ids = [target.vocab_.id_of(t) for t in added]
            table = build_alignment_table(
                _load_sentences(opts), source, target, ids, span_rule=opts["span_rule"]
            )
        method = AlignInit(table, normalize=not opts["raw_align_frequencies"])

    E_in2, E_out2 = expand_matrices(E_in, E_out, tied=opts["tied"], method=method,
                                    expansion=expansion, source_tok=source)
    out = _out_dir(opts)
    embed_path = out / "embed_expanded.bin"
    save_matrix(E_in2, embed_path)
    written = [str(embed_path)]
    if E_out2 is not None:
        head_path = out / "head_expanded.bin"
        save_matrix(E_out2, head_path)
        written.append(str(head_path))
    print(f"initialized {len(added)} rows with {name}: "
          f"{E_in.n_rows} -> {E_in2.n_rows} rows -> {', '.join(written)}")
    return 0


def cmd_plan(opts: dict) -> int:
    if opts["manifest"]:
        manifest = ModelManifest.load(opts["manifest"])
    else:
        manifest = decoder_manifest(
            n_layers=opts["layers"], hidden_dim=opts["hidden_dim"],
            vocab_size=opts["vocab_size"], tied=opts["tied"],
        )
    plan = make_plan(
        manifest, opts["strategy"], objective=opts["objective"], seq_len=opts["seq_len"],
        mtp_extra_heads=opts["mtp_extra_heads"], embedding_scope=opts["embedding_scope"],
    )
    validate_plan(plan, manifest)
    out = _out_dir(opts) / "train_plan.json"
    plan.save(out)
    summary = "; ".join(
        f"phase {i}: {len(p.trainable)} trainable"
        + (f", adapters on {len(p.adapters.target_modules)} modules" if p.adapters else "")
        for i, p in enumerate(plan.phases, start=1)
    )
    print(f"{opts['strategy']} plan ({plan.objective}, seq_len {plan.seq_len}): {summary} -> {out}")
    return 0


def cmd_analyze(opts: dict) -> int:
    _require(opts, "source", "target", "corpus")
    source = BpeTokenizer.load(opts["source"])
    target = BpeTokenizer.load(opts["target"])
    sentences = _load_sentences(opts)
    new_ids = None
    if opts["expansion"]:
        doc = _read_config(opts["expansion"], kind="expansion")
        if not isinstance(doc.get("new_tokens"), list):
            raise FormatError(f"{opts['expansion']} has no 'new_tokens' list")
        new_ids = [target.vocab_.id_of(unescape_token(t)) for t in doc["new_tokens"]]
    frag = fragmentation(sentences, {"source": source, "target": target}, "source")
    speed = speedup_proxy(sentences, source, target, new_token_ids=new_ids)
    out = _out_dir(opts) / "analysis.json"
    out.write_text(
        json.dumps(
            {"format_version": 1, "fragmentation": frag.to_json_dict(), "speedup": speed.to_json_dict()},
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    print(frag.to_text())
    ratio_in = speed.target_token_ratio_input
    share_label = "new-token share" if new_ids is not None else "added-token share (incl. intermediates)"
    print(f"token ratio (source/target, speedup proxy): {speed.token_ratio:.4f}"
          + (f"; {share_label} of input: {ratio_in:.4f}" if ratio_in is not None else ""))
    print(f"report -> {out}")
    return 0


def cmd_sweep(opts: dict) -> int:
    _require(opts, "source", "aux", "corpus")
    source = BpeTokenizer.load(opts["source"])
    aux = BpeTokenizer.load(opts["aux"])
    sentences = _load_sentences(opts)
    k_values = _csv_ints(opts["k"])
    if not k_values:
        raise ValueError("--k lists no values")
    records = run_k_sweep(source, aux, sentences, k_values=k_values, mode=opts["mode"])
    out = _out_dir(opts) / "sweep.json"
    out.write_text(json.dumps({"format_version": 1, "records": records}, indent=2) + "\n", encoding="utf-8")
    print(sweep_to_text(records))
    print(f"sweep -> {out}")
    return 0


HANDLERS = {
    "train-aux": cmd_train_aux,
    "expand": cmd_expand,
    "align-table": cmd_align_table,
    "init": cmd_init,
    "plan": cmd_plan,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        opts = _options(args)
        return HANDLERS[args.command](opts)
    except (VocabexError, NotFittedError, ValueError, TypeError, KeyError, OSError) as exc:
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
