"""Strategy plans, MTP head copies, packing arithmetic."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vocabex.embeddings import EmbeddingMatrix
from vocabex.errors import FormatError
from vocabex.plans import (
    DEFAULT_HYPERPARAMETERS,
    ModelManifest,
    Phase,
    TrainPlan,
    decoder_manifest,
    init_mtp_heads,
    make_plan,
    pack_corpus,
    validate_plan,
)


class TestMakePlan:
    def test_2x2_ls_marks_bottom_and_top_pairs(self):
        plan = make_plan(decoder_manifest(n_layers=32), "2x2-ls")
        (phase,) = plan.phases
        assert set(phase.trainable) == {
            "layers.0", "layers.1", "layers.30", "layers.31", "embed_tokens", "lm_head",
        }
        assert phase.adapters is None

    def test_2x2_ls_small_model_trains_all_layers(self):
        with pytest.warns(UserWarning, match="degenerates"):
            plan = make_plan(decoder_manifest(n_layers=3), "2x2-ls")
        (phase,) = plan.phases
        assert set(phase.trainable) == {"layers.0", "layers.1", "layers.2", "embed_tokens", "lm_head"}

    def test_2x2_ls_exact_cardinality(self):
        for n in (4, 5, 8, 40):
            plan = make_plan(decoder_manifest(n_layers=n), "2x2-ls")
            layers = [t for t in plan.phases[0].trainable if t.startswith("layers.")]
            assert len(layers) == 4

    def test_two_stage_phase_one_is_embed_and_head_only(self):
        plan = make_plan(decoder_manifest(), "2-stage")
        assert len(plan.phases) == 2
        assert set(plan.phases[0].trainable) == {"embed_tokens", "lm_head"}
        assert plan.phases[0].adapters is None

    def test_two_stage_phase_two_equals_lora_phase(self):
        manifest = decoder_manifest(n_layers=6)
        two_stage = make_plan(manifest, "2-stage")
        lora = make_plan(manifest, "lora")
        assert two_stage.phases[1] == lora.phases[0]

    def test_lora_adapters_cover_every_linear_sublayer(self):
        manifest = decoder_manifest(n_layers=4)
        plan = make_plan(manifest, "lora")
        (phase,) = plan.phases
        spec = phase.adapters
        assert (spec.rank, spec.alpha, spec.dropout) == (8, 32.0, 0.05)
        assert len(spec.target_modules) == 4 * 7
        assert "layers.2.mlp.down_proj" in spec.target_modules
        assert set(phase.trainable) == {"embed_tokens", "lm_head"}

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ValueError, match="strategy"):
            make_plan(decoder_manifest(), "full-finetune")

    def test_layerless_manifest_rejected(self):
        manifest = decoder_manifest(n_layers=1)
        empty = ModelManifest(
            layer_names=(),
            linear_names_per_layer=manifest.linear_names_per_layer,
            embedding_name="e", head_name="h", tied=False, hidden_dim=8, vocab_size=10,
        )
        with pytest.raises(ValueError, match="no layers"):
            make_plan(empty, "lora")

    def test_seq_len_presets_enforced(self):
        make_plan(decoder_manifest(), "lora", seq_len=512)
        make_plan(decoder_manifest(), "lora", seq_len=2048)
        with pytest.raises(ValueError, match="presets"):
            make_plan(decoder_manifest(), "lora", seq_len=1024)

    def test_objective_heads(self):
        assert make_plan(decoder_manifest(), "lora", objective="clm").n_heads == 1
        assert make_plan(decoder_manifest(), "lora", objective="mtp").n_heads == 2
        assert make_plan(decoder_manifest(), "lora", objective="mtp", mtp_extra_heads=3).n_heads == 4
        with pytest.raises(ValueError, match="extra head"):
            make_plan(decoder_manifest(), "lora", objective="mtp", mtp_extra_heads=0)

    def test_plans_are_deterministic(self):
        a = make_plan(decoder_manifest(), "2-stage", objective="mtp", seq_len=512)
        b = make_plan(decoder_manifest(), "2-stage", objective="mtp", seq_len=512)
        assert json.dumps(a.to_json_dict()) == json.dumps(b.to_json_dict())

    def test_hyperparameter_metadata_attached(self):
        plan = make_plan(decoder_manifest(), "lora")
        assert plan.hyperparameters == DEFAULT_HYPERPARAMETERS
        assert plan.hyperparameters["batch_size"] == 8
        assert plan.hyperparameters["learning_rate"] == 1e-4

    def test_embedding_scope_recorded(self):
        plan = make_plan(decoder_manifest(), "lora", embedding_scope="new_only")
        assert plan.to_json_dict()["embedding_scope"] == "new_only"
        with pytest.raises(ValueError, match="embedding_scope"):
            make_plan(decoder_manifest(), "lora", embedding_scope="some")

    def test_validate_plan_accepts_generated_plans(self):
        manifest = decoder_manifest(n_layers=8)
        for strategy in ("lora", "2-stage", "2x2-ls"):
            validate_plan(make_plan(manifest, strategy), manifest)

    def test_validate_plan_rejects_foreign_names(self):
        manifest = decoder_manifest(n_layers=4)
        plan = make_plan(manifest, "2x2-ls")
        with pytest.raises(ValueError, match="unknown parameters"):
            validate_plan(plan, decoder_manifest(n_layers=2))

    def test_phase_rejects_duplicate_identifiers(self):
        with pytest.raises(ValueError, match="twice"):
            Phase(trainable=("a", "a"))


class TestPlanSerialization:
    def test_round_trip(self, tmp_path):
        plan = make_plan(decoder_manifest(n_layers=4), "2-stage", objective="mtp", seq_len=512)
        path = tmp_path / "plan.json"
        plan.save(path)
        assert TrainPlan.load(path) == plan
        plan.save(tmp_path / "plan2.json")
        assert path.read_bytes() == (tmp_path / "plan2.json").read_bytes()

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("phases"),
            lambda d: d.update(phases=[]),
            lambda d: d.update(format_version=0),
            lambda d: d.update(objective="rlhf"),
            lambda d: d.update(seq_len=77),
            lambda d: d["phases"][0].pop("trainable"),
            lambda d: d["phases"][0].update(adapters={"rank": 8}),
            lambda d: d["phases"][0].update(trainable=["x", "x"]),
        ],
    )
    def test_malformed_plans_raise_format_error(self, tmp_path, mutate):
        d = make_plan(decoder_manifest(n_layers=2), "lora", seq_len=512).to_json_dict()
        mutate(d)
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(d), encoding="utf-8")
        with pytest.raises(FormatError):
            TrainPlan.load(path)

    def test_manifest_round_trip(self, tmp_path):
        manifest = decoder_manifest(n_layers=5, tied=True)
        path = tmp_path / "manifest.json"
        manifest.save(path)
        assert ModelManifest.load(path) == manifest

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("layer_names"),
            lambda d: d.update(format_version=3),
            lambda d: d.update(tied="no"),
            lambda d: d.update(hidden_dim="big"),
            lambda d: d.update(layer_names=d["layer_names"] + [d["layer_names"][0]]),
        ],
    )
    def test_malformed_manifests_raise_format_error(self, tmp_path, mutate):
        d = decoder_manifest(n_layers=3).to_json_dict()
        mutate(d)
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(d), encoding="utf-8")
        with pytest.raises(FormatError):
            ModelManifest.load(path)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(FormatError):
            TrainPlan.load(tmp_path / "absent.json")


class TestMtpHeads:
    def test_copies_are_bitwise_and_independent(self):
        head = EmbeddingMatrix(np.random.default_rng(0).normal(size=(10, 4)).astype(np.float32), role="lm_head")
        (copy,) = init_mtp_heads(head, 1)
        assert np.array_equal(copy.rows, head.rows)
        copy.rows[0, 0] += 1.0
        assert not np.array_equal(copy.rows, head.rows)

    def test_three_copies(self):
        head = EmbeddingMatrix(np.ones((6, 3), dtype=np.float32), role="lm_head")
        copies = init_mtp_heads(head, 3)
        assert len(copies) == 3
        assert sum(c.rows.size for c in copies) == 3 * 6 * 3

    def test_requires_head_role(self):
        E = EmbeddingMatrix(np.ones((2, 2), dtype=np.float32), role="input_embedding")
        with pytest.raises(ValueError, match="lm_head"):
            init_mtp_heads(E, 1)

    def test_requires_positive_count(self):
        head = EmbeddingMatrix(np.ones((2, 2), dtype=np.float32), role="lm_head")
        with pytest.raises(ValueError, match=">= 1"):
            init_mtp_heads(head, 0)


class TestPacking:
    def test_exact_division(self):
        stats = pack_corpus(4096, 2048, 1)
        assert (stats.num_sequences, stats.num_optimizer_steps, stats.padding_tokens) == (2, 2, 0)
        stats = pack_corpus(4096, 512, 1)
        assert (stats.num_sequences, stats.num_optimizer_steps) == (8, 8)

    def test_remainder_keeps_final_chunk(self):
        stats = pack_corpus(4097, 2048, 1)
        assert stats.num_sequences == 3
        assert stats.padding_tokens == 3 * 2048 - 4097

    def test_batch_size_in_steps(self):
        assert pack_corpus(4096, 512, 3).num_optimizer_steps == 3  # ceil(8/3)

    def test_empty_stream(self):
        stats = pack_corpus(0, 512, 8)
        assert (stats.num_sequences, stats.num_optimizer_steps, stats.padding_tokens) == (0, 0, 0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            pack_corpus(-1, 512, 1)
        with pytest.raises(ValueError):
            pack_corpus(10, 0, 1)
        with pytest.raises(ValueError):
            pack_corpus(10, 512, 0)

    @given(total=st.integers(min_value=0, max_value=10**9), batch=st.integers(min_value=1, max_value=64))
    def test_shorter_sequences_never_reduce_steps(self, total, batch):
        short = pack_corpus(total, 512, batch)
        long = pack_corpus(total, 2048, batch)
        assert short.num_sequences >= long.num_sequences
        assert short.num_optimizer_steps >= long.num_optimizer_steps

    @given(total=st.integers(min_value=0, max_value=10**7))
    def test_quadruple_ratio_on_multiples(self, total):
        total = total * 2048
        assert pack_corpus(total, 512, 1).num_sequences == 4 * pack_corpus(total, 2048, 1).num_sequences
