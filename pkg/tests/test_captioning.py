# tests/test_captioning.py

import math

import numpy as np
import pytest
import torch

from captioning import (BOS, EOS, UNK, CaptionData, CaptionerConfig, EncDecCaptioner, PrefixCaptioner, TextVocab,
                        beam_search, build_frozen_lm, build_text_vocab, detokenize_caption, encdec_loss,
                        generate_captions, greedy_decode, load_captioner, normalize_caption, prefix_forward,
                        prefix_loss, save_captioner, tokenize_caption, train_captioner)
from captioning.models import batchify
from substrate import adamw_step, assert_no_gradient, build_adamw, grad_check, snapshot, unchanged_since
from utils.errors import ConfigError, DataError


def small_config(**overrides) -> CaptionerConfig:
    base = dict(width=16, layers=1, heads=2, ff_mult=2, k_prefix=4, mapping_heads=2, lm_layers=1, lm_heads=2,
                max_len=12, max_frames=30, code_dim=8, epochs=2, batch=3, lr=1e-3, lm_epochs=1, beam=2)
    return CaptionerConfig(**dict(base, **overrides))


def toy_data(N=6, T=12, D=4, seed=0, codes=False) -> CaptionData:
    rng = np.random.default_rng(seed)
    phrases = ["a dog barks", "a cat meows", "a bell rings then a dog barks"]
    captions = [[phrases[i % 3], phrases[(i + 1) % 3]] for i in range(N)]
    inputs = rng.integers(0, 4, size=(N, 1, T)) if codes else rng.normal(size=(N, T, D)).astype(np.float32)
    return CaptionData(inputs=inputs, captions=captions, ids=[f"clip-{i}" for i in range(N)])


class TestText:
    def test_normalisation(self):
        assert normalize_caption("A Dog barks!") == ["a", "dog", "barks"]

    def test_empty_caption(self):
        with pytest.raises(ValueError):
            normalize_caption(" ?! ")

    def test_vocab_is_specials_then_sorted_words(self):
        vocab = build_text_vocab(["a dog", "a cat"])
        assert len(vocab) == 7
        assert vocab.words[4:] == ["a", "cat", "dog"]

    def test_encode_wraps_and_maps_unknown_words(self):
        vocab = build_text_vocab(["a dog", "a cat"])
        assert vocab.encode("a bird") == [BOS, vocab.index["a"], UNK, EOS]

    def test_decode_stops_at_eos(self):
        vocab = build_text_vocab(["a dog"])
        assert vocab.decode([BOS, vocab.index["a"], vocab.index["dog"], EOS, vocab.index["a"]]) == "a dog"

    def test_caption_round_trip(self):
        vocab = build_text_vocab(["a dog barks", "a cat meows"])
        ids = tokenize_caption(vocab, "A cat, barks!")
        assert ids[0] == BOS and ids[-1] == EOS
        assert detokenize_caption(vocab, ids) == "a cat barks"

    def test_file_round_trip(self, tmp_path):
        vocab = build_text_vocab(["a dog barks"])
        vocab.save(tmp_path / "vocab.json")
        assert TextVocab.load(tmp_path / "vocab.json").words == vocab.words


class TableModel:
    """Next-token distribution looked up from the last prefix token."""

    def __init__(self, table, V):
        self.table = table
        self.V = V

    def start(self, audio):
        return None

    def next_log_probs(self, state, prefixes):
        rows = []
        for prefix in prefixes:
            probs = np.full(self.V, 1e-12)
            for token, p in self.table.get(prefix[-1], {}).items():
                probs[token] = p
            rows.append(np.log(probs))
        return np.stack(rows)


class RandomModel:
    def __init__(self, V, seed):
        self.V = V
        self.rng_seed = seed

    def start(self, audio):
        return None

    def next_log_probs(self, state, prefixes):
        rows = []
        for prefix in prefixes:
            rng = np.random.default_rng([self.rng_seed, len(prefix), prefix[-1]])
            logits = rng.normal(size=self.V) * 2.0
            rows.append(logits - np.log(np.exp(logits).sum()))
        return np.stack(rows)


class TestDecoding:
    # a=0, b=1, eos=2, bos=3
    TRAP = {3: {0: 0.55, 1: 0.45}, 0: {2: 0.5, 0: 0.25, 1: 0.25}, 1: {2: 0.99, 0: 0.005, 1: 0.005}}

    def test_beam_escapes_the_greedy_trap(self):
        model = TableModel(self.TRAP, V=4)
        result = beam_search(model, None, beam_size=2, max_len=5, bos=3, eos=2)
        assert result.best.tokens == [1, 2]
        assert result.best.log_prob == pytest.approx(math.log(0.45 * 0.99))

    def test_greedy_takes_the_trap(self):
        hyp = greedy_decode(TableModel(self.TRAP, V=4), None, max_len=5, bos=3, eos=2)
        assert hyp.tokens == [0, 2]
        assert hyp.finished

    @pytest.mark.parametrize("seed", range(8))
    def test_beam_of_one_is_greedy(self, seed):
        model = RandomModel(V=6, seed=seed)
        beam = beam_search(model, None, beam_size=1, max_len=10, bos=5, eos=2).best
        greedy = greedy_decode(model, None, max_len=10, bos=5, eos=2)
        assert beam.tokens == greedy.tokens
        assert beam.log_prob == pytest.approx(greedy.log_prob)

    def test_unfinished_search_returns_best_live_hypothesis(self):
        model = TableModel({3: {0: 1.0}, 0: {0: 1.0}}, V=4)
        result = beam_search(model, None, beam_size=2, max_len=3, bos=3, eos=2)
        assert result.best.tokens == [0, 0, 0]
        assert not result.best.finished

    @pytest.mark.parametrize("beam_size,max_len", [(0, 5), (2, 0)])
    def test_invalid_arguments(self, beam_size, max_len):
        with pytest.raises(ValueError):
            beam_search(TableModel(self.TRAP, V=4), None, beam_size=beam_size, max_len=max_len)


class TestLosses:
    def test_uniform_logits_give_log_vocab(self):
        model = EncDecCaptioner(4, 10, small_config())
        with torch.no_grad():
            model.out_proj.weight.zero_()
            model.out_proj.bias.zero_()
        features = np.random.default_rng(0).normal(size=(6, 4)).astype(np.float32)
        assert encdec_loss(model, features, [BOS, 5, 6, EOS]).item() == pytest.approx(math.log(10), abs=1e-5)

    def test_prefix_loss_uniform_logits(self):
        cfg = small_config()
        lm = build_frozen_lm(10, cfg)
        with torch.no_grad():
            lm.out_proj.weight.zero_()
            lm.out_proj.bias.zero_()
        model = PrefixCaptioner(4, lm, cfg)
        features = np.random.default_rng(1).normal(size=(9, 4)).astype(np.float32)
        assert prefix_loss(model, features, [BOS, 7, EOS]).item() == pytest.approx(math.log(10), abs=1e-5)

    def test_empty_caption(self):
        with pytest.raises(ValueError):
            encdec_loss(EncDecCaptioner(4, 10, small_config()), np.zeros((6, 4), dtype=np.float32), [BOS])

    def test_trainable_language_model_rejected(self):
        cfg = small_config()
        model = PrefixCaptioner(4, build_frozen_lm(10, cfg), cfg)
        model.lm.out_proj.weight.requires_grad_(True)
        with pytest.raises(AssertionError):
            prefix_loss(model, np.zeros((6, 4), dtype=np.float32), [BOS, 5, EOS])

    def test_encdec_gradients_match_finite_differences(self):
        model = EncDecCaptioner(4, 7, small_config()).double()
        features = np.random.default_rng(2).normal(size=(6, 4))
        params = [model.out_proj.weight, model.front.conv.weight, model.blocks[0].cross_attn.q_proj.weight]
        err = grad_check(lambda: encdec_loss(model, features, [BOS, 4, 5, EOS]), params, max_elements=4)
        assert err <= 1e-4

    def test_prefix_gradients_match_finite_differences(self):
        cfg = small_config()
        model = PrefixCaptioner(4, build_frozen_lm(7, cfg), cfg).double()
        features = np.random.default_rng(3).normal(size=(6, 4))
        params = [model.prefix_embeddings, model.mapping.self_attn.q_proj.weight, model.front.conv.weight]
        err = grad_check(lambda: prefix_loss(model, features, [BOS, 4, 6, EOS]), params, max_elements=4)
        assert err <= 1e-4


def test_batchify_adds_the_batch_axis():
    assert batchify(torch.zeros(5, 3), codes=False).shape == (1, 5, 3)
    assert batchify(torch.zeros(2, 1, 5, dtype=torch.long), codes=True).shape == (2, 1, 5)
    with pytest.raises(ValueError, match="L x T codes"):
        batchify(torch.zeros(5, dtype=torch.long), codes=True)
    with pytest.raises(ValueError, match="T x D features"):
        batchify(torch.zeros(1, 1, 5, 3), codes=False)


class TestPrefixCaptioner:
    def test_prefix_count(self):
        cfg = small_config(k_prefix=50)
        model = PrefixCaptioner(8, build_frozen_lm(10, cfg), cfg)
        assert model.mapping_input(torch.zeros(1, 30, 8)).shape == (1, 60, 16)
        assert prefix_forward(model, np.zeros((30, 8), dtype=np.float32)).shape == (50, 16)

    def test_training_step_leaves_language_model_untouched(self):
        cfg = small_config()
        model = PrefixCaptioner(4, build_frozen_lm(10, cfg), cfg)
        lm_before = snapshot(model.lm)
        prefix_before = model.prefix_embeddings.detach().clone()
        optimizer = build_adamw(model, lr=1e-2)
        prefix_loss(model, np.ones((9, 4), dtype=np.float32), [BOS, 5, 6, EOS]).backward()
        assert_no_gradient(model.lm, "language model")
        adamw_step(optimizer)
        assert unchanged_since(model.lm, lm_before)
        assert not torch.equal(model.prefix_embeddings.detach(), prefix_before)


class TestTraining:
    def vocab(self, data):
        return build_text_vocab([c for refs in data.captions for c in refs])

    def test_encdec_train_generate_save_load(self, tmp_path):
        data = toy_data()
        vocab = self.vocab(data)
        model, log = train_captioner("encdec", data, toy_data(N=3, seed=1), vocab, small_config())
        assert log.series("epoch") == [0, 1]
        assert all("val_loss" in row for row in log.rows)

        records = generate_captions(model, data, vocab, beam=2, max_len=12)
        assert [r["clip_id"] for r in records] == data.ids
        for record in records:
            assert set(record["caption"].split()) <= set(vocab.words)

        save_captioner(model, vocab, tmp_path)
        restored, restored_vocab = load_captioner(tmp_path)
        assert restored_vocab.words == vocab.words
        again = generate_captions(restored, data, restored_vocab, beam=2, max_len=12)
        assert [r["caption"] for r in again] == [r["caption"] for r in records]

    def test_training_is_deterministic(self):
        data = toy_data()
        vocab = self.vocab(data)
        first, _ = train_captioner("encdec", data, None, vocab, small_config())
        second, _ = train_captioner("encdec", data, None, vocab, small_config())
        assert unchanged_since(second, snapshot(first))

    def test_raw_codes(self):
        data = toy_data(codes=True)
        vocab = self.vocab(data)
        model, _ = train_captioner("encdec", data, None, vocab, small_config(), code_sizes=(4,))
        assert model.front.uses_codes
        assert len(generate_captions(model, data, vocab, beam=1)) == 6

    def test_raw_codes_need_codebook_sizes(self):
        data = toy_data(codes=True)
        with pytest.raises(ValueError):
            train_captioner("encdec", data, None, self.vocab(data), small_config())

    def test_prefix_pretrains_and_freezes_language_model(self):
        data = toy_data()
        vocab = self.vocab(data)
        model, log = train_captioner("prefix", data, None, vocab, small_config())
        assert not any(p.requires_grad for p in model.lm.parameters())
        assert len(log.rows) == 2

    def test_unknown_kind(self):
        data = toy_data()
        with pytest.raises(ConfigError):
            train_captioner("lstm", data, None, self.vocab(data), small_config())

    def test_caption_data_needs_references(self):
        with pytest.raises(DataError):
            CaptionData(inputs=np.zeros((1, 6, 2), dtype=np.float32), captions=[[]], ids=["x"])
