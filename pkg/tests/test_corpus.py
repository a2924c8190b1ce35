# tests/test_corpus.py

import numpy as np
import pytest
import torch

from conftest import TINY_CORPUS
from corpus import (CAPTIONS_PER_CLIP, Corpus, CorpusConfig, EncoderConfig, FrozenEncoder, build_event_classes,
                    encode, generate_clip, generate_corpus, load_manifest, make_captions, pad_or_truncate,
                    render_frames, tag_vector)
from utils.errors import ConfigError, DataError


class TestGeneration:
    def test_split_counts_and_files(self, tiny_corpus):
        assert [len(tiny_corpus.ids(s)) for s in ("train", "val", "test")] == [16, 4, 4]
        assert (tiny_corpus.root / "classes.json").exists()
        assert len(list((tiny_corpus.root / "features").glob("*.afea"))) == 24

    def test_frames_have_fixed_length(self, tiny_corpus):
        assert tiny_corpus.frames("train").shape == (16, 24, TINY_CORPUS["F"])

    def test_every_clip_has_tags_and_five_captions(self, tiny_corpus):
        tags = tiny_corpus.tags("train")
        assert tags.shape == (16, 3)
        assert np.all(tags.sum(axis=1) >= 1)
        assert np.all(tags.sum(axis=1) <= TINY_CORPUS["max_events_per_clip"])
        assert all(len(c) == CAPTIONS_PER_CLIP for c in tiny_corpus.captions("train"))

    def test_ten_seconds_at_fifty_hertz(self):
        cfg = CorpusConfig(S=2, n_train=1, n_val=0, n_test=0, F=4, max_events_per_clip=1)
        classes = build_event_classes(0, cfg.S, cfg.F, cfg.frame_rate)
        assert generate_clip(0, cfg, classes, "train", 0).frames.shape == (500, 4)

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = CorpusConfig(**dict(TINY_CORPUS, n_train=3, n_val=1, n_test=1))
        generate_corpus(11, cfg, tmp_path / "a")
        generate_corpus(11, cfg, tmp_path / "b")
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_existing_directory_needs_force(self, tmp_path):
        cfg = CorpusConfig(**dict(TINY_CORPUS, n_train=2, n_val=1, n_test=1))
        generate_corpus(1, cfg, tmp_path / "c")
        with pytest.raises(DataError):
            generate_corpus(1, cfg, tmp_path / "c")
        counts = generate_corpus(2, cfg, tmp_path / "c", force=True)
        assert counts == {"train": 2, "val": 1, "test": 1}

    @pytest.mark.parametrize("overrides", [{"S": 1, "max_events_per_clip": 1}, {"max_events_per_clip": 4}])
    def test_invalid_config(self, overrides, tmp_path):
        with pytest.raises(ConfigError):
            generate_corpus(0, CorpusConfig(**dict(TINY_CORPUS, **overrides)), tmp_path / "bad")
        assert not (tmp_path / "bad").exists()


class TestRendering:
    def test_noiseless_single_event_is_the_prototype(self):
        classes = build_event_classes(5, 2, 6, 12)
        proto = classes[1].prototype
        frames = render_frames(classes, [(1, 0)], T=60, F=6, noise_level=0.0, rng=np.random.default_rng(0))
        assert np.array_equal(frames[: proto.shape[0]], proto)
        assert np.all(frames[proto.shape[0]:] == 0)

    def test_event_is_truncated_at_clip_end(self):
        classes = build_event_classes(5, 2, 6, 12)
        frames = render_frames(classes, [(0, 8)], T=10, F=6, noise_level=0.0, rng=np.random.default_rng(0))
        assert np.array_equal(frames[8:], classes[0].prototype[:2])

    def test_prototype_lengths(self):
        for event in build_event_classes(3, 8, 4, 50):
            assert 50 <= event.n_frames <= 125

    def test_tag_vector(self):
        assert tag_vector([(2, 0), (0, 5)], 4).tolist() == [1, 0, 1, 0]

    def test_captions_mention_every_event(self):
        classes = build_event_classes(0, 3, 4, 10)
        captions = make_captions(classes, [(0, 0), (2, 9)], np.random.default_rng(1))
        assert len(captions) == CAPTIONS_PER_CLIP
        for caption in captions:
            words = set(caption.split())
            assert words & classes[0].words and words & classes[2].words
            assert not words & classes[1].words


class TestCorpusStore:
    def test_missing_corpus_json(self, tmp_path):
        with pytest.raises(DataError):
            Corpus(tmp_path)

    def test_manifest_requires_captions(self, tmp_path):
        (tmp_path / "m.jsonl").write_text('{"id": "x", "path": "features/x.afea"}\n')
        with pytest.raises(DataError):
            load_manifest(tmp_path / "m.jsonl")

    def test_layer_features_are_cached(self, tiny_corpus, tiny_encoder):
        first = tiny_corpus.layer_features("test", tiny_encoder, 2)
        assert first.shape == (4, 24, 16)
        assert tiny_corpus.layer_features("test", tiny_encoder, 2) is first

    def test_all_layers_match_single_layer(self, tiny_corpus, tiny_encoder):
        layers = Corpus(tiny_corpus.root).all_layer_features("val", tiny_encoder)
        assert len(layers) == 4
        assert np.allclose(layers[2], encode(tiny_encoder, tiny_corpus.frames("val"), 3), atol=1e-6)

    def test_all_layers_fill_the_cache(self, tiny_corpus, tiny_encoder):
        corpus = Corpus(tiny_corpus.root)
        layers = corpus.all_layer_features("val", tiny_encoder)
        assert corpus.layer_features("val", tiny_encoder, 2) is layers[1]

    def test_cache_tells_encoders_apart(self, tiny_corpus):
        corpus = Corpus(tiny_corpus.root)
        narrow = FrozenEncoder(EncoderConfig(F=TINY_CORPUS["F"], width=8, layers=2, heads=2, seed=7))
        wide = FrozenEncoder(EncoderConfig(F=TINY_CORPUS["F"], width=16, layers=2, heads=2, seed=7))
        assert corpus.layer_features("test", narrow, 1).shape == (4, 24, 8)
        assert corpus.layer_features("test", wide, 1).shape == (4, 24, 16)


class TestPadOrTruncate:
    def test_pads_with_zeros(self):
        out = pad_or_truncate(np.ones((400, 2), dtype=np.float32), 500)
        assert out.shape == (500, 2)
        assert np.all(out[400:] == 0)

    def test_truncates_tail(self):
        frames = np.arange(600, dtype=np.float32)[:, None]
        assert np.array_equal(pad_or_truncate(frames, 500), frames[:500])

    def test_target_must_be_positive(self):
        with pytest.raises(ValueError):
            pad_or_truncate(np.ones((3, 1)), 0)


class TestFrozenEncoder:
    def test_layer_output_keeps_length(self, tiny_encoder):
        frames = np.random.default_rng(0).normal(size=(30, 8)).astype(np.float32)
        assert encode(tiny_encoder, frames, 3).shape == (30, 16)

    @pytest.mark.parametrize("layer", [0, 5])
    def test_layer_out_of_range(self, tiny_encoder, layer):
        with pytest.raises(ValueError):
            encode(tiny_encoder, np.zeros((4, 8), dtype=np.float32), layer)

    def test_same_seed_same_weights(self, tiny_encoder):
        other = FrozenEncoder(EncoderConfig(**vars(tiny_encoder.cfg)))
        frames = np.random.default_rng(1).normal(size=(10, 8)).astype(np.float32)
        assert np.array_equal(encode(tiny_encoder, frames, 4), encode(other, frames, 4))

    def test_never_trainable(self, tiny_encoder):
        assert not any(p.requires_grad for p in tiny_encoder.parameters())
        tiny_encoder.train()
        assert not tiny_encoder.training

    def test_truncated_then_resumed_equals_full(self, tiny_encoder):
        frames = torch.randn(10, 8, generator=torch.Generator().manual_seed(2))
        lower = tiny_encoder.truncated(3)
        assert lower.n_layers == 3 and tiny_encoder.n_layers == 4
        with torch.no_grad():
            resumed = tiny_encoder.forward_from(lower(frames), 3)
            assert torch.equal(resumed, tiny_encoder(frames))
