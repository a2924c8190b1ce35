# tests/test_experiments.py

import json

import numpy as np
import pytest

from experiments import (SYSTEMS, SweepCell, TokenizerSettings, acceptance_summary, captioner_config,
                         captioner_inputs, corpus_config, corpus_input_hash, corpus_seed, fit_tokenizer,
                         linear_probe_f1, medians, pool_features, run_comparison, run_sweep, score_captions,
                         sweep_grid, write_heatmap, write_tokens)
from experiments.run import git_blob_hash, resolve_systems
from metrics import read_csv
from quantize import TokenSequence
from utils.artifacts import read_json, read_jsonl
from utils.errors import ConfigError, DataError


class TestSweepGrid:
    def test_full_product_in_order(self):
        cells = sweep_grid([12, 3, 6, 9], [64, 16], n_encoder_layers=12)
        assert len(cells) == 8
        assert cells[0] == SweepCell(3, 16)
        assert cells[-1] == SweepCell(12, 64)

    def test_duplicates_collapse(self):
        assert sweep_grid([2, 2], [4, 4], n_encoder_layers=4) == [SweepCell(2, 4)]

    @pytest.mark.parametrize("layers,clusters", [([], [4]), ([2], []), ([0], [4]), ([5], [4]), ([2], [0])])
    def test_invalid_grid(self, layers, clusters):
        with pytest.raises(ConfigError):
            sweep_grid(layers, clusters, n_encoder_layers=4)


def full_medians(continuous=0.9):
    return {
        "fbank": {"cider_d": 0.1, "macro_f1": 0.5},
        "continuous": {"cider_d": continuous, "macro_f1": 0.9},
        "kmeans": {"cider_d": 0.5, "macro_f1": 0.6},
        "repcodec-vq": {"cider_d": 0.4, "macro_f1": 0.6, "test_mse": 0.2},
        "repcodec-rvq": {"cider_d": 0.45, "macro_f1": 0.62, "test_mse": 0.1},
        "suptok-vq": {"cider_d": 0.6, "macro_f1": 0.8, "test_tagging_f1": 0.7},
        "suptok-rvq": {"cider_d": 0.65, "macro_f1": 0.82, "test_tagging_f1": 0.75},
        "acoustic-proxy": {"cider_d": 0.2, "macro_f1": 0.4},
    }


def statuses(summary):
    return {item["criterion"]: item["status"] for item in summary}


class TestAcceptance:
    def test_all_orderings_hold(self):
        assert set(statuses(acceptance_summary(full_medians())).values()) == {"pass"}

    def test_continuous_below_best_tokenized_fails(self):
        summary = {item["criterion"]: item for item in acceptance_summary(full_medians(continuous=0.3))}
        assert summary["continuous>=discrete"]["status"] == "fail"
        assert summary["continuous>=discrete"]["detail"]["best_tokenized"] == ["suptok-rvq", 0.65]
        assert summary["semantic>acoustic"]["status"] == "pass"

    def test_proxy_beating_kmeans_fails(self):
        med = full_medians()
        med["acoustic-proxy"]["cider_d"] = 0.55
        assert statuses(acceptance_summary(med))["semantic>acoustic"] == "fail"

    def test_criteria_without_their_systems_are_skipped(self):
        med = {"fbank": {"cider_d": 0.1}, "kmeans": {"cider_d": 0.2}}
        summary = acceptance_summary(med)
        assert set(statuses(summary).values()) == {"skipped"}
        continuous = [item for item in summary if item["criterion"] == "continuous>=discrete"][0]
        assert continuous["missing"] == ["continuous"]

    def test_no_tokenized_system(self):
        summary = acceptance_summary({"continuous": {"cider_d": 0.5}})
        continuous = [item for item in summary if item["criterion"] == "continuous>=discrete"][0]
        assert continuous["missing"] == ["<tokenized system>"]


def test_medians_per_metric():
    results = {"kmeans": {"1": {"cider_d": 1.0}, "2": {"cider_d": 3.0}, "3": {"cider_d": 2.0, "test_mse": 5.0}}}
    assert medians(results) == {"kmeans": {"cider_d": 2.0, "test_mse": 5.0}}


def test_resolve_systems():
    assert [s.name for s in resolve_systems(["fbank", "suptok-rvq"])] == ["fbank", "suptok-rvq"]
    assert SYSTEMS["suptok-rvq"].n_layers == 2
    with pytest.raises(ConfigError):
        resolve_systems(["fbank", "wav2vec"])
    with pytest.raises(ConfigError):
        resolve_systems([])


def test_git_blob_hash_of_empty_file():
    assert git_blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_corpus_input_hash_is_stable(tiny_corpus):
    assert corpus_input_hash(tiny_corpus) == corpus_input_hash(tiny_corpus)
    assert corpus_input_hash(tiny_corpus, tiny_corpus) != corpus_input_hash(tiny_corpus)


class TestLinearProbe:
    def separable(self, N, seed):
        rng = np.random.default_rng(seed)
        labels = np.zeros((N, 2), dtype=np.int64)
        labels[np.arange(N), np.arange(N) % 2] = 1
        features = rng.normal(scale=0.05, size=(N, 5, 3)).astype(np.float32)
        features[:, :, 0] += np.where(labels[:, 0] == 1, 1.0, -1.0)[:, None]
        return features, labels

    def test_separable_tags(self):
        train_x, train_y = self.separable(20, 0)
        test_x, test_y = self.separable(8, 1)
        assert linear_probe_f1(train_x, train_y, test_x, test_y, epochs=300, lr=5e-2) == 1.0

    def test_needs_an_epoch(self):
        x, y = self.separable(4, 0)
        with pytest.raises(ValueError):
            linear_probe_f1(x, y, x, y, epochs=0)

    def test_count_mismatch(self):
        x, y = self.separable(4, 0)
        with pytest.raises(ValueError):
            linear_probe_f1(x, y[:3], x, y, epochs=1)

    def test_pooling(self):
        assert pool_features(np.ones((2, 4, 3))).shape == (2, 3)
        with pytest.raises(ValueError):
            pool_features(np.ones((4, 3)))


class TestPipeline:
    def test_out_of_domain_corpus_is_disjoint(self, tiny_config):
        assert corpus_config(tiny_config).class_offset == 0
        assert corpus_config(tiny_config, "out").class_offset == 3
        assert corpus_seed(tiny_config, "out") == 1003
        with pytest.raises(ConfigError):
            corpus_config(tiny_config, "sideways")

    def test_tokenizer_settings_overrides(self, tiny_config):
        settings = TokenizerSettings.from_config(tiny_config, K=8, n_layers=None)
        assert (settings.kind, settings.K, settings.n_layers, settings.layer, settings.seed) == ("kmeans", 8, 1, 3, 3)

    def test_captioner_config_merges_training(self, tiny_config):
        cap_cfg = captioner_config(tiny_config, seed=9, kind="prefix")
        assert (cap_cfg.kind, cap_cfg.seed, cap_cfg.width, cap_cfg.epochs) == ("prefix", 9, 16, 1)

    def test_kmeans_tokens_written(self, tiny_config, tiny_corpus, tiny_encoder, tmp_path):
        fit = fit_tokenizer(TokenizerSettings.from_config(tiny_config), tiny_corpus, tiny_encoder, tiny_config)
        assert fit.bundle.kind == "kmeans"
        assert fit.logs[0].rows

        summary = write_tokens(fit.bundle, tiny_corpus, tiny_encoder, "test", tmp_path)
        index = read_jsonl(tmp_path / "index.jsonl")
        assert [row["id"] for row in index] == tiny_corpus.ids("test")
        seq = TokenSequence.load(tmp_path / index[0]["path"])
        assert seq.indices.shape == (1, 24)
        assert seq.codebook_sizes == (4,)
        assert summary["n_clips"] == 4
        assert 0.0 < read_json(tmp_path / "stats.json")["codebooks"][0]["utilization"] <= 1.0

    @pytest.mark.parametrize("source,kwargs", [("continuous", {}), ("tokens", {"layer": 2}), ("mel", {})])
    def test_captioner_inputs_need_their_parts(self, tiny_corpus, tiny_encoder, source, kwargs):
        with pytest.raises(ConfigError):
            captioner_inputs(source, tiny_corpus, tiny_encoder, "test", **kwargs)

    def test_continuous_inputs(self, tiny_corpus, tiny_encoder):
        assert captioner_inputs("continuous", tiny_corpus, tiny_encoder, "val", layer=2).shape == (4, 24, 16)

    def test_scores_need_references(self):
        records = [{"clip_id": "a", "caption": "a dog barks"}, {"clip_id": "b", "caption": "rain"}]
        with pytest.raises(DataError):
            score_captions(records, {"a": ["a dog barks"]})

    def test_scores(self):
        refs = {"a": ["a dog barks loudly"], "b": ["rain falls on roofs"]}
        scores = score_captions([{"clip_id": k, "caption": v[0]} for k, v in refs.items()], refs)
        assert scores["cider_d"] == pytest.approx(10.0)
        assert scores["n_words"] == 8


def test_heatmap_is_byte_stable(tmp_path):
    rows = [{"layer": l, "K": k, "cider_d": 0.1 * l + 0.01 * k} for l in (3, 6) for k in (16, 64)]
    write_heatmap(tmp_path / "a.svg", rows)
    write_heatmap(tmp_path / "b.svg", rows)
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert b"<svg" in (tmp_path / "a.svg").read_bytes()


def test_sweep_on_tiny_corpus(tiny_config, tiny_corpus, tiny_encoder, tmp_path):
    rows = run_sweep(tiny_config, tiny_corpus, tiny_encoder, [3, 2], [4], tmp_path)
    assert [(r["layer"], r["K"]) for r in rows] == [(2, 4), (3, 4)]
    table = read_csv(tmp_path / "sweep.csv")
    assert [row["layer"] for row in table] == ["2", "3"]
    assert all(float(row["cider_d"]) >= 0.0 for row in table)
    assert (tmp_path / "heatmap.svg").exists()


def test_comparison_run_writes_its_artifacts(tiny_config, tiny_corpus, tiny_encoder, tmp_path):
    record = run_comparison(tiny_config, tiny_corpus, tiny_encoder, tmp_path)
    assert record.systems == ["fbank", "kmeans"]
    assert set(record.results["kmeans"]["3"]) >= {"cider_d", "n_words", "macro_f1"}
    assert [row["system"] for row in read_csv(tmp_path / "report.csv")] == ["fbank", "kmeans"]
    assert {item["status"] for item in json.loads((tmp_path / "acceptance.json").read_text())} == {"skipped"}
    assert read_json(tmp_path / "run_record.json")["config_hash"] == tiny_config.config_hash()
    assert len(read_jsonl(tmp_path / "captions" / "kmeans-seed3.jsonl")) == 4


def test_sweep_rerun_is_byte_identical(tiny_config, tiny_corpus, tiny_encoder, tmp_path):
    run_sweep(tiny_config, tiny_corpus, tiny_encoder, [2], [4], tmp_path / "a")
    run_sweep(tiny_config, tiny_corpus, tiny_encoder, [2], [4], tmp_path / "b")
    for name in ("sweep.csv", "heatmap.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_comparison_rerun_is_byte_identical(tiny_config, tiny_corpus, tiny_encoder, tmp_path):
    run_comparison(tiny_config, tiny_corpus, tiny_encoder, tmp_path / "a")
    run_comparison(tiny_config, tiny_corpus, tiny_encoder, tmp_path / "b")
    for name in ("report.csv", "acceptance.json", "captions/kmeans-seed3.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
