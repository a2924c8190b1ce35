# tests/conftest.py

import json
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
for sub in ("src", "scripts"):
    path = str(ROOT / sub)
    if path not in sys.path:
        sys.path.insert(0, path)

from corpus import Corpus, CorpusConfig, EncoderConfig, FrozenEncoder, generate_corpus  # noqa: E402

TINY_CORPUS = dict(S=3, n_train=16, n_val=4, n_test=4, duration_s=2.0, frame_rate=12, F=8,
                   noise_level=0.05, max_events_per_clip=2)
TINY_ENCODER = dict(width=16, layers=4, heads=2, ff_mult=2, seed=7)
TINY_CAPTIONER = dict(kind="encdec", width=16, layers=1, heads=2, ff_mult=2, k_prefix=4, mapping_heads=2,
                      lm_layers=1, lm_heads=2, max_len=16, max_frames=30, code_dim=8, beam=2)
TINY_TRAINING = {
    "kmeans": {"max_iters": 20, "sample_size": None},
    "repcodec": {"steps": 4, "batch": 4, "lr": 1e-3, "crop_frames": 12, "log_every": 2},
    "tagger": {"epochs": 3, "batch": 8, "lr": 1e-2, "f1_floor": 0.0, "eval_every": 1},
    "suptok": {"steps": 3, "batch": 4, "lr": 1e-3, "log_every": 1},
    "captioner": {"epochs": 1, "batch": 4, "lr": 1e-3, "lm_epochs": 1, "lm_lr": 1e-3},
}


def tiny_experiment() -> dict:
    return {
        "seed": 3,
        "corpus": dict(TINY_CORPUS),
        "encoder": dict(TINY_ENCODER),
        "tokenizer": {"kind": "kmeans", "K": 4, "n_layers": 1, "layer": 3, "split": 3},
        "captioner": dict(TINY_CAPTIONER),
        "training": json.loads(json.dumps(TINY_TRAINING)),
        "sweep": {"layers": [2, 3], "clusters": [4], "heatmap": True},
        "run": {"seeds": [3], "captioner": "encdec", "systems": ["fbank", "kmeans"], "probe_epochs": 5},
        "logging": {"level": "WARNING", "file": False},
    }


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory) -> Corpus:
    root = tmp_path_factory.mktemp("corpus") / "tiny"
    generate_corpus(3, CorpusConfig(**TINY_CORPUS), root)
    return Corpus(root)


@pytest.fixture(scope="session")
def tiny_encoder() -> FrozenEncoder:
    return FrozenEncoder(EncoderConfig(F=TINY_CORPUS["F"], **TINY_ENCODER))


@pytest.fixture
def tiny_config_file(tmp_path) -> Path:
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(tiny_experiment()))
    return path


@pytest.fixture
def tiny_config(tiny_config_file):
    from config.manager import ConfigManager
    cfg = ConfigManager(profile_name="desk", experiment_path=tiny_config_file)
    cfg.validate()
    return cfg
