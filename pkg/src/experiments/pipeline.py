# src/experiments/pipeline.py
"""
Glue between the configuration and the library: builds corpora, encoders, tokenizers and
captioner inputs from config sections, and writes token files.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from audio_tokenizers import (RepCodecConfig, SupTokConfig, TaggerConfig, TokenizerBundle, bottleneck_f1,
                              export_tokenizer, hidden_states, pretrain_tagging_model, reconstruct, train_repcodec,
                              train_supervised_tokenizer)
from captioning import (CaptionData, CaptionerConfig, TextVocab, build_text_vocab, generate_captions,
                        train_captioner)
from captioning.training import Captioner
from config.manager import ConfigManager
from corpus import Corpus, CorpusConfig, EncoderConfig, FrozenEncoder
from metrics import cider_d, unique_words
from quantize import TokenSequence, codebook_stats, kmeans_fit
from substrate import TrainingLog
from utils.artifacts import write_json, write_jsonl
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

_encoders: Dict[Tuple, FrozenEncoder] = {}


def corpus_config(cfg: ConfigManager, domain: str = "in") -> CorpusConfig:
    corpus_cfg = CorpusConfig.from_dict(cfg.get_dict("corpus"))
    if domain == "out":
        # disjoint event classes for the out-of-domain tokenizer corpus
        corpus_cfg.class_offset = corpus_cfg.class_offset + corpus_cfg.S
    elif domain != "in":
        raise ConfigError(f"unknown corpus domain '{domain}', expected 'in' or 'out'")
    return corpus_cfg


def corpus_seed(cfg: ConfigManager, domain: str = "in") -> int:
    seed = cfg.get_int("seed")
    return seed + cfg.get_int("out_of_domain.seed_offset", 1000) if domain == "out" else seed


def build_encoder(cfg: ConfigManager, F: int) -> FrozenEncoder:
    """Shared frozen encoder per (config, input width); it is immutable so one instance serves all threads."""
    enc_cfg = EncoderConfig.from_dict({**cfg.get_dict("encoder"), "F": F})
    key = tuple(sorted(vars(enc_cfg).items()))
    if key not in _encoders:
        _encoders[key] = FrozenEncoder(enc_cfg)
        logger.info(f"Built frozen encoder: {enc_cfg}")
    return _encoders[key]


def open_corpus(path) -> Corpus:
    return Corpus(Path(path))


@dataclass
class TokenizerSettings:
    kind: str
    K: int
    n_layers: int = 1
    layer: int = 9
    split: int = 9
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: ConfigManager, **overrides) -> "TokenizerSettings":
        section = {**cfg.get_dict("tokenizer"), "seed": cfg.get_int("seed")}
        section.update({k: v for k, v in overrides.items() if v is not None})
        known = {k: v for k, v in section.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class FitResult:
    bundle: TokenizerBundle
    logs: List[TrainingLog] = field(default_factory=list)
    # held-out diagnostics: reconstruction MSE for codecs, bottleneck tagging F1 for suptok
    diagnostics: Dict[str, float] = field(default_factory=dict)


def fit_tokenizer(settings: TokenizerSettings, corpus: Corpus, encoder: FrozenEncoder,
                  cfg: ConfigManager) -> FitResult:
    kind = settings.kind
    training = cfg.get_dict("training")
    if kind == "kmeans":
        features = corpus.layer_features("train", encoder, settings.layer)
        section = training.get("kmeans", {})
        model = kmeans_fit(features.reshape(-1, features.shape[-1]), settings.K,
                           max_iters=int(section.get("max_iters", 100)), seed=settings.seed,
                           sample_size=section.get("sample_size"))
        log = TrainingLog("kmeans", [{"iteration": i, "inertia": v} for i, v in enumerate(model.inertia_history)])
        return FitResult(TokenizerBundle("kmeans", model, layer=settings.layer), [log])

    if kind in ("repcodec", "acoustic-proxy"):
        rc_cfg = RepCodecConfig.from_dict({**training.get("repcodec", {}), "K": settings.K,
                                           "n_layers": settings.n_layers, "seed": settings.seed})
        if kind == "repcodec":
            train_x = corpus.layer_features("train", encoder, settings.layer)
            test_x = corpus.layer_features("test", encoder, settings.layer)
            model, log = train_repcodec(train_x, rc_cfg, source="semantic", source_layer=settings.layer)
        else:
            train_x, test_x = corpus.frames("train"), corpus.frames("test")
            model, log = train_repcodec(train_x, rc_cfg, source="acoustic-proxy")
        _, mse = reconstruct(model, test_x)
        layer = settings.layer if kind == "repcodec" else None
        return FitResult(TokenizerBundle(kind, model, layer=layer), [log], {"test_mse": mse})

    if kind == "suptok":
        tagger_cfg = TaggerConfig.from_dict({**training.get("tagger", {}), "seed": settings.seed})
        tagger, tagger_log = pretrain_tagging_model(corpus, encoder, tagger_cfg)
        st_cfg = SupTokConfig.from_dict({**training.get("suptok", {}), "K": settings.K,
                                         "n_layers": settings.n_layers, "seed": settings.seed})
        model, log = train_supervised_tokenizer(tagger, corpus, settings.split, st_cfg)
        test_f1 = bottleneck_f1(model, hidden_states(tagger, corpus, "test", settings.split), corpus.tags("test"))
        return FitResult(TokenizerBundle("suptok", export_tokenizer(model)), [tagger_log, log],
                         {"test_tagging_f1": test_f1})

    raise ConfigError(f"cannot train a tokenizer of kind '{kind}'")


def tokenizer_inputs(bundle: TokenizerBundle, corpus: Corpus, encoder: FrozenEncoder, split: str) -> np.ndarray:
    if bundle.input == "layer":
        if bundle.layer > encoder.n_layers:
            raise DataError(f"tokenizer was fit on layer {bundle.layer} but the encoder has {encoder.n_layers}")
        return corpus.layer_features(split, encoder, bundle.layer)
    return corpus.frames(split)


def tokenize_split(bundle: TokenizerBundle, corpus: Corpus, encoder: FrozenEncoder, split: str,
                   batch_size: int = 32) -> np.ndarray:
    """N x n_layers x T indices for every clip of `split`."""
    inputs = tokenizer_inputs(bundle, corpus, encoder, split)
    parts = [bundle.tokenize_batch(inputs[i:i + batch_size]) for i in range(0, len(inputs), batch_size)]
    return np.concatenate(parts, axis=0).astype(np.int64)


def write_tokens(bundle: TokenizerBundle, corpus: Corpus, encoder: FrozenEncoder, split: str, out_dir) -> Dict:
    """One ATOK file per clip plus index.jsonl and stats.json (per-layer codebook usage)."""
    out_dir = Path(out_dir)
    indices = tokenize_split(bundle, corpus, encoder, split)
    sizes = (bundle.K,) * bundle.n_layers
    rows = []
    for clip_id, clip_tokens in zip(corpus.ids(split), indices):
        rel = f"tokens/{clip_id}.atok"
        TokenSequence(clip_tokens, sizes).save(out_dir / rel)
        rows.append({"id": clip_id, "path": rel, "n_layers": bundle.n_layers, "T": int(clip_tokens.shape[1])})
    write_jsonl(out_dir / "index.jsonl", rows)

    stats = []
    for layer in range(bundle.n_layers):
        s = codebook_stats(indices[:, layer], bundle.K)
        stats.append({"layer": layer, "utilization": s.utilization, "perplexity": s.perplexity})
        logger.info(f"{bundle.kind} layer {layer}: utilization={s.utilization:.3f} perplexity={s.perplexity:.2f}")
    summary = {"tokenizer": bundle.describe(), "split": split, "n_clips": len(rows), "codebooks": stats}
    write_json(out_dir / "stats.json", summary)
    return summary


def captioner_inputs(source: str, corpus: Corpus, encoder: FrozenEncoder, split: str, layer: Optional[int] = None,
                     bundle: Optional[TokenizerBundle] = None) -> np.ndarray:
    """
    fbank: raw frames; continuous: encoder features at `layer`;
    tokens: detokenized code vectors; codes: raw N x L x T indices.
    """
    if source == "fbank":
        return corpus.frames(split)
    if source == "continuous":
        if layer is None:
            raise ConfigError("continuous captioner input needs an encoder layer")
        return corpus.layer_features(split, encoder, layer)
    if source in ("tokens", "codes"):
        if bundle is None:
            raise ConfigError(f"captioner source '{source}' needs a tokenizer")
        indices = tokenize_split(bundle, corpus, encoder, split)
        return indices if source == "codes" else bundle.detokenize(indices).astype(np.float32)
    raise ConfigError(f"unknown captioner input source '{source}'")


def caption_data(source: str, corpus: Corpus, encoder: FrozenEncoder, split: str, layer: Optional[int] = None,
                 bundle: Optional[TokenizerBundle] = None) -> CaptionData:
    return CaptionData(inputs=captioner_inputs(source, corpus, encoder, split, layer, bundle),
                       captions=corpus.captions(split), ids=corpus.ids(split))


def score_captions(records: Sequence[Dict], references: Dict[str, List[str]]) -> Dict[str, float]:
    """CIDEr-D and #Words for caption records against references keyed by clip id."""
    missing = [r["clip_id"] for r in records if r["clip_id"] not in references]
    if missing:
        raise DataError(f"no references for {len(missing)} clips, e.g. {missing[:3]}")
    candidates = [r["caption"] for r in records]
    result = cider_d(candidates, [references[r["clip_id"]] for r in records])
    return {"cider_d": result.score, "n_words": unique_words(candidates)}


def captioner_config(cfg: ConfigManager, seed: Optional[int] = None, kind: Optional[str] = None) -> CaptionerConfig:
    """Architecture from `captioner`, optimisation from `training.captioner`."""
    data = {**cfg.get_dict("captioner"), **cfg.get_dict("training.captioner")}
    data["seed"] = cfg.get_int("seed") if seed is None else seed
    if kind is not None:
        data["kind"] = kind
    return CaptionerConfig.from_dict(data)


@dataclass
class CaptionRun:
    model: Captioner
    vocab: TextVocab
    log: TrainingLog
    records: List[Dict]
    scores: Dict[str, float]


def caption_system(source: str, corpus: Corpus, encoder: FrozenEncoder, cap_cfg: CaptionerConfig,
                   layer: Optional[int] = None, bundle: Optional[TokenizerBundle] = None) -> CaptionRun:
    """Trains a captioner on the train split, captions the test split and scores it."""
    train = caption_data(source, corpus, encoder, "train", layer, bundle)
    val = caption_data(source, corpus, encoder, "val", layer, bundle) if corpus.ids("val") else None
    test = caption_data(source, corpus, encoder, "test", layer, bundle)
    vocab = build_text_vocab(c for refs in train.captions for c in refs)
    code_sizes = (bundle.K,) * bundle.n_layers if source == "codes" else None
    model, log = train_captioner(cap_cfg.kind, train, val, vocab, cap_cfg, code_sizes=code_sizes)
    records = generate_captions(model, test, vocab, beam=cap_cfg.beam, max_len=cap_cfg.max_len)
    scores = score_captions(records, dict(zip(test.ids, test.captions)))
    logger.info(f"{source} {cap_cfg.kind} captioner: CIDEr-D={scores['cider_d']:.4f} #Words={scores['n_words']}")
    return CaptionRun(model, vocab, log, records, scores)
