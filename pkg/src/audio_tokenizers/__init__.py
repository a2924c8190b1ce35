"""Trainable audio tokenizers: the representation codec and the supervised split-encoder tokenizer."""

from .bottleneck import QuantizerSpec, VQBottleneck
from .repcodec import RepCodecConfig, RepCodecModel, reconstruct, tokenize, tokenize_batch, train_repcodec
from .suptok import (SupTokConfig, SupTokModel, SupTokTokenizer, TaggerConfig, TaggingModel, bce_loss,
                     bottleneck_f1, export_tokenizer, hidden_states, pretrain_tagging_model,
                     train_supervised_tokenizer)
from .registry import KINDS, TokenizerBundle, load_tokenizer

__all__ = [
    "KINDS", "QuantizerSpec", "RepCodecConfig", "RepCodecModel", "SupTokConfig", "SupTokModel", "SupTokTokenizer",
    "TaggerConfig", "TaggingModel", "TokenizerBundle", "VQBottleneck", "bce_loss", "bottleneck_f1",
    "export_tokenizer", "hidden_states", "load_tokenizer", "pretrain_tagging_model", "reconstruct", "tokenize",
    "tokenize_batch", "train_repcodec", "train_supervised_tokenizer",
]
