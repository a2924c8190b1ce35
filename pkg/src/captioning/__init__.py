"""Caption models (encoder-decoder and frozen-LM prefix), text pipeline, decoding and training."""

from .text import (BOS, EOS, PAD, UNK, TextVocab, build_text_vocab, detokenize_caption, normalize_caption,
                   normalize_words, tokenize_caption)
from .models import (AudioFrontEnd, CaptionerConfig, EncDecCaptioner, FrozenLM, PrefixCaptioner, build_frozen_lm,
                     prefix_forward)
from .decoding import BeamHypothesis, BeamResult, beam_search, greedy_decode
from .training import (CAPTIONER_KINDS, CaptionData, build_captioner, encdec_loss, evaluate_loss,
                       generate_captions, load_captioner, pad_tokens, prefix_loss, pretrain_caption_lm,
                       save_captioner, sequence_loss, train_captioner)

__all__ = [
    "AudioFrontEnd", "BOS", "BeamHypothesis", "BeamResult", "CAPTIONER_KINDS", "CaptionData", "CaptionerConfig",
    "EOS", "EncDecCaptioner", "FrozenLM", "PAD", "PrefixCaptioner", "TextVocab", "UNK", "beam_search",
    "build_captioner", "build_frozen_lm", "build_text_vocab", "detokenize_caption", "encdec_loss",
    "evaluate_loss", "generate_captions", "greedy_decode", "load_captioner", "normalize_caption",
    "normalize_words", "pad_tokens", "prefix_forward", "prefix_loss", "pretrain_caption_lm", "save_captioner",
    "sequence_loss", "tokenize_caption", "train_captioner",
]
