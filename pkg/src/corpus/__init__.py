"""Synthetic labelled soundscape corpus and the frozen layered encoder."""

from .classes import EVENT_VOCABULARY, EventClass, build_event_classes, make_prototype
from .generator import (CAPTIONS_PER_CLIP, SPLITS, Clip, CorpusConfig, generate_clip, generate_clips,
                        generate_corpus, make_captions, render_frames, tag_vector)
from .encoder import EncoderConfig, FrozenEncoder, encode, encode_all_layers, pad_or_truncate
from .store import ClipRecord, Corpus, load_manifest

__all__ = [
    "CAPTIONS_PER_CLIP", "EVENT_VOCABULARY", "SPLITS", "Clip", "ClipRecord", "Corpus", "CorpusConfig",
    "EncoderConfig", "EventClass", "FrozenEncoder", "build_event_classes", "encode", "encode_all_layers",
    "generate_clip", "generate_clips", "generate_corpus", "load_manifest", "make_captions", "make_prototype",
    "pad_or_truncate", "render_frames", "tag_vector",
]
