"""Experiment workflows behind the command line: pipeline glue, linear probe, sweep and comparison run."""

from .pipeline import (CaptionRun, FitResult, TokenizerSettings, build_encoder, caption_data, caption_system,
                       captioner_config, captioner_inputs, corpus_config, corpus_seed, fit_tokenizer, open_corpus,
                       score_captions, tokenize_split, tokenizer_inputs, write_tokens)
from .probe import linear_probe_f1, pool_features
from .sweep import SWEEP_COLUMNS, SweepCell, run_sweep, sweep_grid, write_heatmap
from .run import SYSTEMS, RunRecord, SystemSpec, acceptance_summary, corpus_input_hash, medians, run_comparison

__all__ = [
    "CaptionRun", "FitResult", "RunRecord", "SWEEP_COLUMNS", "SYSTEMS", "SweepCell", "SystemSpec",
    "TokenizerSettings", "acceptance_summary", "build_encoder", "caption_data", "caption_system",
    "captioner_config", "captioner_inputs", "corpus_config", "corpus_seed", "corpus_input_hash", "fit_tokenizer",
    "linear_probe_f1", "medians", "open_corpus", "pool_features", "run_comparison", "run_sweep", "score_captions",
    "sweep_grid", "tokenize_split", "tokenizer_inputs", "write_heatmap", "write_tokens",
]
