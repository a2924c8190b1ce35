# scripts/toktide.py

import argparse
import json
import os
import sys
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

# --- Path Setup ---
# Add src directory to Python path
SRC_PATH = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'src'))
if SRC_PATH not in sys.path:
    sys.path.insert(0, SRC_PATH)

# --- Early Import and Logging Setup ---
try:
    from config import reload_config
    from config.manager import INPUT_SOURCES, TOKENIZER_KINDS, CAPTIONER_KINDS, ConfigManager
    from utils.logging_config import setup_logging
    from utils.errors import EXIT_OK, ConfigError, DataError, ToktideError, exit_code_for
except ImportError as e:
    print(f"FATAL: Failed to import core components (config/logging): {e}", file=sys.stderr)
    print("Run from the repository root or put toktide/src on PYTHONPATH.", file=sys.stderr)
    sys.exit(1)

from audio_tokenizers import load_tokenizer
from captioning import build_text_vocab, generate_captions, load_captioner, save_captioner, train_captioner
from corpus import SPLITS, generate_corpus, load_manifest
from experiments import (TokenizerSettings, build_encoder, caption_data, captioner_config, corpus_config,
                         corpus_seed, fit_tokenizer, open_corpus, run_comparison, run_sweep, score_captions,
                         write_tokens)
from metrics import write_report
from utils.artifacts import read_json, read_jsonl, write_json, write_jsonl

logger = logging.getLogger("toktide")

PIPELINE_FILE = "pipeline.json"

# argparse dest -> config dot path
OVERRIDES = {
    "seed": "seed",
    "tokenizer_kind": "tokenizer.kind",
    "K": "tokenizer.K",
    "n_layers": "tokenizer.n_layers",
    "layer": "tokenizer.layer",
    "split": "tokenizer.split",
    "captioner_kind": "captioner.kind",
    "beam": "captioner.beam",
}


def int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def load_experiment(args) -> ConfigManager:
    """Layers the config files, applies CLI overrides and validates, all before any artifact is touched."""
    cfg = reload_config(profile=args.profile, experiment_path=args.config)
    for dest, dotted in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg.override(dotted, value)
    cfg.validate()
    return cfg


def write_training_logs(out_dir: Path, logs, diagnostics: Optional[Dict] = None) -> None:
    payload = {log.name: log.to_records() for log in logs}
    if diagnostics:
        payload["diagnostics"] = diagnostics
    write_json(out_dir / "training_log.json", payload)


# --- Commands ---

def cmd_gen_data(args, cfg: ConfigManager) -> int:
    corpus_cfg = corpus_config(cfg, args.domain)
    seed = corpus_seed(cfg, args.domain)
    counts = generate_corpus(seed, corpus_cfg, args.out, force=args.force)
    summary = {"out": str(args.out), "domain": args.domain, "seed": seed, "S": corpus_cfg.S,
               "class_offset": corpus_cfg.class_offset, "counts": counts}
    logger.info(f"Corpus written to {args.out}: {counts}")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_train_tokenizer(args, cfg: ConfigManager) -> int:
    settings = TokenizerSettings.from_config(cfg)
    if settings.kind == "none":
        raise ConfigError("tokenizer.kind 'none' cannot be trained; pass --kind")
    if settings.kind == "kmeans" and settings.n_layers != 1:
        logger.info("k-means has a single codebook; ignoring n_layers")
        settings.n_layers = 1
    corpus = open_corpus(args.corpus)
    encoder = build_encoder(cfg, corpus.config.F)
    logger.info(f"Training {settings.kind} tokenizer on {corpus.root}: {settings}")
    fit = fit_tokenizer(settings, corpus, encoder, cfg)
    out = Path(args.out)
    write_training_logs(out, fit.logs, fit.diagnostics)
    fit.bundle.save(out)
    print(json.dumps({"tokenizer": fit.bundle.describe(), **fit.diagnostics}, sort_keys=True))
    return EXIT_OK


def _split_for_manifest(manifest: Path) -> str:
    if manifest.stem not in SPLITS:
        raise DataError(f"{manifest} is not a split manifest of a generated corpus (expected one of {SPLITS})")
    return manifest.stem


def cmd_tokenize(args, cfg: ConfigManager) -> int:
    manifest = Path(args.manifest)
    split = _split_for_manifest(manifest)
    bundle = load_tokenizer(args.tokenizer)
    corpus = open_corpus(manifest.parent)
    encoder = build_encoder(cfg, corpus.config.F)
    summary = write_tokens(bundle, corpus, encoder, split, args.out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_train_captioner(args, cfg: ConfigManager) -> int:
    if args.source in ("tokens", "codes") and not args.tokenizer:
        raise ConfigError(f"--source {args.source} needs --tokenizer")
    corpus = open_corpus(args.corpus)
    encoder = build_encoder(cfg, corpus.config.F)
    bundle = load_tokenizer(args.tokenizer) if args.source in ("tokens", "codes") else None
    layer = cfg.get_int("tokenizer.layer")
    cap_cfg = captioner_config(cfg)

    train = caption_data(args.source, corpus, encoder, "train", layer, bundle)
    val = caption_data(args.source, corpus, encoder, "val", layer, bundle) if corpus.ids("val") else None
    vocab = build_text_vocab(c for refs in train.captions for c in refs)
    code_sizes = (bundle.K,) * bundle.n_layers if args.source == "codes" else None
    model, log = train_captioner(cap_cfg.kind, train, val, vocab, cap_cfg, code_sizes=code_sizes)

    out = Path(args.out)
    write_training_logs(out, [log])
    save_captioner(model, vocab, out)
    write_json(out / PIPELINE_FILE, {
        "source": args.source,
        "layer": layer if args.source == "continuous" else None,
        "tokenizer": str(Path(args.tokenizer).resolve()) if bundle is not None else None,
    })
    return EXIT_OK


def cmd_caption(args, cfg: ConfigManager) -> int:
    model, vocab = load_captioner(args.captioner)
    pipeline = read_json(Path(args.captioner) / PIPELINE_FILE)
    corpus = open_corpus(args.corpus)
    encoder = build_encoder(cfg, corpus.config.F)
    bundle = load_tokenizer(pipeline["tokenizer"]) if pipeline.get("tokenizer") else None
    data = caption_data(pipeline["source"], corpus, encoder, args.corpus_split, pipeline.get("layer"), bundle)
    beam = cfg.get_int("captioner.beam") if args.beam is None else args.beam
    records = generate_captions(model, data, vocab, beam=beam, max_len=model.cfg.max_len)
    write_jsonl(args.out, records)
    logger.info(f"Wrote {len(records)} captions to {args.out}")
    return EXIT_OK


def _named_paths(items: Sequence[str]) -> Dict[str, Path]:
    named = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        if name in named:
            raise ConfigError(f"system name '{name}' given twice")
        named[name] = Path(path)
    return named


def cmd_evaluate(args, cfg: ConfigManager) -> int:
    references = {r.id: r.captions for r in load_manifest(args.references)}
    rows = []
    for system, path in _named_paths(args.captions).items():
        scores = score_captions(read_jsonl(path), references)
        rows.append({"system": system, **scores})
        logger.info(f"{system}: CIDEr-D={scores['cider_d']:.4f} #Words={scores['n_words']}")
    write_report(args.out, rows)
    return EXIT_OK


def cmd_sweep(args, cfg: ConfigManager) -> int:
    layers = args.layers if args.layers is not None else cfg.get_list("sweep.layers")
    clusters = args.clusters if args.clusters is not None else cfg.get_list("sweep.clusters")
    corpus = open_corpus(args.corpus)
    encoder = build_encoder(cfg, corpus.config.F)
    heatmap = cfg.get_bool("sweep.heatmap", True) and not args.no_heatmap
    rows = run_sweep(cfg, corpus, encoder, layers, clusters, args.out, heatmap=heatmap)
    logger.info(f"Sweep finished: {len(rows)} cells")
    return EXIT_OK


def cmd_run(args, cfg: ConfigManager) -> int:
    corpus = open_corpus(args.corpus)
    tokenizer_corpus = open_corpus(args.tokenizer_corpus) if args.tokenizer_corpus else None
    if tokenizer_corpus is not None and tokenizer_corpus.config.F != corpus.config.F:
        raise DataError("tokenizer corpus and captioning corpus have different feature widths")
    encoder = build_encoder(cfg, corpus.config.F)
    record = run_comparison(cfg, corpus, encoder, args.out, tokenizer_corpus=tokenizer_corpus)
    print(json.dumps(record.acceptance, sort_keys=True, indent=2))
    return EXIT_OK


# --- Parser ---

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config file (JSON or YAML), merged over the defaults")
    common.add_argument("--profile", help="Configuration profile (desk, full)")
    common.add_argument("--seed", type=int, help="Override the experiment seed")
    common.add_argument("--log-level", help="Logging level (DEBUG, INFO, ...)")

    parser = argparse.ArgumentParser(prog="toktide", description="Audio tokenizers for captioning: data, "
                                     "tokenizer and captioner training, evaluation and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="Generate a synthetic labelled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--domain", choices=("in", "out"), default="in",
                   help="'out' generates a disjoint class set with a different seed")
    p.add_argument("--force", action="store_true", help="Overwrite an existing output directory")
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train-tokenizer", parents=[common], help="Train a tokenizer on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kind", dest="tokenizer_kind", choices=[k for k in TOKENIZER_KINDS if k != "none"])
    p.add_argument("--layer", type=int, help="Encoder layer for kmeans/repcodec")
    p.add_argument("--K", type=int, help="Codebook size")
    p.add_argument("--n-layers", type=int, help="Codebooks (1 = VQ, 2 = RVQ); ignored by kmeans")
    p.add_argument("--split", type=int, help="Encoder split layer for suptok")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train_tokenizer)

    p = sub.add_parser("tokenize", parents=[common], help="Write token files for a split manifest")
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_tokenize)

    p = sub.add_parser("train-captioner", parents=[common], help="Train a captioner")
    p.add_argument("--corpus", required=True)
    p.add_argument("--source", choices=INPUT_SOURCES, default="tokens")
    p.add_argument("--tokenizer", help="Tokenizer directory for --source tokens/codes")
    p.add_argument("--kind", dest="captioner_kind", choices=CAPTIONER_KINDS)
    p.add_argument("--layer", type=int, help="Encoder layer for --source continuous")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train_captioner)

    p = sub.add_parser("caption", parents=[common], help="Caption a corpus split")
    p.add_argument("--captioner", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", dest="corpus_split", choices=SPLITS, default="test")
    p.add_argument("--beam", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_caption)

    p = sub.add_parser("evaluate", parents=[common], help="Score caption files against references")
    p.add_argument("--captions", nargs="+", required=True, metavar="[NAME=]PATH")
    p.add_argument("--references", required=True, help="Split manifest holding the reference captions")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="Layer x K k-means ablation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--layers", type=int_list)
    p.add_argument("--clusters", type=int_list)
    p.add_argument("--no-heatmap", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("run", parents=[common], help="Full system comparison with acceptance summary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--tokenizer-corpus", help="Corpus the tokenizers are fit on (out-of-domain runs)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_run)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        cfg = load_experiment(args)
        # again, now that logging.* and paths.* come from the merged config
        setup_logging(args.log_level)
        logger.info(f"toktide {args.command} (profile={cfg.profile}, config hash {cfg.config_hash()[:12]})")
        code = args.handler(args, cfg)
        logger.info(f"toktide {args.command} finished")
        return code
    except ToktideError as e:
        logger.error(f"{args.command} failed: {e}")
        return exit_code_for(e)
    except Exception as e:
        logger.critical(f"Unexpected error in {args.command}: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
