# src/experiments/run.py
"""
Full comparison: every configured system x every seed, scored with CIDEr-D, #Words and a
linear-probe tagging F1, reduced to per-system medians. Writes the report CSV, a run record
and the directional acceptance summary.
"""

import time
import hashlib
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from config.manager import ConfigManager
from corpus import Corpus, FrozenEncoder
from metrics import write_report
from utils.artifacts import write_json, write_jsonl
from utils.errors import ConfigError
from .pipeline import TokenizerSettings, caption_system, captioner_config, captioner_inputs, fit_tokenizer
from .probe import linear_probe_f1

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemSpec:
    name: str
    source: str                        # captioner input: fbank, continuous or tokens
    tokenizer: Optional[str] = None
    n_layers: int = 1


SYSTEMS: Dict[str, SystemSpec] = {s.name: s for s in (
    SystemSpec("fbank", "fbank"),
    SystemSpec("continuous", "continuous"),
    SystemSpec("kmeans", "tokens", "kmeans"),
    SystemSpec("repcodec-vq", "tokens", "repcodec", 1),
    SystemSpec("repcodec-rvq", "tokens", "repcodec", 2),
    SystemSpec("suptok-vq", "tokens", "suptok", 1),
    SystemSpec("suptok-rvq", "tokens", "suptok", 2),
    SystemSpec("acoustic-proxy", "tokens", "acoustic-proxy", 1),
)}


@dataclass
class RunRecord:
    config_hash: str
    input_hash: str
    systems: List[str]
    seeds: List[int]
    results: Dict[str, Dict[str, Dict[str, float]]] = field(default_factory=dict)
    medians: Dict[str, Dict[str, float]] = field(default_factory=dict)
    acceptance: List[Dict] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def corpus_input_hash(*corpora: Corpus) -> str:
    """Content hash over each corpus's metadata and manifests, keyed by relative name."""
    digest = hashlib.sha256()
    for index, corpus in enumerate(corpora):
        names = ["corpus.json", "classes.json"] + [p.name for p in sorted(corpus.root.glob("*.jsonl"))]
        for name in names:
            path = corpus.root / name
            if path.exists():
                digest.update(f"{index}/{name} {git_blob_hash(path.read_bytes())}\n".encode())
    return digest.hexdigest()


def resolve_systems(names: Sequence[str]) -> List[SystemSpec]:
    unknown = [n for n in names if n not in SYSTEMS]
    if unknown:
        raise ConfigError(f"unknown systems {unknown}, expected a subset of {sorted(SYSTEMS)}")
    if not names:
        raise ConfigError("run.systems is empty")
    return [SYSTEMS[n] for n in names]


def evaluate_system(spec: SystemSpec, seed: int, corpus: Corpus, encoder: FrozenEncoder, cfg: ConfigManager,
                    tokenizer_corpus: Optional[Corpus] = None, captions_dir: Optional[Path] = None) -> Dict[str, float]:
    layer = cfg.get_int("tokenizer.layer")
    bundle, diagnostics = None, {}
    if spec.tokenizer:
        settings = TokenizerSettings.from_config(cfg, kind=spec.tokenizer, n_layers=spec.n_layers, seed=seed)
        fit = fit_tokenizer(settings, tokenizer_corpus or corpus, encoder, cfg)
        bundle, diagnostics = fit.bundle, fit.diagnostics

    cap_cfg = captioner_config(cfg, seed=seed, kind=cfg.get_str("run.captioner", "encdec"))
    run = caption_system(spec.source, corpus, encoder, cap_cfg, layer=layer, bundle=bundle)
    if captions_dir is not None:
        write_jsonl(captions_dir / f"{spec.name}-seed{seed}.jsonl", run.records)

    probe_inputs = {split: captioner_inputs(spec.source, corpus, encoder, split, layer, bundle)
                    for split in ("train", "test")}
    f1 = linear_probe_f1(probe_inputs["train"], corpus.tags("train"), probe_inputs["test"], corpus.tags("test"),
                         epochs=cfg.get_int("run.probe_epochs", 200), lr=cfg.get_float("run.probe_lr", 1e-2),
                         seed=seed)
    return {**run.scores, "macro_f1": f1, **diagnostics}


def medians(results: Dict[str, Dict[str, Dict[str, float]]]) -> Dict[str, Dict[str, float]]:
    out = {}
    for system, per_seed in results.items():
        keys = sorted({k for row in per_seed.values() for k in row})
        out[system] = {k: float(np.median([row[k] for row in per_seed.values() if k in row])) for k in keys}
    return out


def _criterion(name: str, description: str, needed: Sequence[str], med: Dict, check) -> Dict:
    missing = [s for s in needed if s not in med]
    if missing:
        return {"criterion": name, "description": description, "status": "skipped", "missing": missing}
    passed, detail = check(med)
    return {"criterion": name, "description": description, "status": "pass" if passed else "fail", "detail": detail}


def acceptance_summary(med: Dict[str, Dict[str, float]]) -> List[Dict]:
    """Directional orderings over per-system medians; criteria whose systems were not run are skipped."""

    def semantic_over_acoustic(m):
        proxy = m["acoustic-proxy"]["cider_d"]
        detail = {s: m[s]["cider_d"] for s in ("kmeans", "repcodec-vq", "suptok-vq")}
        return all(v > proxy for v in detail.values()), {**detail, "acoustic-proxy": proxy}

    def supervised_over_codec(m):
        detail, ok = {}, True
        for variant in ("vq", "rvq"):
            sup, rep = m[f"suptok-{variant}"], m[f"repcodec-{variant}"]
            detail[variant] = {"suptok": [sup["macro_f1"], sup["cider_d"]], "repcodec": [rep["macro_f1"], rep["cider_d"]]}
            ok = ok and sup["macro_f1"] >= rep["macro_f1"] and sup["cider_d"] >= rep["cider_d"]
        return ok, detail

    def rvq_over_vq(m):
        mse = (m["repcodec-rvq"]["test_mse"], m["repcodec-vq"]["test_mse"])
        f1 = (m["suptok-rvq"]["test_tagging_f1"], m["suptok-vq"]["test_tagging_f1"])
        return mse[0] <= mse[1] and f1[0] >= f1[1], {"repcodec_mse_rvq_vq": mse, "suptok_f1_rvq_vq": f1}

    def continuous_over_discrete(m):
        tokenized = {s: v["cider_d"] for s, v in m.items() if SYSTEMS[s].source == "tokens"}
        best = max(tokenized, key=tokenized.get)
        return m["continuous"]["cider_d"] >= tokenized[best], {"continuous": m["continuous"]["cider_d"],
                                                               "best_tokenized": [best, tokenized[best]]}

    tokenized = [s for s in med if SYSTEMS[s].source == "tokens"]
    return [
        _criterion("semantic>acoustic", "kmeans, repcodec and suptok tokens beat acoustic-proxy tokens on CIDEr-D",
                   ("kmeans", "repcodec-vq", "suptok-vq", "acoustic-proxy"), med, semantic_over_acoustic),
        _criterion("supervised>=codec", "suptok tokens match or beat repcodec on probe F1 and CIDEr-D",
                   ("suptok-vq", "suptok-rvq", "repcodec-vq", "repcodec-rvq"), med, supervised_over_codec),
        _criterion("rvq>=vq", "two codebooks match or beat one on reconstruction MSE and tagging F1",
                   ("suptok-vq", "suptok-rvq", "repcodec-vq", "repcodec-rvq"), med, rvq_over_vq),
        _criterion("continuous>=discrete", "continuous features match or beat the best tokenized system",
                   ["continuous"] + (tokenized or ["<tokenized system>"]), med, continuous_over_discrete),
    ]


def run_comparison(cfg: ConfigManager, corpus: Corpus, encoder: FrozenEncoder, out_dir,
                   tokenizer_corpus: Optional[Corpus] = None) -> RunRecord:
    systems = resolve_systems(cfg.get_list("run.systems", list(SYSTEMS)))
    seeds = [int(s) for s in cfg.get_list("run.seeds", [cfg.get_int("seed")])]
    if not seeds:
        raise ConfigError("run.seeds is empty")
    out_dir = Path(out_dir)
    inputs = [corpus] + ([tokenizer_corpus] if tokenizer_corpus is not None else [])
    record = RunRecord(config_hash=cfg.config_hash(), input_hash=corpus_input_hash(*inputs),
                       systems=[s.name for s in systems], seeds=seeds)
    started = time.time()

    for spec in systems:
        record.results[spec.name] = {}
        for seed in seeds:
            logger.info(f"Running system {spec.name} with seed {seed}")
            t0 = time.time()
            record.results[spec.name][str(seed)] = evaluate_system(spec, seed, corpus, encoder, cfg,
                                                                   tokenizer_corpus, out_dir / "captions")
            record.timing[f"{spec.name}/{seed}"] = time.time() - t0

    record.medians = medians(record.results)
    record.acceptance = acceptance_summary(record.medians)
    record.timing["total"] = time.time() - started

    write_report(out_dir / "report.csv", [{"system": s.name, **record.medians[s.name]} for s in systems])
    write_json(out_dir / "acceptance.json", record.acceptance)
    write_json(out_dir / "run_record.json", asdict(record))
    for item in record.acceptance:
        logger.info(f"Acceptance {item['criterion']}: {item['status']}")
    return record
