# src/captioning/training.py

import math
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from substrate import (TrainingLog, adamw_step, assert_no_gradient, build_adamw, check_finite, current_lr,
                       freeze, linear_decay, load_module, save_module, softmax_cross_entropy)
from utils.artifacts import read_json, write_json
from utils.errors import ConfigError, DataError
from utils.progress import ProgressTracker, worker_count
from .decoding import beam_search, greedy_decode
from .models import CaptionerConfig, EncDecCaptioner, FrozenLM, PrefixCaptioner, build_frozen_lm
from .text import PAD, TextVocab

logger = logging.getLogger(__name__)

CAPTIONER_KINDS = ("encdec", "prefix")
WEIGHTS_FILE = "weights.ttwt"
SIDECAR_FILE = "captioner.json"
VOCAB_FILE = "vocab.json"

Captioner = Union[EncDecCaptioner, PrefixCaptioner]


@dataclass
class CaptionData:
    """Captioner inputs for one split: N x T x D features, or N x L x T integer codes."""
    inputs: np.ndarray
    captions: List[List[str]]
    ids: List[str]

    def __post_init__(self):
        if len(self.inputs) != len(self.captions) or len(self.captions) != len(self.ids):
            raise DataError(f"{len(self.inputs)} inputs, {len(self.captions)} caption sets and {len(self.ids)} ids")
        if any(not refs for refs in self.captions):
            raise DataError("every clip needs at least one reference caption")

    @property
    def uses_codes(self) -> bool:
        return np.issubdtype(self.inputs.dtype, np.integer)

    def batch(self, idx) -> torch.Tensor:
        x = torch.from_numpy(np.ascontiguousarray(self.inputs[idx]))
        return x.long() if self.uses_codes else x.float()


def pad_tokens(sequences: Sequence[Sequence[int]]) -> torch.Tensor:
    width = max(len(s) for s in sequences)
    out = torch.full((len(sequences), width), PAD, dtype=torch.long)
    for row, seq in enumerate(sequences):
        out[row, :len(seq)] = torch.as_tensor(list(seq), dtype=torch.long)
    return out


def sequence_loss(model: Captioner, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
    """Teacher-forced mean token cross-entropy; `tokens` are bos..eos rows padded with pad."""
    if tokens.shape[-1] < 2:
        raise ValueError("caption must hold at least one target token after bos")
    logits = model(x, tokens[:, :-1])
    return softmax_cross_entropy(logits, tokens[:, 1:], ignore_index=PAD)


def _single(model: Captioner, features, caption_ids: Sequence[int]):
    x = model.prepare(features)
    tokens = torch.as_tensor(list(caption_ids), dtype=torch.long).unsqueeze(0)
    return x, tokens


def encdec_loss(model: EncDecCaptioner, features, caption_ids: Sequence[int]) -> torch.Tensor:
    """-(1/m) sum_t log p(y_t | y_<t, x) for one clip and one bos..eos caption."""
    if len(caption_ids) < 2:
        raise ValueError("encdec_loss: empty caption (m = 0)")
    return sequence_loss(model, *_single(model, features, caption_ids))


def prefix_loss(model: PrefixCaptioner, features, caption_ids: Sequence[int]) -> torch.Tensor:
    """Loss over caption positions only; prefix positions carry no terms."""
    if any(p.requires_grad for p in model.lm.parameters()):
        raise AssertionError("prefix captioner: language model parameters must be frozen")
    if len(caption_ids) < 2:
        raise ValueError("prefix_loss: empty caption (m = 0)")
    return sequence_loss(model, *_single(model, features, caption_ids))


def build_captioner(kind: str, input_dim: int, vocab: TextVocab, cfg: CaptionerConfig,
                    lm: Optional[FrozenLM] = None, code_sizes: Optional[Sequence[int]] = None) -> Captioner:
    if kind == "encdec":
        return EncDecCaptioner(input_dim, len(vocab), cfg, code_sizes)
    if kind == "prefix":
        if lm is None:
            raise ValueError("prefix captioner needs a pretrained language model")
        return PrefixCaptioner(input_dim, lm, cfg, code_sizes)
    raise ConfigError(f"unknown captioner kind '{kind}', expected one of {CAPTIONER_KINDS}")


def pretrain_caption_lm(captions: Sequence[Sequence[str]], vocab: TextVocab,
                        cfg: CaptionerConfig) -> Tuple[FrozenLM, TrainingLog]:
    """
    Next-token training on every training caption. Each batch is placed at a random position
    offset in [0, k_prefix] so the positions used behind a prefix are trained too.
    """
    lm = build_frozen_lm(len(vocab), cfg)
    flat = [vocab.encode(c) for refs in captions for c in refs]
    rng = np.random.default_rng([cfg.seed, 37])
    optimizer = build_adamw(lm, lr=cfg.lm_lr, weight_decay=cfg.weight_decay)
    log = TrainingLog("caption-lm")
    for epoch in range(cfg.lm_epochs):
        order = rng.permutation(len(flat))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch * 4):
            tokens = pad_tokens([flat[i] for i in order[start:start + cfg.batch * 4]])
            offset = int(rng.integers(0, cfg.k_prefix + 1))
            logits = lm(tokens[:, :-1], offset=offset)
            loss = softmax_cross_entropy(logits, tokens[:, 1:], ignore_index=PAD)
            check_finite("caption-lm", float(loss), epoch)
            loss.backward()
            adamw_step(optimizer)
            total += float(loss)
            count += 1
        log.record(epoch=epoch, loss=total / max(1, count))
        logger.info(f"[caption-lm] epoch {epoch} loss={total / max(1, count):.4f}")
    return freeze(lm), log


@torch.no_grad()
def evaluate_loss(model: Captioner, data: CaptionData, vocab: TextVocab, batch: int = 32) -> float:
    """Mean loss over clips, each scored on its first reference caption."""
    model.eval()
    total = 0.0
    for start in range(0, len(data.ids), batch):
        idx = np.arange(start, min(start + batch, len(data.ids)))
        tokens = pad_tokens([vocab.encode(data.captions[i][0]) for i in idx])
        total += float(sequence_loss(model, data.batch(idx), tokens)) * len(idx)
    return total / max(1, len(data.ids))


def train_captioner(kind: str, train: CaptionData, val: Optional[CaptionData], vocab: TextVocab,
                    cfg: CaptionerConfig, lm: Optional[FrozenLM] = None,
                    code_sizes: Optional[Sequence[int]] = None) -> Tuple[Captioner, TrainingLog]:
    """
    AdamW with linear decay to zero. Every epoch samples one of each clip's reference
    captions uniformly. Raw-code inputs need `code_sizes`, the codebook size per token layer.
    Returns the model and per-epoch train/val losses.
    """
    if train.uses_codes and not code_sizes:
        raise ValueError("raw-code captioner inputs need the codebook sizes")
    if kind == "prefix" and lm is None:
        lm, _ = pretrain_caption_lm(train.captions, vocab, cfg)
    input_dim = cfg.code_dim if code_sizes else int(train.inputs.shape[-1])
    model = build_captioner(kind, input_dim, vocab, cfg, lm=lm, code_sizes=code_sizes)

    N = len(train.ids)
    steps_per_epoch = math.ceil(N / cfg.batch)
    optimizer = build_adamw(model, lr=cfg.lr, weight_decay=cfg.weight_decay)
    scheduler = linear_decay(optimizer, cfg.epochs * steps_per_epoch)
    rng = np.random.default_rng([cfg.seed, 31])
    log = TrainingLog(f"captioner-{kind}")
    start_time = time.time()

    for epoch in range(cfg.epochs):
        model.train()
        choice = [int(rng.integers(0, len(refs))) for refs in train.captions]
        order = rng.permutation(N)
        total = 0.0
        for step, start in enumerate(range(0, N, cfg.batch)):
            idx = order[start:start + cfg.batch]
            tokens = pad_tokens([vocab.encode(train.captions[i][choice[i]]) for i in idx])
            loss = sequence_loss(model, train.batch(idx), tokens)
            check_finite(log.name, float(loss), epoch * steps_per_epoch + step, epoch=epoch)
            loss.backward()
            if kind == "prefix":
                assert_no_gradient(model.lm, "frozen language model")
            lr = current_lr(optimizer)
            adamw_step(optimizer, scheduler)
            total += float(loss) * len(idx)
        row = {"epoch": epoch, "train_loss": total / N, "lr": lr}
        if val is not None and val.ids:
            row["val_loss"] = evaluate_loss(model, val, vocab)
        log.record(**row)
        logger.info(f"[{log.name}] epoch {epoch} train={row['train_loss']:.4f} val={row.get('val_loss', float('nan')):.4f}")
    model.eval()
    logger.info(f"Trained {log.name} in {time.time() - start_time:.1f}s")
    return model, log


def generate_captions(model: Captioner, data: CaptionData, vocab: TextVocab, beam: int = 3,
                      max_len: int = 30) -> List[Dict]:
    """One {clip_id, caption, log_prob} record per clip, in input order."""
    model.eval()
    tracker = ProgressTracker(len(data.ids), label="captions")

    def work(i: int) -> Dict:
        x = data.inputs[i]
        if beam == 1:
            hyp = greedy_decode(model, x, max_len=max_len)
        else:
            hyp = beam_search(model, x, beam_size=beam, max_len=max_len).best
        tracker.update()
        return {"clip_id": data.ids[i], "caption": vocab.decode(hyp.tokens), "log_prob": hyp.log_prob}

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(work, range(len(data.ids))))


def save_captioner(model: Captioner, vocab: TextVocab, out_dir) -> None:
    out_dir = Path(out_dir)
    save_module(out_dir / WEIGHTS_FILE, model)
    vocab.save(out_dir / VOCAB_FILE)
    write_json(out_dir / SIDECAR_FILE, {
        "kind": model.kind,
        "input_dim": model.front.input_dim,
        "vocab_path": VOCAB_FILE,
        "k_prefix": model.k if model.kind == "prefix" else None,
        "code_sizes": list(model.front.code_sizes) if model.front.code_sizes else None,
        "config": asdict(model.cfg),
    })
    logger.info(f"Saved {model.kind} captioner to {out_dir}")


def load_captioner(out_dir) -> Tuple[Captioner, TextVocab]:
    out_dir = Path(out_dir)
    meta = read_json(out_dir / SIDECAR_FILE)
    vocab = TextVocab.load(out_dir / meta.get("vocab_path", VOCAB_FILE))
    cfg = CaptionerConfig.from_dict(meta.get("config"))
    lm = build_frozen_lm(len(vocab), cfg) if meta["kind"] == "prefix" else None
    model = build_captioner(meta["kind"], int(meta["input_dim"]), vocab, cfg, lm=lm, code_sizes=meta.get("code_sizes"))
    load_module(model, out_dir / WEIGHTS_FILE)
    return model.eval(), vocab
