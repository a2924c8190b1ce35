# src/audio_tokenizers/suptok.py
"""
Supervised tokenizer: a frozen tagging model is split after `split` encoder layers and a
trainable VQ module is inserted between the halves. The module's conv encoder/decoder
learn from the tagging loss alone while the codebooks follow EMA; the exported tokenizer
keeps encoder1, the VQ encoder and the codebooks.
"""

import copy
import time
import hashlib
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import torch
from torch import nn

from corpus import Corpus, EncoderConfig, FrozenEncoder
from metrics import macro_f1
from quantize import Codebook, TokenSequence, commitment_loss, rvq_forward
from substrate import (Linear, TrainingLog, adamw_step, assert_no_gradient, build_adamw, check_finite,
                       current_lr, freeze, load_module, make_generator, save_module)
from utils.artifacts import read_json, write_json
from utils.errors import ConfigError, DataError, NumericalError
from .bottleneck import QuantizerSpec, VQBottleneck, as_float_tensor

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
WEIGHTS_FILE = "weights.ttwt"
SIDECAR_FILE = "suptok.json"
TAGGER_SIDECAR = "tagger.json"


def bce_loss(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """
    Summed multi-label binary cross-entropy over samples and classes:
    -sum_n sum_s [l log f + (1 - l) log(1 - f)], with f clamped to [1e-7, 1 - 1e-7].
    """
    if probs.shape != labels.shape:
        raise ValueError(f"bce_loss: probs shape {tuple(probs.shape)} does not match labels {tuple(labels.shape)}")
    if torch.isnan(probs).any() or torch.isnan(labels).any():
        raise ValueError("bce_loss: NaN input")
    f = probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    labels = labels.to(f.dtype)
    return -(labels * torch.log(f) + (1.0 - labels) * torch.log(1.0 - f)).sum()


class TaggingModel(nn.Module):
    """Layered encoder plus a linear tag head on time-averaged features, sigmoid outputs."""

    def __init__(self, encoder: FrozenEncoder, S: int, generator: torch.Generator, finetuned_layers: int = 0):
        super().__init__()
        self.encoder = encoder
        self.head = Linear(encoder.width, S, generator)
        self.finetuned_layers = finetuned_layers

    @property
    def S(self) -> int:
        return int(self.head.weight.shape[1])

    @property
    def n_layers(self) -> int:
        return self.encoder.n_layers

    def logits_from(self, hidden: torch.Tensor, start: int) -> torch.Tensor:
        """Tag logits for a residual-stream state taken after `start` encoder layers."""
        h = self.encoder.forward_from(hidden, start)
        return self.head(h.mean(dim=-2))

    def probs_from(self, hidden: torch.Tensor, start: int) -> torch.Tensor:
        return torch.sigmoid(self.logits_from(hidden, start))

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.probs_from(self.encoder.embed(frames), 0)

    def tagger_id(self) -> str:
        digest = hashlib.sha256()
        for name, value in sorted(self.state_dict().items()):
            digest.update(name.encode("utf-8"))
            digest.update(value.detach().cpu().numpy().tobytes())
        return digest.hexdigest()[:12]

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        save_module(out_dir / WEIGHTS_FILE, self)
        write_json(out_dir / TAGGER_SIDECAR, {"S": self.S, "encoder": asdict(self.encoder.cfg),
                                              "finetuned_layers": self.finetuned_layers,
                                              "tagger_id": self.tagger_id()})

    @classmethod
    def load(cls, out_dir) -> "TaggingModel":
        out_dir = Path(out_dir)
        meta = read_json(out_dir / TAGGER_SIDECAR)
        encoder = FrozenEncoder(EncoderConfig.from_dict(meta["encoder"]))
        model = cls(encoder, int(meta["S"]), make_generator(0), finetuned_layers=int(meta.get("finetuned_layers", 0)))
        load_module(model, out_dir / WEIGHTS_FILE)
        return freeze(model)


@dataclass
class TaggerConfig:
    epochs: int = 300
    batch: int = 64
    lr: float = 1e-2
    weight_decay: float = 0.0
    finetune_top_layers: int = 0
    f1_floor: float = 0.9
    eval_every: int = 10
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Dict) -> "TaggerConfig":
        known = {k: v for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class SupTokConfig:
    K: int = 64
    n_layers: int = 1
    steps: int = 1000
    batch: int = 16
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta: float = 0.25
    ema_decay: float = 0.99
    ema_eps: float = 1e-5
    dead_threshold: float = 1e-3
    log_every: int = 50
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Dict) -> "SupTokConfig":
        known = {k: v for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def quantizer(self) -> QuantizerSpec:
        return QuantizerSpec(K=self.K, n_layers=self.n_layers, decay=self.ema_decay, eps=self.ema_eps,
                             dead_threshold=self.dead_threshold)


@torch.no_grad()
def hidden_states(tagger: TaggingModel, corpus: Corpus, split: str, layer: int, batch_size: int = 32) -> np.ndarray:
    """N x T x D residual stream of `split` after `layer` tagger layers (0 = input projection)."""
    if layer >= 1 and tagger.finetuned_layers == 0:
        return corpus.layer_features(split, tagger.encoder, layer, batch_size)
    frames = corpus.frames(split)
    outputs = []
    for i in range(0, len(frames), batch_size):
        h = tagger.encoder.embed(as_float_tensor(frames[i:i + batch_size]))
        outputs.append(tagger.encoder.forward_from(h, 0, layer).numpy())
    return np.concatenate(outputs, axis=0)


def _batches(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch):
        yield order[i:i + batch]


def pretrain_tagging_model(corpus: Corpus, encoder: FrozenEncoder, cfg: TaggerConfig) -> Tuple[TaggingModel, TrainingLog]:
    """
    Trains the tag head (and the top `finetune_top_layers` encoder layers) with the summed
    BCE loss divided by the batch size. Stops once validation macro-F1 reaches the floor;
    the returned model is frozen.
    """
    L = encoder.n_layers
    if not 0 <= cfg.finetune_top_layers <= L:
        raise ConfigError(f"finetune_top_layers={cfg.finetune_top_layers} must lie in [0, {L}]")
    train_y = torch.from_numpy(corpus.tags("train")).float()
    val_y = corpus.tags("val")

    generator = make_generator(cfg.seed)
    if cfg.finetune_top_layers:
        encoder = copy.deepcopy(encoder)
        for block in encoder.blocks[L - cfg.finetune_top_layers:]:
            block.requires_grad_(True)
    tagger = TaggingModel(encoder, train_y.shape[1], generator)
    start = L - cfg.finetune_top_layers

    train_h = torch.from_numpy(hidden_states(tagger, corpus, "train", start))
    val_h = torch.from_numpy(hidden_states(tagger, corpus, "val", start))
    if start == L:
        # head-only: pool once up front
        train_h, val_h = train_h.mean(dim=1), val_h.mean(dim=1)

    def logits(h: torch.Tensor) -> torch.Tensor:
        return tagger.head(h) if start == L else tagger.logits_from(h, start)

    optimizer = build_adamw(tagger, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 23])
    log = TrainingLog("tagger")
    f1 = 0.0
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in _batches(len(train_h), cfg.batch, rng):
            idx = torch.from_numpy(idx)
            loss = bce_loss(torch.sigmoid(logits(train_h[idx])), train_y[idx]) / len(idx)
            check_finite("tagger", float(loss), epoch)
            loss.backward()
            adamw_step(optimizer)
            total += float(loss) * len(idx)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            with torch.no_grad():
                f1 = macro_f1(torch.sigmoid(logits(val_h)).numpy(), val_y)
            log.record(epoch=epoch, loss=total / len(train_h), val_f1=f1)
            logger.info(f"[tagger] epoch {epoch} loss={total / len(train_h):.4f} val macro-F1={f1:.3f}")
            if f1 >= cfg.f1_floor:
                break

    tagger.finetuned_layers = cfg.finetune_top_layers
    freeze(tagger)
    if f1 < cfg.f1_floor:
        raise NumericalError(f"tagging model reached macro-F1 {f1:.4f} below the floor {cfg.f1_floor} "
                             f"after {cfg.epochs} epochs")
    return tagger, log


class SupTokModel(nn.Module):
    """encoder1 (frozen) -> VQ module (trainable conv encoder/decoder, EMA codebooks) -> encoder2 + head (frozen)."""

    def __init__(self, tagger: TaggingModel, split: int, spec: QuantizerSpec, generator: torch.Generator):
        super().__init__()
        if not 1 <= split < tagger.n_layers:
            raise ValueError(f"split {split} must lie in [1, {tagger.n_layers - 1}]")
        if any(p.requires_grad for p in tagger.parameters()):
            raise ValueError("the tagging model must be frozen before it is split")
        self.tagger = tagger
        self.split = split
        self.vq = VQBottleneck(tagger.encoder.width, spec, generator)

    @property
    def encoder1_layers(self) -> int:
        return self.split

    @property
    def encoder2_layers(self) -> int:
        return self.tagger.n_layers - self.split

    @torch.no_grad()
    def encoder1(self, frames: torch.Tensor) -> torch.Tensor:
        return self.tagger.encoder.forward_from(self.tagger.encoder.embed(frames), 0, self.split)

    def forward_hidden(self, h1: torch.Tensor):
        """(tag probabilities, quantizer output, pre-quantization encoding) for encoder1 states."""
        recon, out, z = self.vq(h1)
        return self.tagger.probs_from(recon, self.split), out, z

    def forward(self, frames: torch.Tensor):
        return self.forward_hidden(self.encoder1(frames))


@torch.no_grad()
def bottleneck_f1(model: SupTokModel, hidden: np.ndarray, tags: np.ndarray, batch_size: int = 32) -> float:
    """Tagging macro-F1 through the quantized bottleneck."""
    probs = []
    for i in range(0, len(hidden), batch_size):
        p, _, _ = model.forward_hidden(as_float_tensor(hidden[i:i + batch_size]))
        probs.append(p.numpy())
    return macro_f1(np.concatenate(probs, axis=0), tags)


def train_supervised_tokenizer(tagger: TaggingModel, corpus: Corpus, split: int,
                               cfg: SupTokConfig) -> Tuple[SupTokModel, TrainingLog]:
    """Only the VQ module's conv encoder/decoder receive optimizer updates."""
    try:
        train_y = torch.from_numpy(corpus.tags("train")).float()
        val_y = corpus.tags("val")
    except DataError as e:
        raise DataError(f"supervised tokenizer needs tagged clips: {e}") from e

    generator = make_generator(cfg.seed)
    model = SupTokModel(tagger, split, cfg.quantizer(), generator)
    train_h = hidden_states(tagger, corpus, "train", split)
    val_h = hidden_states(tagger, corpus, "val", split)
    rng = np.random.default_rng([cfg.seed, 29])
    ema_generator = make_generator(cfg.seed + 1)

    with torch.no_grad():
        first = rng.integers(0, len(train_h), size=cfg.batch)
        model.vq.init_codebooks(model.vq.encode(as_float_tensor(train_h[first])), ema_generator)

    log = TrainingLog(f"suptok-split{split}-K{cfg.K}-L{cfg.n_layers}")
    f1 = bottleneck_f1(model, val_h, val_y)
    log.record(step=-1, val_f1=f1)
    logger.info(f"[{log.name}] untrained bottleneck val macro-F1={f1:.3f}")

    optimizer = build_adamw(model, lr=cfg.lr, weight_decay=cfg.weight_decay)
    start_time = time.time()
    for step in range(cfg.steps):
        idx = rng.integers(0, len(train_h), size=cfg.batch)
        h1 = as_float_tensor(train_h[idx])
        probs, out, z = model.forward_hidden(h1)
        bce = bce_loss(probs, train_y[torch.from_numpy(idx)]) / len(idx)
        loss = bce + commitment_loss(z, out.quantized, cfg.beta)
        check_finite("suptok", float(loss), step, bce=float(bce))
        loss.backward()
        assert_no_gradient(model.tagger, "frozen tagging encoder")
        adamw_step(optimizer)
        reseeded = model.vq.update_codebooks(out, ema_generator)

        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            usage = model.vq.usage(out.indices)
            row = dict(step=step, loss=float(loss), bce=float(bce), lr=current_lr(optimizer),
                       perplexity=usage[0]["perplexity"], utilization=usage[0]["utilization"], reseeded=reseeded)
            if step == cfg.steps - 1:
                row["val_f1"] = bottleneck_f1(model, val_h, val_y)
            log.record(**row)
            logger.info(f"[{log.name}] step {step}/{cfg.steps} loss={float(loss):.4f} ppl={usage[0]['perplexity']:.1f}")
    model.eval()
    logger.info(f"Trained {log.name} in {time.time() - start_time:.1f}s; val macro-F1={log.last('val_f1'):.3f}")
    return model, log


class SupTokTokenizer(nn.Module):
    """frames -> encoder1 -> VQ encoder -> quantizer -> TokenSequence."""

    def __init__(self, encoder1: FrozenEncoder, vq_encoder: nn.Module, codebooks: nn.ModuleList,
                 split: int, tagger_id: str):
        super().__init__()
        self.encoder1 = encoder1
        self.vq_encoder = vq_encoder
        self.quantizer = codebooks
        self.split = split
        self.tagger_id = tagger_id
        freeze(self)

    @property
    def input_dim(self) -> int:
        return self.encoder1.cfg.F

    @property
    def n_layers(self) -> int:
        return len(self.quantizer)

    @property
    def K(self) -> int:
        return self.quantizer[0].K

    def codebooks(self) -> List[Codebook]:
        return list(self.quantizer)

    @torch.no_grad()
    def indices(self, frames: torch.Tensor) -> torch.Tensor:
        h1 = self.encoder1.forward_from(self.encoder1.embed(frames), 0, self.split)
        return rvq_forward(self.codebooks(), self.vq_encoder(h1)).indices

    def tokenize(self, frames) -> TokenSequence:
        x = as_float_tensor(frames)
        if x.dim() != 2 or x.shape[-1] != self.input_dim:
            raise ValueError(f"tokenize expects T x {self.input_dim} frames, got shape {tuple(x.shape)}")
        return TokenSequence(self.indices(x).numpy(), (self.K,) * self.n_layers)

    def tokenize_batch(self, frames) -> np.ndarray:
        return self.indices(as_float_tensor(frames)).permute(1, 0, 2).numpy()

    def sidecar(self) -> Dict:
        encoder_cfg = asdict(self.encoder1.cfg)
        encoder_cfg["layers"] = self.split
        return {"split": self.split, "K": self.K, "n_layers": self.n_layers, "tagger_id": self.tagger_id,
                "input_dim": self.input_dim, "encoder": encoder_cfg}

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        save_module(out_dir / WEIGHTS_FILE, self)
        write_json(out_dir / SIDECAR_FILE, self.sidecar())

    @classmethod
    def load(cls, out_dir) -> "SupTokTokenizer":
        out_dir = Path(out_dir)
        meta = read_json(out_dir / SIDECAR_FILE)
        encoder1 = FrozenEncoder(EncoderConfig.from_dict(meta["encoder"]))
        shell = VQBottleneck(encoder1.width, QuantizerSpec(K=int(meta["K"]), n_layers=int(meta["n_layers"])),
                             make_generator(0))
        tokenizer = cls(encoder1, shell.encoder, shell.codebooks, int(meta["split"]), meta["tagger_id"])
        return load_module(tokenizer, out_dir / WEIGHTS_FILE)


def export_tokenizer(model: SupTokModel) -> SupTokTokenizer:
    """Copies encoder1, the VQ encoder and the codebooks; the VQ decoder and encoder2 stay behind."""
    encoder1 = copy.deepcopy(model.tagger.encoder.truncated(model.split))
    return SupTokTokenizer(encoder1, copy.deepcopy(model.vq.encoder), copy.deepcopy(model.vq.codebooks),
                           model.split, model.tagger.tagger_id())
