# src/audio_tokenizers/repcodec.py
"""
Representation codec: conv encoder -> VQ/RVQ -> conv decoder trained to reconstruct its
input features. Trained on frozen-encoder features it yields semantic tokens; trained on
raw frames it is the acoustic-proxy tokenizer.
"""

import time
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import torch
from torch import nn

from quantize import TokenSequence, commitment_loss
from substrate import (TrainingLog, adamw_step, build_adamw, check_finite, current_lr, load_module,
                       make_generator, save_module)
from utils.artifacts import read_json, write_json
from utils.errors import ConfigError, DataError
from .bottleneck import QuantizerSpec, VQBottleneck, as_float_tensor

logger = logging.getLogger(__name__)

SOURCES = ("semantic", "acoustic-proxy")
WEIGHTS_FILE = "weights.ttwt"
SIDECAR_FILE = "repcodec.json"


@dataclass
class RepCodecConfig:
    K: int = 64
    n_layers: int = 1
    steps: int = 2000
    batch: int = 16
    lr: float = 1e-3
    weight_decay: float = 0.0
    crop_frames: int = 64
    beta: float = 0.25
    ema_decay: float = 0.99
    ema_eps: float = 1e-5
    dead_threshold: float = 1e-3
    log_every: int = 100
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Dict) -> "RepCodecConfig":
        known = {k: v for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def quantizer(self) -> QuantizerSpec:
        return QuantizerSpec(K=self.K, n_layers=self.n_layers, decay=self.ema_decay, eps=self.ema_eps,
                             dead_threshold=self.dead_threshold)

    def validate(self) -> None:
        if self.n_layers not in (1, 2):
            raise ConfigError(f"repcodec n_layers must be 1 or 2, got {self.n_layers}")
        for name in ("K", "steps", "batch", "crop_frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"repcodec {name} must be positive, got {getattr(self, name)}")
        if self.beta < 0:
            raise ConfigError(f"commitment beta must be >= 0, got {self.beta}")


class RepCodecModel(nn.Module):
    def __init__(self, input_dim: int, cfg: RepCodecConfig, source: str = "semantic",
                 source_layer: Optional[int] = None):
        super().__init__()
        if source not in SOURCES:
            raise ValueError(f"unknown repcodec source '{source}', expected one of {SOURCES}")
        self.input_dim = input_dim
        self.cfg = cfg
        self.source = source
        self.source_layer = source_layer
        self.bottleneck = VQBottleneck(input_dim, cfg.quantizer(), make_generator(cfg.seed))

    @property
    def n_layers(self) -> int:
        return self.bottleneck.n_layers

    @property
    def K(self) -> int:
        return self.bottleneck.K

    def codebooks(self):
        return list(self.bottleneck.codebooks)

    def forward(self, x: torch.Tensor):
        return self.bottleneck(x)

    def sidecar(self) -> Dict:
        return {
            "input_dim": self.input_dim,
            "K": self.K,
            "n_layers": self.n_layers,
            "source": self.source,
            "source_layer": self.source_layer,
            "config": asdict(self.cfg),
        }

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        save_module(out_dir / WEIGHTS_FILE, self)
        write_json(out_dir / SIDECAR_FILE, self.sidecar())

    @classmethod
    def load(cls, out_dir) -> "RepCodecModel":
        out_dir = Path(out_dir)
        meta = read_json(out_dir / SIDECAR_FILE)
        model = cls(int(meta["input_dim"]), RepCodecConfig.from_dict(meta.get("config")),
                    source=meta["source"], source_layer=meta.get("source_layer"))
        load_module(model, out_dir / WEIGHTS_FILE)
        return model.eval()


def _sample_crops(features: np.ndarray, batch: int, crop: int, rng: np.random.Generator) -> np.ndarray:
    N, T, _ = features.shape
    crop = min(crop, T)
    clips = rng.integers(0, N, size=batch)
    starts = rng.integers(0, T - crop + 1, size=batch)
    return np.stack([features[c, s:s + crop] for c, s in zip(clips, starts)])


def train_repcodec(features: np.ndarray, cfg: RepCodecConfig, source: str = "semantic",
                   source_layer: Optional[int] = None) -> Tuple[RepCodecModel, TrainingLog]:
    """
    Fits a codec on N x T x D features with loss MSE + beta * commitment.
    Codebooks follow EMA after every optimizer step.
    """
    cfg.validate()
    features = np.asarray(features, dtype=np.float32)
    if features.ndim == 2:
        features = features[None]
    if features.ndim != 3 or features.shape[0] == 0 or features.shape[1] == 0:
        raise DataError(f"repcodec needs a non-empty N x T x D corpus, got shape {features.shape}")

    model = RepCodecModel(features.shape[-1], cfg, source=source, source_layer=source_layer)
    rng = np.random.default_rng([cfg.seed, 17])
    generator = make_generator(cfg.seed + 1)
    optimizer = build_adamw(model, lr=cfg.lr, weight_decay=cfg.weight_decay)
    log = TrainingLog(f"repcodec-{source}-K{cfg.K}-L{cfg.n_layers}")

    with torch.no_grad():
        first = torch.from_numpy(_sample_crops(features, cfg.batch, cfg.crop_frames, rng))
        model.bottleneck.init_codebooks(model.bottleneck.encode(first), generator)

    start_time = time.time()
    model.train()
    for step in range(cfg.steps):
        x = torch.from_numpy(_sample_crops(features, cfg.batch, cfg.crop_frames, rng))
        recon, out, z = model(x)
        mse = torch.mean((recon - x) ** 2)
        loss = mse + commitment_loss(z, out.quantized, cfg.beta)
        check_finite("repcodec", float(loss), step, mse=float(mse))
        loss.backward()
        adamw_step(optimizer)
        reseeded = model.bottleneck.update_codebooks(out, generator)

        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            usage = model.bottleneck.usage(out.indices)
            log.record(step=step, loss=float(loss), mse=float(mse), lr=current_lr(optimizer),
                       perplexity=usage[0]["perplexity"], utilization=usage[0]["utilization"], reseeded=reseeded)
            logger.info(f"[{log.name}] step {step}/{cfg.steps} loss={float(loss):.5f} mse={float(mse):.5f} "
                        f"ppl={usage[0]['perplexity']:.1f} reseeded={reseeded}")
    model.eval()
    logger.info(f"Trained {log.name} in {time.time() - start_time:.1f}s")
    return model, log


@torch.no_grad()
def tokenize(model: RepCodecModel, features) -> TokenSequence:
    """T x D features to an n_layers x T token sequence."""
    x = as_float_tensor(features)
    if x.dim() != 2:
        raise ValueError(f"tokenize expects a T x D feature matrix, got shape {tuple(x.shape)}")
    indices = model.bottleneck.indices(x)
    return TokenSequence(indices.numpy(), (model.K,) * model.n_layers)


@torch.no_grad()
def tokenize_batch(model: RepCodecModel, features) -> np.ndarray:
    """N x T x D features to N x n_layers x T indices."""
    indices = model.bottleneck.indices(as_float_tensor(features))
    return indices.permute(1, 0, 2).numpy()


@torch.no_grad()
def reconstruct(model: RepCodecModel, features) -> Tuple[np.ndarray, float]:
    """Decoder output for the detokenized encoding and its mean squared error against the input."""
    x = as_float_tensor(features)
    recon, _, _ = model(x)
    mse = float(torch.mean((recon - x) ** 2))
    return recon.numpy(), mse
