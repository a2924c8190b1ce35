# src/audio_tokenizers/registry.py

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import torch

from quantize import Codebook, KMeansModel, TokenSequence, detokenize
from utils.artifacts import read_json, write_json
from utils.errors import DataError
from .repcodec import RepCodecModel, tokenize as repcodec_tokenize, tokenize_batch as repcodec_tokenize_batch
from .suptok import SupTokTokenizer

logger = logging.getLogger(__name__)

KINDS = ("kmeans", "repcodec", "suptok", "acoustic-proxy")
# what each kind consumes: encoder features at `layer`, or raw frames
INPUTS = {"kmeans": "layer", "repcodec": "layer", "suptok": "frames", "acoustic-proxy": "frames"}
MANIFEST_FILE = "tokenizer.json"
KMEANS_FILE = "weights.ttwt"


@dataclass
class TokenizerBundle:
    """A trained tokenizer of any kind plus what it expects as input."""
    kind: str
    model: Any
    layer: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tokenizer kind '{self.kind}', expected one of {KINDS}")
        if self.input == "layer" and self.layer is None:
            raise ValueError(f"{self.kind} tokenizer needs the encoder layer it was fit on")

    @property
    def input(self) -> str:
        return INPUTS[self.kind]

    @property
    def input_dim(self) -> int:
        if isinstance(self.model, KMeansModel):
            return self.model.D
        return self.model.input_dim

    @property
    def K(self) -> int:
        return self.model.K

    @property
    def n_layers(self) -> int:
        return 1 if isinstance(self.model, KMeansModel) else self.model.n_layers

    def codebooks(self) -> List[Codebook]:
        if isinstance(self.model, KMeansModel):
            return [self.model.codebook()]
        return self.model.codebooks()

    def _check(self, features: np.ndarray) -> None:
        if features.shape[-1] != self.input_dim:
            raise DataError(f"{self.kind} tokenizer expects {self.input_dim}-dim inputs, "
                            f"got features of shape {features.shape}")

    def tokenize(self, features: np.ndarray) -> TokenSequence:
        self._check(features)
        if isinstance(self.model, KMeansModel):
            return self.model.tokenize(features)
        if isinstance(self.model, RepCodecModel):
            return repcodec_tokenize(self.model, features)
        return self.model.tokenize(features)

    def tokenize_batch(self, features: np.ndarray) -> np.ndarray:
        """N x T x D inputs to N x n_layers x T indices."""
        self._check(features)
        if isinstance(self.model, KMeansModel):
            return self.model.assign(features)[:, None, :]
        if isinstance(self.model, RepCodecModel):
            return repcodec_tokenize_batch(self.model, features)
        return self.model.tokenize_batch(features)

    @torch.no_grad()
    def detokenize(self, indices: Union[np.ndarray, TokenSequence]) -> np.ndarray:
        """Summed code vectors for n_layers x T (or N x n_layers x T) indices."""
        if isinstance(indices, TokenSequence):
            indices = indices.indices
        indices = np.asarray(indices)
        if indices.ndim == 3:
            indices = np.moveaxis(indices, 1, 0)
        return detokenize(self.codebooks(), indices).numpy()

    def describe(self) -> Dict:
        return {"kind": self.kind, "input": self.input, "layer": self.layer, "K": self.K,
                "n_layers": self.n_layers, "input_dim": self.input_dim}

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        if isinstance(self.model, KMeansModel):
            self.model.save(out_dir / KMEANS_FILE)
        else:
            self.model.save(out_dir)
        # written last: its presence marks a complete tokenizer directory
        write_json(out_dir / MANIFEST_FILE, self.describe())
        logger.info(f"Saved {self.kind} tokenizer to {out_dir}")


def load_tokenizer(path) -> TokenizerBundle:
    path = Path(path)
    meta = read_json(path / MANIFEST_FILE)
    kind = meta.get("kind")
    if kind == "kmeans":
        model = KMeansModel.load(path / KMEANS_FILE)
    elif kind in ("repcodec", "acoustic-proxy"):
        model = RepCodecModel.load(path)
    elif kind == "suptok":
        model = SupTokTokenizer.load(path)
    else:
        raise DataError(f"{path}: unknown tokenizer kind {kind!r}")
    return TokenizerBundle(kind=kind, model=model, layer=meta.get("layer"))
