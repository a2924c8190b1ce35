# src/corpus/store.py

import logging
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Hashable, List, Tuple

import numpy as np

from utils.artifacts import read_features, read_json, read_jsonl
from utils.errors import DataError
from .encoder import FrozenEncoder, encode_all_layers, encode, pad_or_truncate
from .generator import SPLITS, CorpusConfig

logger = logging.getLogger(__name__)


@dataclass
class ClipRecord:
    id: str
    path: Path
    duration_s: float
    tags: np.ndarray
    captions: List[str]
    events: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def has_tags(self) -> bool:
        return self.tags.size > 0


def load_manifest(path) -> List[ClipRecord]:
    """Reads a JSONL manifest; feature paths are resolved relative to the manifest."""
    path = Path(path)
    records = []
    for raw in read_jsonl(path):
        missing = [key for key in ("id", "path", "captions") if key not in raw]
        if missing:
            raise DataError(f"{path}: record {raw.get('id', '?')} lacks {missing}")
        records.append(ClipRecord(
            id=raw["id"],
            path=(path.parent / raw["path"]).resolve(),
            duration_s=float(raw.get("duration_s", 0.0)),
            tags=np.asarray(raw.get("tags") or [], dtype=np.int64),
            captions=list(raw["captions"]),
            events=[tuple(e) for e in raw.get("events", [])],
        ))
    return records


class Corpus:
    """
    A generated corpus directory: manifests, feature files and a per-layer feature cache.
    Thread-safe for concurrent readers.
    """

    def __init__(self, root):
        self.root = Path(root)
        meta_path = self.root / "corpus.json"
        if not meta_path.exists():
            raise DataError(f"{self.root} is not a complete corpus (corpus.json missing)")
        meta = read_json(meta_path)
        self.seed = int(meta["seed"])
        self.config = CorpusConfig.from_dict(meta["config"])
        self.classes = read_json(self.root / "classes.json")
        self.splits: Dict[str, List[ClipRecord]] = {}
        for split in SPLITS:
            manifest = self.manifest_path(split)
            self.splits[split] = load_manifest(manifest) if manifest.exists() else []
        self._frames: Dict[str, np.ndarray] = {}
        self._layers: Dict[Hashable, np.ndarray] = {}
        self._lock = threading.Lock()
        logger.info(f"Loaded corpus {self.root}: " + ", ".join(f"{k}={len(v)}" for k, v in self.splits.items()))

    @property
    def target_T(self) -> int:
        return self.config.frames_per_clip

    @property
    def S(self) -> int:
        return self.config.S

    def records(self, split: str) -> List[ClipRecord]:
        if split not in self.splits:
            raise DataError(f"unknown split '{split}'")
        return self.splits[split]

    def manifest_path(self, split: str) -> Path:
        return self.root / f"{split}.jsonl"

    def frames(self, split: str) -> np.ndarray:
        """N x target_T x F raw frames, zero-padded or truncated to the fixed length."""
        with self._lock:
            if split not in self._frames:
                stacked = [pad_or_truncate(read_features(r.path), self.target_T) for r in self.records(split)]
                if not stacked:
                    raise DataError(f"split '{split}' of {self.root} is empty")
                self._frames[split] = np.stack(stacked)
            return self._frames[split]

    def tags(self, split: str) -> np.ndarray:
        records = self.records(split)
        if not records or not all(r.has_tags for r in records):
            raise DataError(f"split '{split}' of {self.root} has clips without tags")
        return np.stack([r.tags for r in records])

    def captions(self, split: str) -> List[List[str]]:
        return [r.captions for r in self.records(split)]

    def ids(self, split: str) -> List[str]:
        return [r.id for r in self.records(split)]

    @staticmethod
    def _cache_key(split: str, encoder: FrozenEncoder, layer: int) -> Hashable:
        return split, tuple(sorted(asdict(encoder.cfg).items())), layer

    def layer_features(self, split: str, encoder: FrozenEncoder, layer: int, batch_size: int = 32) -> np.ndarray:
        """N x T x D encoder features at `layer`, cached per (split, encoder config, layer)."""
        key = self._cache_key(split, encoder, layer)
        with self._lock:
            cached = self._layers.get(key)
        if cached is not None:
            return cached
        frames = self.frames(split)
        outputs = [encode(encoder, frames[i:i + batch_size], layer) for i in range(0, len(frames), batch_size)]
        features = np.concatenate(outputs, axis=0)
        with self._lock:
            self._layers[key] = features
        logger.debug(f"Encoded {split} at layer {layer}: {features.shape}")
        return features

    def all_layer_features(self, split: str, encoder: FrozenEncoder, batch_size: int = 32) -> List[np.ndarray]:
        """Every layer at once, filling the cache; used by layer sweeps."""
        frames = self.frames(split)
        per_batch = [encode_all_layers(encoder, frames[i:i + batch_size]) for i in range(0, len(frames), batch_size)]
        layers = [np.concatenate([b[l] for b in per_batch], axis=0) for l in range(encoder.n_layers)]
        with self._lock:
            for l, features in enumerate(layers, 1):
                self._layers[self._cache_key(split, encoder, l)] = features
        return layers
