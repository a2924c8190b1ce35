# src/corpus/generator.py
"""
Synthetic soundscape corpus: event prototypes placed on a timeline plus noise,
multi-hot tags, and five template captions per clip.
"""

import shutil
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.artifacts import write_features, write_json, write_jsonl
from utils.errors import ConfigError, DataError
from utils.progress import ProgressTracker, worker_count
from .classes import EventClass, build_event_classes

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
CAPTIONS_PER_CLIP = 5
# event phrase joiners: forward ordering reads "A then B", reverse ordering "B after A"
FORWARD_JOINERS = ("then", "followed by")
REVERSE_JOINERS = ("after",)


@dataclass
class CorpusConfig:
    S: int = 8
    n_train: int = 500
    n_val: int = 100
    n_test: int = 100
    duration_s: float = 10.0
    duration_jitter_s: float = 0.0
    frame_rate: int = 50
    F: int = 32
    noise_level: float = 0.1
    max_events_per_clip: int = 3
    class_offset: int = 0

    @property
    def n_clips(self) -> int:
        return self.n_train + self.n_val + self.n_test

    @property
    def frames_per_clip(self) -> int:
        return int(round(self.duration_s * self.frame_rate))

    def split_sizes(self) -> Dict[str, int]:
        return {"train": self.n_train, "val": self.n_val, "test": self.n_test}

    def validate(self) -> None:
        if self.S < 2:
            raise ConfigError(f"corpus needs at least 2 event classes (S={self.S})")
        if self.n_clips < 1:
            raise ConfigError("corpus needs at least one clip")
        if self.max_events_per_clip < 1 or self.max_events_per_clip > self.S:
            raise ConfigError(f"max_events_per_clip={self.max_events_per_clip} must lie in [1, S={self.S}]")
        if self.frames_per_clip < 1 or self.F < 1:
            raise ConfigError("duration_s * frame_rate and F must be positive")
        if not 0 <= self.duration_jitter_s < self.duration_s:
            raise ConfigError("duration_jitter_s must lie in [0, duration_s)")

    @classmethod
    def from_dict(cls, data: Dict) -> "CorpusConfig":
        known = {k: v for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Clip:
    id: str
    frames: np.ndarray
    tags: np.ndarray
    captions: List[str]
    event_timeline: List[Tuple[int, int]] = field(default_factory=list)
    duration_s: float = 0.0


def tag_vector(event_timeline: Sequence[Tuple[int, int]], S: int) -> np.ndarray:
    tags = np.zeros(S, dtype=np.int64)
    for event_id, _ in event_timeline:
        tags[event_id] = 1
    return tags


def render_frames(classes: Sequence[EventClass], event_timeline: Sequence[Tuple[int, int]], T: int, F: int,
                  noise_level: float, rng: np.random.Generator) -> np.ndarray:
    """Sums placed prototypes (truncated at T) and adds N(0, noise_level^2) noise."""
    frames = np.zeros((T, F), dtype=np.float64)
    for event_id, onset in event_timeline:
        proto = classes[event_id].prototype
        stop = min(T, onset + proto.shape[0])
        frames[onset:stop] += proto[: stop - onset]
    if noise_level > 0:
        frames += rng.normal(0.0, noise_level, size=(T, F))
    return frames.astype(np.float32)


def _event_phrase(event: EventClass, rng: np.random.Generator) -> str:
    noun = event.synonyms[int(rng.integers(0, len(event.synonyms)))]
    return f"a {noun} {event.verb}"


def make_captions(classes: Sequence[EventClass], event_timeline: Sequence[Tuple[int, int]],
                  rng: np.random.Generator, n: int = CAPTIONS_PER_CLIP) -> List[str]:
    """Template captions alternating forward ("A then B") and reverse ("B after A") orderings."""
    ordered = [classes[event_id] for event_id, _ in sorted(event_timeline, key=lambda e: (e[1], e[0]))]
    captions = []
    for i in range(n):
        phrases = [_event_phrase(event, rng) for event in ordered]
        if i % 2 == 0 or len(phrases) == 1:
            joiner = FORWARD_JOINERS[int(rng.integers(0, len(FORWARD_JOINERS)))]
            captions.append(f" {joiner} ".join(phrases))
        else:
            joiner = REVERSE_JOINERS[int(rng.integers(0, len(REVERSE_JOINERS)))]
            captions.append(f" {joiner} ".join(reversed(phrases)))
    return captions


def _split_code(split: str) -> int:
    return SPLITS.index(split) if split in SPLITS else len(SPLITS) + sum(map(ord, split))


def generate_clip(seed: int, cfg: CorpusConfig, classes: Sequence[EventClass], split: str, index: int) -> Clip:
    """One clip, fully determined by (seed, split, index)."""
    rng = np.random.default_rng([seed, _split_code(split), index])
    duration = cfg.duration_s - (rng.uniform(0.0, cfg.duration_jitter_s) if cfg.duration_jitter_s > 0 else 0.0)
    T = max(1, int(round(duration * cfg.frame_rate)))

    n_events = int(rng.integers(1, cfg.max_events_per_clip + 1))
    event_ids = rng.choice(cfg.S, size=n_events, replace=False)
    segment = max(1, T // n_events)
    timeline: List[Tuple[int, int]] = []
    for slot, event_id in enumerate(event_ids):
        length = classes[int(event_id)].n_frames
        start = min(slot * segment, T - 1)
        slack = max(0, segment - length)
        onset = min(start + int(rng.integers(0, slack + 1)), T - 1)
        timeline.append((int(event_id), int(onset)))

    frames = render_frames(classes, timeline, T, cfg.F, cfg.noise_level, rng)
    captions = make_captions(classes, timeline, rng)
    return Clip(
        id=f"{split}-{index:05d}",
        frames=frames,
        tags=tag_vector(timeline, cfg.S),
        captions=captions,
        event_timeline=timeline,
        duration_s=T / cfg.frame_rate,
    )


def generate_clips(seed: int, cfg: CorpusConfig, split: str, classes: Optional[Sequence[EventClass]] = None,
                   count: Optional[int] = None) -> List[Clip]:
    """In-memory generation of one split, parallel per clip."""
    cfg.validate()
    classes = classes or build_event_classes(seed, cfg.S, cfg.F, cfg.frame_rate, cfg.class_offset)
    count = cfg.split_sizes().get(split, 0) if count is None else count
    if count == 0:
        return []
    tracker = ProgressTracker(count, label=f"{split} clips")

    def work(index: int) -> Clip:
        clip = generate_clip(seed, cfg, classes, split, index)
        tracker.update()
        return clip

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(work, range(count)))


def generate_corpus(seed: int, cfg: CorpusConfig, out_dir, force: bool = False) -> Dict[str, int]:
    """
    Writes classes.json, corpus.json, one JSONL manifest per split and one AFEA feature
    file per clip under `out_dir`. Returns the clip count per split.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise DataError(f"Output directory {out_dir} already exists; pass --force to overwrite")
        logger.warning(f"Overwriting existing corpus at {out_dir}")
        shutil.rmtree(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)

    classes = build_event_classes(seed, cfg.S, cfg.F, cfg.frame_rate, cfg.class_offset)
    write_json(out_dir / "classes.json", [c.to_record() for c in classes])

    counts = {}
    for split in SPLITS:
        clips = generate_clips(seed, cfg, split, classes)
        records = []
        for clip in clips:
            rel_path = f"features/{clip.id}.afea"
            write_features(out_dir / rel_path, clip.frames)
            records.append({
                "id": clip.id,
                "path": rel_path,
                "duration_s": clip.duration_s,
                "tags": clip.tags.tolist(),
                "captions": clip.captions,
                "events": [list(e) for e in clip.event_timeline],
            })
        write_jsonl(out_dir / f"{split}.jsonl", records)
        counts[split] = len(records)
        logger.info(f"Wrote {len(records)} {split} clips to {out_dir}")

    # corpus.json is written last: its presence marks a complete corpus
    write_json(out_dir / "corpus.json", {"seed": seed, "config": asdict(cfg), "counts": counts})
    return counts
