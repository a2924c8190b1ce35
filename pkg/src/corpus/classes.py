# src/corpus/classes.py

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# (name, synonyms, verb). Names, synonyms and verbs are disjoint across entries and
# never collide with the caption template words.
EVENT_VOCABULARY: List[Tuple[str, Tuple[str, ...], str]] = [
    ("dog", ("dog", "hound", "puppy"), "barks"),
    ("cat", ("cat", "kitten", "feline"), "meows"),
    ("car", ("car", "vehicle", "automobile"), "passes"),
    ("bird", ("bird", "songbird", "sparrow"), "chirps"),
    ("rain", ("rain", "drizzle", "downpour"), "falls"),
    ("bell", ("bell", "chime", "gong"), "rings"),
    ("baby", ("baby", "infant", "toddler"), "cries"),
    ("door", ("door", "gate", "hatch"), "slams"),
    ("engine", ("engine", "motor", "generator"), "hums"),
    ("siren", ("siren", "alarm", "klaxon"), "wails"),
    ("crowd", ("crowd", "audience", "spectators"), "cheers"),
    ("water", ("water", "stream", "brook"), "flows"),
    ("wind", ("wind", "breeze", "gust"), "blows"),
    ("phone", ("phone", "telephone", "cellphone"), "buzzes"),
    ("train", ("train", "locomotive", "tram"), "rumbles"),
    ("hammer", ("hammer", "mallet", "sledgehammer"), "pounds"),
    ("clock", ("clock", "timer", "metronome"), "ticks"),
    ("frog", ("frog", "toad", "bullfrog"), "croaks"),
    ("horse", ("horse", "pony", "stallion"), "neighs"),
    ("thunder", ("thunder", "thunderclap", "storm"), "roars"),
    ("drill", ("drill", "jackhammer", "grinder"), "whirs"),
    ("cow", ("cow", "cattle", "calf"), "moos"),
    ("whistle", ("whistle", "flute", "recorder"), "shrills"),
    ("keyboard", ("keyboard", "typewriter", "keypad"), "clicks"),
]


@dataclass
class EventClass:
    """A synthetic sound class: a fixed frames x bins spectral pattern plus caption words."""
    id: int
    name: str
    prototype: np.ndarray
    synonyms: List[str] = field(default_factory=list)
    verb: str = ""

    @property
    def n_frames(self) -> int:
        return int(self.prototype.shape[0])

    @property
    def words(self) -> set:
        return set(self.synonyms) | {self.name}

    def to_record(self) -> Dict:
        return {"id": self.id, "name": self.name, "synonyms": list(self.synonyms), "verb": self.verb,
                "n_frames": self.n_frames}


def make_prototype(seed: int, vocab_index: int, F: int, frame_rate: int,
                   min_seconds: float = 1.0, max_seconds: float = 2.5) -> np.ndarray:
    """Deterministic k_e x F pattern: a sparse spectral profile under a modulated envelope."""
    rng = np.random.default_rng([seed, vocab_index, 7919])
    k_e = int(rng.integers(max(1, round(min_seconds * frame_rate)), max(2, round(max_seconds * frame_rate)) + 1))

    active = rng.random(F) < 0.35
    active[rng.integers(0, F)] = True
    profile = active * rng.uniform(0.5, 1.5, F)
    # a couple of harmonic ridges make classes with similar sparse masks separable
    base = int(rng.integers(1, max(2, F // 4)))
    profile[base::base * 2] += 0.5

    t = np.linspace(0.0, 1.0, k_e)
    attack = float(rng.uniform(0.05, 0.4))
    envelope = np.minimum(t / attack, 1.0) * np.exp(-rng.uniform(0.5, 3.0) * t)
    modulation = 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(1.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    return np.outer(envelope * modulation, profile).astype(np.float32)


def build_event_classes(seed: int, S: int, F: int, frame_rate: int, class_offset: int = 0) -> List[EventClass]:
    """S classes drawn from the vocabulary starting at `class_offset` (disjoint sets give OD corpora)."""
    if S < 2:
        raise ValueError(f"need at least 2 event classes, got S={S}")
    if class_offset + S > len(EVENT_VOCABULARY):
        raise ValueError(f"only {len(EVENT_VOCABULARY)} event classes available, "
                         f"requested {S} from offset {class_offset}")
    classes = []
    for local_id in range(S):
        vocab_index = class_offset + local_id
        name, synonyms, verb = EVENT_VOCABULARY[vocab_index]
        classes.append(EventClass(
            id=local_id,
            name=name,
            prototype=make_prototype(seed, vocab_index, F, frame_rate),
            synonyms=list(synonyms),
            verb=verb,
        ))
    logger.debug(f"Built {S} event classes from offset {class_offset}: {[c.name for c in classes]}")
    return classes
