# src/captioning/text.py
"""Caption normalisation and the word-level vocabulary."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

from utils.artifacts import read_json, write_json
from utils.errors import DataError

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")
PUNCTUATION = ".,!?;:'\"()-"
_STRIP = str.maketrans("", "", PUNCTUATION)


def normalize_words(caption: str) -> List[str]:
    """Lowercase, drop punctuation, split on whitespace. May return an empty list."""
    return caption.lower().translate(_STRIP).split()


def normalize_caption(caption: str) -> List[str]:
    words = normalize_words(caption)
    if not words:
        raise ValueError(f"caption {caption!r} is empty after normalisation")
    return words


@dataclass
class TextVocab:
    words: List[str]
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if list(self.words[:len(SPECIALS)]) != list(SPECIALS):
            self.words = list(SPECIALS) + [w for w in self.words if w not in SPECIALS]
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("vocabulary words must be distinct")

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, caption: str, wrap: bool = True) -> List[int]:
        ids = [self.index.get(w, UNK) for w in normalize_caption(caption)]
        return [BOS] + ids + [EOS] if wrap else ids

    def decode(self, ids: Iterable[int]) -> str:
        """Words up to the first eos; bos and pad are skipped."""
        words = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (BOS, PAD):
                continue
            words.append(self.words[i] if 0 <= i < len(self.words) else SPECIALS[UNK])
        return " ".join(words)

    def save(self, path) -> None:
        write_json(path, {"words": self.words})

    @classmethod
    def load(cls, path) -> "TextVocab":
        data = read_json(path)
        if "words" not in data:
            raise DataError(f"{path} is not a vocabulary file")
        return cls(list(data["words"]))


def build_text_vocab(captions: Iterable[str]) -> TextVocab:
    """Specials first, then the distinct normalised words in sorted order."""
    words = set()
    for caption in captions:
        words.update(normalize_caption(caption))
    vocab = TextVocab(sorted(words))
    logger.debug(f"Built caption vocabulary of {len(vocab)} entries")
    return vocab


def tokenize_caption(vocab: TextVocab, caption: str) -> List[int]:
    return vocab.encode(caption)


def detokenize_caption(vocab: TextVocab, ids: Sequence[int]) -> str:
    return vocab.decode(ids)
