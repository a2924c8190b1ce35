# src/metrics/words.py

from typing import Iterable

from captioning.text import normalize_words


def unique_words(captions: Iterable[str]) -> int:
    """#Words: size of the vocabulary used across all generated captions."""
    vocabulary = set()
    for caption in captions:
        vocabulary.update(normalize_words(caption))
    return len(vocabulary)
