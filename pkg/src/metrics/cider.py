# src/metrics/cider.py
"""
CIDEr-D: TF-IDF weighted n-gram (n = 1..4) cosine between candidate and references,
with clipped candidate weights and a Gaussian length penalty; averaged over n and
references, scaled by 10. Document frequencies come from the evaluated reference set; a
single-clip evaluation has no usable document frequencies and weights every n-gram by 1.
An n-gram found in every clip weighs 0, and a caption of w < 4 words scores at most 10 * w / 4.
"""

import math
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from captioning.text import normalize_words

logger = logging.getLogger(__name__)

MAX_N = 4
SIGMA = 6.0
SCALE = 10.0

NGram = Tuple[str, ...]


def ngram_counts(words: Sequence[str], max_n: int = MAX_N) -> List[Counter]:
    """Term frequencies of every n-gram, one Counter per n."""
    return [Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1)) for n in range(1, max_n + 1)]


@dataclass
class NGramStats:
    """Per-clip n-gram term frequencies plus document frequencies over the reference sets."""
    candidates: List[List[Counter]]
    references: List[List[List[Counter]]]
    candidate_lengths: List[int]
    reference_lengths: List[List[int]]
    document_frequency: Counter = field(default_factory=Counter)

    @property
    def n_documents(self) -> int:
        return len(self.references)

    @classmethod
    def build(cls, candidates: Sequence[str], references: Sequence[Sequence[str]], max_n: int = MAX_N) -> "NGramStats":
        cand_words = [normalize_words(c) for c in candidates]
        ref_words = [[normalize_words(r) for r in refs] for refs in references]
        df: Counter = Counter()
        for refs in ref_words:
            seen = set()
            for words in refs:
                for counts in ngram_counts(words, max_n):
                    seen.update(counts)
            df.update(seen)
        return cls(
            candidates=[ngram_counts(w, max_n) for w in cand_words],
            references=[[ngram_counts(w, max_n) for w in refs] for refs in ref_words],
            candidate_lengths=[len(w) for w in cand_words],
            reference_lengths=[[len(w) for w in refs] for refs in ref_words],
            document_frequency=df,
        )

    def idf(self, gram: NGram) -> float:
        if self.n_documents < 2:
            return 1.0
        return math.log(float(self.n_documents)) - math.log(max(1.0, self.document_frequency[gram]))

    def tfidf(self, counts: List[Counter]) -> Tuple[List[Dict[NGram, float]], List[float]]:
        vectors, norms = [], []
        for per_n in counts:
            vec = {g: tf * self.idf(g) for g, tf in per_n.items()}
            vectors.append(vec)
            norms.append(math.sqrt(sum(v * v for v in vec.values())))
        return vectors, norms


def _similarity(vec_c, norm_c, len_c, vec_r, norm_r, len_r) -> np.ndarray:
    delta = float(len_c - len_r)
    penalty = math.exp(-(delta ** 2) / (2 * SIGMA ** 2))
    sims = np.zeros(len(vec_c))
    for n, (vc, vr) in enumerate(zip(vec_c, vec_r)):
        overlap = sum(min(w, vr[g]) * vr[g] for g, w in vc.items() if g in vr)
        if norm_c[n] != 0 and norm_r[n] != 0:
            sims[n] = overlap / (norm_c[n] * norm_r[n])
        sims[n] *= penalty
    return sims


@dataclass
class CiderResult:
    score: float
    per_clip: List[float]


def cider_d(candidates: Sequence[str], references: Sequence[Sequence[str]]) -> CiderResult:
    """Corpus CIDEr-D (mean of the per-clip scores) for one candidate per clip."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates for {len(references)} reference sets")
    for i, refs in enumerate(references):
        if not refs:
            raise ValueError(f"clip {i} has no reference captions")
    if not candidates:
        return CiderResult(score=0.0, per_clip=[])
    if len(candidates) == 1:
        logger.warning("CIDEr-D over a single clip: document frequencies are undefined, using unit IDF")

    stats = NGramStats.build(candidates, references)
    per_clip = []
    for i, counts in enumerate(stats.candidates):
        if stats.candidate_lengths[i] == 0:
            logger.warning(f"Empty candidate caption for clip {i}; scoring 0")
            per_clip.append(0.0)
            continue
        vec_c, norm_c = stats.tfidf(counts)
        total = np.zeros(MAX_N)
        for ref_counts, len_r in zip(stats.references[i], stats.reference_lengths[i]):
            vec_r, norm_r = stats.tfidf(ref_counts)
            total += _similarity(vec_c, norm_c, stats.candidate_lengths[i], vec_r, norm_r, len_r)
        per_clip.append(float(np.mean(total) / len(stats.references[i]) * SCALE))
    return CiderResult(score=float(np.mean(per_clip)), per_clip=per_clip)
