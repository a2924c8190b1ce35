# src/captioning/decoding.py
"""
Beam search and greedy decoding over any model exposing

    start(audio) -> state
    next_log_probs(state, prefixes) -> n x V log-probabilities

where each prefix starts with bos. Scores are summed log-probabilities with no length
normalisation; ties go to the lower beam index, then the lower token id.
"""

from dataclasses import dataclass, field
from typing import Any, List, Protocol

import numpy as np
import torch

from .text import BOS, EOS


class Decodable(Protocol):
    def start(self, audio: Any) -> Any: ...

    def next_log_probs(self, state: Any, prefixes: List[List[int]]) -> Any: ...


@dataclass
class BeamHypothesis:
    tokens: List[int]       # generated ids, bos excluded, eos included when finished
    log_prob: float
    finished: bool = False


@dataclass
class BeamResult:
    best: BeamHypothesis
    # every hypothesis retired with eos, in retirement order
    finished: List[BeamHypothesis] = field(default_factory=list)


def _as_numpy(log_probs) -> np.ndarray:
    if isinstance(log_probs, torch.Tensor):
        log_probs = log_probs.detach().to(torch.float64).cpu().numpy()
    return np.asarray(log_probs, dtype=np.float64)


def _check(beam_size: int, max_len: int) -> None:
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")


def beam_search(model: Decodable, audio: Any, beam_size: int = 3, max_len: int = 30,
                bos: int = BOS, eos: int = EOS) -> BeamResult:
    """
    Each step keeps the `beam_size` best extensions of the live hypotheses. Extensions
    ending in eos are retired; the search stops when nothing is alive, when the best
    retired score is at least the best live score, or at `max_len`. Returns the best
    retired hypothesis, else the best live one.
    """
    _check(beam_size, max_len)
    state = model.start(audio)
    alive = [BeamHypothesis(tokens=[], log_prob=0.0)]
    finished: List[BeamHypothesis] = []

    for _ in range(max_len):
        log_probs = _as_numpy(model.next_log_probs(state, [[bos] + h.tokens for h in alive]))
        cumulative = np.array([h.log_prob for h in alive], dtype=np.float64)
        scores = cumulative[:, None] + log_probs
        # stable sort on the flattened (beam, token) order gives the tie-breaking rule
        order = np.argsort(-scores.reshape(-1), kind="stable")[:beam_size]
        V = scores.shape[1]

        next_alive = []
        for flat in order:
            beam, token = divmod(int(flat), V)
            hyp = BeamHypothesis(tokens=alive[beam].tokens + [token], log_prob=float(scores[beam, token]),
                                 finished=token == eos)
            (finished if hyp.finished else next_alive).append(hyp)
        alive = next_alive
        if not alive:
            break
        if finished and max(h.log_prob for h in finished) >= alive[0].log_prob:
            break

    if finished:
        best = max(finished, key=lambda h: h.log_prob)
    else:
        best = alive[0]
    return BeamResult(best=best, finished=finished)


def greedy_decode(model: Decodable, audio: Any, max_len: int = 30, bos: int = BOS, eos: int = EOS) -> BeamHypothesis:
    """Takes the arg-max extension of the running score at every step."""
    _check(1, max_len)
    state = model.start(audio)
    tokens: List[int] = []
    total = 0.0
    for _ in range(max_len):
        scores = total + _as_numpy(model.next_log_probs(state, [[bos] + tokens]))[0]
        token = int(np.argmax(scores))
        total = float(scores[token])
        tokens.append(token)
        if token == eos:
            return BeamHypothesis(tokens=tokens, log_prob=total, finished=True)
    return BeamHypothesis(tokens=tokens, log_prob=total, finished=False)
