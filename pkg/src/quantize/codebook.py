# src/quantize/codebook.py

import math
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)

# keeps the N x K x D distance block around 16 MB of float32
_DISTANCE_BLOCK = 1 << 22


class Codebook(nn.Module):
    """
    K x D code vectors with EMA statistics. Vectors live in buffers: they are moved by
    `ema_update`, never by the optimizer.
    """

    def __init__(self, K: int, D: int, decay: float = 0.99, eps: float = 1e-5, dead_threshold: float = 1e-3,
                 vectors: Optional[torch.Tensor] = None, generator: Optional[torch.Generator] = None):
        super().__init__()
        if K < 1:
            raise ValueError(f"codebook size must be >= 1, got {K}")
        if not 0.0 < decay < 1.0:
            raise ValueError(f"EMA decay must lie in (0, 1), got {decay}")
        if vectors is None:
            vectors = torch.randn(K, D, generator=generator)
        if vectors.shape != (K, D):
            raise ValueError(f"codebook vectors have shape {tuple(vectors.shape)}, expected ({K}, {D})")
        self.decay = decay
        self.eps = eps
        self.dead_threshold = dead_threshold
        self.register_buffer("vectors", vectors.detach().clone())
        self.register_buffer("ema_count", torch.ones(K, dtype=vectors.dtype))
        self.register_buffer("ema_sum", vectors.detach().clone())

    @property
    def K(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def D(self) -> int:
        return int(self.vectors.shape[1])

    @torch.no_grad()
    def init_from(self, x: torch.Tensor, generator: Optional[torch.Generator] = None) -> None:
        """Seeds the code vectors with K random rows of `x` (N x D)."""
        x = x.detach().reshape(-1, self.D).to(self.vectors.dtype)
        replace = x.shape[0] < self.K
        if replace:
            picks = torch.randint(0, x.shape[0], (self.K,), generator=generator)
        else:
            picks = torch.randperm(x.shape[0], generator=generator)[: self.K]
        self.vectors.copy_(x[picks])
        self.ema_sum.copy_(x[picks])
        self.ema_count.fill_(1.0)


def squared_distances(x: torch.Tensor, vectors: torch.Tensor) -> torch.Tensor:
    """Exact N x K squared Euclidean distances (no expansion trick, so ties are exact)."""
    return ((x.unsqueeze(1) - vectors.unsqueeze(0)) ** 2).sum(dim=-1)


def nearest_code(vectors: torch.Tensor, x: torch.Tensor):
    """
    Index of the closest code vector and its squared distance, ties to the lowest index.
    `x` is a single D vector (returns Python scalars) or any ... x D batch.
    """
    K, D = vectors.shape
    if x.shape[-1] != D:
        raise ValueError(f"nearest_code: input shape {tuple(x.shape)} does not match codebook shape {tuple(vectors.shape)}")
    single = x.dim() == 1
    flat = x.detach().reshape(-1, D).to(vectors.dtype)
    rows = max(1, _DISTANCE_BLOCK // max(1, K * D))
    indices, dists = [], []
    for start in range(0, flat.shape[0], rows):
        d = squared_distances(flat[start:start + rows], vectors)
        idx = torch.argmin(d, dim=1)
        indices.append(idx)
        dists.append(d.gather(1, idx.unsqueeze(1)).squeeze(1))
    index = torch.cat(indices) if indices else torch.zeros(0, dtype=torch.long)
    dist2 = torch.cat(dists) if dists else torch.zeros(0, dtype=vectors.dtype)
    if single:
        return int(index[0]), float(dist2[0])
    return index.reshape(x.shape[:-1]), dist2.reshape(x.shape[:-1])


class _StraightThrough(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, quantized):
        return quantized.clone()

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output, None


def straight_through(x: torch.Tensor, quantized: torch.Tensor) -> torch.Tensor:
    """Forward value is exactly `quantized`; the gradient reaches `x` unchanged."""
    return _StraightThrough.apply(x, quantized.detach())


@dataclass
class VQOutput:
    indices: torch.Tensor
    quantized: torch.Tensor
    residual2: torch.Tensor


@dataclass
class RVQOutput:
    indices: torch.Tensor            # L x ...
    quantized: torch.Tensor          # sum of stage code vectors, straight-through to x
    residual2: torch.Tensor          # after the final stage
    stage_inputs: List[torch.Tensor]
    stage_residuals: List[torch.Tensor]


def _quantize_stage(cb: Codebook, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    indices, dist2 = nearest_code(cb.vectors, x)
    return indices, cb.vectors[indices], dist2


def vq_forward(cb: Codebook, x: torch.Tensor) -> VQOutput:
    indices, code, dist2 = _quantize_stage(cb, x)
    return VQOutput(indices=indices, quantized=straight_through(x, code), residual2=dist2)


def rvq_forward(cbs: Sequence[Codebook], x: torch.Tensor) -> RVQOutput:
    """Stage i quantizes what stages < i left over; the code vectors are summed."""
    if not cbs:
        raise ValueError("rvq_forward needs at least one codebook")
    dims = {cb.D for cb in cbs}
    if len(dims) != 1:
        raise ValueError(f"all RVQ codebooks must share a dimension, got {sorted(dims)}")
    residual = x.detach()
    total = None
    indices, stage_inputs, stage_residuals = [], [], []
    for cb in cbs:
        stage_inputs.append(residual)
        idx, code, dist2 = _quantize_stage(cb, residual)
        total = code if total is None else total + code
        residual = residual - code
        indices.append(idx)
        stage_residuals.append(dist2)
    return RVQOutput(
        indices=torch.stack(indices),
        quantized=straight_through(x, total),
        residual2=stage_residuals[-1],
        stage_inputs=stage_inputs,
        stage_residuals=stage_residuals,
    )


@torch.no_grad()
def ema_update(cb: Codebook, x: torch.Tensor, assignments: torch.Tensor,
               generator: Optional[torch.Generator] = None) -> int:
    """
    One EMA step: count_k <- γ count_k + (1-γ) n_k, sum_k <- γ sum_k + (1-γ) Σ x,
    vector_k <- sum_k / Laplace-smoothed count_k. Codes whose count falls below the
    dead threshold are reseeded from random batch rows. Returns the number reseeded.
    """
    x = x.detach().reshape(-1, cb.D).to(cb.vectors.dtype)
    assignments = assignments.reshape(-1)
    if assignments.shape[0] != x.shape[0]:
        raise ValueError(f"{assignments.shape[0]} assignments for {x.shape[0]} vectors")
    if assignments.numel() and (assignments.min() < 0 or assignments.max() >= cb.K):
        raise IndexError(f"assignment outside [0, {cb.K})")
    gamma = cb.decay
    counts = torch.bincount(assignments, minlength=cb.K).to(cb.vectors.dtype)
    sums = torch.zeros_like(cb.ema_sum).index_add_(0, assignments, x)

    cb.ema_count.mul_(gamma).add_((1.0 - gamma) * counts)
    cb.ema_sum.mul_(gamma).add_((1.0 - gamma) * sums)
    total = cb.ema_count.sum()
    smoothed = (cb.ema_count + cb.eps) / (total + cb.K * cb.eps) * total
    cb.vectors.copy_(cb.ema_sum / smoothed.unsqueeze(1))

    dead = cb.ema_count < cb.dead_threshold
    n_dead = int(dead.sum())
    if n_dead and x.shape[0] > 0:
        picks = torch.randint(0, x.shape[0], (n_dead,), generator=generator)
        cb.vectors[dead] = x[picks]
        cb.ema_sum[dead] = x[picks]
        cb.ema_count[dead] = 1.0
        logger.debug(f"Reseeded {n_dead} dead codes")
    return n_dead


def commitment_loss(x: torch.Tensor, quantized: torch.Tensor, beta: float) -> torch.Tensor:
    """β · mean ||x - sg(quantized)||²."""
    return beta * torch.mean((x - quantized.detach()) ** 2)


def detokenize(cbs: Sequence[Codebook], indices: Union[torch.Tensor, np.ndarray]) -> torch.Tensor:
    """Per frame, the sum over layers of the selected code vectors (L x ... indices)."""
    indices = torch.as_tensor(np.asarray(indices) if isinstance(indices, np.ndarray) else indices, dtype=torch.long)
    if indices.shape[0] != len(cbs):
        raise ValueError(f"{indices.shape[0]} token layers but {len(cbs)} codebooks")
    total = None
    for layer, (cb, idx) in enumerate(zip(cbs, indices)):
        if idx.numel() and (int(idx.max()) >= cb.K or int(idx.min()) < 0):
            raise IndexError(f"token index {int(idx.max())} out of range for codebook of size {cb.K} at layer {layer}")
        code = cb.vectors[idx]
        total = code if total is None else total + code
    return total


@dataclass
class CodebookStats:
    utilization: float
    perplexity: float
    counts: np.ndarray


def codebook_stats(indices: Union[np.ndarray, torch.Tensor, Iterable], K: int) -> CodebookStats:
    """Fraction of codes used at least once and exp(entropy) of the empirical code distribution."""
    if isinstance(indices, torch.Tensor):
        flat = indices.detach().cpu().numpy().reshape(-1)
    elif isinstance(indices, np.ndarray):
        flat = indices.reshape(-1)
    else:
        parts = [np.asarray(a).reshape(-1) for a in indices]
        flat = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    if flat.size == 0:
        raise ValueError("codebook_stats: no indices given")
    counts = np.bincount(flat.astype(np.int64), minlength=K)
    probs = counts / counts.sum()
    nz = probs[probs > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    return CodebookStats(utilization=float((counts > 0).sum() / K), perplexity=math.exp(entropy), counts=counts)
