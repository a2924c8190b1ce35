# src/substrate/gradcheck.py

import logging
import math
from typing import Callable, Optional, Sequence

import torch

from utils.errors import NumericalError

logger = logging.getLogger(__name__)


def grad_check(fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], eps: float = 1e-6,
               floor: float = 1e-4, max_elements: Optional[int] = None, seed: int = 0) -> float:
    """
    Maximum relative error between autograd gradients of the scalar `fn()` and central
    differences (f(θ+ε) - f(θ-ε)) / 2ε, taken elementwise over `params`.

    Relative error is |a - n| / max(|a|, |n|, floor). Parameters must be float64.
    `max_elements` samples that many coordinates per tensor (seeded) for large tensors.
    """
    params = list(params)
    for p in params:
        if p.dtype != torch.float64:
            raise ValueError(f"grad_check needs float64 parameters, got {p.dtype}")

    loss = fn()
    if loss.numel() != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {tuple(loss.shape)}")
    if not torch.isfinite(loss):
        raise NumericalError(f"grad_check: function value is not finite ({loss.item()})")
    grads = torch.autograd.grad(loss, params, allow_unused=True)

    rng = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            analytic = torch.zeros_like(p) if g is None else g
            flat = p.data.view(-1)
            coords = range(flat.numel())
            if max_elements is not None and flat.numel() > max_elements:
                coords = torch.randperm(flat.numel(), generator=rng)[:max_elements].tolist()
            for i in coords:
                original = flat[i].item()
                flat[i] = original + eps
                f_plus = fn().item()
                flat[i] = original - eps
                f_minus = fn().item()
                flat[i] = original
                numeric = (f_plus - f_minus) / (2 * eps)
                a = analytic.reshape(-1)[i].item()
                if not (math.isfinite(numeric) and math.isfinite(a)):
                    raise NumericalError(f"grad_check: non-finite gradient at element {i} (analytic {a}, numeric {numeric})")
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                worst = max(worst, err)
    logger.debug(f"grad_check over {len(params)} tensors: max relative error {worst:.3e}")
    return worst
