# src/substrate/optim.py

import logging
from typing import Iterable, List, Optional, Tuple, Union

import torch
from torch import nn
from torch.optim.lr_scheduler import LambdaLR

logger = logging.getLogger(__name__)

ParamSource = Union[nn.Module, Iterable[torch.Tensor]]


def trainable_parameters(source: ParamSource) -> List[torch.Tensor]:
    params = source.parameters() if isinstance(source, nn.Module) else source
    return [p for p in params if p.requires_grad]


def build_adamw(source: ParamSource, lr: float, betas: Tuple[float, float] = (0.9, 0.999),
                eps: float = 1e-8, weight_decay: float = 0.0) -> torch.optim.AdamW:
    """AdamW over the trainable parameters only; frozen tensors are never registered."""
    params = trainable_parameters(source)
    if not params:
        raise ValueError("build_adamw: no trainable parameters")
    return torch.optim.AdamW(params, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)


def adamw_step(optimizer: torch.optim.Optimizer, scheduler: Optional[LambdaLR] = None) -> None:
    """One decoupled-weight-decay update, then clears gradients."""
    optimizer.step()
    if scheduler is not None:
        scheduler.step()
    optimizer.zero_grad(set_to_none=True)


def linear_decay(optimizer: torch.optim.Optimizer, total_steps: int) -> LambdaLR:
    """Linear decay from the initial learning rate to 0 over `total_steps`."""
    total_steps = max(1, int(total_steps))
    return LambdaLR(optimizer, lambda step: max(0.0, 1.0 - step / total_steps))


def current_lr(optimizer: torch.optim.Optimizer) -> float:
    return float(optimizer.param_groups[0]["lr"])
