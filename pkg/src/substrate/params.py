# src/substrate/params.py
"""Freezing helpers and the bit-exact checks behind the frozen-parameter contracts."""

from typing import Dict

import torch
from torch import nn


def freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()
    return module


def snapshot(module: nn.Module) -> Dict[str, torch.Tensor]:
    return {name: p.detach().clone() for name, p in module.state_dict().items()}


def unchanged_since(module: nn.Module, before: Dict[str, torch.Tensor]) -> bool:
    after = module.state_dict()
    if after.keys() != before.keys():
        return False
    return all(torch.equal(after[name], before[name]) for name in before)


def assert_no_gradient(module: nn.Module, what: str) -> None:
    """Hard failure if any parameter of a frozen component carries a gradient."""
    for name, p in module.named_parameters():
        if p.requires_grad:
            raise AssertionError(f"{what}: parameter '{name}' is trainable but must be frozen")
        if p.grad is not None and torch.any(p.grad != 0):
            raise AssertionError(f"{what}: parameter '{name}' received a gradient")
