# src/substrate/layers.py
"""
Dense, convolution, embedding and loss primitives.

Weight layouts follow the math rather than torch's conventions: a dense weight is
Din x Dout and a convolution kernel is k x Din x Dout. Sequences are T x D
(optionally with a leading batch axis).
"""

import math
import logging
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

logger = logging.getLogger(__name__)


def make_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator


def uniform_init_(tensor: torch.Tensor, fan_in: int, fan_out: int, generator: torch.Generator) -> torch.Tensor:
    """Fills `tensor` from U(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        tensor.uniform_(-bound, bound, generator=generator)
    return tensor


def linear(x: torch.Tensor, W: torch.Tensor, b: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Row-wise affine map x @ W + b."""
    if W.dim() != 2 or x.shape[-1] != W.shape[0]:
        raise ValueError(f"linear: input shape {tuple(x.shape)} does not conform to weight shape {tuple(W.shape)}")
    if b is not None and b.shape != (W.shape[1],):
        raise ValueError(f"linear: bias shape {tuple(b.shape)} does not conform to weight shape {tuple(W.shape)}")
    out = x @ W
    return out + b if b is not None else out


def conv_output_length(T: int, kernel_size: int, stride: int, padding: int = 0) -> int:
    return (T + 2 * padding - kernel_size) // stride + 1


def conv1d(x: torch.Tensor, kernel: torch.Tensor, stride: int = 1,
           bias: Optional[torch.Tensor] = None, padding: int = 0) -> torch.Tensor:
    """
    1-D convolution over the time axis of a T x Din (or B x T x Din) sequence.
    Output length is floor((T + 2*padding - k) / stride) + 1.
    """
    if kernel.dim() != 3 or x.shape[-1] != kernel.shape[1]:
        raise ValueError(f"conv1d: input shape {tuple(x.shape)} does not conform to kernel shape {tuple(kernel.shape)}")
    k = kernel.shape[0]
    T = x.shape[-2]
    if T + 2 * padding < k:
        raise ValueError(f"conv1d: sequence length {T} is shorter than kernel size {k}")
    squeeze = x.dim() == 2
    if squeeze:
        x = x.unsqueeze(0)
    out = F.conv1d(x.transpose(1, 2), kernel.permute(2, 1, 0), bias, stride=stride, padding=padding)
    out = out.transpose(1, 2)
    return out.squeeze(0) if squeeze else out


def softmax_cross_entropy(logits: torch.Tensor, targets: torch.Tensor, ignore_index: Optional[int] = None) -> torch.Tensor:
    """Mean negative log-likelihood of `targets` under softmax(logits), skipping `ignore_index`."""
    V = logits.shape[-1]
    kwargs = {"ignore_index": ignore_index} if ignore_index is not None else {}
    return F.cross_entropy(logits.reshape(-1, V), targets.reshape(-1), **kwargs)


class Linear(nn.Module):
    def __init__(self, d_in: int, d_out: int, generator: torch.Generator, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(uniform_init_(torch.empty(d_in, d_out), d_in, d_out, generator))
        self.bias = nn.Parameter(torch.zeros(d_out)) if bias else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return linear(x, self.weight, self.bias)


class Conv1d(nn.Module):
    def __init__(self, d_in: int, d_out: int, kernel_size: int, generator: torch.Generator,
                 stride: int = 1, padding: int = 0):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.weight = nn.Parameter(uniform_init_(torch.empty(kernel_size, d_in, d_out),
                                                 kernel_size * d_in, kernel_size * d_out, generator))
        self.bias = nn.Parameter(torch.zeros(d_out))

    def output_length(self, T: int) -> int:
        return conv_output_length(T, self.kernel_size, self.stride, self.padding)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return conv1d(x, self.weight, self.stride, self.bias, self.padding)


class Embedding(nn.Embedding):
    """nn.Embedding with seeded uniform initialisation."""

    def __init__(self, num_embeddings: int, dim: int, generator: torch.Generator):
        super().__init__(num_embeddings, dim)
        uniform_init_(self.weight, num_embeddings, dim, generator)


class ResidualConvBlock(nn.Module):
    """x + conv(gelu(conv(x))) with kernel 3, stride 1 and same-length padding."""

    def __init__(self, width: int, generator: torch.Generator, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = Conv1d(width, width, kernel_size, generator, padding=pad)
        self.conv2 = Conv1d(width, width, kernel_size, generator, padding=pad)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.gelu(self.conv1(x)))


def sinusoidal_positions(T: int, D: int, dtype=torch.float32) -> torch.Tensor:
    position = torch.arange(T, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, D, 2, dtype=torch.float64) * (-math.log(10000.0) / D))
    table = torch.zeros(T, D, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div)[:, : D // 2]
    return table.to(dtype)
