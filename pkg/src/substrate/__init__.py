"""Differentiable building blocks shared by every model in toktide."""

from .layers import (Conv1d, Embedding, Linear, ResidualConvBlock, conv1d, conv_output_length, linear,
                     make_generator, sinusoidal_positions, softmax_cross_entropy, uniform_init_)
from .attention import CAUSAL, FeedForward, MultiHeadAttention, TransformerBlock, causal_mask, multi_head_attention
from .optim import adamw_step, build_adamw, current_lr, linear_decay, trainable_parameters
from .params import assert_no_gradient, freeze, snapshot, unchanged_since
from .gradcheck import grad_check
from .checkpoint import load_module, load_weights, save_module, save_weights
from .logbook import TrainingLog, check_finite

__all__ = [
    "CAUSAL", "Conv1d", "TrainingLog", "check_finite", "Embedding", "FeedForward", "Linear", "MultiHeadAttention", "ResidualConvBlock",
    "TransformerBlock", "adamw_step", "assert_no_gradient", "build_adamw", "causal_mask", "conv1d",
    "conv_output_length", "current_lr", "freeze", "grad_check", "linear", "linear_decay", "load_module",
    "load_weights", "make_generator", "multi_head_attention", "save_module", "save_weights", "sinusoidal_positions",
    "snapshot", "softmax_cross_entropy", "trainable_parameters", "unchanged_since", "uniform_init_",
]
