# src/substrate/checkpoint.py
"""
TTWT weight files: magic "TTWT", u32 version, then one record per tensor until EOF:
u32 name length, name bytes (utf-8), u32 rank, rank x u64 dims, float32 LE values.
"""

import struct
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Mapping, Union

import numpy as np
import torch
from torch import nn

from utils.artifacts import atomic_write
from utils.errors import DataError

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"TTWT"
WEIGHTS_VERSION = 1


def save_weights(path: Union[str, Path], tensors: Mapping[str, Union[torch.Tensor, np.ndarray]]) -> None:
    with atomic_write(path) as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<I", WEIGHTS_VERSION))
        for name, value in tensors.items():
            if isinstance(value, torch.Tensor):
                value = value.detach().cpu().numpy()
            array = np.ascontiguousarray(value, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", array.ndim))
            if array.ndim:
                f.write(struct.pack(f"<{array.ndim}Q", *array.shape))
            f.write(array.tobytes())
    logger.debug(f"Saved {len(tensors)} tensors to {path}")


def load_weights(path: Union[str, Path]) -> "OrderedDict[str, np.ndarray]":
    path = Path(path)
    if not path.exists():
        raise DataError(f"Missing weights file: {path}")
    data = path.read_bytes()
    if data[:4] != WEIGHTS_MAGIC:
        raise DataError(f"{path} is not a TTWT weights file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != WEIGHTS_VERSION:
        raise DataError(f"{path}: unsupported weights version {version}")
    offset = 8
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    try:
        while offset < len(data):
            (name_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", data, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}Q", data, offset) if rank else ()
            offset += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            tensors[name] = values.reshape(shape).astype(np.float32)
    except (struct.error, ValueError) as e:
        raise DataError(f"Truncated or corrupt weights file {path}: {e}") from e
    return tensors


def save_module(path: Union[str, Path], module: nn.Module) -> None:
    save_weights(path, module.state_dict())


def load_module(module: nn.Module, path: Union[str, Path]) -> nn.Module:
    """Loads TTWT weights into `module`, keeping each tensor's existing dtype."""
    tensors = load_weights(path)
    state = module.state_dict()
    missing = sorted(set(state) - set(tensors))
    unexpected = sorted(set(tensors) - set(state))
    if missing or unexpected:
        raise DataError(f"{path}: weights do not match model (missing {missing}, unexpected {unexpected})")
    for name, current in state.items():
        value = torch.from_numpy(tensors[name].copy())
        if value.shape != current.shape:
            raise DataError(f"{path}: '{name}' has shape {tuple(value.shape)}, model expects {tuple(current.shape)}")
        state[name] = value.to(current.dtype)
    module.load_state_dict(state)
    return module
