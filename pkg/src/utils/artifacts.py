# src/utils/artifacts.py
"""
On-disk artifact helpers: atomic writes with a `.partial` marker, JSON/JSONL,
and the little-endian binary containers used for features and tokens.
"""

import io
import os
import json
import struct
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Sequence, Union

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

PARTIAL_SUFFIX = ".partial"

FEATURE_MAGIC = b"AFEA"
FEATURE_VERSION = 1
TOKEN_MAGIC = b"ATOK"
TOKEN_VERSION = 1

PathLike = Union[str, Path]


def partial_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + PARTIAL_SUFFIX)


@contextmanager
def atomic_write(path: PathLike, mode: str = "wb") -> Iterator[io.IOBase]:
    """
    Writes to `<path>.partial` and renames over `path` on success.
    On failure the `.partial` file is left behind as the marker of an incomplete artifact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = partial_path(path)
    kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": "\n"}
    with open(tmp, mode, **kwargs) as f:
        yield f
        f.flush()
    os.replace(tmp, path)
    logger.debug(f"Wrote {path}")


def write_json(path: PathLike, data: Any) -> None:
    with atomic_write(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def read_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Missing JSON file: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Malformed JSON in {path}: {e}") from e


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> int:
    count = 0
    with atomic_write(path, "w") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            f.write("\n")
            count += 1
    return count


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Missing JSONL file: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"Malformed record at {path}:{line_no}: {e}") from e
    return records


def _read_exact(f, n: int, path: Path) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise DataError(f"Truncated file {path}: wanted {n} bytes, got {len(data)}")
    return data


def write_features(path: PathLike, frames: np.ndarray) -> None:
    """AFEA container: magic, u32 version, u32 T, u32 dim, T*dim float32 LE."""
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {frames.shape}")
    T, dim = frames.shape
    with atomic_write(path) as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<III", FEATURE_VERSION, T, dim))
        f.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_features(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Missing feature file: {path}")
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path)
        if magic != FEATURE_MAGIC:
            raise DataError(f"{path} is not a feature file (magic {magic!r})")
        version, T, dim = struct.unpack("<III", _read_exact(f, 12, path))
        if version != FEATURE_VERSION:
            raise DataError(f"{path}: unsupported feature file version {version}")
        data = _read_exact(f, 4 * T * dim, path)
    return np.frombuffer(data, dtype="<f4").reshape(T, dim).astype(np.float32)


def write_token_file(path: PathLike, indices: np.ndarray, codebook_sizes: Sequence[int]) -> None:
    """ATOK container: magic, u32 version, u32 n_layers, u32 T, u32 K per layer, indices as u32 LE."""
    indices = np.asarray(indices)
    if indices.ndim != 2:
        raise ValueError(f"token matrix must be n_layers x T, got shape {indices.shape}")
    n_layers, T = indices.shape
    if len(codebook_sizes) != n_layers:
        raise ValueError(f"{n_layers} token layers but {len(codebook_sizes)} codebook sizes")
    with atomic_write(path) as f:
        f.write(TOKEN_MAGIC)
        f.write(struct.pack("<III", TOKEN_VERSION, n_layers, T))
        f.write(struct.pack(f"<{n_layers}I", *[int(k) for k in codebook_sizes]))
        f.write(np.ascontiguousarray(indices, dtype="<u4").tobytes())


def read_token_file(path: PathLike):
    """Returns (indices n_layers x T as int64, codebook sizes)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Missing token file: {path}")
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path)
        if magic != TOKEN_MAGIC:
            raise DataError(f"{path} is not a token file (magic {magic!r})")
        version, n_layers, T = struct.unpack("<III", _read_exact(f, 12, path))
        if version != TOKEN_VERSION:
            raise DataError(f"{path}: unsupported token file version {version}")
        sizes = list(struct.unpack(f"<{n_layers}I", _read_exact(f, 4 * n_layers, path)))
        data = _read_exact(f, 4 * n_layers * T, path)
    indices = np.frombuffer(data, dtype="<u4").reshape(n_layers, T).astype(np.int64)
    return indices, sizes
