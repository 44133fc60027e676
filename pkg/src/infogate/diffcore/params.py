"""Named parameter collections and the IGPS binary container."""

import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterator, Mapping, Tuple, Union

import numpy as np

from ..errors import BadMagicError, TruncatedFileError, ValidationError, VersionMismatchError
from .tensor import Tensor

logger = logging.getLogger(__name__)

IGPS_MAGIC = b"IGPS"
IGPS_VERSION = 1

# Entries under this prefix are statistics, not weights; optimizers skip them.
STATS_PREFIX = "stats."


class ParamSet:
    """Ordered name -> Tensor map for one network."""

    def __init__(self, entries: Mapping[str, np.ndarray] = ()):
        self._entries: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, value in dict(entries).items():
            self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._entries:
            raise ValidationError(f"Duplicate parameter name '{name}'")
        data = np.array(value, dtype=np.float32)
        tensor = Tensor(data, requires_grad=not name.startswith(STATS_PREFIX))
        tensor.data = data
        self._entries[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def items(self):
        return self._entries.items()

    def trainable(self) -> Iterator[Tuple[str, Tensor]]:
        return ((n, t) for n, t in self._entries.items() if t.requires_grad)

    def tensors(self):
        return [t for _, t in self.trainable()]

    def zero_grad(self) -> None:
        for tensor in self._entries.values():
            tensor.grad = None

    def numel(self) -> int:
        return int(np.sum([t.size for t in self._entries.values()]))

    def state(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._entries.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        for name, tensor in self._entries.items():
            if name not in state:
                raise ValidationError(f"Parameter '{name}' missing from state")
            value = np.asarray(state[name], dtype=np.float32)
            if value.shape != tensor.shape:
                raise ValidationError(f"Parameter '{name}' has shape {value.shape}, expected {tensor.shape}")
            tensor.data = value.copy()

    def copy(self) -> "ParamSet":
        return ParamSet(self.state())

    def save(self, path: Union[str, Path]) -> None:
        save_params(path, self.state())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ParamSet":
        return cls(load_params(path))


def encode_params(entries: Mapping[str, np.ndarray]) -> bytes:
    chunks = [IGPS_MAGIC, struct.pack("<II", IGPS_VERSION, len(entries))]
    for name, value in entries.items():
        raw_name = name.encode("utf-8")
        value = np.asarray(value)
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<B", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(value.astype("<f4").tobytes())
    return b"".join(chunks)


def decode_params(payload: bytes) -> "OrderedDict[str, np.ndarray]":
    def take(offset: int, size: int) -> bytes:
        if offset + size > len(payload):
            raise TruncatedFileError(f"IGPS payload truncated at byte {offset} (need {size} more)")
        return payload[offset:offset + size]

    if take(0, 4) != IGPS_MAGIC:
        raise BadMagicError(f"Bad magic {payload[:4]!r}, expected {IGPS_MAGIC!r}")
    version, count = struct.unpack("<II", take(4, 8))
    if version != IGPS_VERSION:
        raise VersionMismatchError(f"IGPS version {version} not supported (expected {IGPS_VERSION})")

    entries: "OrderedDict[str, np.ndarray]" = OrderedDict()
    offset = 12
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(offset, 2))
        offset += 2
        name = take(offset, name_len).decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack("<B", take(offset, 1))
        offset += 1
        shape = struct.unpack(f"<{rank}I", take(offset, 4 * rank))
        offset += 4 * rank
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(take(offset, nbytes), dtype="<f4").astype(np.float32).reshape(shape)
        offset += nbytes
        entries[name] = values
    return entries


def save_params(path: Union[str, Path], entries: Mapping[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(entries))
    logger.info("params_saved | path=%s | entries=%d", path, len(entries))


def load_params(path: Union[str, Path]) -> "OrderedDict[str, np.ndarray]":
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Parameter file not found: {path}")
    return decode_params(path.read_bytes())


def save_param_sets(path: Union[str, Path], sets: Mapping[str, ParamSet]) -> None:
    """Write several networks into one container, names prefixed ``<net>/``."""
    flat: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for prefix, params in sets.items():
        for name, tensor in params.items():
            flat[f"{prefix}/{name}"] = tensor.data
    save_params(path, flat)


def load_param_sets(path: Union[str, Path]) -> Dict[str, "OrderedDict[str, np.ndarray]"]:
    grouped: Dict[str, "OrderedDict[str, np.ndarray]"] = {}
    for full_name, value in load_params(path).items():
        prefix, _, name = full_name.partition("/")
        if not name:
            raise ValidationError(f"Parameter '{full_name}' has no network prefix")
        grouped.setdefault(prefix, OrderedDict())[name] = value
    return grouped
