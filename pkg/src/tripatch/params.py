"""Named parameter store with freeze flags and a binary checkpoint format.

Checkpoint layout (all integers little-endian):

    magic      4 bytes   b"TPCK"
    version    1 byte    currently 1
    count      uint32    number of parameter records
    record:
        name_len   uint16
        name       name_len bytes, UTF-8
        frozen     uint8 (0 or 1)
        ndim       uint8
        dims       ndim * uint32
        data       prod(dims) * float64, row-major

Records are written in sorted-name order so identical stores produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Iterator

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointFormatError, ParameterError

_MAGIC = b"TPCK"
_VERSION = 1


class ParameterStore:
    """Flat mapping of unique names to tensors, each with a frozen flag."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._frozen: dict[str, bool] = {}

    def add(self, name: str, tensor: Tensor, frozen: bool = False) -> Tensor:
        if name in self._params:
            raise ParameterError(f"duplicate parameter name '{name}'")
        if not name:
            raise ParameterError("parameter name must be non-empty")
        tensor.requires_grad = not frozen
        self._params[name] = tensor
        self._frozen[name] = bool(frozen)
        return tensor

    def get(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ParameterError(f"unknown parameter '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in sorted(self._params):
            yield name, self._params[name]

    def is_frozen(self, name: str) -> bool:
        if name not in self._frozen:
            raise ParameterError(f"unknown parameter '{name}'")
        return self._frozen[name]

    def set_frozen(self, name: str, frozen: bool) -> None:
        if name not in self._frozen:
            raise ParameterError(f"unknown parameter '{name}'")
        self._frozen[name] = bool(frozen)
        self._params[name].requires_grad = not frozen

    def freeze_matching(self, predicate) -> list[str]:
        """Freeze every parameter whose name satisfies ``predicate``; return them."""
        hit = [name for name in self.names() if predicate(name)]
        for name in hit:
            self.set_frozen(name, True)
        return hit

    def frozen_names(self) -> list[str]:
        return [n for n in self.names() if self._frozen[n]]

    def trainable_names(self) -> list[str]:
        return [n for n in self.names() if not self._frozen[n]]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def checksum(self, names: list[str] | None = None) -> str:
        """SHA-256 over the named parameters' bytes, in sorted-name order."""
        h = hashlib.sha256()
        for name in sorted(names) if names is not None else self.names():
            t = self.get(name)
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return h.hexdigest()

    # -- checkpoint IO ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        chunks = [_MAGIC, struct.pack("<BI", _VERSION, len(self._params))]
        for name, t in self.items():
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ParameterError(f"parameter name too long to checkpoint: '{name[:40]}...'")
            chunks.append(struct.pack("<H", len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack("<BB", int(self._frozen[name]), t.ndim))
            chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
            chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        Path(path).write_bytes(b"".join(chunks))

    @classmethod
    def load(cls, path: str | Path) -> "ParameterStore":
        raw = Path(path).read_bytes()
        view = memoryview(raw)
        pos = 0

        def take(n: int) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise CheckpointFormatError(f"checkpoint truncated at byte {pos}")
            chunk = view[pos : pos + n]
            pos += n
            return chunk

        if bytes(take(4)) != _MAGIC:
            raise CheckpointFormatError("bad magic: not a parameter checkpoint")
        version, count = struct.unpack("<BI", take(5))
        if version != _VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")

        store = cls()
        for _ in range(count):
            (name_len,) = struct.unpack("<H", take(2))
            name = bytes(take(name_len)).decode("utf-8")
            frozen, ndim = struct.unpack("<BB", take(2))
            if frozen not in (0, 1):
                raise CheckpointFormatError(f"bad frozen flag {frozen} for '{name}'")
            dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
            n_items = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            data = np.frombuffer(take(8 * n_items), dtype="<f8").reshape(dims).copy()
            store.add(name, Tensor(data), frozen=bool(frozen))
        if pos != len(view):
            raise CheckpointFormatError(f"{len(view) - pos} trailing bytes after last record")
        return store
