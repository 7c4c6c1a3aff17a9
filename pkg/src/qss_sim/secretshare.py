"""Mod-d one-time pad over dit streams and the ``QSSDITS1`` ciphertext format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qudit import check_dim

MAGIC = b"QSSDITS1"
_HEADER = struct.Struct("<8sBI")


class KeyTooShortError(ValueError):
    """Raised instead of reusing key material."""


def dits_per_byte(d: int) -> int:
    """Smallest m with d**m >= 256."""
    m, cap = 0, 1
    while cap < 256:
        cap *= d
        m += 1
    return m


@dataclass(frozen=True, eq=False)
class DitStream:
    """Base-``d`` digits; the last ``pad_len`` dits are filler, not payload."""

    d: int
    dits: np.ndarray
    pad_len: int = 0

    def __post_init__(self):
        d = check_dim(self.d)
        dits = np.asarray(self.dits, dtype=np.int64).ravel()
        if dits.size and (dits.min() < 0 or dits.max() >= d):
            raise ValueError(f"dits must lie in 0..{d - 1}")
        if not 0 <= self.pad_len < max(dits_per_byte(d), 1) or self.pad_len > dits.size:
            raise ValueError(f"invalid pad_len {self.pad_len}")
        dits.setflags(write=False)
        object.__setattr__(self, "dits", dits)

    def __len__(self) -> int:
        return int(self.dits.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DitStream):
            return NotImplemented
        return self.d == other.d and self.pad_len == other.pad_len and np.array_equal(self.dits, other.dits)

    @classmethod
    def from_key(cls, key: Sequence[int], d: int) -> "DitStream":
        return cls(d, np.asarray(key, dtype=np.int64))


def bytes_to_dits(payload: bytes, d: int) -> DitStream:
    """Expand every byte into ``dits_per_byte(d)`` base-d digits, most significant first."""
    d = check_dim(d)
    m = dits_per_byte(d)
    b = np.frombuffer(bytes(payload), dtype=np.uint8).astype(np.int64)
    weights = d ** np.arange(m - 1, -1, -1, dtype=np.int64)
    digits = (b[:, None] // weights[None, :]) % d
    return DitStream(d, digits.ravel())


def pad_to_records(dits: Sequence[int], d: int) -> DitStream:
    """Zero-pad an arbitrary dit sequence to whole byte records, recording the pad."""
    m = dits_per_byte(d)
    dits = np.asarray(dits, dtype=np.int64)
    pad = (-dits.size) % m
    return DitStream(d, np.concatenate([dits, np.zeros(pad, dtype=np.int64)]), pad)


def strip_padding(stream: DitStream) -> np.ndarray:
    return stream.dits[: len(stream) - stream.pad_len]


def dits_to_bytes(stream: DitStream) -> bytes:
    m = dits_per_byte(stream.d)
    body = stream.dits[: len(stream) - stream.pad_len]
    if body.size % m:
        raise ValueError("dit count is not a whole number of byte records")
    weights = stream.d ** np.arange(m - 1, -1, -1, dtype=np.int64)
    values = body.reshape(-1, m) @ weights
    if values.size and values.max() > 255:
        raise ValueError("dit record decodes to a value above 255")
    return values.astype(np.uint8).tobytes()


def _check_key(msg: DitStream, key: DitStream) -> np.ndarray:
    if key.d != msg.d:
        raise ValueError(f"key base {key.d} differs from message base {msg.d}")
    if len(key) < len(msg):
        raise KeyTooShortError(f"key has {len(key)} dits, message needs {len(msg)}")
    return key.dits[: len(msg)]


def encrypt(msg: DitStream, key: DitStream) -> DitStream:
    """``c_i = (m_i + k_i) mod d``; XOR when d = 2."""
    k = _check_key(msg, key)
    return DitStream(msg.d, (msg.dits + k) % msg.d, msg.pad_len)


def decrypt(cipher: DitStream, key: DitStream) -> DitStream:
    k = _check_key(cipher, key)
    return DitStream(cipher.d, (cipher.dits - k) % cipher.d, cipher.pad_len)


def reconstruction_fidelity(original: DitStream, recovered: DitStream) -> float:
    """Fraction of positions at which the two streams agree."""
    if len(original) != len(recovered):
        raise ValueError("streams differ in length")
    if not len(original):
        raise ValueError("empty streams")
    return float(np.mean(original.dits == recovered.dits))


def write_ciphertext(stream: DitStream) -> bytes:
    """Serialise as magic, base byte, little-endian uint32 pad length, one dit per byte."""
    return _HEADER.pack(MAGIC, stream.d, stream.pad_len) + stream.dits.astype(np.uint8).tobytes()


def read_ciphertext(blob: bytes) -> DitStream:
    if len(blob) < _HEADER.size:
        raise ValueError("ciphertext shorter than its header")
    magic, d, pad_len = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    dits = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size)
    return DitStream(d, dits, pad_len)
