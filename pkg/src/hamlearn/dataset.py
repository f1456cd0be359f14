"""Randomized-measurement records and their versioned binary file format.

Each record stores, per qubit, the input stabilizer label (code 0..5 for
Z+, Z-, X+, X-, Y+, Y-), the measurement basis (0=X, 1=Y, 2=Z) and the outcome
bit (0 for the +1 eigenvalue).  The measured output state on qubit ``q`` is the
eigenstate of the chosen basis selected by the outcome.

File layout (little-endian)::

    magic "HMLD" | version u16 | n u16 | K u16 | seed i64 | N u64 | gamma f64 |
    plan sha256 (32 bytes) | N records of ceil(6n/8) bytes

Record bits are, in order, 3 bits per input label, 2 bits per basis and one bit
per outcome, packed least-significant bit first.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"HMLD"
VERSION = 1
_HEADER = struct.Struct("<4sHHHqQd32s")
BASIS_LETTERS = "XYZ"


@dataclass(frozen=True)
class MeasurementRecord:
    labels: tuple[int, ...]
    bases: tuple[int, ...]
    outcomes: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class Dataset:
    n: int
    K: int
    seed: int
    gamma: float
    plan_digest: str
    labels: np.ndarray
    bases: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        shape = (len(self.labels), self.n)
        for name in ("labels", "bases", "outcomes"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        if shape[0] < 1:
            raise ValueError("dataset needs at least one record")

    @property
    def N(self) -> int:
        return len(self.labels)

    def record(self, index: int) -> MeasurementRecord:
        return MeasurementRecord(
            tuple(int(v) for v in self.labels[index]),
            tuple(int(v) for v in self.bases[index]),
            tuple(int(v) for v in self.outcomes[index]),
        )

    def head(self, count: int) -> "Dataset":
        return Dataset(self.n, self.K, self.seed, self.gamma, self.plan_digest,
                       self.labels[:count], self.bases[:count], self.outcomes[:count])

    def u_values(self, qubit: int, letter: str) -> np.ndarray:
        """``3 <phi_l|O|phi_l>`` on ``qubit`` for every record (values 0, +3, -3)."""
        axis = BASIS_LETTERS.index(letter)
        hit = self.bases[:, qubit] == axis
        return np.where(hit, 3.0 * (1 - 2 * self.outcomes[:, qubit].astype(np.int8)), 0.0)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    # serialization ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, VERSION, self.n, self.K, self.seed, self.N, self.gamma,
                              bytes.fromhex(self.plan_digest))
        bits = np.concatenate(
            [_to_bits(self.labels, 3), _to_bits(self.bases, 2), _to_bits(self.outcomes, 1)], axis=1
        )
        return header + np.packbits(bits, axis=1, bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Dataset":
        if len(blob) < _HEADER.size:
            raise ParseError("file shorter than header", "header")
        magic, version, n, K, seed, N, gamma, digest = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise ParseError(f"bad magic {magic!r}", "header.magic")
        if version != VERSION:
            raise ParseError(f"unsupported version {version}", "header.version")
        width = (6 * n + 7) // 8
        body = blob[_HEADER.size:]
        if len(body) != N * width:
            raise ParseError(f"expected {N * width} record bytes, found {len(body)}", "records")
        raw = np.frombuffer(body, dtype=np.uint8).reshape(N, width)
        bits = np.unpackbits(raw, axis=1, bitorder="little")[:, : 6 * n]
        labels = _from_bits(bits[:, : 3 * n], 3)
        bases = _from_bits(bits[:, 3 * n: 5 * n], 2)
        outcomes = _from_bits(bits[:, 5 * n:], 1)
        if labels.size and (labels.max() > 5 or bases.max() > 2):
            raise ParseError("label or basis code out of range", "records")
        return cls(n, K, seed, gamma, digest.hex(), labels, bases, outcomes)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_bytes(Path(path).read_bytes())


def _to_bits(codes: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width, dtype=np.uint8)
    bits = (codes[:, :, None] >> shifts) & 1
    return bits.reshape(len(codes), -1).astype(np.uint8)


def _from_bits(bits: np.ndarray, width: int) -> np.ndarray:
    grouped = bits.reshape(len(bits), -1, width).astype(np.uint8)
    weights = (1 << np.arange(width, dtype=np.uint8)).astype(np.uint8)
    return (grouped * weights).sum(axis=2).astype(np.uint8)
