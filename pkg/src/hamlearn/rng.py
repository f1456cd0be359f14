"""Seeded substreams on numpy's counter-based Philox generator.

Every random quantity is drawn from ``substream(seed, tag, index)``; the key is
the first 128 bits of ``sha256(f"{seed}:{tag}:{index}")``.  Streams for
different tags or indices are therefore independent of evaluation order, so
blocks of records can be generated in any order (or in parallel) with
bit-identical results.
"""

import hashlib

import numpy as np


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    digest = hashlib.sha256(f"{int(seed)}:{tag}:{int(index)}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
