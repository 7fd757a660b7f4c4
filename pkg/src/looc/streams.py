"""Labeled, hierarchical RNG streams.

Every random draw in the engine comes from a stream addressed by a master
seed plus a tuple of labels such as ("views", epoch, batch, index).  Streams
are stateless: the same labels always yield the same generator, so serial
and parallel execution, or a resumed run, draw identical numbers.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"stream labels must be non-negative, got {label}")
        return int(label)
    if isinstance(label, str):
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream label must be int or str, got {type(label).__name__}")


class RngStream:
    """A deterministic RNG stream identified by (seed, *labels)."""

    def __init__(self, seed: int, *labels):
        self.seed = int(seed)
        self.labels = tuple(_label_to_int(x) for x in labels)

    def child(self, *labels) -> "RngStream":
        return RngStream(self.seed, *(self.labels + tuple(labels)))

    def generator(self) -> np.random.Generator:
        """A fresh generator; repeated calls restart the stream."""
        return np.random.default_rng(np.random.SeedSequence([self.seed, *self.labels]))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, labels={self.labels})"
