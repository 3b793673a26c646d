"""Deterministic, hierarchically derived random streams.

A stream is identified by a master seed plus a path of labels such as
``("identities", 17)``.  The path is folded into a numpy ``SeedSequence``
spawn key, so distinct paths give independent generators and the same
path always reproduces the same bits.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np

Label = Union[int, str]


def _label_key(label: Label) -> int:
    if isinstance(label, (bool, np.bool_)):
        raise TypeError("boolean stream labels are ambiguous")
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"negative stream label {label}")
        return int(label)
    if isinstance(label, str):
        # crc32 is stable across interpreter runs, unlike hash()
        return zlib.crc32(label.encode("utf-8")) | (1 << 32)
    raise TypeError(f"unsupported stream label {label!r}")


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_path: tuple = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        for label in self.stream_path:
            _label_key(label)

    def child(self, *labels: Label) -> "RngStream":
        return RngStream(self.master_seed, self.stream_path + tuple(labels))

    def seed_sequence(self) -> np.random.SeedSequence:
        key = tuple(_label_key(label) for label in self.stream_path)
        return np.random.SeedSequence(int(self.master_seed), spawn_key=key)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def kernel_seed(self) -> int:
        """32-bit seed for compiled kernels that use their own generator."""
        return int(self.seed_sequence().generate_state(1, np.uint32)[0])

    def label(self) -> str:
        return "/".join(str(x) for x in self.stream_path)


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError(f"expected RngStream or Generator, got {type(rng).__name__}")


def kernel_seed(rng: RngStream | np.random.Generator) -> int:
    if isinstance(rng, RngStream):
        return rng.kernel_seed()
    return int(as_generator(rng).integers(0, 2**32, dtype=np.uint64))
