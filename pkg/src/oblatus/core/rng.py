"""Reproducible random substreams.

A stream is addressed by ``(master_seed, stream_index)`` plus an optional
path of child indices. The bits come from numpy's counter-based Philox
generator keyed through ``SeedSequence(entropy=master_seed,
spawn_key=(stream_index, *path))``; both are specified by numpy to be
platform independent, so the same address yields the same draws everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for name, v in (("master_seed", self.master_seed), ("stream_index", self.stream_index)):
            if not 0 <= int(v) <= _U64:
                raise ValueError(f"invalid {name}={v}, need a 64-bit unsigned integer")
        if any(int(k) < 0 for k in self.path):
            raise ValueError(f"invalid stream path={self.path}")

    def child(self, k: int) -> RngStream:
        return RngStream(self.master_seed, self.stream_index, (*self.path, int(k)))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_index), *self.path))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def label(self) -> str:
        tail = "".join(f".{k}" for k in self.path)
        return f"{self.master_seed}:{self.stream_index}{tail}"


def replication_streams(master_seed: int, replications: int, offset: int = 0) -> list[RngStream]:
    """One stream per replication; stream_index = replication id (+ offset)."""
    return [RngStream(master_seed, offset + r) for r in range(replications)]
