"""
Counter-based random streams.

Every draw a path makes comes from a Philox generator keyed by
(base_seed, path_index, channel), so a path is reproducible no matter which
worker simulates it or in which order.
"""
from typing import Dict

import numpy as np

CHANNELS: Dict[str, int] = {
    "times": 0,
    "axes": 1,
    "magnitudes": 2,
    "signs": 3,
    "thinning": 4,
    "gaussian": 5,
}

_MASK64 = (1 << 64) - 1
_CHANNEL_BITS = 3


def stream(base_seed: int, path_index: int, channel: str) -> np.random.Generator:
    """Generator for one (seed, path, channel) triple"""
    if channel not in CHANNELS:
        raise KeyError(f"unknown random channel: {channel}")
    if path_index < 0:
        raise ValueError("path_index must be nonnegative")
    counter_word = ((path_index << _CHANNEL_BITS) | CHANNELS[channel]) & _MASK64
    key = np.array([base_seed & _MASK64, counter_word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class PathStreams:
    """Lazily created channel generators of a single path"""

    def __init__(self, base_seed: int, path_index: int):
        self.base_seed = base_seed
        self.path_index = path_index
        self._cache: Dict[str, np.random.Generator] = {}

    def __getattr__(self, channel: str) -> np.random.Generator:
        if channel.startswith("_") or channel not in CHANNELS:
            raise AttributeError(channel)
        if channel not in self._cache:
            self._cache[channel] = stream(self.base_seed, self.path_index, channel)
        return self._cache[channel]
