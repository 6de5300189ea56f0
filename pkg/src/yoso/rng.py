"""Purpose-labelled random number streams.

Four independent streams hang off a single run seed, one per purpose:

* ``structure`` -- anchor draws and neighbor subsampling for the binary
  sampling pattern,
* ``gaussian``  -- the Gaussian fill of the random weight matrix,
* ``init``      -- parameter initialization,
* ``data``      -- synthetic datasets, splits and validation trials.

Keeping the purposes on separate generators means e.g. regenerating the
Gaussian fill never shifts the structural draws.  Every stream is a PCG64
generator keyed by ``(seed, purpose)``, so identical (seed, purpose, call
order) reproduces identical values bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidParams, NegativeVariance

PURPOSES = ("structure", "gaussian", "init", "data")


class RngStreams:
    """Deterministic family of per-purpose generators for one run seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, purpose: str) -> np.random.Generator:
        if purpose not in PURPOSES:
            raise InvalidParams(f"unknown rng purpose {purpose!r}; expected one of {PURPOSES}")
        if purpose not in self._streams:
            key = PURPOSES.index(purpose)
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(key,))
            self._streams[purpose] = np.random.Generator(np.random.PCG64(ss))
        return self._streams[purpose]


def stream(seed: int, purpose: str) -> np.random.Generator:
    """One-off generator for (seed, purpose) without keeping the family around."""
    return RngStreams(seed).get(purpose)


def gaussian(rng: np.random.Generator, mean: float, variance: float) -> float:
    """Draw one N(mean, variance) sample.  Zero variance returns the mean exactly."""
    if variance < 0:
        raise NegativeVariance(f"variance must be >= 0, got {variance}")
    if variance == 0:
        return float(mean)
    return float(mean + math.sqrt(variance) * rng.standard_normal())
