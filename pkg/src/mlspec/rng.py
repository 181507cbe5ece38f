"""Counter-keyed random streams.

Every random draw in a Monte Carlo run is addressed by a tuple
``(master_seed, replicate, layer)`` or ``(master_seed, replicate, purpose)``,
so results do not depend on execution order or on how replicates are spread
over workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# spawn-key tags for non-layer consumers of a replicate stream
KMEANS_TAG = 2**31 - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    replicate: int = 0

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.replicate, *key))
        return np.random.Generator(np.random.Philox(ss))

    def layer(self, t: int) -> np.random.Generator:
        return self.generator(t)

    def kmeans(self) -> np.random.Generator:
        return self.generator(KMEANS_TAG)
