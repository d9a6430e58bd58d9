"""Named, counter-based random substreams.

A substream is identified by the master seed, a stream name and a tuple of integer
counters (trial, tile, ...). Names are hashed to a stable integer and the whole key
goes into a ``SeedSequence`` spawn key that seeds a Philox generator, so the numbers a
stream yields never depend on which other streams were used before it or in which order
the work was scheduled.
"""

import hashlib
from functools import lru_cache

import numpy as np

MASK64 = (1 << 64) - 1

# master seed of the bundled digit network
FIXTURE_SEED = 20240601


@lru_cache(maxsize=None)
def stream_id(name: str) -> int:
    digest = hashlib.md5(name.strip().lower().encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, name: str, *counters: int) -> np.random.Generator:
    """Return the generator for ``(master_seed, name, counters...)``."""
    key = (stream_id(name),) + tuple(int(c) & MASK64 for c in counters)
    seq = np.random.SeedSequence(entropy=int(master_seed) & MASK64, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, name: str, *counters: int) -> int:
    """A child master seed, for handing a whole sub-experiment its own seed space."""
    seq = np.random.SeedSequence(
        entropy=int(master_seed) & MASK64,
        spawn_key=(stream_id(name),) + tuple(int(c) & MASK64 for c in counters),
    )
    return int(seq.generate_state(2, np.uint32).view(np.uint64)[0])
