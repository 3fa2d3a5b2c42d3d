"""Counter-based random streams.

Every stochastic routine in the toolkit draws from a Philox generator keyed
by (seed, lane, a, b).  Streams with distinct tags never overlap, so results
do not depend on evaluation order and trials can run concurrently.
"""

import numpy as np

_MASK = (1 << 64) - 1

# Lane tags keep independent uses of the same seed apart.
LANE_IID = 1
LANE_CHAIN = 2
LANE_RISK = 3
LANE_PROBE = 4
LANE_MARGIN = 5
LANE_TRAIN = 6
LANE_PAIRS = 7
LANE_DATASET = 8


def stream(seed: int, lane: int, a: int = 0, b: int = 0) -> np.random.Generator:
    """Return the generator for the (seed, lane, a, b) stream."""
    key = np.array([seed & _MASK, 0], dtype=np.uint64)
    counter = np.array([0, b & _MASK, a & _MASK, lane & _MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))
