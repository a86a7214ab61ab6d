"""Named, counter-keyed random substreams.

Every stochastic component derives its generator from one root seed plus an
integer key tuple, so results are reproducible regardless of evaluation
order or batching.  Keys: (stream id, step, plane id, slice index, ...).
"""

import numpy as np

# Stream ids.  New consumers must claim a fresh id; never reuse.
STREAM_INIT = 0      # terminal-noise initialisation of the sampler
STREAM_PLANE = 1     # probabilistic plane choice, keyed by step
STREAM_STEP = 2      # posterior-step noise, keyed by (step, plane, slice)
STREAM_TRAIN = 3     # training batch sampling and forward noise
STREAM_GRADCHECK = 4
STREAM_DATA = 5      # phantom / dataset generation helpers


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream identified by ``key`` under ``seed``."""
    parts = tuple(int(k) for k in key)
    if any(k < 0 for k in parts):
        raise ValueError(f"substream key must be non-negative, got {parts}")
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=parts))
