"""Hierarchical seed derivation.

Every random draw in an experiment comes from
``SeedSequence(master, spawn_key=(trial, block, stage))``: ``trial`` is the
Monte Carlo trial index, ``block`` names a batch of windows (calibration, test,
latency streams, ...) and ``stage`` names the generator using it (signal,
anomaly, fading, ...). Draws inside a block are indexed by window position, so
any trial can be recreated on its own and regimes that share a block see the
same underlying randomness.
"""

from __future__ import annotations

import numpy as np

BLOCKS = {
    "graph": 0,
    "calibration": 1,
    "test_nominal": 2,
    "test_anomalous": 3,
    "stream": 4,
    "regime": 5,
    "variant": 6,
    "simulate": 7,
}

STAGES = {
    "topology": 0,
    "signal": 1,
    "anomaly": 2,
    "fading": 3,
    "noise": 4,
    "rewire": 5,
    "alpha": 6,
    "sensor": 7,
}


def substream(master: int, trial: int, block: str, stage: str, *extra: int) -> np.random.SeedSequence:
    key = (int(trial), BLOCKS[block], STAGES[stage], *map(int, extra))
    return np.random.SeedSequence(int(master), spawn_key=key)


def rng_for(master: int, trial: int, block: str, stage: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(substream(master, trial, block, stage, *extra))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
