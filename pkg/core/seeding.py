"""
Splittable seeding scheme.

One master seed fans out into independent streams keyed by subsystem, so a
change in how one subsystem consumes randomness never shifts another one:

    SeedSequence(master, spawn_key=(stream, *keys))

Keys used by the laboratory:
    DATAGEN     ()                      dataset generation
    MODEL_INIT  ()                      initial model weights
    CLIENT      (round, client_id)      mini-batch shuffling of one local run
    CLUSTERING  (round,)                clustering backends
    XAI         (mode, cluster_id)      InDe sampling and random orderings
    CALIBRATION (round,)                pooled-data shuffling of threshold calibration
"""
from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    DATAGEN = 0
    MODEL_INIT = 1
    CLIENT = 2
    CLUSTERING = 3
    XAI = 4
    CALIBRATION = 5


def seed_sequence(master, stream, *keys):
    """Return the SeedSequence of one stream."""
    return np.random.SeedSequence(int(master), spawn_key=(int(stream), *(int(k) for k in keys)))


def generator(master, stream, *keys):
    """Return a numpy Generator bound to one stream."""
    return np.random.default_rng(seed_sequence(master, stream, *keys))


def int_seed(master, stream, *keys):
    """Return a 32-bit integer seed, for libraries taking ``random_state``."""
    return int(seed_sequence(master, stream, *keys).generate_state(1, dtype=np.uint32)[0])
