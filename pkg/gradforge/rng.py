"""Seed-derived random streams.

Every consumer of randomness (parameter init, sample selection, dropout
masks, dataset splits, generated data) draws from its own stream so that
changing one consumer never shifts the numbers another one sees. Streams are
numpy ``PCG64`` generators keyed by ``SeedSequence(seed, spawn_key=(id,))``,
which gives the same numbers on every platform for a given numpy release.
"""
import numpy as np

PRNG_NAME = "pcg64"

STREAMS = {
    "init": 0,
    "sampling": 1,
    "dropout": 2,
    "split": 3,
    "data": 4,
    "gradcheck": 5,
}


def make_stream(seed, name):
    """Return the generator for stream ``name`` under ``seed``."""
    if name not in STREAMS:
        raise KeyError(f"Unknown random stream '{name}', expected one of {sorted(STREAMS)}")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.PCG64(seq))
