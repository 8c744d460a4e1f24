"""Reproducible random streams.

Every path owns an independent counter-based (Philox) stream derived from
``(root_seed, path_id, purpose)`` through :class:`numpy.random.SeedSequence`
spawn keys, so results never depend on how paths are distributed over
workers.
"""

import numpy as np

BROWNIAN = 0
CHAIN = 1
CHECKER = 2


def make_stream(seed, path_id=0, purpose=BROWNIAN):
    """Return the generator for one ``(seed, path_id, purpose)`` triple."""
    if seed < 0 or path_id < 0:
        raise ValueError("seed and path_id must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_id), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(stream):
    """Coerce ``stream`` into a :class:`numpy.random.Generator`.

    Generators pass through untouched; integers are read as root seeds of
    path 0 and routed through :func:`make_stream`.
    """
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, (int, np.integer)):
        return make_stream(int(stream), 0, CHAIN)
    if isinstance(stream, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(stream))
    raise TypeError(f"cannot build a random stream from {type(stream).__name__}")
