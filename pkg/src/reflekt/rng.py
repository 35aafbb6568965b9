"""Counter-based random streams.

Every stream is a Philox generator whose key is a hash of
``(master_seed, task_name, index)``.  Streams for different indices are
statistically independent and can be generated in any order, which keeps
ensemble results independent of how work is chunked or scheduled.
"""
import hashlib
import os

import numpy as np

SEED_ENV = "REFLEKT_SEED"

#: paths are simulated in blocks of this many samples, one stream per block
BLOCK_SIZE = 4096


def resolve_seed(seed):
    """Return the ``REFLEKT_SEED`` environment override if present."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return int(seed)


def stream_key(seed, task, index=0):
    digest = hashlib.blake2b(f"{int(seed)}|{task}|{int(index)}".encode(), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def stream(seed, task, index=0):
    """Generator for the ``index``-th stream of ``task``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, task, index)))


def derive_seed(seed, task, index=0):
    """A 63-bit integer seed for a sub-task (used to hand seeds to children)."""
    return stream_key(seed, task, index) & ((1 << 63) - 1)


def block_normals(seed, task, n_samples, shape):
    """Standard normals of shape ``(n_samples,) + shape``.

    Sample ``j`` always receives the same numbers for a given
    ``(seed, task)``, whatever ``n_samples`` is, because it is drawn from
    block ``j // BLOCK_SIZE``.
    """
    shape = tuple(shape)
    out = np.empty((n_samples,) + shape)
    for b, start in enumerate(range(0, n_samples, BLOCK_SIZE)):
        stop = min(start + BLOCK_SIZE, n_samples)
        draws = stream(seed, task, b).standard_normal((BLOCK_SIZE,) + shape)
        out[start:stop] = draws[: stop - start]
    return out
