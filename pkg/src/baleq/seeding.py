"""Named random streams derived from one master seed.

Every consumer asks for a generator by a tuple of labels. Labels are
hashed with CRC32 so the mapping is stable across interpreter runs and
adding a new consumer never shifts an existing stream.
"""

import os
import zlib

import numpy as np


def _label_key(label):
    if isinstance(label, (int, np.integer)) and label >= 0:
        return int(label)
    return zlib.crc32(repr(label).encode("utf-8"))


def stream(seed, *labels):
    """Return a ``numpy.random.Generator`` for ``(seed, *labels)``."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label_key(lab) for lab in labels]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def max_workers():
    """Worker cap from ``BALEQ_THREADS``; defaults to the CPU count."""
    raw = os.environ.get("BALEQ_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1
