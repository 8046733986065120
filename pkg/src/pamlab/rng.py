"""Counter-based random streams.

Every stream is a Philox generator whose key holds ``(seed, tag)`` and whose
counter holds the realization (or block) index, so the numbers drawn for a
given index never depend on how work is split across workers.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1

# stream tags, one per consumer
FIELD = 1
WALK = 2
EXPERIMENT = 3


def stream(seed, tag, index):
    """Return the generator for ``(seed, tag, index)``."""
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    key = (int(seed) & _MASK64) | ((int(tag) & _MASK64) << 64)
    bit_gen = np.random.Philox(key=key, counter=[0, 0, int(index) & _MASK64, int(index) >> 64])
    return np.random.Generator(bit_gen)


def uniforms(seed, tag, index, size):
    """Uniforms in (0, 1]; position ``j`` of the output is counter position ``j`` of the stream."""
    return 1.0 - stream(seed, tag, index).random(size)


def derive_seed(seed, *labels):
    """Child seed for a named sub-task of an experiment."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, *[_label_int(x) for x in labels]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _label_int(label):
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    return int.from_bytes(hashlib.blake2b(str(label).encode(), digest_size=8).digest(), "little")
