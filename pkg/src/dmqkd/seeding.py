"""Labeled seed derivation.

Every random draw in an experiment comes from one root seed. Stages and
test indices get their own streams through ``SeedSequence`` spawn keys, so
adding a stage never perturbs the numbers another stage sees.
"""

import zlib

import numpy as np

__all__ = ["derive_seed", "derive_rng"]


def _key(label):
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def derive_seed(root, *labels):
    """SeedSequence for ``root`` refined by ``labels`` (strings or ints)."""
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key(lb) for lb in labels))


def derive_rng(root, *labels):
    return np.random.default_rng(derive_seed(root, *labels))
