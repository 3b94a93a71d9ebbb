"""Named, splittable random streams.

Every random draw in the package flows from a single root seed through a
*path* of names, e.g. ``generator(root, "bound", "realization", 17)``.
Paths are hashed into SeedSequence entropy, so streams are independent,
reproducible, and insensitive to evaluation order or thread scheduling.
Philox is counter-based, which keeps parallel batches bit-stable.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed_sequence", "generator"]


def _path_words(path: tuple) -> list[int]:
    """Hash each path component into a stable 32-bit entropy word."""
    words = []
    for part in path:
        if isinstance(part, (int, np.integer)):
            token = b"i:" + int(part).to_bytes(16, "little", signed=True)
        elif isinstance(part, str):
            token = b"s:" + part.encode("utf-8")
        else:
            raise TypeError(f"stream path components must be str or int, got {type(part)!r}")
        digest = hashlib.sha256(token).digest()
        words.append(int.from_bytes(digest[:4], "little"))
    return words


def derive_seed_sequence(root_seed: int, *path) -> np.random.SeedSequence:
    """Derive the SeedSequence for a named stream under ``root_seed``."""
    return np.random.SeedSequence(entropy=[int(root_seed) & (2**64 - 1)] + _path_words(path))


def generator(root_seed: int, *path) -> np.random.Generator:
    """A Philox generator for the named stream under ``root_seed``."""
    return np.random.Generator(np.random.Philox(derive_seed_sequence(root_seed, *path)))
