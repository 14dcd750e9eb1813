"""Deterministic seed derivation shared by the cohort generator and the harness."""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Hash an ordered tuple of labels into a 64-bit unsigned seed.

    The hash is keyed on the ``str`` form of each part, so ``(42, "tdfit-A")``
    and ``("42", "tdfit-A")`` collide on purpose: seeds survive a round trip
    through text config files.
    """
    h = hashlib.blake2b(digest_size=8, person=b"mrsrepro-seed")
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
