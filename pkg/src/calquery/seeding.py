"""Deterministic sub-seed derivation.

Every random decision in the package flows from a single master seed
through named labels, so runs are reproducible end to end.  Python's
built-in ``hash`` is salted per process and must never be used here.
"""

from __future__ import annotations

import hashlib

_SEED_BYTES = 8


def derive_seed(master_seed: int, label: str) -> int:
    """Derive a stable 64-bit sub-seed from a master seed and a label.

    The derivation uses BLAKE2b over the label and the master seed so
    that distinct labels give independent streams and the mapping is
    identical across platforms and processes.
    """
    digest = hashlib.blake2b(
        label.encode("utf-8") + b"\x00" + str(int(master_seed)).encode("ascii"),
        digest_size=_SEED_BYTES,
    ).digest()
    return int.from_bytes(digest, "little")
