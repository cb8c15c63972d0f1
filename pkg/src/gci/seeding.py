"""Deterministic sub-seed derivation.

A single root seed fans out to labeled sub-seeds via SHA-256 so that
independent pipeline stages (weights, sampling, per-test subsampling)
get uncorrelated, reproducible streams.  Python's builtin hash() is
salted per process and must never be used here.
"""

from __future__ import annotations

import hashlib


def subseed(root: int, *labels: object) -> int:
    """Derive a 63-bit seed from a root seed and a label path."""
    msg = "|".join([str(int(root)), *map(str, labels)])
    digest = hashlib.sha256(msg.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
