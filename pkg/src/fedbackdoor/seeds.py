"""Deterministic fan-out of the master seed into named sub-streams.

Every randomness source in a run (weight init, partition, client selection,
per-client batch shuffling, poison sampling, defense noise) draws from its
own stream, derived as

    derive_seed(master, stream_name, *counters)

where the counters are small integers such as round, client id, or epoch.
Hashing (rather than offsetting) keeps streams independent: pinning one
stream never shifts another, and adding a counter level cannot collide with
an existing stream.
"""

from __future__ import annotations

import hashlib

# Stream names used by the simulator. Kept here so the manifest can list them.
STREAMS = ("init", "partition", "select", "batch", "poison", "noise")


def derive_seed(master: int, *labels: int | str) -> int:
    """Return a 64-bit seed for the sub-stream identified by `labels`."""
    key = repr((int(master),) + tuple(labels)).encode("ascii")
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "little")
