"""Message shapes shared by perception, networking, and vehicle modules.

A collective perception message (CPM) is the single data shape flowing
both on the V2X network and between in-vehicle modules.  In-vehicle hops
may attach private extensions (string key -> opaque bytes); extensions
never reach the wire.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import Mapping

EXT_LOCAL_SOURCE = "src"
LOCAL_SOURCE_TAG = b"local"

NO_STATION = 0  # sender_station sentinel for messages that never hit the wire


@dataclass(frozen=True, slots=True)
class PerceivedObject:
    """One observed vehicle: numberplate plus ground-truth pose."""

    plate: str
    x: float
    y: float
    heading: float
    observed_tick: int


@dataclass(frozen=True, slots=True)
class Cpm:
    """Collective perception message."""

    sender_station: int
    gen_tick: int
    sender_pose: tuple[float, float, float]
    objects: tuple[PerceivedObject, ...] = ()
    extensions: Mapping[str, bytes] = field(default_factory=dict)

    def without_extensions(self) -> "Cpm":
        if not self.extensions:
            return self
        return replace(self, extensions={})

    def is_local_source(self) -> bool:
        return self.extensions.get(EXT_LOCAL_SOURCE) == LOCAL_SOURCE_TAG


def local_cpm(station: int | None, tick: int,
              pose: tuple[float, float, float],
              objects: tuple[PerceivedObject, ...],
              extensions: Mapping[str, bytes] | None = None) -> Cpm:
    """A CPM produced inside the vehicle, tagged as locally sourced."""
    ext = {EXT_LOCAL_SOURCE: LOCAL_SOURCE_TAG}
    if extensions:
        ext.update(extensions)
    return Cpm(station if station is not None else NO_STATION,
               tick, pose, objects, ext)


_PROOF = struct.Struct("<II")
PROOF_EXT_PREFIX = "proof/"


@dataclass(frozen=True, slots=True)
class ProofToken:
    """Opaque observation proof: a prover attests it saw a target plate.

    Stands in for a real cryptographic proof; treated as unforgeable.
    """

    prover: int
    target: str
    tick: int
    nonce: bytes

    @classmethod
    def create(cls, prover: int, target: str, tick: int) -> "ProofToken":
        digest = hashlib.sha256(f"{prover}:{target}:{tick}".encode()).digest()
        return cls(prover, target, tick, digest[:8])

    def extension_entry(self) -> tuple[str, bytes]:
        return (PROOF_EXT_PREFIX + self.target,
                _PROOF.pack(self.prover, self.tick) + self.nonce)

    @classmethod
    def from_extension(cls, key: str, value: bytes) -> "ProofToken":
        prover, tick = _PROOF.unpack_from(value)
        return cls(prover, key[len(PROOF_EXT_PREFIX):], tick,
                   value[_PROOF.size:])
