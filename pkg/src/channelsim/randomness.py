"""Shared randomness as a keyed, random-access, counter-mode stream.

Encoder and decoder hold the same 256-bit seed and reconstruct identical
draws from addresses alone, with no sequential replay.  Each (trial, batch,
slot, tag) address maps to one 64-bit word of a Philox4x64 keyed stream:

* per-trial subkeys are derived with keyed BLAKE2b, so trials are
  independent and parallelize with no coordination;
* the Philox counter encodes (batch, tag, tuple component) and the word
  position within the stream encodes the slot (batch-level uniforms stream
  over batches instead, since they carry no slot);
* 64 random bits map to the open interval (0, 1) via (w >> 11 + 0.5) / 2^53,
  so -log(u) is always finite.

Bulk readers (``slot_uniforms``, ``batch_uniforms``, ...) are prefix-stable:
reading n values and then the first k of them yields identical floats.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.random import Philox

from . import dist

PROPOSAL = "proposal"
EXPONENTIAL = "exponential"
BATCH_UNIFORM = "batch-uniform"
HASH = "hash"

_TAG_IDS = {PROPOSAL: 1, EXPONENTIAL: 2, BATCH_UNIFORM: 3, HASH: 4}
_SLOT_TAGS = (PROPOSAL, EXPONENTIAL, HASH)

_U64_SHIFT = np.uint64(11)
_UNIT_SCALE = 2.0 ** -53


@dataclass(frozen=True)
class StreamAddress:
    """One draw of the shared stream.

    ``batch`` and ``slot`` are 1-based; slot 0 is reserved for the
    batch-level uniform.  ``component`` distinguishes the coordinates of
    tuple-valued proposals (joint compression blocks).
    """

    trial: int
    batch: int
    slot: int
    tag: str
    component: int = 0

    def __post_init__(self):
        if self.tag not in _TAG_IDS:
            raise ValueError(f"unknown tag {self.tag!r}")
        if self.tag == BATCH_UNIFORM:
            if self.slot != 0:
                raise ValueError("batch-uniform draws use slot 0")
        elif self.slot < 1:
            raise ValueError("slots are 1-based for per-slot tags")
        if self.batch < 1:
            raise ValueError("batches are 1-based")
        if self.component and self.tag != PROPOSAL:
            raise ValueError("tuple components only apply to proposals")


def _seed_bytes(seed):
    """Canonical 32-byte key from a hex string, int, or bytes."""
    if isinstance(seed, bytes):
        raw = seed
    elif isinstance(seed, int):
        raw = seed.to_bytes(32, "big", signed=False)
    elif isinstance(seed, str):
        raw = bytes.fromhex(seed.removeprefix("0x").removeprefix("0X"))
    else:
        raise TypeError(f"unsupported seed type {type(seed)!r}")
    if len(raw) == 32:
        return raw
    return hashlib.blake2b(raw, digest_size=32).digest()


class CommonRandomness:
    """The common randomness W: a pure function of (seed, address).

    Instances are logically immutable and safe for unrestricted concurrent
    reads (the Philox scratch generator is thread-local).
    """

    def __init__(self, seed):
        self._seed = _seed_bytes(seed)
        self.seed_hex = self._seed.hex()
        self._local = threading.local()
        self._key = lru_cache(maxsize=4096)(self._derive_key)

    def __repr__(self):
        return f"CommonRandomness(seed={self.seed_hex!r})"

    def _derive_key(self, trial):
        digest = hashlib.blake2b(int(trial).to_bytes(8, "big"), key=self._seed,
                                 digest_size=16).digest()
        return np.frombuffer(digest, dtype=np.uint64).copy()

    def _raw(self, trial, c1, c2, n):
        """Words 0..n-1 of the stream at counter (0, c1, c2, 0)."""
        local = self._local
        bg = getattr(local, "bg", None)
        if bg is None:
            bg = Philox(key=0)
            local.bg = bg
            local.state = bg.state
        state = local.state
        inner = state["state"]
        inner["key"][:] = self._key(int(trial))
        counter = inner["counter"]
        counter[0] = 0
        counter[1] = c1
        counter[2] = c2
        counter[3] = 0
        state["buffer_pos"] = 4
        bg.state = state
        return bg.random_raw(n)

    @staticmethod
    def _to_unit(words):
        # (w >> 11) + 0.5 is exact below 2^53 and the 2^-53 scaling is a
        # power of two, so the scalar fast path below is bit-identical.
        return ((words >> _U64_SHIFT).astype(np.float64) + 0.5) * _UNIT_SCALE

    # -- bulk readers -------------------------------------------------------

    def slot_uniforms(self, trial, batch, tag, n, component=0):
        """Uniforms for slots 1..n of (trial, batch) under the given tag."""
        if tag not in _SLOT_TAGS:
            raise ValueError(f"tag {tag!r} does not stream over slots")
        c2 = _TAG_IDS[tag] | (int(component) << 16)
        return self._to_unit(self._raw(trial, int(batch), c2, int(n)))

    def slot1_uniform(self, trial, batch, tag):
        """Scalar fast path for slot 1 (hot in one-proposal-per-batch scans)."""
        c2 = _TAG_IDS[tag]
        word = self._raw(trial, int(batch), c2, 1)[0]
        return ((int(word) >> 11) + 0.5) * _UNIT_SCALE

    def batch_uniforms(self, trial, n):
        """The batch-level uniforms U_1..U_n of a trial."""
        return self._to_unit(self._raw(trial, 0, _TAG_IDS[BATCH_UNIFORM], int(n)))

    def exponentials(self, trial, batch, n):
        return -np.log(self.slot_uniforms(trial, batch, EXPONENTIAL, n))

    def proposals(self, trial, batch, n, spec, component=0):
        return dist.sample(spec, self.slot_uniforms(trial, batch, PROPOSAL, n,
                                                    component=component))

    def hashes(self, trial, batch, n, alphabet):
        """Uniform hash values in [1..alphabet] for slots 1..n."""
        if alphabet < 1:
            raise ValueError("hash alphabet must be at least 1")
        u = self.slot_uniforms(trial, batch, HASH, n)
        return np.ceil(u * float(alphabet)).astype(np.int64)


# -- single-address operations ----------------------------------------------

def draw_uniform(cr, addr):
    """Deterministic open-interval uniform at ``addr``."""
    if addr.tag == BATCH_UNIFORM:
        return float(cr.batch_uniforms(addr.trial, addr.batch)[-1])
    return float(cr.slot_uniforms(addr.trial, addr.batch, addr.tag, addr.slot,
                                  component=addr.component)[-1])


def draw_exponential(cr, addr):
    """Exp(1) draw: -log of the address's uniform; strictly positive."""
    if addr.tag != EXPONENTIAL:
        raise ValueError("draw_exponential expects an exponential-tagged address")
    return -math.log(draw_uniform(cr, addr))


def draw_proposal(cr, addr, spec):
    """Proposal draw: the spec's inverse CDF applied to the address uniform."""
    if addr.tag != PROPOSAL:
        raise ValueError("draw_proposal expects a proposal-tagged address")
    return dist.sample(spec, draw_uniform(cr, addr))


def draw_hash(cr, addr, alphabet):
    """Uniform hash over [1..alphabet] via the ceiling rule ceil(u * alphabet)."""
    if addr.tag != HASH:
        raise ValueError("draw_hash expects a hash-tagged address")
    if alphabet < 1:
        raise ValueError("hash alphabet must be at least 1")
    return int(math.ceil(draw_uniform(cr, addr) * alphabet))
