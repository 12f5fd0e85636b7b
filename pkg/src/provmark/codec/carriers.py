"""Keyed pseudo-random +-1 carriers.

Carriers are expanded from the key with SHAKE-256 (FIPS 202), so they are
identical on every platform and numpy version.  Carrier ``k`` attempt ``a``
is the first ``length`` bits of::

    SHAKE256(b"provmark/carrier/v1" || key || u32be(k) || u32be(a) || u32be(length))

mapped 0 -> -1, 1 -> +1.  An attempt is rejected when its empirical
correlation with any already accepted carrier exceeds ``3 / sqrt(length)``;
the next attempt index is then tried.
"""
from __future__ import annotations

import hashlib
import struct
from functools import lru_cache

import numpy as np

from .config import CodecConfig
from .keys import SecretKey

_DOMAIN = b"provmark/carrier/v1"
MAX_ATTEMPTS = 64


def _draw(material: bytes, index: int, attempt: int, length: int) -> np.ndarray:
    h = hashlib.shake_256(_DOMAIN + material + struct.pack(">III", index, attempt, length))
    bits = np.unpackbits(np.frombuffer(h.digest((length + 7) // 8), dtype=np.uint8))
    return bits[:length].astype(np.int8) * 2 - 1


def carrier_bank(key: SecretKey, count: int, length: int) -> np.ndarray:
    """``count`` carriers of ``length`` chips, pairwise |corr| <= 3/sqrt(length)."""
    bound = 3.0 / np.sqrt(length)
    out = np.empty((count, length), dtype=np.int8)
    accepted = np.empty((count, length), dtype=np.float32)
    for k in range(count):
        for attempt in range(MAX_ATTEMPTS):
            c = _draw(key.material, k, attempt, length)
            if k == 0:
                break
            corr = accepted[:k] @ c.astype(np.float32) / length
            if np.max(np.abs(corr)) <= bound:
                break
        else:  # pragma: no cover - probability ~ 0.03**64
            raise RuntimeError("could not draw a carrier within the correlation bound")
        out[k] = c
        accepted[k] = c
    out.setflags(write=False)
    return out


@lru_cache(maxsize=8)
def derive_carriers(key: SecretKey, config: CodecConfig) -> np.ndarray:
    """Detection carrier (row 0) and C payload carriers, one chip per slot.

    Slots enumerate ``(block, band index)`` pairs over the working-resolution
    block grid in raster order, band index fastest.
    """
    return carrier_bank(key, config.payload_length + 1, config.n_slots)
