"""Payload registry: customer ids and versions mapped to repetition-coded bits.

Layout of a C-bit code::

    [ version header (version_bits) | message copy 1 | ... | message copy r ]

The message is a pseudo-random image of the customer id under a keyed
bijection on ``message_bits`` bits, so distinct ids never share a message.
Copies are laid out block after block, which puts the r copies of one
message bit ``message_bits`` slots apart.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec.types import PayloadCode, sign
from .errors import CapacityExhausted, CorruptFile, DistanceViolation, EmptyRegistry

REGISTRY_FORMAT = "provmark-registry"
FEISTEL_ROUNDS = 4


def _round_fn(value: int, round_index: int, salt: str, bits: int) -> int:
    h = hashlib.sha256(f"{salt}|{round_index}|{value}".encode()).digest()
    return int.from_bytes(h[:8], "big") & ((1 << bits) - 1)


def permute_id(customer_id: int, message_bits: int, salt: str = "") -> int:
    """Keyed bijection of ``[0, 2**message_bits)`` (Feistel + cycle walking)."""
    if not 0 <= customer_id < 1 << message_bits:
        raise ValueError(f"customer id must lie in [0, 2**{message_bits})")
    half = (message_bits + 1) // 2
    mask = (1 << half) - 1
    x = customer_id
    while True:
        left, right = x >> half, x & mask
        for r in range(FEISTEL_ROUNDS):
            left, right = right, left ^ _round_fn(right, r, salt, half)
        x = (left << half) | right
        if x < 1 << message_bits:  # odd widths walk until back in range
            return x


def int_to_bits(value: int, width: int) -> np.ndarray:
    """MSB-first +-1 encoding (1 -> +1, 0 -> -1)."""
    return np.array([1 if (value >> (width - 1 - i)) & 1 else -1 for i in range(width)],
                    dtype=np.int8)


def bits_to_int(bits) -> int:
    return int("".join("1" if b > 0 else "0" for b in bits) or "0", 2)


def hamming(a, b) -> int:
    return int(np.count_nonzero(np.asarray(a) != np.asarray(b)))


@dataclass(frozen=True)
class Entry:
    customer_id: int
    version: int
    code: PayloadCode


@dataclass(frozen=True)
class IdMatch:
    """Nearest registry entry for decoded logits."""

    entry: Entry
    distance: int
    tie: bool
    message: int
    version: int


class PayloadRegistry:
    """Thread-safe registry of assigned payload codes."""

    def __init__(self, payload_length: int = 64, version_bits: int = 4, redundancy: int = 2,
                 d_min: int | None = None, salt: str = ""):
        if redundancy < 1 or version_bits < 0:
            raise ValueError("redundancy must be >= 1 and version_bits >= 0")
        message_bits, rem = divmod(payload_length - version_bits, redundancy)
        if rem or message_bits < 1:
            raise ValueError("version_bits + redundancy * message_bits must equal the code length")
        self.payload_length = payload_length
        self.version_bits = version_bits
        self.redundancy = redundancy
        self.message_bits = message_bits
        self.d_min = payload_length // 4 if d_min is None else int(d_min)
        self.salt = salt
        self._entries: dict[int, Entry] = {}
        self._lock = threading.Lock()

    @property
    def capacity(self) -> int:
        return 1 << self.message_bits

    def __len__(self):
        return len(self._entries)

    def __contains__(self, customer_id):
        return customer_id in self._entries

    def get(self, customer_id: int) -> Entry:
        return self._entries[customer_id]

    def entries(self) -> list[Entry]:
        """Snapshot of the entries ordered by id."""
        return [self._entries[k] for k in sorted(self._entries)]

    def items(self):
        """``(customer_id, code)`` pairs, as consumed by ``match_payloads``."""
        return [(e.customer_id, e.code) for e in self.entries()]

    def code_for(self, customer_id: int, version: int) -> PayloadCode:
        """The code an id/version pair maps to, registered or not."""
        if not 0 <= version < 1 << self.version_bits:
            raise ValueError(f"version must lie in [0, {1 << self.version_bits})")
        msg = int_to_bits(permute_id(customer_id, self.message_bits, self.salt), self.message_bits)
        header = int_to_bits(version, self.version_bits)
        return PayloadCode(np.concatenate([header] + [msg] * self.redundancy))

    def assign_code(self, customer_id: int, version: int = 0) -> PayloadCode:
        """Register ``customer_id`` at ``version`` and return its code.

        Re-assigning an existing (id, version) pair returns the stored code.
        """
        customer_id, version = int(customer_id), int(version)
        with self._lock:
            old = self._entries.get(customer_id)
            if old is not None and old.version == version:
                return old.code
            if old is None and len(self._entries) >= self.capacity:
                raise CapacityExhausted(f"all {self.capacity} messages are in use")
            code = self.code_for(customer_id, version)
            for e in self._entries.values():
                if e.customer_id == customer_id:
                    continue  # a version change replaces the entry
                d = hamming(e.code.bits, code.bits)
                if d < self.d_min:
                    raise DistanceViolation(
                        f"id {customer_id} would be {d} bits from id {e.customer_id}"
                        f" (minimum {self.d_min})")
            self._entries[customer_id] = Entry(customer_id, version, code)
        return code

    def majority_vote(self, bit_logits) -> np.ndarray:
        """Message bits by majority over the copies; ties go to the summed logit."""
        logits = np.asarray(bit_logits, dtype=np.float64)
        copies = logits[self.version_bits:].reshape(self.redundancy, self.message_bits)
        votes = sign(copies).astype(np.int64).sum(axis=0)
        return np.where(votes != 0, np.sign(votes), sign(copies.sum(axis=0))).astype(np.int8)

    def decode_id(self, bit_logits) -> IdMatch:
        """Nearest entry in Hamming distance to ``sign(bit_logits)``.

        The distance counts disagreeing copies inside each repetition group
        plus header bits, i.e. it is taken over all C positions, so any
        pattern of fewer than ``d_min / 2`` flips decodes to the right entry.
        Ties go to the lowest id and are flagged.
        """
        entries = self.entries()
        if not entries:
            raise EmptyRegistry("registry has no entries")
        logits = np.asarray(bit_logits, dtype=np.float64)
        if logits.size != self.payload_length:
            raise ValueError(f"expected {self.payload_length} logits, got {logits.size}")
        observed = sign(logits)
        dist = np.array([hamming(observed, e.code.bits) for e in entries])
        best = int(np.argmin(dist))  # first minimum = lowest id
        tie = int(np.count_nonzero(dist == dist[best])) > 1
        header = observed[: self.version_bits]
        return IdMatch(entries[best], int(dist[best]), tie,
                       bits_to_int(self.majority_vote(logits)), bits_to_int(header))

    # persistence

    def to_dict(self) -> dict:
        return {
            "format": REGISTRY_FORMAT,
            "version": 1,
            "layout": {
                "payload_length": self.payload_length, "version_bits": self.version_bits,
                "redundancy": self.redundancy, "message_bits": self.message_bits,
                "d_min": self.d_min, "salt": self.salt,
            },
            "entries": [{"id": e.customer_id, "version": e.version, "code": e.code.to_string()}
                        for e in self.entries()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_json(cls, text: str) -> "PayloadRegistry":
        try:
            body = json.loads(text)
            if body.get("format") != REGISTRY_FORMAT:
                raise CorruptFile("not a registry file")
            lay = body["layout"]
            reg = cls(lay["payload_length"], lay["version_bits"], lay["redundancy"],
                      lay["d_min"], lay.get("salt", ""))
            for e in body["entries"]:
                code = reg.assign_code(e["id"], e["version"])
                if code.to_string() != e["code"]:
                    raise CorruptFile(f"stored code for id {e['id']} does not match its layout")
        except CorruptFile:
            raise
        except (ValueError, KeyError, TypeError, AttributeError, CapacityExhausted,
                DistanceViolation) as e:
            raise CorruptFile(f"malformed registry file: {e}") from e
        return reg

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "PayloadRegistry":
        return cls.from_json(Path(path).read_text())
