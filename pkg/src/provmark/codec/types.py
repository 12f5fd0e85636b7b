from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Hypothesis


def sign(x) -> np.ndarray:
    """Elementwise sign with the convention sign(0) = +1."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class PayloadCode:
    """A C-bit payload over {-1, +1}."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("payload bits must be a non-empty 1-D vector")
        if not np.all((b == 1) | (b == -1)):
            raise ValueError("payload bits must be +-1")
        b = b.astype(np.int8)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    def __len__(self):
        return self.bits.size

    def __eq__(self, other):
        return isinstance(other, PayloadCode) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"PayloadCode({self.to_string()})"

    @classmethod
    def from_string(cls, s: str) -> "PayloadCode":
        """Parse a string of ``0``/``1`` characters (``1`` -> +1)."""
        return cls(np.array([1 if ch == "1" else -1 for ch in s if ch in "01"]))

    def to_string(self) -> str:
        return "".join("1" if b > 0 else "0" for b in self.bits)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "PayloadCode":
        return cls(rng.choice(np.array([-1, 1]), size=length))


@dataclass(frozen=True, eq=False)
class DecodeResult:
    """Decoder output.

    ``detection_logit`` is a z-score that is approximately standard normal on
    non-watermarked content; ``bit_logits`` are per-bit correlation z-scores
    whose signs estimate the payload.
    """

    detection_logit: float
    bit_logits: np.ndarray
    alignment: Hypothesis
    selection_score: float = 0.0
    scores: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        bl = np.asarray(self.bit_logits, dtype=np.float64)
        if not (np.isfinite(self.detection_logit) and np.all(np.isfinite(bl))):
            raise ValueError("decoder produced non-finite logits")
        bl.setflags(write=False)
        object.__setattr__(self, "bit_logits", bl)

    def predicted_code(self) -> PayloadCode:
        return PayloadCode(sign(self.bit_logits))
